import _acceptance_log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = _acceptance_log.RESULTS
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(results):
        line = f"criterion {num:02d} {name}: {'PASS' if ok else 'FAIL'}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
