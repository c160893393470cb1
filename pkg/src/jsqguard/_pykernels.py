"""Pure-Python kernels: Bellman/Shapley grid sweeps and the event-driven
simulator loop.

The compiled extension (``_kernels.pyx``) mirrors these functions operation
for operation so that both engines produce bit-identical results on the same
inputs; this module is the fallback selected when the extension is missing.
All randomness is consumed as raw PCG64 doubles in a documented per-event
order, which keeps runs reproducible across engines.
"""

import math

import numpy as np

COMPILED = False


def rel_sweep_inplace(J, down, up, upmin, norm1, p, lam_t, mu_t, alam, cb):
    """One Gauss-Seidel sweep of the protection backup; returns max change."""
    S = J.shape[0]
    n = down.shape[0]
    resid = 0.0
    for s in range(S):
        acc_down = 0.0
        acc_up = 0.0
        for i in range(n):
            acc_down += J[down[i, s]]
            acc_up += p[i] * J[up[i, s]]
        jmin = J[upmin[s]]
        extra = alam * (acc_up - jmin)
        if extra > cb:
            extra = cb
        v = norm1[s] + mu_t * acc_down + lam_t * jmin + extra
        d = v - J[s]
        if d < 0.0:
            d = -d
        if d > resid:
            resid = d
        J[s] = v
    return resid


def rel_sweep_sync(J, Jout, down, up, upmin, norm1, p, lam_t, mu_t, alam, cb):
    """One Jacobi sweep of the protection backup; returns max change."""
    n = down.shape[0]
    acc_down = J[down[0]].copy()
    acc_up = p[0] * J[up[0]]
    for i in range(1, n):
        acc_down = acc_down + J[down[i]]
        acc_up = acc_up + p[i] * J[up[i]]
    jmin = J[upmin]
    extra = np.minimum(alam * (acc_up - jmin), cb)
    v = norm1 + mu_t * acc_down + lam_t * jmin + extra
    resid = float(np.max(np.abs(v - J)))
    Jout[:] = v
    return resid


def shapley_sweep_inplace(V, down, upmin, upmax, norm1, lam_t, mu_t, ca, cb):
    """One Gauss-Seidel sweep of the minimax backup; returns max change."""
    S = V.shape[0]
    n = down.shape[0]
    resid = 0.0
    for s in range(S):
        acc_down = 0.0
        for i in range(n):
            acc_down += V[down[i, s]]
        vmin = V[upmin[s]]
        delta = lam_t * (V[upmax[s]] - vmin)
        base = norm1[s] + mu_t * acc_down + lam_t * vmin
        if delta <= ca:
            v = base
        elif delta <= cb:
            v = base - ca + delta
        else:
            v = base + cb - ca * cb / delta
        d = v - V[s]
        if d < 0.0:
            d = -d
        if d > resid:
            resid = d
        V[s] = v
    return resid


def shapley_sweep_sync(V, Vout, down, upmin, upmax, norm1, lam_t, mu_t, ca, cb):
    """One Jacobi sweep of the minimax backup; returns max change."""
    n = down.shape[0]
    acc_down = V[down[0]].copy()
    for i in range(1, n):
        acc_down = acc_down + V[down[i]]
    vmin = V[upmin]
    delta = lam_t * (V[upmax] - vmin)
    base = norm1 + mu_t * acc_down + lam_t * vmin
    with np.errstate(divide="ignore", invalid="ignore"):
        mixed = base + cb - ca * cb / delta
    v = np.where(delta <= ca, base, np.where(delta <= cb, base - ca + delta, mixed))
    resid = float(np.max(np.abs(v - V)))
    Vout[:] = v
    return resid


def simulate(bit_generator, n, lam, mu, gamma, mode, fault_prob, cb, ca,
             p, bprobs, aprobs, bound, strides, tie_mode, tie_weights,
             x0, horizon, burn_frac, confine, extend_clamp, record):
    """Run one trajectory of competing exponential clocks.

    Per-event draw order (uniform doubles from the PCG64 stream):
    holding time; event kind; on arrivals in the fault mode (mode 0) a fault
    draw, a faulty-destination draw and a tie-break draw; on arrivals in the
    attack mode (mode 1) just the tie-break draw; then, after every event,
    the protect draw (and the attack draw in mode 1) for the entered state.
    The protect/attack decisions drawn on state entry stay in force for the
    whole sojourn: they price the cost rate and decide the next arrival.

    Returns (cost_rate_mode, cost_lump_mode, queue_time_integral_after_burnin,
    counts, final_state, error_flag, times, kinds, queues, states_after).
    """
    rng = np.random.Generator(bit_generator)
    nextu = rng.random  # same stream as the compiled engine's next_double

    x = [int(v) for v in x0]
    security = mode == 1

    def lookup(probs):
        idx = 0
        for i in range(n):
            xi = x[i]
            if xi > bound:
                if not extend_clamp:
                    return -1.0
                xi = bound
            idx += xi * strides[i]
        return probs[idx]

    def pick_extreme(u_tie, want_max):
        if want_max:
            best = x[0]
            for i in range(1, n):
                if x[i] > best:
                    best = x[i]
        else:
            best = x[0]
            for i in range(1, n):
                if x[i] < best:
                    best = x[i]
        if tie_mode == 0:
            for i in range(n):
                if x[i] == best:
                    return i
        k = 0
        for i in range(n):
            if x[i] == best:
                k += 1
        if tie_mode == 1:
            r = int(u_tie * k)
            if r >= k:
                r = k - 1
            for i in range(n):
                if x[i] == best:
                    if r == 0:
                        return i
                    r -= 1
        total = 0.0
        for i in range(n):
            if x[i] == best:
                total += tie_weights[i]
        target = u_tie * total
        cum = 0.0
        last = 0
        for i in range(n):
            if x[i] == best:
                last = i
                cum += tie_weights[i]
                if target < cum:
                    return i
        return last

    cost_rate = 0.0
    cost_lump = 0.0
    qint = 0.0
    burn_t = burn_frac * horizon
    counts = np.zeros(2 + 2 * n, dtype=np.int64)
    times = []
    kinds = []
    queues = []
    states = []
    err = 0

    b_flag = False
    a_flag = False
    b_val = lookup(bprobs)
    if b_val < 0.0:
        err = 1
    else:
        b_flag = nextu() < b_val
        if security:
            a_val = lookup(aprobs)
            if a_val < 0.0:
                err = 1
            else:
                a_flag = nextu() < a_val

    t = 0.0
    while err == 0:
        nbusy = 0
        norm = 0
        for i in range(n):
            norm += x[i]
            if x[i] > 0:
                nbusy += 1
        rate = lam + mu * nbusy
        if rate <= 0.0:
            t2 = horizon
        else:
            u = nextu()
            dt = -math.log(1.0 - u) / rate
            if dt <= 0.0:
                dt = 5e-324
            t2 = t + dt
        end = t2 >= horizon or rate <= 0.0
        if end:
            t2 = horizon
        r_inst = float(norm)
        if b_flag:
            r_inst += cb
        if security and a_flag:
            r_inst -= ca
        e1 = math.exp(-gamma * t)
        e2 = math.exp(-gamma * t2)
        w = (e1 - e2) / gamma
        cost_rate += r_inst * w
        cost_lump += float(norm) * w
        lo = t if t > burn_t else burn_t
        if t2 > lo:
            qint += float(norm) * (t2 - lo)
        t = t2
        if end:
            break
        u = nextu()
        if u * rate < lam:
            if security:
                u_tie = nextu()
                if a_flag and not b_flag:
                    dest = pick_extreme(u_tie, True)
                    kind = 2
                    counts[1] += 1
                else:
                    dest = pick_extreme(u_tie, False)
                    kind = 0
                    counts[0] += 1
            else:
                u_f = nextu()
                u_d = nextu()
                u_tie = nextu()
                if u_f < fault_prob and not b_flag:
                    cum = 0.0
                    dest = n - 1
                    for i in range(n):
                        cum += p[i]
                        if u_d < cum:
                            dest = i
                            break
                    kind = 1
                    counts[2 + dest] += 1
                else:
                    dest = pick_extreme(u_tie, False)
                    kind = 0
                    counts[0] += 1
            edt = math.exp(-gamma * t)
            if b_flag:
                cost_lump += cb * edt
            if security and a_flag:
                cost_lump -= ca * edt
            if confine and x[dest] >= bound:
                pass  # truncated chain: arrival at the bound is dropped
            else:
                x[dest] += 1
            q = dest
        else:
            j = int((u * rate - lam) / mu)
            if j >= nbusy:
                j = nbusy - 1
            q = 0
            for i in range(n):
                if x[i] > 0:
                    if j == 0:
                        q = i
                        break
                    j -= 1
            x[q] -= 1
            kind = 3
            counts[2 + n + q] += 1
        if record:
            times.append(t)
            kinds.append(kind)
            queues.append(q)
            states.append(tuple(x))
        b_val = lookup(bprobs)
        if b_val < 0.0:
            err = 1
            break
        b_flag = nextu() < b_val
        if security:
            a_val = lookup(aprobs)
            if a_val < 0.0:
                err = 1
                break
            a_flag = nextu() < a_val

    xfinal = np.asarray(x, dtype=np.int64)
    times_a = np.asarray(times, dtype=np.float64)
    kinds_a = np.asarray(kinds, dtype=np.int8)
    queues_a = np.asarray(queues, dtype=np.int16)
    if record and times:
        states_a = np.asarray(states, dtype=np.int64)
    else:
        states_a = np.empty((0, n), dtype=np.int64)
    return (cost_rate, cost_lump, qint, counts, xfinal, err,
            times_a, kinds_a, queues_a, states_a)
