# cython: language_level=3
"""Compiled kernels: Bellman/Shapley grid sweeps and the simulator event loop.

Each function mirrors its counterpart in ``_pykernels.py`` operation for
operation (same accumulation order, same libm calls, same PCG64 double
stream), so the two engines produce bit-identical results.
"""

import numpy as np

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport exp, fabs, log
from numpy.random cimport bitgen_t

COMPILED = True


def rel_sweep_inplace(double[::1] J, const long long[:, ::1] down,
                      const long long[:, ::1] up, const long long[::1] upmin,
                      const double[::1] norm1, const double[::1] p,
                      double lam_t, double mu_t, double alam, double cb):
    """One Gauss-Seidel sweep of the protection backup; returns max change."""
    cdef Py_ssize_t S = J.shape[0]
    cdef Py_ssize_t n = down.shape[0]
    cdef Py_ssize_t s, i
    cdef double resid = 0.0
    cdef double acc_down, acc_up, jmin, extra, v, d
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


def rel_sweep_sync(const double[::1] J, double[::1] Jout, const long long[:, ::1] down,
                   const long long[:, ::1] up, const long long[::1] upmin,
                   const double[::1] norm1, const double[::1] p,
                   double lam_t, double mu_t, double alam, double cb):
    """One Jacobi sweep of the protection backup; returns max change."""
    cdef Py_ssize_t S = J.shape[0]
    cdef Py_ssize_t n = down.shape[0]
    cdef Py_ssize_t s, i
    cdef double resid = 0.0
    cdef double acc_down, acc_up, jmin, extra, v, d
    for s in range(S):
        acc_down = J[down[0, s]]
        acc_up = p[0] * J[up[0, s]]
        for i in range(1, n):
            acc_down = acc_down + J[down[i, s]]
            acc_up = acc_up + p[i] * J[up[i, s]]
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
        Jout[s] = v
    return resid


def shapley_sweep_inplace(double[::1] V, const long long[:, ::1] down,
                          const long long[::1] upmin, const long long[::1] upmax,
                          const double[::1] norm1,
                          double lam_t, double mu_t, double ca, double cb):
    """One Gauss-Seidel sweep of the minimax backup; returns max change."""
    cdef Py_ssize_t S = V.shape[0]
    cdef Py_ssize_t n = down.shape[0]
    cdef Py_ssize_t s, i
    cdef double resid = 0.0
    cdef double acc_down, vmin, delta, base, v, d
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


def shapley_sweep_sync(const double[::1] V, double[::1] Vout, const long long[:, ::1] down,
                       const long long[::1] upmin, const long long[::1] upmax,
                       const double[::1] norm1,
                       double lam_t, double mu_t, double ca, double cb):
    """One Jacobi sweep of the minimax backup; returns max change."""
    cdef Py_ssize_t S = V.shape[0]
    cdef Py_ssize_t n = down.shape[0]
    cdef Py_ssize_t s, i
    cdef double resid = 0.0
    cdef double acc_down, vmin, delta, base, v, d
    for s in range(S):
        acc_down = V[down[0, s]]
        for i in range(1, n):
            acc_down = acc_down + V[down[i, s]]
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
        Vout[s] = v
    return resid


cdef inline double _next(bitgen_t *bg) noexcept nogil:
    return bg.next_double(bg.state)


def simulate(bit_generator, Py_ssize_t n, double lam, double mu, double gamma,
             int mode, double fault_prob, double cb, double ca,
             const double[::1] p, const double[::1] bprobs, const double[::1] aprobs,
             long long bound, const long long[::1] strides, int tie_mode,
             const double[::1] tie_weights, const long long[::1] x0, double horizon,
             double burn_frac, int confine, int extend_clamp, int record):
    """Run one trajectory; see the fallback engine for the draw protocol."""
    cdef bitgen_t *bg = <bitgen_t *> PyCapsule_GetPointer(
        bit_generator.capsule, "BitGenerator")

    cdef long long[::1] x = np.array(x0, dtype=np.int64)
    cdef bint security = mode == 1

    cdef double cost_rate = 0.0
    cdef double cost_lump = 0.0
    cdef double qint = 0.0
    cdef double burn_t = burn_frac * horizon
    cdef long long[::1] counts = np.zeros(2 + 2 * n, dtype=np.int64)
    times = []
    kinds = []
    queues = []
    states = []
    cdef int err = 0

    cdef bint b_flag = False
    cdef bint a_flag = False
    cdef bint end
    cdef double b_val, a_val
    cdef double t = 0.0, t2, dt, rate, u, r_inst, e1, e2, w, lo, edt
    cdef double u_f, u_d, u_tie, cum
    cdef Py_ssize_t i, dest, q, kind
    cdef long long norm
    cdef Py_ssize_t nbusy, j

    # ---- initial entry draws -------------------------------------------
    b_val = _lookup(bprobs, x, n, bound, strides, extend_clamp)
    if b_val < 0.0:
        err = 1
    else:
        b_flag = _next(bg) < b_val
        if security:
            a_val = _lookup(aprobs, x, n, bound, strides, extend_clamp)
            if a_val < 0.0:
                err = 1
            else:
                a_flag = _next(bg) < a_val

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
            u = _next(bg)
            dt = -log(1.0 - u) / rate
            if dt <= 0.0:
                dt = 5e-324
            t2 = t + dt
        end = t2 >= horizon or rate <= 0.0
        if end:
            t2 = horizon
        r_inst = <double> norm
        if b_flag:
            r_inst += cb
        if security and a_flag:
            r_inst -= ca
        e1 = exp(-gamma * t)
        e2 = exp(-gamma * t2)
        w = (e1 - e2) / gamma
        cost_rate += r_inst * w
        cost_lump += (<double> norm) * w
        lo = t if t > burn_t else burn_t
        if t2 > lo:
            qint += (<double> norm) * (t2 - lo)
        t = t2
        if end:
            break
        u = _next(bg)
        if u * rate < lam:
            if security:
                u_tie = _next(bg)
                if a_flag and not b_flag:
                    dest = _pick_extreme(x, n, u_tie, 1, tie_mode, tie_weights)
                    kind = 2
                    counts[1] += 1
                else:
                    dest = _pick_extreme(x, n, u_tie, 0, tie_mode, tie_weights)
                    kind = 0
                    counts[0] += 1
            else:
                u_f = _next(bg)
                u_d = _next(bg)
                u_tie = _next(bg)
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
                    dest = _pick_extreme(x, n, u_tie, 0, tie_mode, tie_weights)
                    kind = 0
                    counts[0] += 1
            edt = exp(-gamma * t)
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
            j = <Py_ssize_t> ((u * rate - lam) / mu)
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
            states.append(tuple([x[i] for i in range(n)]))
        b_val = _lookup(bprobs, x, n, bound, strides, extend_clamp)
        if b_val < 0.0:
            err = 1
            break
        b_flag = _next(bg) < b_val
        if security:
            a_val = _lookup(aprobs, x, n, bound, strides, extend_clamp)
            if a_val < 0.0:
                err = 1
                break
            a_flag = _next(bg) < a_val

    xfinal = np.asarray(x, dtype=np.int64).copy()
    times_a = np.asarray(times, dtype=np.float64)
    kinds_a = np.asarray(kinds, dtype=np.int8)
    queues_a = np.asarray(queues, dtype=np.int16)
    if record and times:
        states_a = np.asarray(states, dtype=np.int64)
    else:
        states_a = np.empty((0, n), dtype=np.int64)
    return (cost_rate, cost_lump, qint, np.asarray(counts), xfinal, err,
            times_a, kinds_a, queues_a, states_a)


cdef inline double _lookup(const double[::1] probs, const long long[::1] x, Py_ssize_t n,
                           long long bound, const long long[::1] strides,
                           int extend_clamp) noexcept:
    cdef long long idx = 0
    cdef long long xi
    cdef Py_ssize_t i
    for i in range(n):
        xi = x[i]
        if xi > bound:
            if not extend_clamp:
                return -1.0
            xi = bound
        idx += xi * strides[i]
    return probs[idx]


cdef inline Py_ssize_t _pick_extreme(const long long[::1] x, Py_ssize_t n, double u_tie,
                                     int want_max, int tie_mode,
                                     const double[::1] tie_weights) noexcept:
    cdef long long best = x[0]
    cdef Py_ssize_t i, k, r, last
    cdef double total, target, cum
    if want_max:
        for i in range(1, n):
            if x[i] > best:
                best = x[i]
    else:
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
        r = <Py_ssize_t> (u_tie * k)
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
