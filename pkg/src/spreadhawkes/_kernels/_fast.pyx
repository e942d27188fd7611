# cython: language_level=3
# cython: boundscheck=False
# cython: wraparound=False
# cython: cdivision=True
"""Compiled kernels.

Operation-by-operation mirror of ``_ref.py``; both backends must return
bit-identical results for identical inputs and seeds.  Randomness is read
straight from the numpy bit generator (one ``next_double`` per decision,
matching one ``Generator.random()`` call in the reference).  The 4x4
column-decay excitement table is stored flat (slot i*4+c).
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport exp, expm1, log, log1p, INFINITY
from numpy.random cimport bitgen_t

cnp.import_array()

RESET_NONE = 0
RESET_LINEAR = 1
RESET_CONSTANT = 2

SIM_OK = 0
SIM_EXPLODED = 1
SIM_STALLED = 2

cdef int _RESET_NONE = 0
cdef int _RESET_LINEAR = 1

cdef const char *_CAPSULE = "BitGenerator"


cdef inline bitgen_t *_bitgen(object rng) except NULL:
    capsule = rng.bit_generator.capsule
    return <bitgen_t *> PyCapsule_GetPointer(capsule, _CAPSULE)


cdef inline void _reset_row(double *E, int reset_mode, const double[:, ::1] xm,
                            int src, double ell_after, double lpos_after) noexcept:
    if reset_mode == _RESET_LINEAR:
        E[1] = xm[0, src] * ell_after
        E[2] = xm[1, src] * ell_after
    elif lpos_after > 0.0:
        E[1] += xm[0, src]
        E[2] += xm[1, src]
    else:
        E[1] = 0.0
        E[2] = 0.0


cdef inline void _reset_col(double *EC, int reset_mode, const double[:, ::1] xm,
                            int src, int k, double ell_after, double lpos_after) noexcept:
    cdef int c
    if reset_mode == _RESET_LINEAR:
        for c in range(4):
            EC[4 + c] = 0.0
            EC[8 + c] = 0.0
        EC[4 + k] = xm[0, src] * ell_after
        EC[8 + k] = xm[1, src] * ell_after
    elif lpos_after > 0.0:
        EC[4 + k] += xm[0, src]
        EC[8 + k] += xm[1, src]
    else:
        for c in range(4):
            EC[4 + c] = 0.0
            EC[8 + c] = 0.0


def loglik(const double[::1] t,
           const int[::1] kind,
           const double[::1] ell_after,
           const double[::1] lpos_after,
           double ell0,
           double lpos0,
           double T,
           bint col_decay,
           bint base_indicator,
           const double[::1] mu4,
           const double[::1] eta4,
           const double[:, ::1] A,
           int reset_mode,
           const double[:, ::1] xi_mat,
           const double[::1] betas):
    """Exact log-likelihood sweep.  Returns (value, status, bad_index)."""
    cdef Py_ssize_t n = t.shape[0]
    cdef double b[4]
    cdef double base[4]
    cdef double E[4]
    cdef double EC[16]
    cdef double d[4]
    cdef double w[4]
    cdef double comp = 0.0, sll = 0.0, prev = 0.0
    cdef double tj, dt, lam, g, d0, w0
    cdef Py_ssize_t j
    cdef int i, c, k, src
    cdef bint same_b

    for i in range(4):
        b[i] = betas[i]
    same_b = b[0] == b[1] and b[1] == b[2] and b[2] == b[3]
    g = lpos0 if base_indicator else ell0
    for i in range(4):
        base[i] = mu4[i] + eta4[i] * g

    if col_decay:
        for i in range(16):
            EC[i] = 0.0
        for j in range(n):
            tj = t[j]
            dt = tj - prev
            for c in range(4):
                d[c] = exp(-b[c] * dt)
                w[c] = -expm1(-b[c] * dt) / b[c]
            for i in range(4):
                comp += base[i] * dt
                for c in range(4):
                    comp += EC[i * 4 + c] * w[c]
                    EC[i * 4 + c] *= d[c]
            k = kind[j]
            lam = base[k] + EC[k * 4] + EC[k * 4 + 1] + EC[k * 4 + 2] + EC[k * 4 + 3]
            if lam <= 0.0:
                return -INFINITY, (1 if lam == 0.0 else 2), j
            sll += log(lam)
            for i in range(4):
                EC[i * 4 + k] += A[i, k]
            if reset_mode != _RESET_NONE and (k == 1 or k == 2):
                src = k - 1
                _reset_col(EC, reset_mode, xi_mat, src, k,
                           ell_after[j], lpos_after[j])
            g = lpos_after[j] if base_indicator else ell_after[j]
            for i in range(4):
                base[i] = mu4[i] + eta4[i] * g
            prev = tj
        dt = T - prev
        for c in range(4):
            w[c] = -expm1(-b[c] * dt) / b[c]
        for i in range(4):
            comp += base[i] * dt
            for c in range(4):
                comp += EC[i * 4 + c] * w[c]
        return sll - comp, 0, -1

    for i in range(4):
        E[i] = 0.0
    for j in range(n):
        tj = t[j]
        dt = tj - prev
        if same_b:
            d0 = exp(-b[0] * dt)
            w0 = -expm1(-b[0] * dt) / b[0]
            for i in range(4):
                comp += base[i] * dt + E[i] * w0
                E[i] *= d0
        else:
            for i in range(4):
                comp += base[i] * dt + E[i] * (-expm1(-b[i] * dt) / b[i])
                E[i] *= exp(-b[i] * dt)
        k = kind[j]
        lam = base[k] + E[k]
        if lam <= 0.0:
            return -INFINITY, (1 if lam == 0.0 else 2), j
        sll += log(lam)
        for i in range(4):
            E[i] += A[i, k]
        if reset_mode != _RESET_NONE and (k == 1 or k == 2):
            src = k - 1
            _reset_row(E, reset_mode, xi_mat, src, ell_after[j], lpos_after[j])
        g = lpos_after[j] if base_indicator else ell_after[j]
        for i in range(4):
            base[i] = mu4[i] + eta4[i] * g
        prev = tj
    dt = T - prev
    for i in range(4):
        comp += base[i] * dt + E[i] * (-expm1(-b[i] * dt) / b[i])
    return sll - comp, 0, -1


def replay(const double[::1] t,
           const int[::1] kind,
           const double[::1] ell_after,
           const double[::1] lpos_after,
           double ell0,
           double lpos0,
           double T,
           bint col_decay,
           bint base_indicator,
           const double[::1] mu4,
           const double[::1] eta4,
           const double[:, ::1] A,
           int reset_mode,
           const double[:, ::1] xi_mat,
           const double[::1] betas):
    """Per-event own intensities plus the (n+1, 4) compensator table."""
    cdef Py_ssize_t n = t.shape[0]
    lam_arr = np.empty(n)
    comp_arr = np.empty((n + 1, 4))
    cdef double[::1] lam_out = lam_arr
    cdef double[:, ::1] comp_out = comp_arr
    cdef double b[4]
    cdef double base[4]
    cdef double E[4]
    cdef double EC[16]
    cdef double d[4]
    cdef double w[4]
    cdef double prev = 0.0
    cdef double tj, dt, lam, g, acc
    cdef Py_ssize_t j
    cdef int i, c, k, src
    cdef int status = 0
    cdef Py_ssize_t bad = -1

    for i in range(4):
        b[i] = betas[i]
    g = lpos0 if base_indicator else ell0
    for i in range(4):
        base[i] = mu4[i] + eta4[i] * g
    for i in range(4):
        E[i] = 0.0
    for i in range(16):
        EC[i] = 0.0

    for j in range(n):
        tj = t[j]
        dt = tj - prev
        if col_decay:
            for c in range(4):
                d[c] = exp(-b[c] * dt)
                w[c] = -expm1(-b[c] * dt) / b[c]
            for i in range(4):
                acc = base[i] * dt
                for c in range(4):
                    acc += EC[i * 4 + c] * w[c]
                    EC[i * 4 + c] *= d[c]
                comp_out[j, i] = acc
            k = kind[j]
            lam = base[k] + EC[k * 4] + EC[k * 4 + 1] + EC[k * 4 + 2] + EC[k * 4 + 3]
        else:
            for i in range(4):
                comp_out[j, i] = base[i] * dt + E[i] * (-expm1(-b[i] * dt) / b[i])
                E[i] *= exp(-b[i] * dt)
            k = kind[j]
            lam = base[k] + E[k]
        lam_out[j] = lam
        if lam < 0.0:
            return lam_arr, comp_arr, 2, j
        if lam == 0.0 and status == 0:
            status = 1
            bad = j
        if col_decay:
            for i in range(4):
                EC[i * 4 + k] += A[i, k]
        else:
            for i in range(4):
                E[i] += A[i, k]
        if reset_mode != _RESET_NONE and (k == 1 or k == 2):
            src = k - 1
            if col_decay:
                _reset_col(EC, reset_mode, xi_mat, src, k,
                           ell_after[j], lpos_after[j])
            else:
                _reset_row(E, reset_mode, xi_mat, src,
                           ell_after[j], lpos_after[j])
        g = lpos_after[j] if base_indicator else ell_after[j]
        for i in range(4):
            base[i] = mu4[i] + eta4[i] * g
        prev = tj

    dt = T - prev
    if col_decay:
        for c in range(4):
            w[c] = -expm1(-b[c] * dt) / b[c]
        for i in range(4):
            acc = base[i] * dt
            for c in range(4):
                acc += EC[i * 4 + c] * w[c]
            comp_out[n, i] = acc
    else:
        for i in range(4):
            comp_out[n, i] = base[i] * dt + E[i] * (-expm1(-b[i] * dt) / b[i])
    return lam_arr, comp_arr, status, bad


def simulate(bint col_decay,
             bint base_indicator,
             const double[::1] mu4,
             const double[::1] eta4,
             const double[:, ::1] A,
             int reset_mode,
             const double[:, ::1] xi_mat,
             const double[::1] betas,
             long long bid0_t,
             long long ask0_t,
             double tick,
             double horizon,
             long long n_target,
             const long long[:, ::1] jump_vals,
             const double[:, ::1] jump_cdf,
             const long long[::1] jump_len,
             long long max_events,
             long long max_candidates,
             object rng):
    """Thinning simulation; see the reference implementation for the
    acceptance and clamping rules."""
    cdef bitgen_t *bg = _bitgen(rng)
    cdef double b[4]
    cdef double base[4]
    cdef double E[4]
    cdef double EC[16]
    cdef double lam[4]
    cdef long long bid_t = bid0_t
    cdef long long ask_t = ask0_t
    cdef long long L, delta, candidates = 0
    cdef long long clamp_truncated = 0, clamp_discarded = 0
    cdef double t_cur = 0.0, lam_bar, u1, wait, t_next, tot, v, u3
    cdef double g, dc, acc, ell_a, lpos_a
    cdef int i, c, k, idx, m
    cdef int status = SIM_OK
    cdef bint same_b

    out_t = []
    out_kind = []
    out_delta = []
    out_bid = []
    out_ask = []

    for i in range(4):
        b[i] = betas[i]
        E[i] = 0.0
    for i in range(16):
        EC[i] = 0.0
    same_b = b[0] == b[1] and b[1] == b[2] and b[2] == b[3]

    L = ask_t - bid_t - 1
    if base_indicator:
        g = 1.0 if L > 0 else 0.0
    else:
        g = L / ((bid_t + ask_t) * tick / 2.0)
    for i in range(4):
        base[i] = mu4[i] + eta4[i] * g

    lam_bar = 0.0
    for i in range(4):
        if col_decay:
            lam_bar += base[i] + (EC[i * 4] + EC[i * 4 + 1] + EC[i * 4 + 2] + EC[i * 4 + 3])
        else:
            lam_bar += base[i] + E[i]

    while True:
        if n_target >= 0 and <long long> len(out_t) >= n_target:
            break
        if <long long> len(out_t) >= max_events or candidates >= max_candidates:
            status = SIM_EXPLODED
            break
        if lam_bar <= 1e-300:
            if horizon >= 0.0:
                t_cur = horizon
            else:
                status = SIM_STALLED
            break
        candidates += 1
        u1 = bg.next_double(bg.state)
        wait = -log1p(-u1) / lam_bar
        t_next = t_cur + wait
        if horizon >= 0.0 and t_next > horizon:
            t_cur = horizon
            break
        if col_decay:
            for c in range(4):
                dc = exp(-b[c] * wait)
                for i in range(4):
                    EC[i * 4 + c] *= dc
        elif same_b:
            dc = exp(-b[0] * wait)
            for i in range(4):
                E[i] *= dc
        else:
            for i in range(4):
                E[i] *= exp(-b[i] * wait)
        tot = 0.0
        for i in range(4):
            if col_decay:
                lam[i] = base[i] + (EC[i * 4] + EC[i * 4 + 1] + EC[i * 4 + 2] + EC[i * 4 + 3])
            else:
                lam[i] = base[i] + E[i]
            tot += lam[i]
        v = bg.next_double(bg.state) * lam_bar
        t_cur = t_next
        if v >= tot:
            lam_bar = tot
            continue
        k = 0
        acc = lam[0]
        while v >= acc:
            k += 1
            acc += lam[k]
        m = <int> jump_len[k]
        if m > 1:
            u3 = bg.next_double(bg.state)
            idx = 0
            while u3 > jump_cdf[k, idx] and idx < m - 1:
                idx += 1
            delta = jump_vals[k, idx]
        else:
            delta = jump_vals[k, 0]
        if k == 1 or k == 2:
            L = ask_t - bid_t - 1
            if L == 0:
                clamp_discarded += 1
                lam_bar = tot
                continue
            if delta > L:
                delta = L
                clamp_truncated += 1
        elif k == 3 and bid_t - delta < 1:
            if bid_t - 1 <= 0:
                clamp_discarded += 1
                lam_bar = tot
                continue
            delta = bid_t - 1
            clamp_truncated += 1
        if k == 0:
            ask_t += delta
        elif k == 1:
            ask_t -= delta
        elif k == 2:
            bid_t += delta
        else:
            bid_t -= delta
        if col_decay:
            for i in range(4):
                EC[i * 4 + k] += A[i, k]
        else:
            for i in range(4):
                E[i] += A[i, k]
        if reset_mode != _RESET_NONE and (k == 1 or k == 2):
            L = ask_t - bid_t - 1
            ell_a = L / ((bid_t + ask_t) * tick / 2.0)
            lpos_a = 1.0 if L > 0 else 0.0
            if col_decay:
                _reset_col(EC, reset_mode, xi_mat, k - 1, k, ell_a, lpos_a)
            else:
                _reset_row(E, reset_mode, xi_mat, k - 1, ell_a, lpos_a)
        L = ask_t - bid_t - 1
        if base_indicator:
            g = 1.0 if L > 0 else 0.0
        else:
            g = L / ((bid_t + ask_t) * tick / 2.0)
        for i in range(4):
            base[i] = mu4[i] + eta4[i] * g
        lam_bar = 0.0
        for i in range(4):
            if col_decay:
                lam_bar += base[i] + (EC[i * 4] + EC[i * 4 + 1] + EC[i * 4 + 2] + EC[i * 4 + 3])
            else:
                lam_bar += base[i] + E[i]
        out_t.append(t_next)
        out_kind.append(k)
        out_delta.append(delta)
        out_bid.append(bid_t)
        out_ask.append(ask_t)

    return (
        np.array(out_t, dtype=float),
        np.array(out_kind, dtype=np.int32),
        np.array(out_delta, dtype=np.int64),
        np.array(out_bid, dtype=np.int64),
        np.array(out_ask, dtype=np.int64),
        t_cur,
        candidates,
        clamp_truncated,
        clamp_discarded,
        status,
    )


def simulate_spread(double mu,
                    double eta,
                    double a_self,
                    double a_cross,
                    double beta,
                    bint excite_down,
                    double a_prov,
                    double xi,
                    long long L0,
                    double horizon,
                    long long n_target,
                    long long max_events,
                    long long max_candidates,
                    object rng):
    """Thinning simulation of the two-process spread reduction."""
    cdef bitgen_t *bg = _bitgen(rng)
    cdef long long L = L0
    cdef double E_u = 0.0, E_d = 0.0
    cdef double t_cur = 0.0, lam_bar, u1, wait, t_next, d, lam_u, lam_d, tot, v
    cdef long long candidates = 0
    cdef int status = SIM_OK

    out_t = []
    out_sign = []

    lam_bar = (2.0 * mu + E_u) + (2.0 * eta * L + E_d)

    while True:
        if n_target >= 0 and <long long> len(out_t) >= n_target:
            break
        if <long long> len(out_t) >= max_events or candidates >= max_candidates:
            status = SIM_EXPLODED
            break
        if lam_bar <= 1e-300:
            if horizon >= 0.0:
                t_cur = horizon
            else:
                status = SIM_STALLED
            break
        candidates += 1
        u1 = bg.next_double(bg.state)
        wait = -log1p(-u1) / lam_bar
        t_next = t_cur + wait
        if horizon >= 0.0 and t_next > horizon:
            t_cur = horizon
            break
        d = exp(-beta * wait)
        E_u *= d
        E_d *= d
        lam_u = 2.0 * mu + E_u
        lam_d = 2.0 * eta * L + E_d
        tot = lam_u + lam_d
        v = bg.next_double(bg.state) * lam_bar
        t_cur = t_next
        if v >= tot:
            lam_bar = tot
            continue
        if v < lam_u:
            L += 1
            E_u += a_self
            if excite_down:
                E_d += a_prov
            out_sign.append(1)
        else:
            L -= 1
            E_u += a_cross
            if excite_down:
                E_d = xi * L
            out_sign.append(-1)
        out_t.append(t_next)
        lam_bar = (2.0 * mu + E_u) + (2.0 * eta * L + E_d)

    return (
        np.array(out_t, dtype=float),
        np.array(out_sign, dtype=np.int8),
        t_cur,
        candidates,
        status,
    )
