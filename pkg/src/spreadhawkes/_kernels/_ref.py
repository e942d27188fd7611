"""Pure-Python kernels: the reference the compiled backend must match.

These are the sequential hot loops (likelihood sweep, replay, thinning
simulation).  The compiled twin in ``_fast.pyx`` mirrors the operation
order and random-number consumption exactly, so both backends produce
bit-identical results from the same inputs and seed.

Conventions shared by both backends:

* one uniform double per random decision: inter-candidate waits via
  -log1p(-u)/rate, acceptance and process attribution share one uniform,
  jump sizes use one uniform through an inverse CDF (skipped entirely for
  single-atom tables);
* status codes: 0 = ok, 1 = zero own-event intensity (likelihood -inf),
  2 = negative intensity (internal violation);
* ``betas`` is read per target row under row decay and per source column
  under column decay (extended model IV).
"""

from __future__ import annotations

import math

import numpy as np

RESET_NONE = 0
RESET_LINEAR = 1
RESET_CONSTANT = 2

# simulate() stop reasons
SIM_OK = 0
SIM_EXPLODED = 1
SIM_STALLED = 2


def _bases(base_indicator, mu4, eta4, ell, lpos):
    g = lpos if base_indicator else ell
    return [mu4[i] + eta4[i] * g for i in range(4)]


def loglik(
    t,
    kind,
    ell_after,
    lpos_after,
    ell0,
    lpos0,
    T,
    col_decay,
    base_indicator,
    mu4,
    eta4,
    A,
    reset_mode,
    xi_mat,
    betas,
):
    """Exact log-likelihood sweep.  Returns (value, status, bad_index)."""
    n = len(t)
    mu4 = [float(x) for x in mu4]
    eta4 = [float(x) for x in eta4]
    Am = [[float(A[i, j]) for j in range(4)] for i in range(4)]
    xm = [[float(xi_mat[i, j]) for j in range(2)] for i in range(2)]
    b = [float(x) for x in betas]
    same_b = b[0] == b[1] == b[2] == b[3]

    base = _bases(base_indicator, mu4, eta4, ell0, lpos0)
    comp = 0.0
    sll = 0.0
    prev = 0.0

    if col_decay:
        E = [[0.0] * 4 for _ in range(4)]
        for j in range(n):
            tj = float(t[j])
            dt = tj - prev
            d = [math.exp(-b[c] * dt) for c in range(4)]
            w = [-math.expm1(-b[c] * dt) / b[c] for c in range(4)]
            for i in range(4):
                comp += base[i] * dt
                row = E[i]
                for c in range(4):
                    comp += row[c] * w[c]
                    row[c] *= d[c]
            k = int(kind[j])
            lam = base[k] + E[k][0] + E[k][1] + E[k][2] + E[k][3]
            if lam <= 0.0:
                return -math.inf, (1 if lam == 0.0 else 2), j
            sll += math.log(lam)
            for i in range(4):
                E[i][k] += Am[i][k]
            if reset_mode != RESET_NONE and (k == 1 or k == 2):
                src = k - 1
                _reset_col(E, reset_mode, xm, src, k,
                           float(ell_after[j]), float(lpos_after[j]))
            base = _bases(base_indicator, mu4, eta4,
                          float(ell_after[j]), float(lpos_after[j]))
            prev = tj
        dt = T - prev
        d = None
        w = [-math.expm1(-b[c] * dt) / b[c] for c in range(4)]
        for i in range(4):
            comp += base[i] * dt
            for c in range(4):
                comp += E[i][c] * w[c]
        return sll - comp, 0, -1

    E = [0.0, 0.0, 0.0, 0.0]
    for j in range(n):
        tj = float(t[j])
        dt = tj - prev
        if same_b:
            d0 = math.exp(-b[0] * dt)
            w0 = -math.expm1(-b[0] * dt) / b[0]
            for i in range(4):
                comp += base[i] * dt + E[i] * w0
                E[i] *= d0
        else:
            for i in range(4):
                comp += base[i] * dt + E[i] * (-math.expm1(-b[i] * dt) / b[i])
                E[i] *= math.exp(-b[i] * dt)
        k = int(kind[j])
        lam = base[k] + E[k]
        if lam <= 0.0:
            return -math.inf, (1 if lam == 0.0 else 2), j
        sll += math.log(lam)
        for i in range(4):
            E[i] += Am[i][k]
        if reset_mode != RESET_NONE and (k == 1 or k == 2):
            src = k - 1
            _reset_row(E, reset_mode, xm, src,
                       float(ell_after[j]), float(lpos_after[j]))
        base = _bases(base_indicator, mu4, eta4,
                      float(ell_after[j]), float(lpos_after[j]))
        prev = tj
    dt = T - prev
    for i in range(4):
        comp += base[i] * dt + E[i] * (-math.expm1(-b[i] * dt) / b[i])
    return sll - comp, 0, -1


def _reset_row(E, reset_mode, xm, src, ell_after, lpos_after):
    if reset_mode == RESET_LINEAR:
        E[1] = xm[0][src] * ell_after
        E[2] = xm[1][src] * ell_after
    elif lpos_after > 0.0:
        E[1] += xm[0][src]
        E[2] += xm[1][src]
    else:
        E[1] = 0.0
        E[2] = 0.0


def _reset_col(E, reset_mode, xm, src, k, ell_after, lpos_after):
    if reset_mode == RESET_LINEAR:
        for c in range(4):
            E[1][c] = 0.0
            E[2][c] = 0.0
        E[1][k] = xm[0][src] * ell_after
        E[2][k] = xm[1][src] * ell_after
    elif lpos_after > 0.0:
        E[1][k] += xm[0][src]
        E[2][k] += xm[1][src]
    else:
        for c in range(4):
            E[1][c] = 0.0
            E[2][c] = 0.0


def replay(
    t,
    kind,
    ell_after,
    lpos_after,
    ell0,
    lpos0,
    T,
    col_decay,
    base_indicator,
    mu4,
    eta4,
    A,
    reset_mode,
    xi_mat,
    betas,
):
    """Like loglik, but materializes per-event own intensities and the
    (n+1, 4) per-interval compensator table (row n = tail to T).

    Returns (lam, comp, status, bad_index); on status 2 the arrays are
    truncated garbage and must not be used.
    """
    n = len(t)
    mu4 = [float(x) for x in mu4]
    eta4 = [float(x) for x in eta4]
    Am = [[float(A[i, j]) for j in range(4)] for i in range(4)]
    xm = [[float(xi_mat[i, j]) for j in range(2)] for i in range(2)]
    b = [float(x) for x in betas]

    lam_out = np.empty(n)
    comp_out = np.empty((n + 1, 4))
    base = _bases(base_indicator, mu4, eta4, ell0, lpos0)
    prev = 0.0
    status = 0
    bad = -1

    if col_decay:
        E = [[0.0] * 4 for _ in range(4)]
    else:
        E = [0.0, 0.0, 0.0, 0.0]

    for j in range(n):
        tj = float(t[j])
        dt = tj - prev
        if col_decay:
            d = [math.exp(-b[c] * dt) for c in range(4)]
            w = [-math.expm1(-b[c] * dt) / b[c] for c in range(4)]
            for i in range(4):
                acc = base[i] * dt
                row = E[i]
                for c in range(4):
                    acc += row[c] * w[c]
                    row[c] *= d[c]
                comp_out[j, i] = acc
            k = int(kind[j])
            lam = base[k] + E[k][0] + E[k][1] + E[k][2] + E[k][3]
        else:
            for i in range(4):
                comp_out[j, i] = base[i] * dt + E[i] * (-math.expm1(-b[i] * dt) / b[i])
                E[i] *= math.exp(-b[i] * dt)
            k = int(kind[j])
            lam = base[k] + E[k]
        lam_out[j] = lam
        if lam < 0.0:
            return lam_out, comp_out, 2, j
        if lam == 0.0 and status == 0:
            status, bad = 1, j
        if col_decay:
            for i in range(4):
                E[i][k] += Am[i][k]
        else:
            for i in range(4):
                E[i] += Am[i][k]
        if reset_mode != RESET_NONE and (k == 1 or k == 2):
            src = k - 1
            if col_decay:
                _reset_col(E, reset_mode, xm, src, k,
                           float(ell_after[j]), float(lpos_after[j]))
            else:
                _reset_row(E, reset_mode, xm, src,
                           float(ell_after[j]), float(lpos_after[j]))
        base = _bases(base_indicator, mu4, eta4,
                      float(ell_after[j]), float(lpos_after[j]))
        prev = tj

    dt = T - prev
    if col_decay:
        w = [-math.expm1(-b[c] * dt) / b[c] for c in range(4)]
        for i in range(4):
            acc = base[i] * dt
            for c in range(4):
                acc += E[i][c] * w[c]
            comp_out[n, i] = acc
    else:
        for i in range(4):
            comp_out[n, i] = base[i] * dt + E[i] * (-math.expm1(-b[i] * dt) / b[i])
    return lam_out, comp_out, status, bad


def simulate(
    col_decay,
    base_indicator,
    mu4,
    eta4,
    A,
    reset_mode,
    xi_mat,
    betas,
    bid0_t,
    ask0_t,
    tick,
    horizon,
    n_target,
    jump_vals,
    jump_cdf,
    jump_len,
    max_events,
    max_candidates,
    rng,
):
    """Thinning simulation of the four-process model.

    The dominating rate is refreshed at every candidate (accepted or not),
    valid because total intensity only decreases between events: bases are
    constant while the book is still, and excitements decay.  Returns
    (t, kind, delta, bid_t, ask_t, end_time, n_candidates,
    clamp_truncated, clamp_discarded, status).
    """
    mu4 = [float(x) for x in mu4]
    eta4 = [float(x) for x in eta4]
    Am = [[float(A[i, j]) for j in range(4)] for i in range(4)]
    xm = [[float(xi_mat[i, j]) for j in range(2)] for i in range(2)]
    b = [float(x) for x in betas]

    bid_t = int(bid0_t)
    ask_t = int(ask0_t)
    tick = float(tick)

    def level():
        return ask_t - bid_t - 1

    def rel_level():
        return level() / ((bid_t + ask_t) * tick / 2.0)

    def bases():
        if base_indicator:
            g = 1.0 if level() > 0 else 0.0
        else:
            g = rel_level()
        return [mu4[i] + eta4[i] * g for i in range(4)]

    if col_decay:
        E = [[0.0] * 4 for _ in range(4)]

        def exc(i):
            return E[i][0] + E[i][1] + E[i][2] + E[i][3]

        def decay(dt):
            for c in range(4):
                dc = math.exp(-b[c] * dt)
                for i in range(4):
                    E[i][c] *= dc

    else:
        E = [0.0, 0.0, 0.0, 0.0]

        def exc(i):
            return E[i]

        def decay(dt):
            for i in range(4):
                E[i] *= math.exp(-b[i] * dt)

    out_t: list[float] = []
    out_kind: list[int] = []
    out_delta: list[int] = []
    out_bid: list[int] = []
    out_ask: list[int] = []

    base = bases()
    t_cur = 0.0
    lam_bar = sum(base[i] + exc(i) for i in range(4))
    candidates = 0
    clamp_truncated = 0
    clamp_discarded = 0
    status = SIM_OK

    while True:
        if n_target >= 0 and len(out_t) >= n_target:
            break
        if len(out_t) >= max_events or candidates >= max_candidates:
            status = SIM_EXPLODED
            break
        if lam_bar <= 1e-300:
            # No excitement left and no positive base: nothing can ever fire.
            if horizon >= 0.0:
                t_cur = horizon
            else:
                status = SIM_STALLED
            break
        candidates += 1
        u1 = rng.random()
        wait = -math.log1p(-u1) / lam_bar
        t_next = t_cur + wait
        if horizon >= 0.0 and t_next > horizon:
            t_cur = horizon
            break
        decay(wait)
        lam = [base[i] + exc(i) for i in range(4)]
        tot = lam[0] + lam[1] + lam[2] + lam[3]
        v = rng.random() * lam_bar
        t_cur = t_next
        if v >= tot:
            lam_bar = tot
            continue
        # accepted: attribute with the same uniform
        k = 0
        acc = lam[0]
        while v >= acc:
            k += 1
            acc += lam[k]
        # jump size
        m = int(jump_len[k])
        if m > 1:
            u3 = rng.random()
            idx = 0
            while u3 > jump_cdf[k][idx] and idx < m - 1:
                idx += 1
            delta = int(jump_vals[k][idx])
        else:
            delta = int(jump_vals[k][0])
        # clamps: narrowing cannot pass L = 0, a falling bid stays positive
        if k == 1 or k == 2:
            L = level()
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
        # apply the move
        if k == 0:
            ask_t += delta
        elif k == 1:
            ask_t -= delta
        elif k == 2:
            bid_t += delta
        else:
            bid_t -= delta
        # excitement updates
        if col_decay:
            for i in range(4):
                E[i][k] += Am[i][k]
        else:
            for i in range(4):
                E[i] += Am[i][k]
        if reset_mode != RESET_NONE and (k == 1 or k == 2):
            src = k - 1
            L = level()
            if col_decay:
                _reset_col(E, reset_mode, xm, src, k,
                           rel_level(), 1.0 if L > 0 else 0.0)
            else:
                _reset_row(E, reset_mode, xm, src,
                           rel_level(), 1.0 if L > 0 else 0.0)
        base = bases()
        lam_bar = sum(base[i] + exc(i) for i in range(4))
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


def simulate_spread(
    mu,
    eta,
    a_self,
    a_cross,
    beta,
    excite_down,
    a_prov,
    xi,
    L0,
    horizon,
    n_target,
    max_events,
    max_candidates,
    rng,
):
    """Thinning simulation of the two-process spread reduction.

    Unit jumps; the spread level is L0 + N_up - N_down.  The upward
    intensity is 2*mu plus self/cross excitement; the downward intensity is
    2*eta*L plus, when ``excite_down``, provision excitement that resets to
    xi*L after every downward event.  Returns (t, sign, end_time,
    n_candidates, status).
    """
    mu = float(mu)
    eta = float(eta)
    a_self = float(a_self)
    a_cross = float(a_cross)
    beta = float(beta)
    a_prov = float(a_prov)
    xi = float(xi)

    L = int(L0)
    E_u = 0.0
    E_d = 0.0
    out_t: list[float] = []
    out_sign: list[int] = []
    t_cur = 0.0
    candidates = 0
    status = SIM_OK
    lam_bar = (2.0 * mu + E_u) + (2.0 * eta * L + E_d)

    while True:
        if n_target >= 0 and len(out_t) >= n_target:
            break
        if len(out_t) >= max_events or candidates >= max_candidates:
            status = SIM_EXPLODED
            break
        if lam_bar <= 1e-300:
            if horizon >= 0.0:
                t_cur = horizon
            else:
                status = SIM_STALLED
            break
        candidates += 1
        u1 = rng.random()
        wait = -math.log1p(-u1) / lam_bar
        t_next = t_cur + wait
        if horizon >= 0.0 and t_next > horizon:
            t_cur = horizon
            break
        d = math.exp(-beta * wait)
        E_u *= d
        E_d *= d
        lam_u = 2.0 * mu + E_u
        lam_d = 2.0 * eta * L + E_d
        tot = lam_u + lam_d
        v = rng.random() * lam_bar
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
            # lam_d > 0 implies L > 0, so the decrement is always legal
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
