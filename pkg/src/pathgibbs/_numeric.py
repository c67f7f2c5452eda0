"""Low-level numba kernels shared by the path, MCMC and transfer modules.

Potentials are passed to compiled code as ``(vf, par, tab, lagpar)`` with
``vf = POTENTIALS[code]``:

==========  ==========================================================
code        meaning
==========  ==========================================================
0           constant ``par[0]``
1           Gaussian ``par[0] * exp(-r^2 / (2 par[1]^2))``
2           Coulomb power ``(r^2 + par[1]^2) ** (-par[0] / 2)``
3           mollified delta, bump of width ``par[0]`` with norm ``par[1]``
4           tabulated radial profile, see :func:`lookup`
5           joint massless-Nelson kernel, ``1 / (r^2 + lagpar[m])``
==========  ==========================================================

Everything here works on squared distances and cell lags ``m``.
"""

import numba as nb
import numpy as np

CONST, GAUSS, COULOMB, MOLLDELTA, TABULATED, MASSLESS = 0, 1, 2, 3, 4, 5

_JIT = dict(cache=True, nogil=True, error_model="numpy")
_INLINE = dict(cache=True, nogil=True, error_model="numpy", inline="always")


@nb.njit(**_INLINE)
def lookup(x, tab, h):
    """Four-point Lagrange interpolation of an even profile tabulated on ``k*h``.

    The profiles are nonnegative; the interpolant is clipped at zero because it
    can undershoot where the table flattens into its support edge.
    """
    x = abs(x)
    n = tab.shape[0]
    s = x / h
    k = int(s)
    if k >= n - 1:
        if k == n - 1 and s - k == 0.0:
            return tab[n - 1]
        return 0.0
    f = s - k
    # even extension below zero, zero beyond the table
    km1 = k - 1
    v0 = tab[-km1] if km1 < 0 else tab[km1]
    v1 = tab[k]
    v2 = tab[k + 1]
    v3 = tab[k + 2] if k + 2 < n else 0.0
    val = (-f * (f - 1.0) * (f - 2.0) / 6.0 * v0
           + (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0 * v1
           - (f + 1.0) * f * (f - 2.0) / 2.0 * v2
           + (f + 1.0) * f * (f - 1.0) / 6.0 * v3)
    return val if val > 0.0 else 0.0


@nb.njit(**_INLINE)
def v_const(r2, m, par, tab, lagpar):
    return par[0]


@nb.njit(**_INLINE)
def v_gauss(r2, m, par, tab, lagpar):
    return par[0] * np.exp(-0.5 * r2 / (par[1] * par[1]))


@nb.njit(**_INLINE)
def v_coulomb(r2, m, par, tab, lagpar):
    q = r2 + par[1] * par[1]
    if q == 0.0:
        return np.inf
    return q ** (-0.5 * par[0])


@nb.njit(**_INLINE)
def v_molldelta(r2, m, par, tab, lagpar):
    u2 = r2 / (par[0] * par[0])
    if u2 >= 1.0:
        return 0.0
    return par[1] / par[0] * np.exp(-1.0 / (1.0 - u2))


@nb.njit(**_INLINE)
def v_tabulated(r2, m, par, tab, lagpar):
    # par = (h, length scale, prefactor, squared cutoff radius)
    if r2 >= par[3]:
        return 0.0
    return par[2] * lookup(np.sqrt(r2) / par[1], tab, par[0])


@nb.njit(**_INLINE)
def v_massless(r2, m, par, tab, lagpar):
    return 1.0 / (r2 + lagpar[m])


# one specialised compiled function per code; kernels take it as first-class argument
POTENTIALS = (v_const, v_gauss, v_coulomb, v_molldelta, v_tabulated, v_massless)


@nb.njit(**_JIT)
def v_many(r2, m, vf, par, tab, lagpar):
    out = np.empty(r2.shape[0])
    for i in range(r2.shape[0]):
        out[i] = vf(r2[i], m, par, tab, lagpar)
    return out


@nb.njit(**_JIT)
def lookup_many(x, tab, h):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = lookup(x[i], tab, h)
    return out


@nb.njit(**_INLINE)
def _d2(a, b):
    s = 0.0
    for c in range(a.shape[0]):
        t = a[c] - b[c]
        s += t * t
    return s


@nb.njit(**_INLINE)
def _half2(x):
    s = 0.0
    for c in range(x.shape[0]):
        s += 0.25 * x[c] * x[c]
    return s


@nb.njit(**_INLINE)
def diag_value(dw_a, vf, par, tab, lagpar, refined):
    if refined:
        return vf(_half2(dw_a), 0, par, tab, lagpar)
    return vf(0.0, 0, par, tab, lagpar)


@nb.njit(**_JIT)
def midpoints(dw):
    """Cell-midpoint positions of a path anchored at the origin."""
    n, d = dw.shape
    wbar = np.empty((n, d))
    pos = np.zeros(d)
    for a in range(n):
        for c in range(d):
            wbar[a, c] = pos[c] + 0.5 * dw[a, c]
            pos[c] += dw[a, c]
    return wbar


@nb.njit(**_JIT)
def energy(dw, wbar, R, vf, par, tab, lagpar, refined):
    n = wbar.shape[0]
    nl = R.shape[0]
    e = 0.0
    for a in range(n):
        e += R[0] * diag_value(dw[a], vf, par, tab, lagpar, refined)
        hi = min(n, a + nl)
        for b in range(a + 1, hi):
            w = R[b - a]
            if w != 0.0:
                e += 2.0 * w * vf(_d2(wbar[a], wbar[b]), b - a, par, tab, lagpar)
    return e


@nb.njit(**_JIT)
def _window_energy(wbar, dw, R, vf, par, tab, lagpar, refined, lo, hi, c0, c1):
    # pairs (a, b), a <= b, inside [lo, hi) that involve [c0, c1) or straddle it
    nl = R.shape[0]
    e = 0.0
    for a in range(lo, min(hi, c1)):
        if a >= c0:
            e += R[0] * diag_value(dw[a], vf, par, tab, lagpar, refined)
        bmin = max(a + 1, c0)
        bmax = min(hi, a + nl)
        for b in range(bmin, bmax):
            w = R[b - a]
            if w != 0.0:
                e += 2.0 * w * vf(_d2(wbar[a], wbar[b]), b - a, par, tab, lagpar)
    return e


@nb.njit(**_JIT)
def block_delta(dw, wbar, R, vf, par, tab, lagpar, refined, c0, newdw,
                scratch_dw, scratch_wbar):
    """Energy change when the increments of cells ``[c0, c0 + len(newdw))`` are replaced.

    Cells after the block keep their increments, so the tail moves rigidly.
    Returns ``(delta, hi)``; the proposed state is left in the scratch buffers on ``[lo, hi)``.
    """
    n, d = dw.shape
    nl = R.shape[0]
    c1 = c0 + newdw.shape[0]
    lo = max(0, c0 - nl + 1)
    hi = min(n, c1 + nl - 1)
    e_old = _window_energy(wbar, dw, R, vf, par, tab, lagpar, refined, lo, hi, c0, c1)
    for a in range(lo, hi):
        for c in range(d):
            scratch_dw[a, c] = dw[a, c]
            scratch_wbar[a, c] = wbar[a, c]
    pos = np.zeros(d)
    if c0 > 0:
        for c in range(d):
            pos[c] = wbar[c0 - 1, c] + 0.5 * dw[c0 - 1, c]
    for a in range(c0, c1):
        for c in range(d):
            scratch_dw[a, c] = newdw[a - c0, c]
            scratch_wbar[a, c] = pos[c] + 0.5 * newdw[a - c0, c]
            pos[c] += newdw[a - c0, c]
    for a in range(c1, hi):
        for c in range(d):
            scratch_wbar[a, c] = pos[c] + 0.5 * dw[a, c]
            pos[c] += dw[a, c]
    e_new = _window_energy(scratch_wbar, scratch_dw, R, vf, par, tab, lagpar, refined,
                           lo, hi, c0, c1)
    return e_new - e_old, hi


@nb.njit(**_JIT)
def _commit(dw, wbar, scratch_dw, scratch_wbar, c0, c1, hi):
    n, d = dw.shape
    shift = np.zeros(d)
    for c in range(d):
        for a in range(c0, c1):
            shift[c] += scratch_dw[a, c] - dw[a, c]
    for a in range(c0, hi):
        for c in range(d):
            dw[a, c] = scratch_dw[a, c]
            wbar[a, c] = scratch_wbar[a, c]
    for a in range(hi, n):
        for c in range(d):
            wbar[a, c] += shift[c]


@nb.njit(**_JIT)
def metropolis_step(dw, wbar, beta, R, vf, par, tab, lagpar, refined,
                    c0, blen, free, z, u, scratch_dw, scratch_wbar):
    """One block regeneration proposal; returns 1 (accepted), 0 (rejected) or -1 (non-finite)."""
    n, d = dw.shape
    c1 = min(n, c0 + blen)
    b = c1 - c0
    newdw = np.empty((b, d))
    for c in range(d):
        zs = 0.0
        old = 0.0
        for a in range(b):
            zs += z[a, c]
            old += dw[c0 + a, c]
        for a in range(b):
            if free:
                newdw[a, c] = z[a, c]
            else:
                newdw[a, c] = z[a, c] + (old - zs) / b
    de, hi = block_delta(dw, wbar, R, vf, par, tab, lagpar, refined, c0, newdw,
                         scratch_dw, scratch_wbar)
    if not np.isfinite(de):
        return -1
    la = beta * de
    if la >= 0.0 or u < np.exp(la):
        _commit(dw, wbar, scratch_dw, scratch_wbar, c0, c1, hi)
        return 1
    return 0


@nb.njit(**_JIT)
def run_sweeps(dw, wbar, beta, R, vf, par, tab, lagpar, refined,
               starts, free, z, u, blen, record_every, out_end, out_energy):
    """Run ``starts.shape[0]`` proposals, recording every ``record_every`` proposals.

    Returns (accepted, rejected_nonfinite, n_recorded).
    """
    n, d = dw.shape
    scratch_dw = np.empty((n, d))
    scratch_wbar = np.empty((n, d))
    acc = 0
    bad = 0
    rec = 0
    for k in range(starts.shape[0]):
        flag = metropolis_step(dw, wbar, beta, R, vf, par, tab, lagpar, refined,
                               starts[k], blen, free[k], z[k], u[k],
                               scratch_dw, scratch_wbar)
        if flag == 1:
            acc += 1
        elif flag == -1:
            bad += 1
        if (k + 1) % n == 0:
            # resynchronise positions against accumulated rigid shifts
            wbar[:, :] = midpoints(dw)
        if record_every > 0 and (k + 1) % record_every == 0 and rec < out_end.shape[0]:
            for c in range(d):
                out_end[rec, c] = wbar[n - 1, c] + 0.5 * dw[n - 1, c]
            if out_energy.shape[0] > 0:
                out_energy[rec] = energy(dw, wbar, R, vf, par, tab, lagpar, refined)
            rec += 1
    return acc, bad, rec


@nb.njit(**_JIT)
def coupling_matrix(back, fwd, R, m, vf, par, tab, lagpar):
    """``sum_{a,b} R[m - a + b] V(back_i[a] + fwd_j[b])`` for all block pairs.

    ``back[i, a]`` is the displacement from the midpoint of cell ``a`` to the block end,
    ``fwd[j, b]`` the displacement from the block start to the midpoint of cell ``b``.
    """
    ni = back.shape[0]
    nj = fwd.shape[0]
    d = back.shape[2]
    nl = R.shape[0]
    out = np.zeros((ni, nj))
    for i in range(ni):
        for j in range(nj):
            s = 0.0
            for a in range(m):
                for b in range(m):
                    lag = m - a + b
                    if lag >= nl:
                        break
                    w = R[lag]
                    if w == 0.0:
                        continue
                    r2 = 0.0
                    for c in range(d):
                        t = back[i, a, c] + fwd[j, b, c]
                        r2 += t * t
                    s += w * vf(r2, lag, par, tab, lagpar)
            out[i, j] = s
    return out


@nb.njit(**_JIT)
def coupling_pairs(back, fwd, R, m, vf, par, tab, lagpar):
    """Row-by-row version of :func:`coupling_matrix` (pairs ``(back[i], fwd[i])``)."""
    ni = back.shape[0]
    d = back.shape[2]
    nl = R.shape[0]
    out = np.zeros(ni)
    for i in range(ni):
        s = 0.0
        for a in range(m):
            for b in range(m):
                lag = m - a + b
                if lag >= nl:
                    break
                w = R[lag]
                if w == 0.0:
                    continue
                r2 = 0.0
                for c in range(d):
                    t = back[i, a, c] + fwd[i, b, c]
                    r2 += t * t
                s += w * vf(r2, lag, par, tab, lagpar)
        out[i] = s
    return out


@nb.njit(**_JIT)
def block_energies(dw_blocks, R, vf, par, tab, lagpar, refined):
    out = np.empty(dw_blocks.shape[0])
    for i in range(dw_blocks.shape[0]):
        dw = dw_blocks[i]
        out[i] = energy(dw, midpoints(dw), R, vf, par, tab, lagpar, refined)
    return out


@nb.njit(**_JIT)
def occupation(wbar, dt, x, vf, par, tab, lagpar):
    """``sum_a dt V(wbar[a] - x_k)`` for every query point ``x_k``."""
    nq = x.shape[0]
    n = wbar.shape[0]
    out = np.zeros(nq)
    for k in range(nq):
        s = 0.0
        for a in range(n):
            s += vf(_d2(wbar[a], x[k]), 0, par, tab, lagpar)
        out[k] = dt * s
    return out


@nb.njit(**_JIT)
def pair_energy_masked(wbar, R, vf, par, tab, lagpar, label):
    """Energy of the cell pairs whose block labels differ by at least two."""
    n = wbar.shape[0]
    nl = R.shape[0]
    e = 0.0
    for a in range(n):
        hi = min(n, a + nl)
        for b in range(a + 1, hi):
            if abs(label[b] - label[a]) < 2:
                continue
            w = R[b - a]
            if w != 0.0:
                e += 2.0 * w * vf(_d2(wbar[a], wbar[b]), b - a, par, tab, lagpar)
    return e
