"""Numba kernels shared by the AIR engine and the shaping optimizer.

The optimizer keeps a cache of the pairwise interaction tensor

    E[r, p, z] = exp(|z|^2 - |u_r - u_p + z|^2),   u = sqrt(snr) * x,

indexed by conditioning row r, mixture component p, and 2-D quadrature node
z, together with its row sums S and per-bit half sums W0/W1. The exponent is
written so the diagonal term is exactly 1 and the maximum is bounded by
max |z|^2, which for quadrature orders up to 64 keeps everything finite in
float64 without per-row shifting. Both bit halves are accumulated directly:
deriving one as S minus the other cancels catastrophically because terms
span hundreds of orders of magnitude.

Candidate pair moves are screened against the cache by updating only the two
affected columns and recomputing the two moved rows; negligible updates
(relative change below 1e-14 of a sum that is always >= 1) are skipped, and
log1p is replaced by its argument below 1e-8 where the two agree to double
precision.
"""

import math

import numpy as np
from numba import njit, prange

_LN2 = math.log(2.0)

# |delta|/sum below this is dropped entirely (the relevant sums are >= 1).
_DROP = 1e-14
# |x| below this uses log1p(x) ~= x.
_LIN = 1e-8
# Row-level skip: exponent bound below which a whole row cannot matter.
_ROW_BOUND = -34.0


@njit(cache=True)
def _exp_bound(d2, tmax):
    # max over nodes of the exponent -d2 - 2*(d . z) given |z| <= tmax
    return -d2 + 2.0 * math.sqrt(d2) * tmax


@njit(cache=True)
def _dlog(x):
    return x if abs(x) < _LIN else math.log1p(x)


@njit(cache=True, parallel=True)
def build_cache(ur, ui, zr, zi, bits, tri_i, tri_j, E, S, W0, W1):
    """Fill E, S and both bit-half sums for the scaled points (ur, ui).

    Exploits the node symmetry E[r, p, z] = E[p, r, Z-1-z] (the quadrature
    grid is symmetric under z -> -z) to compute only the upper triangle.
    """
    M = ur.size
    Z = zr.size
    m = bits.shape[1]
    T = tri_i.size
    for t in prange(T):
        r = tri_i[t]
        p = tri_j[t]
        if r == p:
            for z in range(Z):
                E[r, p, z] = 1.0
        else:
            dre = ur[r] - ur[p]
            dim = ui[r] - ui[p]
            d2 = dre * dre + dim * dim
            for z in range(Z):
                ex = -d2 - 2.0 * (dre * zr[z] + dim * zi[z])
                E[r, p, z] = math.exp(ex) if ex > -740.0 else 0.0
            for z in range(Z):
                E[p, r, z] = E[r, p, Z - 1 - z]
    for r in prange(M):
        sbuf = np.zeros(Z)
        for k in range(m):
            for z in range(Z):
                W0[r, k, z] = 0.0
                W1[r, k, z] = 0.0
        for p in range(M):
            for z in range(Z):
                sbuf[z] += E[r, p, z]
            for k in range(m):
                if bits[p, k]:
                    for z in range(Z):
                        W1[r, k, z] += E[r, p, z]
                else:
                    for z in range(Z):
                        W0[r, k, z] += E[r, p, z]
        for z in range(Z):
            S[r, z] = sbuf[z]


@njit(cache=True, parallel=True)
def recompute_halves(E, bits, W0, W1):
    M = E.shape[0]
    Z = E.shape[2]
    m = bits.shape[1]
    for r in prange(M):
        for k in range(m):
            for z in range(Z):
                W0[r, k, z] = 0.0
                W1[r, k, z] = 0.0
        for p in range(M):
            for k in range(m):
                if bits[p, k]:
                    for z in range(Z):
                        W1[r, k, z] += E[r, p, z]
                else:
                    for z in range(Z):
                        W0[r, k, z] += E[r, p, z]


@njit(cache=True, parallel=True)
def objective_acc(S, W0, W1, bits, w2, is_gmi):
    """Sum over rows and nodes of w2 * cost, cost = m ln S - sum_k ln H_own.

    The objective in bits is  const - acc / (M ln 2)  with const = log2 M
    for MI and m for GMI.
    """
    M, Z = S.shape
    m = W1.shape[1]
    total = 0.0
    for r in prange(M):
        local = 0.0
        for z in range(Z):
            local += w2[z] * math.log(S[r, z])
        if is_gmi:
            local *= m
            for k in range(m):
                if bits[r, k]:
                    for z in range(Z):
                        local -= w2[z] * math.log(W1[r, k, z])
                else:
                    for z in range(Z):
                        local -= w2[z] * math.log(W0[r, k, z])
        total += local
    return total


@njit(cache=True, parallel=True)
def scale_grad_acc(E, S, W0, W1, bits, ur, ui, zr, zi, w2, is_gmi):
    """d(acc)/d(ln snr) for the cached state.

    Each exponent satisfies da/dln s = -d2 - (d . z); the objective gradient
    in bits per ln-snr is then -grad_acc / (M ln 2).
    """
    M, Z = S.shape
    m = W1.shape[1]
    total = 0.0
    for r in prange(M):
        tall = np.zeros(Z)
        tb0 = np.zeros((m, Z))
        tb1 = np.zeros((m, Z))
        for p in range(M):
            dre = ur[r] - ur[p]
            dim = ui[r] - ui[p]
            d2 = dre * dre + dim * dim
            for z in range(Z):
                da = -d2 - (dre * zr[z] + dim * zi[z])
                w = E[r, p, z] * da
                tall[z] += w
                if is_gmi:
                    for k in range(m):
                        if bits[p, k]:
                            tb1[k, z] += w
                        else:
                            tb0[k, z] += w
        local = 0.0
        for z in range(Z):
            local += w2[z] * tall[z] / S[r, z]
        if is_gmi:
            local *= m
            for k in range(m):
                if bits[r, k]:
                    for z in range(Z):
                        local -= w2[z] * tb1[k, z] / W1[r, k, z]
                else:
                    for z in range(Z):
                        local -= w2[z] * tb0[k, z] / W0[r, k, z]
        total += local
    return total


@njit(cache=True, parallel=True)
def screen_pair(
    ur, ui, E, S, W0, W1, bits, zr, zi, w2, tmax,
    i1, i2, cand_u, moved, is_gmi, old_rows_cost, EN1, EN2, out,
):
    """Cost-accumulator delta for every candidate reposition of pair (i1, i2).

    cand_u is (C, 4): scaled re/im of the new positions of i1 and i2; moved
    is (C, 2) uint8 flags. out[c] receives the change of the objective
    accumulator at fixed scale, exact up to dropped sub-1e-14 relative
    updates; the caller converts to bits and applies the energy correction.

    Phase 1 walks rows in a fixed number of chunks (reductions are therefore
    independent of the thread count) computing the column deltas of all
    candidates at once and stashing the new-column exponentials in EN1/EN2.
    Phase 2 recomputes the moved rows per candidate, reusing those
    exponentials through the node symmetry a(r, p, z) = a(p, r, -z).
    """
    M = ur.size
    Z = zr.size
    m = bits.shape[1]
    C = out.shape[0]
    NCH = 8
    chunk = (M + NCH - 1) // NCH
    pacc = np.zeros((NCH, C))

    for chidx in prange(NCH):
        r0 = chidx * chunk
        r1 = min(M, r0 + chunk)
        acc = np.zeros(C)
        d1 = np.zeros((C, Z))
        d2 = np.zeros((C, Z))
        anyz = np.empty(Z, np.uint8)
        anyc = np.empty(C, np.uint8)
        for r in range(r0, r1):
            o1r = ur[r] - ur[i1]
            o1i = ui[r] - ui[i1]
            q1o = o1r * o1r + o1i * o1i
            old1_live = _exp_bound(q1o, tmax) > -38.0
            o2r = ur[r] - ur[i2]
            o2i = ui[r] - ui[i2]
            q2o = o2r * o2r + o2i * o2i
            old2_live = _exp_bound(q2o, tmax) > -38.0
            row_any = False
            for z in range(Z):
                anyz[z] = 0
            for c in range(C):
                anyc[c] = 0
                mv1 = moved[c, 0] != 0
                mv2 = moved[c, 1] != 0
                own_row = (r == i1 and mv1) or (r == i2 and mv2)
                lq1 = la1r = la1i = 0.0
                lq2 = la2r = la2i = 0.0
                new1_live = False
                new2_live = False
                if mv1:
                    la1r = ur[r] - cand_u[c, 0]
                    la1i = ui[r] - cand_u[c, 1]
                    lq1 = la1r * la1r + la1i * la1i
                    new1_live = _exp_bound(lq1, tmax) > -38.0
                    if not new1_live:
                        for z in range(Z):
                            EN1[c, r, z] = 0.0
                if mv2:
                    la2r = ur[r] - cand_u[c, 2]
                    la2i = ui[r] - cand_u[c, 3]
                    lq2 = la2r * la2r + la2i * la2i
                    new2_live = _exp_bound(lq2, tmax) > -38.0
                    if not new2_live:
                        for z in range(Z):
                            EN2[c, r, z] = 0.0
                live1 = mv1 and (new1_live or old1_live)
                live2 = mv2 and (new2_live or old2_live)
                if own_row or not (live1 or live2):
                    continue
                ca = 0.0
                got = False
                for z in range(Z):
                    dd1 = 0.0
                    dd2 = 0.0
                    if live1:
                        en1 = 0.0
                        if new1_live:
                            ex = -lq1 - 2.0 * (la1r * zr[z] + la1i * zi[z])
                            if ex > -38.0:
                                en1 = math.exp(ex)
                            EN1[c, r, z] = en1
                        dd1 = en1 - E[r, i1, z]
                    if live2:
                        en2 = 0.0
                        if new2_live:
                            ex = -lq2 - 2.0 * (la2r * zr[z] + la2i * zi[z])
                            if ex > -38.0:
                                en2 = math.exp(ex)
                            EN2[c, r, z] = en2
                        dd2 = en2 - E[r, i2, z]
                    if abs(dd1) + abs(dd2) < _DROP:
                        d1[c, z] = 0.0
                        d2[c, z] = 0.0
                        continue
                    d1[c, z] = dd1
                    d2[c, z] = dd2
                    got = True
                    anyz[z] = 1
                    dl = _dlog((dd1 + dd2) / S[r, z])
                    if is_gmi:
                        ca += w2[z] * m * dl
                    else:
                        ca += w2[z] * dl
                acc[c] += ca
                if got:
                    anyc[c] = 1
                    row_any = True
            if is_gmi and row_any:
                for z in range(Z):
                    if anyz[z] == 0:
                        continue
                    g1 = 0.0
                    g2 = 0.0
                    for k in range(m):
                        h = W1[r, k, z] if bits[r, k] else W0[r, k, z]
                        hi = 1.0 / h
                        if bits[i1, k] == bits[r, k]:
                            g1 += hi
                        if bits[i2, k] == bits[r, k]:
                            g2 += hi
                    wz = w2[z]
                    for c in range(C):
                        if anyc[c] == 0:
                            continue
                        dd1 = d1[c, z]
                        dd2 = d2[c, z]
                        ad = abs(dd1) + abs(dd2)
                        if ad < _DROP:
                            continue
                        if ad < _LIN:
                            acc[c] -= wz * (dd1 * g1 + dd2 * g2)
                        else:
                            for k in range(m):
                                dh = 0.0
                                if bits[i1, k] == bits[r, k]:
                                    dh += dd1
                                if bits[i2, k] == bits[r, k]:
                                    dh += dd2
                                if dh != 0.0:
                                    h = W1[r, k, z] if bits[r, k] else W0[r, k, z]
                                    acc[c] -= wz * _dlog(dh / h)
        for c in range(C):
            pacc[chidx, c] = acc[c]

    # Phase 2: moved rows per candidate, reusing column exps via symmetry.
    rowdelta = np.zeros(C)
    for c in prange(C):
        mv1 = moved[c, 0] != 0
        mv2 = moved[c, 1] != 0
        tmp = np.empty(Z)
        sbuf = np.empty(Z)
        hbuf = np.empty((m, Z))
        cross = np.empty(Z)
        if mv1 and mv2:
            dre = cand_u[c, 0] - cand_u[c, 2]
            dim = cand_u[c, 1] - cand_u[c, 3]
            q = dre * dre + dim * dim
            for z in range(Z):
                ex = -q - 2.0 * (dre * zr[z] + dim * zi[z])
                cross[z] = math.exp(ex) if ex > -740.0 else 0.0
        delta = 0.0
        for rowsel in range(2):
            if rowsel == 0:
                if not mv1:
                    continue
                row = i1
                other = i2
                other_moved = mv2
            else:
                if not mv2:
                    continue
                row = i2
                other = i1
                other_moved = mv1
            for z in range(Z):
                sbuf[z] = 1.0
            if is_gmi:
                for k in range(m):
                    for z in range(Z):
                        hbuf[k, z] = 1.0
            for p in range(M):
                if p == row:
                    continue
                if p == other and other_moved:
                    if rowsel == 0:
                        for z in range(Z):
                            tmp[z] = cross[z]
                    else:
                        for z in range(Z):
                            tmp[z] = cross[Z - 1 - z]
                elif rowsel == 0:
                    for z in range(Z):
                        tmp[z] = EN1[c, p, Z - 1 - z]
                else:
                    for z in range(Z):
                        tmp[z] = EN2[c, p, Z - 1 - z]
                for z in range(Z):
                    sbuf[z] += tmp[z]
                if is_gmi:
                    for k in range(m):
                        if bits[p, k] == bits[row, k]:
                            for z in range(Z):
                                hbuf[k, z] += tmp[z]
            if is_gmi:
                for z in range(Z):
                    cc = m * math.log(sbuf[z])
                    for k in range(m):
                        cc -= math.log(hbuf[k, z])
                    delta += w2[z] * cc
            else:
                for z in range(Z):
                    delta += w2[z] * math.log(sbuf[z])
            delta -= old_rows_cost[rowsel]
        rowdelta[c] = delta

    for c in range(C):
        total = rowdelta[c]
        for chidx in range(NCH):
            total += pacc[chidx, c]
        out[c] = total


@njit(cache=True, parallel=True)
def apply_pair_move(ur, ui, E, S, W0, W1, bits, zr, zi, i1, i2, n1r, n1i, n2r, n2i, mv1, mv2):
    """Exact in-place cache update for an accepted move at fixed scale.

    Caller must update ur/ui (and any tracked energy) afterwards; the kernel
    reads the old positions. Pass 1 rewrites the two moved columns of every
    unmoved row; pass 2 rebuilds the moved rows from those columns via the
    node symmetry, so no exponential is evaluated twice.
    """
    M = ur.size
    Z = zr.size
    m = bits.shape[1]
    for r in prange(M):
        if (r == i1 and mv1) or (r == i2 and mv2):
            continue
        if mv1:
            dre = ur[r] - n1r
            dim = ui[r] - n1i
            q = dre * dre + dim * dim
            for z in range(Z):
                ex = -q - 2.0 * (dre * zr[z] + dim * zi[z])
                e = math.exp(ex) if ex > -740.0 else 0.0
                d = e - E[r, i1, z]
                E[r, i1, z] = e
                S[r, z] += d
                for k in range(m):
                    if bits[i1, k]:
                        W1[r, k, z] += d
                    else:
                        W0[r, k, z] += d
        if mv2:
            dre = ur[r] - n2r
            dim = ui[r] - n2i
            q = dre * dre + dim * dim
            for z in range(Z):
                ex = -q - 2.0 * (dre * zr[z] + dim * zi[z])
                e = math.exp(ex) if ex > -740.0 else 0.0
                d = e - E[r, i2, z]
                E[r, i2, z] = e
                S[r, z] += d
                for k in range(m):
                    if bits[i2, k]:
                        W1[r, k, z] += d
                    else:
                        W0[r, k, z] += d
    # Pass 2: rebuild the moved rows from the refreshed columns.
    for rowsel in prange(2):
        skip = (rowsel == 0 and not mv1) or (rowsel == 1 and not mv2)
        if not skip:
            if rowsel == 0:
                row, other, other_moved = i1, i2, mv2
                rr, ri, orr, ori = n1r, n1i, n2r, n2i
            else:
                row, other, other_moved = i2, i1, mv1
                rr, ri, orr, ori = n2r, n2i, n1r, n1i
            for p in range(M):
                if p == row:
                    for z in range(Z):
                        E[row, p, z] = 1.0
                elif p == other and other_moved:
                    dre = rr - orr
                    dim = ri - ori
                    q = dre * dre + dim * dim
                    for z in range(Z):
                        ex = -q - 2.0 * (dre * zr[z] + dim * zi[z])
                        E[row, p, z] = math.exp(ex) if ex > -740.0 else 0.0
                else:
                    for z in range(Z):
                        E[row, p, z] = E[p, row, Z - 1 - z]
            for k in range(m):
                for z in range(Z):
                    W0[row, k, z] = 0.0
                    W1[row, k, z] = 0.0
            sbuf = np.zeros(Z)
            for p in range(M):
                for z in range(Z):
                    sbuf[z] += E[row, p, z]
                for k in range(m):
                    if bits[p, k]:
                        for z in range(Z):
                            W1[row, k, z] += E[row, p, z]
                    else:
                        for z in range(Z):
                            W0[row, k, z] += E[row, p, z]
            for z in range(Z):
                S[row, z] = sbuf[z]


@njit(cache=True, parallel=True)
def bsa_scan(E, S, W0, W1, bits, w2, pair_i, pair_j, out):
    """Cost-accumulator delta for swapping the labels of every listed pair.

    Geometry (E, S) is untouched by a label swap; only the bit-half sums
    move, and only at positions where the two labels differ.
    """
    npairs = pair_i.size
    M, Z = S.shape
    m = W1.shape[1]
    for t in prange(npairs):
        i = pair_i[t]
        j = pair_j[t]
        dacc = 0.0
        for k in range(m):
            if bits[i, k] == bits[j, k]:
                continue
            for r in range(M):
                if r == i or r == j:
                    continue
                i_in = bits[i, k] == bits[r, k]
                own1 = bits[r, k] != 0
                for z in range(Z):
                    h = W1[r, k, z] if own1 else W0[r, k, z]
                    if i_in:
                        d = E[r, j, z] - E[r, i, z]
                    else:
                        d = E[r, i, z] - E[r, j, z]
                    if abs(d) < _DROP * h:
                        continue
                    dacc -= w2[z] * _dlog(d / h)
            # Rows i and j: the own half flips to the complement, with the
            # swapped pair exchanged inside it (E[r, r, z] = 1 exactly). The
            # true value is >= 1, so clamp away subtractive rounding.
            for z in range(Z):
                if bits[i, k]:
                    h_old = W1[i, k, z]
                    comp = W0[i, k, z]
                else:
                    h_old = W0[i, k, z]
                    comp = W1[i, k, z]
                h_new = comp + 1.0 - E[i, j, z]
                if h_new < 1.0:
                    h_new = 1.0
                dacc -= w2[z] * (math.log(h_new) - math.log(h_old))
            for z in range(Z):
                if bits[j, k]:
                    h_old = W1[j, k, z]
                    comp = W0[j, k, z]
                else:
                    h_old = W0[j, k, z]
                    comp = W1[j, k, z]
                h_new = comp + 1.0 - E[j, i, z]
                if h_new < 1.0:
                    h_new = 1.0
                dacc -= w2[z] * (math.log(h_new) - math.log(h_old))
        out[t] = dacc


@njit(cache=True, parallel=True)
def bsa_apply(E, W0, W1, bits, i, j):
    """Update both half sums for the label swap of i and j (bits still old)."""
    M = E.shape[0]
    Z = E.shape[2]
    m = bits.shape[1]
    for r in prange(M):
        for k in range(m):
            if bits[i, k] == bits[j, k]:
                continue
            if bits[i, k]:
                for z in range(Z):
                    d = E[r, j, z] - E[r, i, z]
                    W1[r, k, z] += d
                    W0[r, k, z] -= d
            else:
                for z in range(Z):
                    d = E[r, i, z] - E[r, j, z]
                    W1[r, k, z] += d
                    W0[r, k, z] -= d


@njit(cache=True, parallel=True)
def mc_mi_samples(xr, xi, idx, yr, yi, n0, out):
    """Per-sample MI information density in bits, log-sum-exp stabilized."""
    M = xr.size
    n = out.size
    log2M = math.log2(M)
    for s in prange(n):
        t = idx[s]
        dr = yr[s] - xr[t]
        di = yi[s] - xi[t]
        d2t = dr * dr + di * di
        mx = 0.0
        for p in range(M):
            dr = yr[s] - xr[p]
            di = yi[s] - xi[p]
            a = (d2t - (dr * dr + di * di)) / n0
            if a > mx:
                mx = a
        acc = 0.0
        for p in range(M):
            dr = yr[s] - xr[p]
            di = yi[s] - xi[p]
            a = (d2t - (dr * dr + di * di)) / n0
            acc += math.exp(a - mx)
        out[s] = log2M - (math.log(acc) + mx) / _LN2


@njit(cache=True, parallel=True)
def mc_gmi_samples(xr, xi, bits, idx, yr, yi, n0, out):
    """Per-sample GMI information density (sum over bit positions) in bits."""
    M = xr.size
    m = bits.shape[1]
    n = out.size
    for s in prange(n):
        t = idx[s]
        ex = np.empty(M)
        mx = -1.0e300
        for p in range(M):
            dr = yr[s] - xr[p]
            di = yi[s] - xi[p]
            a = -(dr * dr + di * di) / n0
            ex[p] = a
            if a > mx:
                mx = a
        a_t = ex[t] - mx
        tot = 0.0
        for p in range(M):
            ex[p] = math.exp(ex[p] - mx)
            tot += ex[p]
        val = 0.0
        for k in range(m):
            own = 0.0
            bt = bits[t, k]
            for p in range(M):
                if bits[p, k] == bt:
                    own += ex[p]
            # own always contains the transmitted point; if every term of
            # the half underflowed, fall back to that term's log directly.
            log_own = math.log(own) if own > 0.0 else a_t
            val += 1.0 + (log_own - math.log(tot)) / _LN2
        out[s] = val
