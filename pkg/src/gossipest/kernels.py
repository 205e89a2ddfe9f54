"""Compiled inner loops for long simulations.

All randomness is pre-drawn by the harness with numpy generators; the
kernels consume plain arrays so trials stay reproducible and the hot loops
stay allocation-free.  State updates are synchronous: consensus and
innovation terms are both evaluated on the previous iterate before either
is applied.
"""

import numpy as np
from numba import njit

TOPOLOGY_FIXED = 0
TOPOLOGY_BERNOULLI = 1
TOPOLOGY_GOSSIP = 2


@njit(cache=True)
def scalar_recursion_kernel(y0, r1, r2):
    steps = r1.shape[0]
    out = np.empty(steps + 1)
    out[0] = y0
    y = y0
    for k in range(steps):
        y = (1.0 - r1[k]) * y + r2[k]
        out[k + 1] = y
    return out


@njit(cache=True)
def run_trial_kernel(x0, u0, central_on, z, alpha, beta, alpha_c,
                     edges, mode, edge_mask, edge_idx,
                     h_stack, offsets, gain_ht, cgain_ht, cgain_g,
                     theta, record_iters, guard,
                     rec_sensor_err, rec_avg_err, rec_disagree,
                     rec_central_err, rec_gap):
    n = x0.shape[0]
    m = x0.shape[1]
    total = alpha.shape[0]
    n_edges = edges.shape[0]

    x = x0.copy()
    u = u0.copy()
    cons = np.zeros((n, m))
    innov = np.zeros(m)
    u_new = np.zeros(m)
    avg = np.zeros(m)

    rec = 0
    stopped = -1
    sup_sq = 0.0
    for q in range(n):
        for c in range(m):
            sup_sq += x[q, c] * x[q, c]
    if central_on:
        for c in range(m):
            sup_sq += u[c] * u[c]

    for i in range(total + 1):
        if rec < record_iters.shape[0] and record_iters[rec] == i:
            for c in range(m):
                s = 0.0
                for q in range(n):
                    s += x[q, c]
                avg[c] = s / n
            ae = 0.0
            for c in range(m):
                d = avg[c] - theta[c]
                ae += d * d
            rec_avg_err[rec] = np.sqrt(ae)
            dis = 0.0
            for q in range(n):
                se = 0.0
                ge = 0.0
                for c in range(m):
                    d = x[q, c] - theta[c]
                    se += d * d
                    dd = x[q, c] - avg[c]
                    dis += dd * dd
                    if central_on:
                        dg = x[q, c] - u[c]
                        ge += dg * dg
                rec_sensor_err[rec, q] = np.sqrt(se)
                if central_on:
                    rec_gap[rec, q] = np.sqrt(ge)
            rec_disagree[rec] = np.sqrt(dis)
            if central_on:
                ce = 0.0
                for c in range(m):
                    d = u[c] - theta[c]
                    ce += d * d
                rec_central_err[rec] = np.sqrt(ce)
            rec += 1
        if i == total or stopped >= 0:
            break

        for q in range(n):
            for c in range(m):
                cons[q, c] = 0.0
        if mode == TOPOLOGY_FIXED:
            for e in range(n_edges):
                p = edges[e, 0]
                r = edges[e, 1]
                for c in range(m):
                    d = x[p, c] - x[r, c]
                    cons[p, c] += d
                    cons[r, c] -= d
        elif mode == TOPOLOGY_BERNOULLI:
            for e in range(n_edges):
                if edge_mask[i, e] != 0:
                    p = edges[e, 0]
                    r = edges[e, 1]
                    for c in range(m):
                        d = x[p, c] - x[r, c]
                        cons[p, c] += d
                        cons[r, c] -= d
        else:
            e = edge_idx[i]
            p = edges[e, 0]
            r = edges[e, 1]
            for c in range(m):
                d = x[p, c] - x[r, c]
                cons[p, c] += d
                cons[r, c] -= d

        if central_on:
            # pooled innovation of the baseline, from the old u
            for c in range(m):
                s = 0.0
                for ridx in range(h_stack.shape[0]):
                    s += cgain_ht[c, ridx] * z[i, ridx]
                for cc in range(m):
                    s -= cgain_g[c, cc] * u[cc]
                u_new[c] = u[c] + (alpha_c[i] / n) * s

        b = beta[i]
        al = alpha[i]
        ssq = 0.0
        for q in range(n):
            lo = offsets[q]
            hi = offsets[q + 1]
            for c in range(m):
                innov[c] = 0.0
            for ridx in range(lo, hi):
                resid = z[i, ridx]
                for c in range(m):
                    resid -= h_stack[ridx, c] * x[q, c]
                for c in range(m):
                    innov[c] += gain_ht[c, ridx] * resid
            for c in range(m):
                val = x[q, c] - b * cons[q, c] + al * innov[c]
                x[q, c] = val
                ssq += val * val

        if central_on:
            for c in range(m):
                u[c] = u_new[c]
                ssq += u[c] * u[c]

        if ssq > sup_sq:
            sup_sq = ssq
        if ssq > guard * guard:
            stopped = i + 1

    return rec, stopped, x, u, np.sqrt(sup_sq)
