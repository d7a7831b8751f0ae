"""Compiled inner loops for the choice-probability solver.

The solver works on the normalization function

    k(p) = E[(A - 1) / (p (A - 1) + 1)],   A = exp((v + eps) / lam),

whose unique interior root is the unconditional choice probability. All
expressions are evaluated in overflow-free form: with e = exp(-|t|) and
t = (v + eps) / lam,

    (A - 1) / (p A + 1 - p) =  (1 - e) / (p + (1 - p) e)   for t >= 0
                            = -(1 - e) / (p e + (1 - p))   for t <  0.

When exp(nodes / lam) fits comfortably in double range the kernels use the
factorization A = exp(v / lam) * exp(eps / lam) with the node exponentials
precomputed, which removes all per-node transcendentals from the Newton
iterations.
"""
import numpy as np
from numba import njit

BIG = 1e304  # stand-in for an overflowed positive moment; only its sign is used


@njit(cache=True)
def solve_g_kernel(v, lam, nodes, weights, ek, fast_ok, p0, tol, maxit,
                   out_p, out_corner, out_gp, out_res):
    """Root of k(p) per element of v, warm-started at p0.

    out_corner: 0 interior, 1 at zero, 2 at one. out_gp holds dG/dv at the
    solution (0 at corners). out_res holds the final |k(p)| residual.
    """
    n = nodes.shape[0]
    for b in range(v.shape[0]):
        vb = v[b]
        fast = fast_ok and (-280.0 < vb / lam < 280.0)
        a = np.exp(vb / lam) if fast else 0.0
        s0 = 0.0
        s1 = 0.0
        for k in range(n):
            if fast:
                A = a * ek[k]
                s0 += weights[k] * (A - 1.0)
                s1 += weights[k] * (1.0 / A - 1.0)
            else:
                t = (vb + nodes[k]) / lam
                s0 += weights[k] * (np.expm1(t) if t < 700.0 else BIG)
                s1 += weights[k] * (np.expm1(-t) if t > -700.0 else BIG)
        if s0 <= 0.0:
            out_p[b] = 0.0
            out_corner[b] = 1
            out_gp[b] = 0.0
            out_res[b] = 0.0
            continue
        if s1 <= 0.0:
            out_p[b] = 1.0
            out_corner[b] = 2
            out_gp[b] = 0.0
            out_res[b] = 0.0
            continue
        p = p0[b]
        if not (0.0 < p < 1.0):
            p = 0.5
        lo = 0.0
        hi = 1.0
        kk = 0.0
        k2 = 1.0
        ka = 0.0
        for _ in range(maxit):
            kk = 0.0
            k2 = 0.0
            ka = 0.0
            for k in range(n):
                if fast:
                    A = a * ek[k]
                    if A >= 1.0:
                        e = 1.0 / A
                        den = p + (1.0 - p) * e
                        g = (1.0 - e) / den
                    else:
                        e = A
                        den = p * e + (1.0 - p)
                        g = (e - 1.0) / den
                else:
                    t = (vb + nodes[k]) / lam
                    e = np.exp(-abs(t))
                    if t >= 0.0:
                        den = p + (1.0 - p) * e
                        g = (1.0 - e) / den
                    else:
                        den = p * e + (1.0 - p)
                        g = (e - 1.0) / den
                kk += weights[k] * g
                k2 += weights[k] * g * g
                ka += weights[k] * e / (den * den)
            if kk > 0.0:
                lo = p
            elif kk < 0.0:
                hi = p
            if abs(kk) < tol or hi - lo < 1e-16:
                break
            pn = p + kk / k2
            if not (lo < pn < hi):
                pn = 0.5 * (lo + hi)
            p = pn
        out_p[b] = p
        out_corner[b] = 0
        out_gp[b] = (ka / k2) / lam if k2 > 0.0 else 0.0
        out_res[b] = abs(kk)


@njit(cache=True)
def psi_kernel(p_self, v, lam, nodes, weights, ek, fast_ok, out):
    """out[b] = E[ccp(p_self[b], v[b], lam, eps)], the self-referential map."""
    n = nodes.shape[0]
    for b in range(v.shape[0]):
        p = p_self[b]
        if p <= 0.0:
            out[b] = 0.0
            continue
        if p >= 1.0:
            out[b] = 1.0
            continue
        vb = v[b]
        fast = fast_ok and (-280.0 < vb / lam < 280.0)
        a = np.exp(vb / lam) if fast else 0.0
        acc = 0.0
        for k in range(n):
            if fast:
                A = a * ek[k]
                e = 1.0 / A if A >= 1.0 else A
                tpos = A >= 1.0
            else:
                t = (vb + nodes[k]) / lam
                e = np.exp(-abs(t))
                tpos = t >= 0.0
            if tpos:
                q = p / (p + (1.0 - p) * e)
            else:
                q = p * e / (p * e + (1.0 - p))
            acc += weights[k] * q
        out[b] = acc
