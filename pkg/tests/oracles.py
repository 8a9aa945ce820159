"""Independent brute-force oracles for the test suite.

Objectives here are written out from the problem definitions rather than
imported from the library, and minimizers are located by dense grid search
with local refinement (or exact 1D reasoning), so they stay independent of
the closed forms and iterative solvers they are used to check.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog, minimize


def phase_prox_objective(a, b, y, gamma):
    """|<a,x>^2 - b| + (gamma/2)|x - y|^2."""
    a, y = np.asarray(a, float), np.asarray(y, float)

    def fun(x):
        x = np.asarray(x, float)
        d = x - y
        return abs(float(a @ x) ** 2 - b) + 0.5 * gamma * float(d @ d)

    return fun


def spl_prox_objective(A, b, z, y, gamma):
    """(1/m) sum |c_i + g_i^T (x - z)| + (gamma/2)|x - y|^2 with the
    phase-retrieval linearization c_i = <a_i,z>^2 - b_i, g_i = 2 <a_i,z> a_i."""
    A, b = np.atleast_2d(np.asarray(A, float)), np.atleast_1d(np.asarray(b, float))
    z, y = np.asarray(z, float), np.asarray(y, float)
    t = A @ z
    c = t * t - b
    G = 2.0 * t[:, None] * A

    def fun(x):
        x = np.asarray(x, float)
        d = x - y
        return float(np.abs(c + G @ (x - z)).mean()) + 0.5 * gamma * float(d @ d)

    return fun


def spp_batch_objective(A, b, y, gamma):
    """(1/m) sum |<a_i,x>^2 - b_i| + (gamma/2)|x - y|^2."""
    A, b = np.atleast_2d(np.asarray(A, float)), np.atleast_1d(np.asarray(b, float))
    y = np.asarray(y, float)

    def fun(x):
        x = np.asarray(x, float)
        d = x - y
        return float(np.abs((A @ x) ** 2 - b).mean()) + 0.5 * gamma * float(d @ d)

    return fun


def bd_prox_objective(u, v, b, wx, wy, gamma):
    """|<u,x><v,y> - b| + (gamma/2)(|x - wx|^2 + |y - wy|^2) on the joint
    variable (x; y)."""
    u, v = np.asarray(u, float), np.asarray(v, float)
    wx, wy = np.asarray(wx, float), np.asarray(wy, float)
    d = len(u)

    def fun(w):
        w = np.asarray(w, float)
        x, y = w[:d], w[d:]
        dx, dy = x - wx, y - wy
        return (abs(float(u @ x) * float(v @ y) - b)
                + 0.5 * gamma * (float(dx @ dx) + float(dy @ dy)))

    return fun


def grid_refine_min(fun, center, radius, npts=15, polish_starts=5):
    """Dense grid over a box followed by Nelder-Mead polish from the best
    grid points. Returns (x_best, value)."""
    center = np.asarray(center, float)
    dim = center.size
    axes = [np.linspace(c - radius, c + radius, npts) for c in center]
    pts = np.array(list(itertools.product(*axes)))
    vals = np.array([fun(p) for p in pts])
    order = np.argsort(vals)
    best_x, best_v = pts[order[0]], vals[order[0]]
    for idx in order[:polish_starts]:
        res = minimize(fun, pts[idx], method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
        if res.fun < best_v:
            best_x, best_v = res.x, res.fun
    return best_x, float(best_v)


def ternary_min_1d(fun, lo, hi, iters=300):
    """Exact-enough minimizer of a convex scalar function on [lo, hi]."""
    for _ in range(iters):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if fun(m1) <= fun(m2):
            hi = m2
        else:
            lo = m1
    mid = 0.5 * (lo + hi)
    return mid, fun(mid)


def _affine_abs_prox(g, delta, center, gamma):
    """argmin_x |delta + g^T (x - center)| + (gamma/2)|x - center|^2, exact
    (dual of a single absolute-value term is a clipped multiplier)."""
    gn2 = float(g @ g)
    if gn2 == 0.0:
        return center.copy()
    mu = np.clip(gamma * delta / gn2, -1.0, 1.0)
    return center - (mu / gamma) * g


def alternating_bd_full(u, v, b, wx, wy, gamma, starts=None, sweeps=300):
    """High-accuracy local solves of the full blind-deconvolution prox by
    alternating exact minimization in x (holding y) and y (holding x); each
    half-step is an affine-absolute prox. Multiple starts, best kept.
    Returns (w_best, value)."""
    u, v = np.asarray(u, float), np.asarray(v, float)
    wx, wy = np.asarray(wx, float), np.asarray(wy, float)
    obj = bd_prox_objective(u, v, b, wx, wy, gamma)
    if starts is None:
        rng = np.random.default_rng(7)
        starts = [np.concatenate([wx, wy])]
        for _ in range(8):
            starts.append(np.concatenate([wx, wy])
                          + rng.standard_normal(2 * len(u)))
    best, best_v = None, np.inf
    d = len(u)
    for w0 in starts:
        x, y = w0[:d].copy(), w0[d:].copy()
        for _ in range(sweeps):
            q = float(v @ y)
            # given y, the residual is affine in x: (q u)^T x - b
            x_new = _affine_abs_prox(q * u, q * float(u @ wx) - b, wx, gamma)
            p = float(u @ x_new)
            y_new = _affine_abs_prox(p * v, p * float(v @ wy) - b, wy, gamma)
            move = np.linalg.norm(x_new - x) + np.linalg.norm(y_new - y)
            x, y = x_new, y_new
            if move < 1e-14:
                break
        w = np.concatenate([x, y])
        val = obj(w)
        if val < best_v:
            best, best_v = w, val
    return best, float(best_v)


def lad_reference(A, b):
    """Exact least-absolute-deviation solve as a linear program:
    min (1/n) sum t_i  s.t.  -t <= A x - b <= t. Returns (x*, f*)."""
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    n, d = A.shape
    c = np.concatenate([np.zeros(d), np.ones(n) / n])
    A_ub = np.block([[A, -np.eye(n)], [-A, -np.eye(n)]])
    b_ub = np.concatenate([b, -b])
    bounds = [(None, None)] * d + [(0, None)] * n
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if not res.success:
        raise RuntimeError(f"LP reference solve failed: {res.message}")
    return res.x[:d], float(res.fun)
