"""Proximal subproblem solvers.

Every outer-loop iteration minimizes ``f_z(x, B) + (gamma/2) |x - y|^2``
where ``f_z(., B)`` is the batch-averaged model centered at ``z`` and ``y``
the proximal center. This module provides the specialized solvers:

* linear model: an exact subgradient-averaging step (any batch size);
* prox-linear model, single sample: closed form (a clipped line search
  along the linearization gradient);
* prox-linear model, batch: the dual of the subproblem is a box-constrained
  concave quadratic over one multiplier per sample, solved by cyclic exact
  coordinate ascent to a duality-gap tolerance;
* full model, phase retrieval, single sample: enumeration of the stationary
  candidates of each smooth branch plus the kink points, keeping the
  candidate with the best objective;
* full model, blind deconvolution, single sample: rational candidates for
  both residual signs plus kink candidates obtained from a quartic
  (companion-matrix roots), again decided by objective value;
* full model, batch: an inner deterministic prox-linear loop whose steps
  reuse the batch dual solver and which contracts linearly.

Solvers are pure functions of the request; concurrent solves on distinct
requests are safe. Subgradient accumulation uses a fixed index order so
results are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .models import ModelKind, curvature_per_sample, linearize_batch
from .problems import ProblemInstance, ProblemKind

STATUS_CLOSED_FORM = "closed_form"
STATUS_QP = "qp"
STATUS_INNER_LOOP = "inner_loop"
STATUS_NONCONVEX = "nonconvex_enumerated"


@dataclass(frozen=True)
class ProxRequest:
    kind: ModelKind
    instance: ProblemInstance
    batch: np.ndarray
    z: np.ndarray       # model center
    y: np.ndarray       # proximal center
    gamma: float
    tol: float = 1e-10
    max_inner: int = 2000

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError(f"prox weight must be positive, got {self.gamma}")
        object.__setattr__(self, "batch", np.atleast_1d(np.asarray(self.batch, dtype=int)))
        if len(self.batch) == 0:
            raise ValueError("need a nonempty batch")


@dataclass
class ProxResult:
    x_plus: np.ndarray
    objective: float
    inner_iters: int = 0
    gap_trace: Optional[np.ndarray] = None
    status: str = STATUS_CLOSED_FORM
    converged: bool = True
    dual_gap: float = 0.0


def subproblem_objective(req: ProxRequest, x: np.ndarray) -> float:
    """Model value over the batch plus the proximal quadratic at x."""
    if req.kind == ModelKind.FULL:
        vals = _batch_losses(req.instance, req.batch, x)
    else:
        c, G = linearize_batch(req.instance, req.batch, req.z)
        r = c + G @ (x - req.z)
        if req.kind == ModelKind.PROX_LINEAR:
            vals = np.abs(r)
        else:
            # linear model: loss at z plus the subgradient inner product
            vals = np.abs(c) + np.sign(c) * (r - c)
    dy = x - req.y
    return float(vals.mean() + 0.5 * req.gamma * dy @ dy)


def _batch_losses(instance: ProblemInstance, idx, x: np.ndarray) -> np.ndarray:
    if instance.kind == ProblemKind.PHASE_RETRIEVAL:
        return np.abs((instance.A[idx] @ x) ** 2 - instance.b[idx])
    if instance.kind == ProblemKind.LEAST_ABS_DEV:
        return np.abs(instance.A[idx] @ x - instance.b[idx])
    d = instance.dim
    return np.abs((instance.U[idx] @ x[:d]) * (instance.V[idx] @ x[d:]) - instance.b[idx])


def prox_sgd(req: ProxRequest) -> ProxResult:
    """Exact linear-model step: average the batch subgradients at z and move
    from the proximal center."""
    c, G = linearize_batch(req.instance, req.batch, req.z)
    acc = np.sign(c) @ G  # sum of per-sample subgradients, fixed index order
    x_plus = req.y - acc / (len(req.batch) * req.gamma)
    return ProxResult(x_plus=x_plus, objective=subproblem_objective(req, x_plus))


def prox_spl_seq(req: ProxRequest) -> ProxResult:
    """Single-sample prox-linear step, in closed form."""
    c, G = linearize_batch(req.instance, req.batch[:1], req.z)
    g = G[0]
    gn2 = float(g @ g)
    if gn2 == 0.0:
        x_plus = req.y.copy()
    else:
        delta = (float(c[0]) + float(g @ (req.y - req.z))) / req.gamma
        zeta = g / req.gamma
        step = np.clip(-delta / (gn2 / req.gamma ** 2), -1.0, 1.0)
        x_plus = req.y + step * zeta
    return ProxResult(x_plus=x_plus, objective=subproblem_objective(req, x_plus))


def _box_qp_ascent(c: np.ndarray, G: np.ndarray, z: np.ndarray, y: np.ndarray,
                   gamma: float, tol: float, max_sweeps: int):
    """Maximize the dual of min_x (1/m) sum |c_i + g_i^T (x - z)| + (gamma/2)|x-y|^2
    over mu in [-1/m, 1/m]^m by cyclic exact coordinate ascent; recover the
    primal point x = y - gamma^{-1} sum mu_i g_i.

    Returns (x_plus, primal_value, sweeps, gap, gap_trace).
    """
    m = len(c)
    box = 1.0 / m
    d_lin = c + G @ (y - z)
    gram = G @ G.T
    diag = np.diag(gram).copy()
    mu = np.zeros(m)
    q = np.zeros(m)          # gram @ mu, maintained incrementally
    gap_hist = []
    gap = np.inf
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        for j in range(m):
            if diag[j] > 0.0:
                target = (gamma * d_lin[j] - (q[j] - diag[j] * mu[j])) / diag[j]
                new = min(box, max(-box, target))
            else:
                new = box * np.sign(d_lin[j])
            delta = new - mu[j]
            if delta != 0.0:
                q += delta * gram[j]
                mu[j] = new
        r = d_lin - q / gamma                   # primal residuals at x(mu)
        quad = float(mu @ q) / (2.0 * gamma)
        primal = float(np.abs(r).mean()) + quad
        dual = float(mu @ d_lin) - quad
        gap = primal - dual
        gap_hist.append(gap)
        if gap <= tol * (1.0 + abs(primal)):
            break
    x_plus = y - (G.T @ mu) / gamma
    return x_plus, primal, sweeps, gap, np.array(gap_hist)


def prox_spl_batch(req: ProxRequest) -> ProxResult:
    """Minibatch prox-linear step via the box-constrained dual quadratic."""
    c, G = linearize_batch(req.instance, req.batch, req.z)
    x_plus, primal, sweeps, gap, hist = _box_qp_ascent(
        c, G, req.z, req.y, req.gamma, req.tol, req.max_inner)
    return ProxResult(x_plus=x_plus, objective=primal, inner_iters=sweeps,
                      gap_trace=hist, status=STATUS_QP,
                      converged=gap <= req.tol * (1.0 + abs(primal)), dual_gap=gap)


def _first_argmin(candidates, objective):
    best, best_val = None, np.inf
    for cand in candidates:
        val = objective(cand)
        if np.isfinite(val) and val < best_val:
            best, best_val = cand, val
    return best, best_val


def prox_spp_seq_phase(req: ProxRequest) -> ProxResult:
    """Single-sample proximal-point step for phase retrieval by enumerating
    the stationary candidates of both smooth branches and the kink points.

    Candidate order (ties go to the first): the two rational branch points
    with denominators 2|a|^2 + gamma and 2|a|^2 - gamma, the two kink points
    with <a, x> = -sqrt(b) and +sqrt(b), then y itself.
    """
    i = int(req.batch[0])
    a = req.instance.A[i]
    b = float(req.instance.b[i])
    y, gamma = req.y, req.gamma
    an2 = float(a @ a)
    ay = float(a @ y)

    cands = []
    if an2 > 0.0:
        cands.append(y - (2.0 * ay / (2.0 * an2 + gamma)) * a)
        if 2.0 * an2 != gamma:
            cands.append(y - (2.0 * ay / (2.0 * an2 - gamma)) * a)
        if b >= 0.0:
            root = np.sqrt(b)
            cands.append(y - ((ay - root) / an2) * a)
            cands.append(y - ((ay + root) / an2) * a)
    cands.append(y.copy())

    def objective(x):
        dy = x - y
        return abs(float(a @ x) ** 2 - b) + 0.5 * gamma * float(dy @ dy)

    x_plus, val = _first_argmin(cands, objective)
    status = STATUS_CLOSED_FORM if gamma > 2.0 * an2 else STATUS_NONCONVEX
    return ProxResult(x_plus=x_plus, objective=val, status=status)


def _bd_kink_candidates(u, v, wx, wy, b):
    """Points on the kink <u,x><v,y> = b that are stationary for the
    constrained projection of (wx, wy); roots of a quartic when b != 0."""
    nu2, nv2 = float(u @ u), float(v @ v)
    P, Q = float(u @ wx), float(v @ wy)
    out = []
    if nu2 == 0.0 or nv2 == 0.0:
        return out
    if b == 0.0:
        out.append((wx - (P / nu2) * u, wy.copy()))
        out.append((wx.copy(), wy - (Q / nv2) * v))
        return out
    # eta parameterizes <u, x+> on the kink; companion-matrix roots
    coeffs = np.array([nv2, -nv2 * P, 0.0, b * nu2 * Q, -b * b * nu2])
    roots = np.roots(coeffs)
    for eta in roots:
        if abs(eta.imag) > 1e-8 * max(1.0, abs(eta)):
            continue
        eta = float(eta.real)
        if eta == 0.0:
            continue
        zeta = (eta * P - eta * eta) / (b * nu2)
        out.append((wx - zeta * (b / eta) * u, wy - zeta * eta * v))
    return out


def prox_seq_blind_deconv(req: ProxRequest) -> ProxResult:
    """Single-sample step for blind deconvolution, all model kinds.

    The linear and prox-linear models use the same closed forms as phase
    retrieval on the joint variable. The full model enumerates the rational
    stationary candidates of both residual signs (skipping a branch when its
    denominator gamma^2 - |u|^2 |v|^2 vanishes), the kink candidates from the
    quartic, and the proximal center itself; the candidate with the smallest
    true objective wins. If no candidate besides the center is available,
    the batch inner loop is used as a fallback.
    """
    if req.kind == ModelKind.LINEAR:
        return prox_sgd(req)
    if req.kind == ModelKind.PROX_LINEAR:
        return prox_spl_seq(req)

    i = int(req.batch[0])
    inst = req.instance
    d = inst.dim
    u, v, b = inst.U[i], inst.V[i], float(inst.b[i])
    wx, wy = req.y[:d], req.y[d:]
    gamma = req.gamma
    nu2, nv2 = float(u @ u), float(v @ v)
    P, Q = float(u @ wx), float(v @ wy)

    cands = []
    den = gamma * gamma - nu2 * nv2
    if den != 0.0:
        for s in (1.0, -1.0):
            xc = wx - ((s * gamma * Q - nv2 * P) / den) * u
            yc = wy - ((s * gamma * P - nu2 * Q) / den) * v
            cands.append((xc, yc))
    cands.extend(_bd_kink_candidates(u, v, wx, wy, b))
    enumerated = len(cands)
    cands.append((wx.copy(), wy.copy()))

    if enumerated == 0:
        return prox_spp_batch(req)

    def objective(pair):
        xc, yc = pair
        dx, dy = xc - wx, yc - wy
        return (abs(float(u @ xc) * float(v @ yc) - b)
                + 0.5 * gamma * (float(dx @ dx) + float(dy @ dy)))

    best, val = _first_argmin(cands, objective)
    x_plus = np.concatenate(best)
    status = STATUS_CLOSED_FORM if gamma > np.sqrt(nu2 * nv2) else STATUS_NONCONVEX
    return ProxResult(x_plus=x_plus, objective=val, status=status)


def prox_spp_batch(req: ProxRequest) -> ProxResult:
    """Minibatch proximal-point step via a deterministic inner prox-linear
    loop: linearize at the current inner iterate, add a damping quadratic
    with weight eta set to the batch curvature, and solve the resulting
    prox-linear subproblem with the dual ascent machinery. Contracts
    linearly with ratio (eta + tau) / (gamma + eta - lam).
    """
    inst, batch, gamma, y = req.instance, req.batch, req.gamma, req.y
    curv = float(curvature_per_sample(inst, batch).max())
    eta = curv  # smallest admissible damping, best contraction factor
    z_t = y.copy()
    trace = []
    converged = False
    iters = 0
    for iters in range(1, req.max_inner + 1):
        c, G = linearize_batch(inst, batch, z_t)
        center = (gamma * y + eta * z_t) / (gamma + eta)
        z_next, _, _, _, _ = _box_qp_ascent(
            c, G, z_t, center, gamma + eta, req.tol, req.max_inner)
        trace.append(subproblem_objective(req, z_next))
        move = float(np.linalg.norm(z_next - z_t))
        z_t = z_next
        if move <= req.tol:
            converged = True
            break
    return ProxResult(x_plus=z_t, objective=trace[-1], inner_iters=iters,
                      gap_trace=np.array(trace), status=STATUS_INNER_LOOP,
                      converged=converged)


def prox_step(req: ProxRequest) -> ProxResult:
    """Route a request to the specialized solver for its model kind, problem
    kind and batch size."""
    if req.kind == ModelKind.LINEAR:
        return prox_sgd(req)
    if req.kind == ModelKind.PROX_LINEAR or req.instance.kind == ProblemKind.LEAST_ABS_DEV:
        # for affine measurements the full model coincides with its linearization
        if len(req.batch) == 1:
            return prox_spl_seq(req)
        return prox_spl_batch(req)
    if len(req.batch) == 1:
        if req.instance.kind == ProblemKind.PHASE_RETRIEVAL:
            return prox_spp_seq_phase(req)
        return prox_seq_blind_deconv(req)
    return prox_spp_batch(req)
