"""Model-function oracles for the stochastic model-based method family.

Each algorithm in the family is defined by the local surrogate ("model")
it builds for the sample loss around a center z:

* LINEAR       f_z(x, xi) = f(z, xi) + <v(z), x - z>          (subgradient step)
* PROX_LINEAR  f_z(x, xi) = |c(z) + g(z)^T (x - z)|           (partial linearization
                            inside the outer absolute value)
* FULL         f_z(x, xi) = f(x, xi)                          (proximal point)

All three are tight at the center (f_z(z, xi) = f(z, xi)). The constants
exposed here quantify how the model relates to the loss: ``lam`` is the weak
convexity of the model in x, ``tau`` the quadratic model-approximation gap.
A slot for a proximable composite regularizer exists in the linear model's
definition; the shipped implementation fixes it to zero, which is what every
supported objective uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .problems import ProblemInstance, ProblemKind, sample_loss, sample_subgradient


class ModelKind(str, Enum):
    LINEAR = "linear"
    PROX_LINEAR = "prox_linear"
    FULL = "full"


@dataclass(frozen=True)
class ModelConstants:
    """Weak convexity ``lam`` of the model, quadratic gap ``tau``, and an
    optional global Lipschitz hint."""

    lam: float
    tau: float
    L_hint: Optional[float] = None

    def __post_init__(self):
        if self.lam < 0 or self.tau < 0:
            raise ValueError("model constants must be nonnegative")
        if self.L_hint is not None and self.L_hint <= 0:
            raise ValueError("L_hint must be positive when present")


def curvature_per_sample(instance: ProblemInstance, idx=None) -> np.ndarray:
    """Per-sample curvature scale of the loss: the operator norm of the
    measurement map's second derivative (2|a|^2 for phase retrieval,
    |u||v| for blind deconvolution, 0 for affine measurements)."""
    if idx is None:
        idx = np.arange(instance.n)
    idx = np.atleast_1d(idx)
    if instance.kind == ProblemKind.PHASE_RETRIEVAL:
        return 2.0 * np.sum(instance.A[idx] ** 2, axis=1)
    if instance.kind == ProblemKind.LEAST_ABS_DEV:
        return np.zeros(len(idx))
    return np.linalg.norm(instance.U[idx], axis=1) * np.linalg.norm(instance.V[idx], axis=1)


def weak_convexity(instance: ProblemInstance) -> float:
    """A uniform per-sample weak-convexity constant for the loss."""
    return float(curvature_per_sample(instance).max())


def objective_weak_convexity(instance: ProblemInstance) -> float:
    """Weak convexity of the full empirical objective (mean over samples).

    Tighter than the uniform per-sample bound: weak convexity adds across
    the mean, and a phase-retrieval sample with b <= 0 is convex outright
    (|t^2 - b| = t^2 - b there, so the kink never activates)."""
    per_sample = curvature_per_sample(instance)
    if instance.kind == ProblemKind.PHASE_RETRIEVAL:
        per_sample = per_sample * (instance.b > 0)
    return float(per_sample.mean())


def linearize_batch(instance: ProblemInstance, idx, z: np.ndarray):
    """Coefficients of the partial linearization at center z for a batch:
    returns (c, G) with model residual c_i + G_i (x - z) for each sample."""
    idx = np.atleast_1d(idx)
    z = np.asarray(z, dtype=float)
    if z.shape != (instance.decision_dim,):
        raise ValueError(f"center has shape {z.shape}, expected ({instance.decision_dim},)")
    if instance.kind == ProblemKind.PHASE_RETRIEVAL:
        A = instance.A[idx]
        t = A @ z
        return t * t - instance.b[idx], 2.0 * t[:, None] * A
    if instance.kind == ProblemKind.LEAST_ABS_DEV:
        A = instance.A[idx]
        return A @ z - instance.b[idx], A.copy()
    U, V = instance.U[idx], instance.V[idx]
    p = U @ z[:instance.dim]
    q = V @ z[instance.dim:]
    return p * q - instance.b[idx], np.hstack([q[:, None] * U, p[:, None] * V])


def model_value(kind: ModelKind, instance: ProblemInstance, i: int,
                z: np.ndarray, x: np.ndarray) -> float:
    """Evaluate the model f_z(x, xi_i)."""
    if kind == ModelKind.FULL:
        return sample_loss(instance, i, x)
    c, G = linearize_batch(instance, i, z)
    if kind == ModelKind.PROX_LINEAR:
        return abs(float(c[0] + G[0] @ (x - z)))
    v = sample_subgradient(instance, i, z)
    return sample_loss(instance, i, z) + float(v @ (x - z))


def model_constants(kind: ModelKind, instance: ProblemInstance) -> ModelConstants:
    """Uniform (lam, tau) for the given model over the instance's samples."""
    curv = weak_convexity(instance)
    if kind == ModelKind.FULL:
        return ModelConstants(lam=curv, tau=0.0)
    # Linear and prox-linear models are convex in x; the curvature shows up
    # as the quadratic gap to the loss instead.
    return ModelConstants(lam=0.0, tau=curv)


def model_lipschitz(kind: ModelKind, instance: ProblemInstance, batch_idx,
                    z: np.ndarray, radius: float = 1.0) -> float:
    """A certified Lipschitz constant of x -> f_z(x, B).

    For the linear and prox-linear models the bound is global (the largest
    linearization gradient norm over the batch). The full model's loss has
    gradients that grow with |x|, so the bound is local: it certifies the
    ball of the given radius around z.
    """
    batch_idx = np.atleast_1d(batch_idx)
    if len(batch_idx) == 0:
        raise ValueError("need a nonempty batch")
    if kind in (ModelKind.LINEAR, ModelKind.PROX_LINEAR):
        _, G = linearize_batch(instance, batch_idx, z)
        return float(np.linalg.norm(G, axis=1).max())
    if instance.kind == ProblemKind.PHASE_RETRIEVAL:
        A = instance.A[batch_idx]
        norms = np.linalg.norm(A, axis=1)
        return float((2.0 * norms * (np.abs(A @ z) + radius * norms)).max())
    if instance.kind == ProblemKind.LEAST_ABS_DEV:
        return float(np.linalg.norm(instance.A[batch_idx], axis=1).max())
    U, V = instance.U[batch_idx], instance.V[batch_idx]
    nu = np.linalg.norm(U, axis=1)
    nv = np.linalg.norm(V, axis=1)
    p = np.abs(U @ z[:instance.dim]) + radius * nu
    q = np.abs(V @ z[instance.dim:]) + radius * nv
    return float(np.sqrt((q * nu) ** 2 + (p * nv) ** 2).max())


def lipschitz_on_segment(kind: ModelKind, instance: ProblemInstance, batch_idx,
                         z: np.ndarray, p: np.ndarray, q: np.ndarray) -> float:
    """Certified Lipschitz constant of x -> f_z(x, xi) for every batch sample,
    valid on the segment [p, q]. Used by the stability lab, where the full
    model only needs Lipschitz continuity between the two prox outputs."""
    if kind in (ModelKind.LINEAR, ModelKind.PROX_LINEAR):
        return model_lipschitz(kind, instance, batch_idx, z)
    batch_idx = np.atleast_1d(batch_idx)
    if instance.kind == ProblemKind.PHASE_RETRIEVAL:
        A = instance.A[batch_idx]
        # |<a, x>| is convex along the segment, so its max sits at an endpoint.
        peak = np.maximum(np.abs(A @ p), np.abs(A @ q))
        return float((2.0 * np.linalg.norm(A, axis=1) * peak).max())
    if instance.kind == ProblemKind.LEAST_ABS_DEV:
        return float(np.linalg.norm(instance.A[batch_idx], axis=1).max())
    U, V = instance.U[batch_idx], instance.V[batch_idx]
    d = instance.dim
    pu = np.maximum(np.abs(U @ p[:d]), np.abs(U @ q[:d]))
    qv = np.maximum(np.abs(V @ p[d:]), np.abs(V @ q[d:]))
    nu = np.linalg.norm(U, axis=1)
    nv = np.linalg.norm(V, axis=1)
    return float(np.sqrt((qv * nu) ** 2 + (pu * nv) ** 2).max())
