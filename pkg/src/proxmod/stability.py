"""Empirical checks of proximal-map stability.

Replacing one sample of a batch B by an i.i.d. copy perturbs the output of
the batch proximal map by at most 2L/(m (gamma - lam)), where L is a
Lipschitz bound for the per-sample models on the segment between the two
outputs. On expectation, the same mechanism bounds how far the batch model
value at the prox output sits from its population mean:
|E_B[f_z(x+_B, B) - E_xi f_z(x+_B, xi)]| <= 2L^2/(m (gamma - lam)).

This lab draws randomized replace-one trials and Monte-Carlo estimates of
the expectation gap and compares them against those bounds. The Lipschitz
constant entering each bound is computed a posteriori on the realized batch
(and, for the full model, on the realized segment): the losses here have no
finite global Lipschitz constant, so the certified-local reading is the one
that can actually be falsified. The population expectation is the exact
mean over the instance's n samples, which is the objective being optimized.

Trials are embarrassingly parallel; aggregation is deterministic by trial
index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .models import ModelKind, linearize_batch, lipschitz_on_segment, model_constants
from .problems import ProblemInstance
from .prox import ProxRequest, _batch_losses, prox_step
from .rng import rng_for


@dataclass
class StabilityTrial:
    kind: ModelKind
    gamma: float
    lam: float
    m: int
    batch: np.ndarray
    replace_pos: int
    replacement: int
    distance: float
    lipschitz: float
    bound: float
    valid: bool = True

    @property
    def ratio(self) -> float:
        return self.distance / self.bound if self.bound > 0 else 0.0


@dataclass
class StabilityReport:
    trials: int
    invalid: int
    max_ratio: float
    mean_ratio: float
    violations: int
    tol: float


def stability_trial(instance: ProblemInstance, kind: ModelKind, z: np.ndarray,
                    y: np.ndarray, gamma: float, m: int, seed: int) -> StabilityTrial:
    """One replace-one perturbation trial of the batch proximal map.

    Draws a batch of m i.i.d. indices, a uniform position to replace, and an
    i.i.d. replacement sample; solves both proximal subproblems and records
    the output distance against 2L/(m (gamma - lam)).
    """
    lam = model_constants(kind, instance).lam
    if gamma <= lam:
        raise ValueError(f"stability bound needs gamma > lam, got {gamma} <= {lam}")
    rng = rng_for(seed, "stability")
    batch = rng.integers(0, instance.n, size=m)
    pos = int(rng.integers(0, m))
    replacement = int(rng.integers(0, instance.n))
    batch_rep = batch.copy()
    batch_rep[pos] = replacement

    res = prox_step(ProxRequest(kind=kind, instance=instance, batch=batch,
                                z=z, y=y, gamma=gamma, tol=1e-12))
    res_rep = prox_step(ProxRequest(kind=kind, instance=instance, batch=batch_rep,
                                    z=z, y=y, gamma=gamma, tol=1e-12))
    valid = res.converged and res_rep.converged
    distance = float(np.linalg.norm(res.x_plus - res_rep.x_plus))
    union = np.concatenate([batch, [replacement]])
    L = lipschitz_on_segment(kind, instance, union, z, res.x_plus, res_rep.x_plus)
    bound = 2.0 * L / (m * (gamma - lam))
    return StabilityTrial(kind=kind, gamma=gamma, lam=lam, m=m, batch=batch,
                          replace_pos=pos, replacement=replacement,
                          distance=distance, lipschitz=L, bound=bound, valid=valid)


def run_stability_trials(instance: ProblemInstance, kind: ModelKind, z: np.ndarray,
                         y: np.ndarray, gamma: float, m: int, n_trials: int,
                         seed: int, tol: float = 1e-8):
    """Run a batch of trials; returns (trials, report)."""
    trials = [stability_trial(instance, kind, z, y, gamma, m, seed + t)
              for t in range(n_trials)]
    good = [t for t in trials if t.valid]
    ratios = np.array([t.distance / (t.bound + tol) for t in good])
    report = StabilityReport(
        trials=len(good), invalid=len(trials) - len(good),
        max_ratio=float(ratios.max()) if len(good) else 0.0,
        mean_ratio=float(ratios.mean()) if len(good) else 0.0,
        violations=int((np.array([t.distance for t in good])
                        > np.array([t.bound for t in good]) + tol).sum()),
        tol=tol)
    return trials, report


def expectation_gap_estimate(instance: ProblemInstance, kind: ModelKind,
                             z: np.ndarray, gamma: float, m: int, trials: int,
                             seed: int = 0):
    """Monte-Carlo estimate of E_B[f_z(x+_B, B) - mean_xi f_z(x+_B, xi)],
    where the inner mean runs exactly over all n samples.

    Returns (estimate, half_width) with a 95% normal half-width.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials for a meaningful half-width")
    rng = rng_for(seed, "gap")
    full_idx = np.arange(instance.n)
    c_full, G_full = linearize_batch(instance, full_idx, z)
    gaps = np.empty(trials)
    for t in range(trials):
        batch = rng.integers(0, instance.n, size=m)
        req = ProxRequest(kind=kind, instance=instance, batch=batch, z=z, y=z,
                          gamma=gamma, tol=1e-12)
        x_plus = prox_step(req).x_plus
        batch_val = _model_values(instance, kind, z, x_plus,
                                  c_full[batch], G_full[batch], batch).mean()
        pop_val = _model_values(instance, kind, z, x_plus,
                                c_full, G_full, full_idx).mean()
        gaps[t] = batch_val - pop_val
    estimate = float(gaps.mean())
    half_width = 1.96 * float(gaps.std(ddof=1)) / math.sqrt(trials)
    return estimate, half_width


def _model_values(instance, kind, z, x, c, G, idx) -> np.ndarray:
    """Per-sample model values f_z(x, xi_i), vectorized over precomputed
    linearization coefficients."""
    if kind == ModelKind.FULL:
        return _batch_losses(instance, idx, x)
    r = c + G @ (x - z)
    if kind == ModelKind.PROX_LINEAR:
        return np.abs(r)
    return np.abs(c) + np.sign(c) * (r - c)


def population_lipschitz(instance: ProblemInstance, kind: ModelKind,
                         z: np.ndarray, x_region: Optional[float] = None) -> float:
    """Model Lipschitz bound valid for every sample in the population at
    center z (linear / prox-linear models only, where it is global in x)."""
    if kind == ModelKind.FULL:
        raise ValueError("the full model has no global population Lipschitz bound")
    _, G = linearize_batch(instance, np.arange(instance.n), z)
    return float(np.linalg.norm(G, axis=1).max())
