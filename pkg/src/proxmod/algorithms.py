"""Outer optimization loops and stepsize schedules.

Four algorithm variants share the proximal machinery:

* ``minibatch``      one model-based proximal step per iteration on a batch
                     of i.i.d. samples (with replacement);
* ``momentum``       heavy-ball extrapolation y = x + beta (x - x_prev)
                     before the proximal step, single sample;
* ``momentum_mb``    the same with minibatches;
* ``accelerated``    a three-sequence scheme with diminishing weights
                     theta_k = 2/(k+2), for convex objectives.

Stepsize schedules mirror the convergence theory (constants derived from
the model's weak convexity lam, quadratic gap tau and Lipschitz bound L) or
the simpler experimental policy gamma = alpha0^{-1} sqrt(K/m).

Batch sampling is a dedicated stream of the run seed, so the sequence of
batch index sets is a pure function of (seed, m, n) regardless of the other
streams consumed. A single run is sequential; distinct runs share no
mutable state and can execute concurrently.
"""

from __future__ import annotations

import math
import time
import zlib
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .models import ModelKind, model_constants, model_lipschitz
from .problems import ProblemInstance, loss_eval
from .prox import ProxRequest, prox_step
from .rng import rng_for

DIVERGENCE_NORM = 1e12

ALGORITHMS = ("minibatch", "momentum", "momentum_mb", "accelerated")


# --- stepsize schedules -------------------------------------------------------

def stepsize_experiment(alpha0: float, K: int, m: int) -> float:
    """Experimental policy gamma = alpha0^{-1} sqrt(K/m)."""
    if alpha0 <= 0:
        raise ValueError("alpha0 must be positive")
    return math.sqrt(K / m) / alpha0


def stepsize_theory_minibatch(K: int, m: int, rho: float, tau: float,
                              lam: float, alpha0: float) -> float:
    """Constant stepsize for the minibatch method:
    gamma = max(rho + tau, lam + sqrt(K)/(alpha0 sqrt(m)))."""
    if alpha0 <= 0:
        raise ValueError("alpha0 must be positive")
    if rho <= lam + tau:
        raise ValueError(f"need rho > lam + tau, got rho={rho}, lam+tau={lam + tau}")
    eta = math.sqrt(K) / (alpha0 * math.sqrt(m))
    return max(rho + tau, lam + eta)


def stepsize_theory_momentum(K: int, beta: float, lam: float, rho: float,
                             gamma0: float) -> float:
    """Constant stepsize for the extrapolated method:
    gamma = gamma0 theta^{-1} sqrt(K) + lam + rho beta^2 theta^{-3}."""
    theta = 1.0 - beta
    return gamma0 / theta * math.sqrt(K) + lam + rho * beta ** 2 / theta ** 3


def momentum_gamma0_recommended(rho: float, delta: float, theta: float, L: float) -> float:
    """The gamma0 minimizing the extrapolated method's bound, given an
    estimate delta of the initial smoothed-objective gap."""
    return math.sqrt(rho / (delta * theta)) * L


def momentum_minibatch_zeta(beta: float, lam: float, tau: float, rho: float) -> float:
    theta = 1.0 - beta
    return 2.0 * theta * (rho + lam * beta + tau) + tau + 2.0 * rho * beta ** 2 / theta


def stepsize_theory_momentum_minibatch(K: int, m: int, beta: float, lam: float,
                                       tau: float, rho: float, gamma0: float) -> float:
    """Constant stepsize for the extrapolated minibatch method:
    gamma = gamma0 sqrt(K/m) + theta^{-2} zeta + lam."""
    theta = 1.0 - beta
    zeta = momentum_minibatch_zeta(beta, lam, tau, rho)
    return gamma0 * math.sqrt(K / m) + zeta / theta ** 2 + lam


def stepsize_theory_momentum_convex(K: int, m: int, beta: float, tau: float,
                                    gamma0: float) -> float:
    """Constant stepsize for the extrapolated method on convex objectives:
    gamma = gamma0 sqrt(K/m) + theta^{-2} tau."""
    theta = 1.0 - beta
    return gamma0 * math.sqrt(K / m) + tau / theta ** 2


def nesterov_gamma(K: int, m: int, tau: float, L: float, d_tilde: float,
                   eta: Optional[float] = None) -> float:
    """Base constant of the accelerated schedule: gamma = 2 tau + eta with
    eta = 2 L (K+2)^{3/2} / (sqrt(3 m) d_tilde) unless overridden."""
    if eta is None:
        if d_tilde <= 0 or L <= 0:
            raise ValueError("need positive d_tilde and L")
        eta = 2.0 * L * (K + 2) ** 1.5 / (math.sqrt(3.0 * m) * d_tilde)
    return 2.0 * tau + eta


def nesterov_schedule(k: int, m: int, K: int, tau: float, L: float,
                      d_tilde: float, eta: Optional[float] = None):
    """Accelerated-method weights at iteration k: (theta_k, gamma_k, Gamma_k)
    with theta_k = 2/(k+2), gamma_k = gamma/(k+1) and Gamma_k accumulated by
    Gamma_k = (1 - theta_k)^{-1} Gamma_{k-1} from Gamma_0 = 1, which gives
    Gamma_k = (k+1)(k+2)/2 in closed form."""
    if k < 0:
        raise ValueError("iteration index must be nonnegative")
    theta_k = 2.0 / (k + 2)
    gamma_k = nesterov_gamma(K, m, tau, L, d_tilde, eta) / (k + 1)
    Gamma_k = (k + 1) * (k + 2) / 2.0
    return theta_k, gamma_k, Gamma_k


# --- schedule selectors -------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSchedule:
    alpha0: float


@dataclass(frozen=True)
class TheoryMinibatch:
    alpha0: float
    rho: Optional[float] = None


@dataclass(frozen=True)
class TheoryMomentum:
    gamma0: float
    rho: Optional[float] = None


@dataclass(frozen=True)
class TheoryMomentumMinibatch:
    gamma0: float
    rho: Optional[float] = None


@dataclass(frozen=True)
class TheoryMomentumConvex:
    gamma0: float


@dataclass(frozen=True)
class AcceleratedSchedule:
    """Distance estimate d_tilde >= |x0 - x*|, or a direct eta override.
    L defaults to the certified model Lipschitz bound at the initial point."""
    d_tilde: Optional[float] = None
    eta: Optional[float] = None
    L: Optional[float] = None


@dataclass(frozen=True)
class FixedGamma:
    gamma: float


Schedule = Union[ExperimentSchedule, TheoryMinibatch, TheoryMomentum,
                 TheoryMomentumMinibatch, TheoryMomentumConvex,
                 AcceleratedSchedule, FixedGamma]


def default_rho(threshold: float, margin: float = 1.5) -> float:
    """Default smoothing parameter: 1.5x each theorem's minimal admissible
    value, floored at 1 so convex objectives (threshold 0) stay usable."""
    return max(margin * threshold, 1.0)


# --- run configuration and records -------------------------------------------

@dataclass
class SolverConfig:
    """Everything needed to reproduce a run, including the seed."""

    algorithm: str
    kind: ModelKind
    K: int
    m: int = 1
    beta: float = 0.0
    schedule: Schedule = None
    seed: int = 0
    stop_factor: Optional[float] = None   # None: run the full horizon
    record_every: int = 0                 # 0: record only first/last iterates
    x0: Optional[np.ndarray] = None
    store_iterates: bool = False
    store_at: Optional[tuple] = None      # iterate indices (1-based) to store
    track_lipschitz: bool = False
    prox_tol: float = 1e-10

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("momentum beta must lie in [0, 1)")
        if self.K < 1 or self.m < 1:
            raise ValueError("need K >= 1 and m >= 1")
        if self.algorithm == "minibatch" and self.beta != 0.0:
            raise ValueError("the plain minibatch method has no momentum term")
        if self.algorithm == "momentum" and self.m != 1:
            raise ValueError("use algorithm='momentum_mb' for batched momentum runs")
        if self.stop_factor is not None and self.stop_factor <= 1.0:
            raise ValueError("threshold stopping needs a factor > 1")
        if self.schedule is None:
            raise ValueError("a stepsize schedule is required")


@dataclass
class RunRecord:
    """Per-iteration trace (at the recorded stride) plus the stopping outcome.

    ``stop_iter`` is the iteration at which the threshold rule fired, or
    K + 1 when it never did (the run is then marked "max"). Iterate indices
    are 1-based: row k describes the k-th iterate, with x^1 the initial point.
    """

    ks: np.ndarray
    objective: np.ndarray
    dist_truth: np.ndarray
    gamma: np.ndarray
    batch_digest: np.ndarray
    stop_iter: int
    stopped: str
    wall_time: float
    K: int
    final_x: np.ndarray
    final_objective: float
    lipschitz_flag: bool = False
    iterates: dict = field(default_factory=dict)
    z_iterates: dict = field(default_factory=dict)


def initial_point(instance: ProblemInstance, config: SolverConfig) -> np.ndarray:
    if config.x0 is not None:
        x0 = np.asarray(config.x0, dtype=float)
        if x0.shape != (instance.decision_dim,):
            raise ValueError("initial point has the wrong dimension")
        return x0.copy()
    return rng_for(config.seed, "init").standard_normal(instance.decision_dim)


def resolve_gamma(instance: ProblemInstance, config: SolverConfig,
                  x0: Optional[np.ndarray] = None) -> float:
    """Constant stepsize for the non-accelerated algorithms."""
    sched = config.schedule
    mc = model_constants(config.kind, instance)
    lam, tau = mc.lam, mc.tau
    if isinstance(sched, FixedGamma):
        return sched.gamma
    if isinstance(sched, ExperimentSchedule):
        return stepsize_experiment(sched.alpha0, config.K, config.m)
    if isinstance(sched, TheoryMinibatch):
        rho = sched.rho if sched.rho is not None else default_rho(lam + tau)
        return stepsize_theory_minibatch(config.K, config.m, rho, tau, lam, sched.alpha0)
    if isinstance(sched, TheoryMomentum):
        rho = sched.rho if sched.rho is not None else default_rho(2.0 * (tau + lam))
        return stepsize_theory_momentum(config.K, config.beta, lam, rho, sched.gamma0)
    if isinstance(sched, TheoryMomentumMinibatch):
        rho = sched.rho if sched.rho is not None else default_rho(3.0 * (tau + lam))
        return stepsize_theory_momentum_minibatch(
            config.K, config.m, config.beta, lam, tau, rho, sched.gamma0)
    if isinstance(sched, TheoryMomentumConvex):
        return stepsize_theory_momentum_convex(
            config.K, config.m, config.beta, tau, sched.gamma0)
    raise ValueError(f"schedule {sched!r} does not define a constant stepsize")


def epoch_iterations(n: int, m: int) -> int:
    """Iterations per epoch (one pass over the data at batch size m)."""
    return math.ceil(n / m)


def _digest(batch: np.ndarray) -> int:
    return zlib.crc32(np.ascontiguousarray(batch, dtype=np.int64).tobytes())


class _Recorder:
    def __init__(self, instance, config, gamma0_val):
        self.instance = instance
        self.config = config
        self.rows = {"ks": [], "objective": [], "dist_truth": [], "gamma": [],
                     "batch_digest": []}
        self.seen = set()
        self.store_set = set(config.store_at) if config.store_at else None
        self.iterates = {}
        self.z_iterates = {}
        self.L_first = None
        self.L_max = 0.0
        self.gamma_default = gamma0_val

    def record(self, k, x, z=None, gamma=None, batch=None, fval=None):
        if k in self.seen:
            return
        self.seen.add(k)
        self.rows["ks"].append(k)
        self.rows["objective"].append(
            loss_eval(self.instance, x) if fval is None else fval)
        truth = self.instance.truth
        self.rows["dist_truth"].append(
            float(np.linalg.norm(x - truth)) if truth is not None else np.nan)
        self.rows["gamma"].append(self.gamma_default if gamma is None else gamma)
        self.rows["batch_digest"].append(0 if batch is None else _digest(batch))
        if self.config.store_iterates and (self.store_set is None
                                           or k in self.store_set):
            self.iterates[k] = x.copy()
            if z is not None:
                self.z_iterates[k] = z.copy()
        if self.config.track_lipschitz and batch is not None:
            L = model_lipschitz(self.config.kind, self.instance, batch, x)
            if self.L_first is None:
                self.L_first = L
            self.L_max = max(self.L_max, L)

    def should_record(self, k_step):
        if self.store_set is not None and (k_step + 1) in self.store_set:
            return True
        return self.config.record_every > 0 and k_step % self.config.record_every == 0

    def build(self, stop_iter, stopped, wall, x_final, f_final):
        flag = (self.L_first is not None and self.L_first > 0
                and self.L_max > 10.0 * self.L_first)
        return RunRecord(
            ks=np.array(self.rows["ks"], dtype=int),
            objective=np.array(self.rows["objective"]),
            dist_truth=np.array(self.rows["dist_truth"]),
            gamma=np.array(self.rows["gamma"]),
            batch_digest=np.array(self.rows["batch_digest"], dtype=np.uint32),
            stop_iter=stop_iter, stopped=stopped, wall_time=wall,
            K=self.config.K, final_x=x_final, final_objective=f_final,
            lipschitz_flag=flag, iterates=self.iterates, z_iterates=self.z_iterates)


def _stopping_state(instance, config):
    threshold = None
    if config.stop_factor is not None:
        if instance.f_hat is None:
            raise ValueError("threshold stopping needs an instance with f_hat")
        threshold = config.stop_factor * instance.f_hat
    check_every = 1 if instance.n <= 1000 else epoch_iterations(instance.n, config.m)
    return threshold, check_every


def run_minibatch(instance: ProblemInstance, config: SolverConfig) -> RunRecord:
    """Plain minibatch model-based method (no extrapolation)."""
    if config.algorithm != "minibatch":
        raise ValueError("config.algorithm must be 'minibatch'")
    return _run_extrapolated_loop(instance, config)


def run_momentum(instance: ProblemInstance, config: SolverConfig) -> RunRecord:
    """Extrapolated model-based method (heavy-ball momentum), sequential or
    minibatched depending on config.m."""
    if config.algorithm not in ("momentum", "momentum_mb"):
        raise ValueError("config.algorithm must be 'momentum' or 'momentum_mb'")
    return _run_extrapolated_loop(instance, config)


def _run_extrapolated_loop(instance: ProblemInstance, config: SolverConfig) -> RunRecord:
    t0 = time.perf_counter()
    x0 = initial_point(instance, config)
    gamma = resolve_gamma(instance, config, x0)
    beta = config.beta
    theta = 1.0 - beta
    threshold, check_every = _stopping_state(instance, config)
    batch_rng = rng_for(config.seed, "batch")
    n, m, K = instance.n, config.m, config.K

    rec = _Recorder(instance, config, gamma)
    x_prev = x0.copy()
    x_curr = x0.copy()  # x^1 = x^0
    rec.record(1, x_curr, z=x_curr, gamma=gamma)

    stop_iter, stopped = K + 1, "max" if threshold is not None else "horizon"
    last = 1
    for k in range(1, K + 1):
        y = x_curr + beta * (x_curr - x_prev)
        batch = batch_rng.integers(0, n, size=m)
        res = prox_step(ProxRequest(kind=config.kind, instance=instance,
                                    batch=batch, z=x_curr, y=y, gamma=gamma,
                                    tol=config.prox_tol))
        x_prev, x_curr = x_curr, res.x_plus
        last = k + 1

        fval = None
        hit = False
        if threshold is not None and (k % check_every == 0 or k == K):
            fval = loss_eval(instance, x_curr)
            if not np.isfinite(fval) or np.linalg.norm(x_curr) > DIVERGENCE_NORM:
                stopped = "diverged"
                break
            hit = fval <= threshold
        if rec.should_record(k) or hit or k == K:
            z = x_curr + (beta / theta) * (x_curr - x_prev)
            rec.record(k + 1, x_curr, z=z, gamma=gamma, batch=batch, fval=fval)
        if hit:
            stop_iter, stopped = k, "hit"
            break

    z_final = x_curr + (beta / theta) * (x_curr - x_prev)
    rec.record(last, x_curr, z=z_final, gamma=gamma)
    f_final = loss_eval(instance, x_curr)
    return rec.build(stop_iter, stopped, time.perf_counter() - t0, x_curr, f_final)


def run_accelerated(instance: ProblemInstance, config: SolverConfig) -> RunRecord:
    """Three-sequence accelerated method for convex objectives. Performs K
    proximal steps (iterations k = 0, ..., K-1); the model is centered at the
    interpolated point y^k and the proximal center is the z-sequence."""
    if config.algorithm != "accelerated":
        raise ValueError("config.algorithm must be 'accelerated'")
    sched = config.schedule
    if not isinstance(sched, AcceleratedSchedule):
        raise ValueError("the accelerated method needs an AcceleratedSchedule")
    t0 = time.perf_counter()
    x0 = initial_point(instance, config)
    mc = model_constants(config.kind, instance)
    L = sched.L
    if L is None and sched.eta is None:
        L = model_lipschitz(config.kind, instance, np.arange(instance.n), x0)
    gamma_const = nesterov_gamma(config.K, config.m, mc.tau, L or 1.0,
                                 sched.d_tilde or 1.0, sched.eta)
    threshold, check_every = _stopping_state(instance, config)
    batch_rng = rng_for(config.seed, "batch")
    n, m, K = instance.n, config.m, config.K

    rec = _Recorder(instance, config, gamma_const)
    x = x0.copy()
    z = x0.copy()
    rec.record(1, x, z=z, gamma=gamma_const)

    stop_iter, stopped = K + 1, "max" if threshold is not None else "horizon"
    last = 1
    for k in range(K):
        theta_k = 2.0 / (k + 2)
        gamma_k = gamma_const / (k + 1)
        y = (1.0 - theta_k) * x + theta_k * z
        batch = batch_rng.integers(0, n, size=m)
        res = prox_step(ProxRequest(kind=config.kind, instance=instance,
                                    batch=batch, z=y, y=z, gamma=gamma_k,
                                    tol=config.prox_tol))
        z = res.x_plus
        x = (1.0 - theta_k) * x + theta_k * z

        step = k + 1
        last = step + 1
        fval = None
        hit = False
        if threshold is not None and (step % check_every == 0 or step == K):
            fval = loss_eval(instance, x)
            if not np.isfinite(fval) or np.linalg.norm(x) > DIVERGENCE_NORM:
                stopped = "diverged"
                break
            hit = fval <= threshold
        if rec.should_record(step) or hit or step == K:
            rec.record(step + 1, x, z=z, gamma=gamma_k, batch=batch, fval=fval)
        if hit:
            stop_iter, stopped = step, "hit"
            break

    rec.record(last, x, z=z)
    f_final = loss_eval(instance, x)
    return rec.build(stop_iter, stopped, time.perf_counter() - t0, x, f_final)


def run_solver(instance: ProblemInstance, config: SolverConfig) -> RunRecord:
    """Dispatch a run to the loop implementing config.algorithm."""
    if config.algorithm == "minibatch":
        return run_minibatch(instance, config)
    if config.algorithm in ("momentum", "momentum_mb"):
        return run_momentum(instance, config)
    return run_accelerated(instance, config)
