import math
from fractions import Fraction

import numpy as np
import pytest

from oracles import ternary_min_1d
from proxmod.algorithms import (AcceleratedSchedule, ExperimentSchedule,
                                FixedGamma, SolverConfig, TheoryMinibatch,
                                TheoryMomentum, TheoryMomentumMinibatch,
                                epoch_iterations, momentum_gamma0_recommended,
                                nesterov_schedule, resolve_gamma,
                                run_accelerated, run_minibatch, run_momentum,
                                run_solver, stepsize_experiment,
                                stepsize_theory_minibatch,
                                stepsize_theory_momentum,
                                stepsize_theory_momentum_minibatch)
from proxmod.models import ModelKind
from proxmod.problems import (GenSpec, ProblemInstance, ProblemKind,
                              gen_least_abs_dev, gen_synthetic_phase_retrieval,
                              loss_eval)
from proxmod.rng import rng_for


def phase_instance(A, b, **kw):
    return ProblemInstance(kind=ProblemKind.PHASE_RETRIEVAL,
                           dim=np.atleast_2d(A).shape[1],
                           b=np.atleast_1d(np.asarray(b, float)),
                           A=np.atleast_2d(np.asarray(A, float)), **kw)


class TestSchedules:
    def test_theory_minibatch_plugin(self):
        assert stepsize_theory_minibatch(K=100, m=4, rho=3, tau=1, lam=0,
                                         alpha0=1) == 5.0
        assert stepsize_theory_minibatch(K=100, m=4, rho=3, tau=1, lam=0,
                                         alpha0=1e12) == 4.0  # alpha0 -> inf
        assert stepsize_theory_minibatch(K=10000, m=1, rho=3, tau=1, lam=0,
                                         alpha0=1) == 100.0
        with pytest.raises(ValueError):
            stepsize_theory_minibatch(K=10, m=1, rho=1, tau=1, lam=0.5, alpha0=1)

    def test_theory_momentum_plugin(self):
        assert stepsize_theory_momentum(K=100, beta=0.0, lam=0.3, rho=4,
                                        gamma0=2.0) == 2.0 * 10 + 0.3
        assert stepsize_theory_momentum(K=100, beta=0.5, lam=0.0, rho=4,
                                        gamma0=1.0) == 28.0
        assert momentum_gamma0_recommended(rho=4.0, delta=1.0, theta=0.5,
                                           L=3.0) == math.sqrt(8.0) * 3.0

    def test_theory_momentum_minibatch_plugin(self):
        # beta = 0, lam = 0: zeta = 2 rho + 3 tau
        got = stepsize_theory_momentum_minibatch(K=100, m=4, beta=0.0, lam=0.0,
                                                 tau=1.0, rho=4.0, gamma0=1.0)
        assert got == math.sqrt(25.0) + 2 * 4 + 3 * 1
        # K = m: deterministic-like, zeta = 2 (rho + tau) + tau = 11
        got = stepsize_theory_momentum_minibatch(K=16, m=16, beta=0.0, lam=0.5,
                                                 tau=1.0, rho=4.0, gamma0=2.0)
        assert got == 2.0 + 11.0 + 0.5
        assert stepsize_theory_momentum_minibatch(K=400, m=4, beta=0.5, lam=0.0,
                                                  tau=1.0, rho=4.0,
                                                  gamma0=1.0) == 50.0

    def test_experiment_plugin(self):
        assert stepsize_experiment(1.0, 100, 4) == 5.0
        assert stepsize_experiment(10.0, 100, 1) == 1.0
        assert stepsize_experiment(2.0, 64, 64) == 0.5
        with pytest.raises(ValueError):
            stepsize_experiment(0.0, 10, 1)

    def test_nesterov_schedule_first_steps(self):
        theta, gamma, Gamma = nesterov_schedule(0, m=1, K=10, tau=1.0, L=1.0,
                                                d_tilde=1.0)
        assert theta == 1.0 and Gamma == 1.0
        theta, _, Gamma = nesterov_schedule(1, m=1, K=10, tau=1.0, L=1.0,
                                            d_tilde=1.0)
        assert theta == pytest.approx(2.0 / 3.0) and Gamma == 3.0
        _, _, Gamma = nesterov_schedule(9, m=1, K=10, tau=1.0, L=1.0, d_tilde=1.0)
        assert Gamma == 55.0

    def test_nesterov_identities_exact(self):
        # Gamma_k = (k+1)(k+2)/2 via the recursion, and Gamma_k theta_k gamma_k
        # constant, in exact rational arithmetic
        gamma_base = Fraction(7, 3)
        Gamma = Fraction(1)
        products = []
        for k in range(0, 2000):
            theta = Fraction(2, k + 2)
            if k > 0:
                Gamma = Gamma / (1 - theta)
            assert Gamma == Fraction((k + 1) * (k + 2), 2)
            products.append(Gamma * theta * gamma_base / (k + 1))
        assert all(p == products[0] for p in products)

    def test_resolve_gamma_uses_model_constants(self):
        inst, _ = gen_synthetic_phase_retrieval(GenSpec(n=10, d=3, seed=1))
        cfg = SolverConfig(algorithm="minibatch", kind=ModelKind.PROX_LINEAR,
                           K=100, m=4, schedule=ExperimentSchedule(2.0), seed=0)
        assert resolve_gamma(inst, cfg) == stepsize_experiment(2.0, 100, 4)
        cfg2 = SolverConfig(algorithm="momentum_mb", kind=ModelKind.PROX_LINEAR,
                            K=100, m=4, beta=0.5,
                            schedule=TheoryMomentumMinibatch(gamma0=1.0), seed=0)
        assert resolve_gamma(inst, cfg2) > 0

    def test_epoch_iterations(self):
        assert epoch_iterations(300, 1) == 300
        assert epoch_iterations(300, 8) == 38
        assert epoch_iterations(300, 64) == 5


class TestConfigValidation:
    def test_rejects_bad_configs(self):
        sched = ExperimentSchedule(1.0)
        with pytest.raises(ValueError):
            SolverConfig(algorithm="mystery", kind=ModelKind.LINEAR, K=10,
                         schedule=sched)
        with pytest.raises(ValueError):
            SolverConfig(algorithm="minibatch", kind=ModelKind.LINEAR, K=10,
                         beta=0.5, schedule=sched)
        with pytest.raises(ValueError):
            SolverConfig(algorithm="momentum", kind=ModelKind.LINEAR, K=10,
                         m=4, beta=0.5, schedule=sched)
        with pytest.raises(ValueError):
            SolverConfig(algorithm="minibatch", kind=ModelKind.LINEAR, K=10,
                         schedule=sched, stop_factor=0.9)
        with pytest.raises(ValueError):
            SolverConfig(algorithm="minibatch", kind=ModelKind.LINEAR, K=0,
                         schedule=sched)


class TestMinibatchLoop:
    def test_linear_m1_is_plain_sgd_recursion(self):
        inst, _ = gen_synthetic_phase_retrieval(GenSpec(n=20, d=4, kappa=2,
                                                        p_fail=0.2, seed=3))
        seed = 11
        gamma = 5.0
        cfg = SolverConfig(algorithm="minibatch", kind=ModelKind.LINEAR, K=50,
                           m=1, schedule=FixedGamma(gamma), seed=seed,
                           store_iterates=True, record_every=1)
        rec = run_minibatch(inst, cfg)
        # straight-line recursion with the same streams
        from proxmod.problems import sample_subgradient
        x = rng_for(seed, "init").standard_normal(4)
        batch_rng = rng_for(seed, "batch")
        for k in range(1, 51):
            i = int(batch_rng.integers(0, 20, size=1)[0])
            x = x - sample_subgradient(inst, i, x) / gamma
        np.testing.assert_allclose(rec.final_x, x, atol=1e-12)

    def test_scalar_prox_linear_converges(self):
        # f(x) = |x^2 - 1|, single sample, deterministic batches
        inst = phase_instance([[1.0]], [1.0])
        cfg = SolverConfig(algorithm="minibatch", kind=ModelKind.PROX_LINEAR,
                           K=500, m=1, schedule=ExperimentSchedule(1.0),
                           seed=0, x0=np.array([2.0]))
        rec = run_minibatch(inst, cfg)
        assert rec.final_objective <= 1e-3
        # independently scripted loop: each step solved by ternary search
        gamma = stepsize_experiment(1.0, 500, 1)
        x = 2.0
        for _ in range(500):
            c, g = x * x - 1.0, 2.0 * x
            t, _ = ternary_min_1d(
                lambda w, c=c, g=g, x=x: abs(c + g * (w - x))
                + 0.5 * gamma * (w - x) ** 2, x - 3.0, x + 3.0, iters=200)
            x = t
        assert abs(x * x - 1.0) <= 1e-3
        assert abs(rec.final_objective - abs(x * x - 1.0)) <= 1e-6

    def test_huge_gamma_freezes_iterates(self):
        inst, _ = gen_synthetic_phase_retrieval(GenSpec(n=10, d=3, kappa=1,
                                                        p_fail=0.0, seed=4))
        x0 = np.ones(3)
        cfg = SolverConfig(algorithm="minibatch", kind=ModelKind.LINEAR, K=100,
                           m=1, schedule=ExperimentSchedule(1e-14), seed=1,
                           x0=x0, record_every=10)
        rec = run_minibatch(inst, cfg)
        np.testing.assert_allclose(rec.final_x, x0, atol=1e-9)
        assert np.ptp(rec.objective) <= 1e-8

    def test_batch_stream_reproducible(self):
        inst, _ = gen_synthetic_phase_retrieval(GenSpec(n=25, d=4, kappa=2,
                                                        p_fail=0.2, seed=5))
        cfg = SolverConfig(algorithm="minibatch", kind=ModelKind.PROX_LINEAR,
                           K=30, m=4, schedule=ExperimentSchedule(1.0),
                           seed=42, record_every=1)
        r1 = run_minibatch(inst, cfg)
        r2 = run_minibatch(inst, cfg)
        np.testing.assert_array_equal(r1.batch_digest, r2.batch_digest)
        np.testing.assert_array_equal(r1.final_x, r2.final_x)

    def test_threshold_stopping_and_max_convention(self):
        inst, _ = gen_synthetic_phase_retrieval(GenSpec(n=40, d=8, kappa=3,
                                                        p_fail=0.2, seed=6))
        good = SolverConfig(algorithm="minibatch", kind=ModelKind.PROX_LINEAR,
                            K=4000, m=4, schedule=ExperimentSchedule(3.0),
                            seed=2, stop_factor=1.5)
        rec = run_minibatch(inst, good)
        assert rec.stopped == "hit" and rec.stop_iter <= 4000
        assert rec.final_objective <= 1.5 * inst.f_hat
        frozen = SolverConfig(algorithm="minibatch", kind=ModelKind.PROX_LINEAR,
                              K=50, m=4, schedule=ExperimentSchedule(1e-12),
                              seed=2, stop_factor=1.5)
        rec2 = run_minibatch(inst, frozen)
        assert rec2.stopped == "max" and rec2.stop_iter == 51

    def test_sgd_divergence_detected(self):
        inst, _ = gen_synthetic_phase_retrieval(GenSpec(n=40, d=8, kappa=3,
                                                        p_fail=0.2, seed=7))
        cfg = SolverConfig(algorithm="minibatch", kind=ModelKind.LINEAR,
                           K=20000, m=1, schedule=ExperimentSchedule(1e4),
                           seed=3, stop_factor=1.5)
        rec = run_minibatch(inst, cfg)
        assert rec.stopped == "diverged"
        assert rec.stop_iter == rec.K + 1


class TestMomentumLoop:
    def test_heavy_ball_equivalence(self):
        # linear model, unconstrained: the extrapolated loop equals the
        # explicit momentum recursion v <- subgrad + beta v, x <- x - v/gamma
        inst, _ = gen_synthetic_phase_retrieval(GenSpec(n=30, d=6, kappa=3,
                                                        p_fail=0.25, seed=8))
        from proxmod.problems import sample_subgradient
        for seed in range(3):
            beta, gamma, m = 0.7, 8.0, 3
            cfg = SolverConfig(algorithm="momentum_mb", kind=ModelKind.LINEAR,
                               K=100, m=m, beta=beta, schedule=FixedGamma(gamma),
                               seed=seed)
            rec = run_momentum(inst, cfg)
            x = rng_for(seed, "init").standard_normal(6)
            v = np.zeros(6)
            batch_rng = rng_for(seed, "batch")
            for _ in range(100):
                batch = batch_rng.integers(0, 30, size=m)
                grad = np.mean([sample_subgradient(inst, int(i), x)
                                for i in batch], axis=0)
                v = grad + beta * v
                x = x - v / gamma
            np.testing.assert_allclose(rec.final_x, x, atol=1e-12)

    @pytest.mark.parametrize("kind", [ModelKind.LINEAR, ModelKind.PROX_LINEAR,
                                      ModelKind.FULL])
    def test_beta_zero_collapses_to_minibatch(self, kind):
        inst, _ = gen_synthetic_phase_retrieval(GenSpec(n=25, d=5, kappa=2,
                                                        p_fail=0.2, seed=9))
        kw = dict(kind=kind, K=40, m=2, schedule=ExperimentSchedule(1.0),
                  seed=17, record_every=1)
        rec_mb = run_minibatch(inst, SolverConfig(algorithm="minibatch", **kw))
        rec_mom = run_momentum(inst, SolverConfig(algorithm="momentum_mb",
                                                  beta=0.0, **kw))
        np.testing.assert_array_equal(rec_mb.final_x, rec_mom.final_x)
        np.testing.assert_array_equal(rec_mb.objective, rec_mom.objective)

    def test_momentum_helps_on_smooth_path(self):
        # sanity: momentum run completes and records the z-sequence
        inst, _ = gen_synthetic_phase_retrieval(GenSpec(n=30, d=5, kappa=2,
                                                        p_fail=0.2, seed=10))
        cfg = SolverConfig(algorithm="momentum", kind=ModelKind.PROX_LINEAR,
                           K=60, m=1, beta=0.6, schedule=ExperimentSchedule(1.0),
                           seed=4, store_iterates=True, record_every=10)
        rec = run_momentum(inst, cfg)
        assert rec.z_iterates  # extrapolated points tracked for stationarity
        k = sorted(rec.z_iterates)[2]
        # z^k = x^k + (beta/theta)(x^k - x^{k-1}) is finite and consistent
        assert np.all(np.isfinite(rec.z_iterates[k]))


class TestAcceleratedLoop:
    def test_first_step_sets_x_equal_z(self):
        inst, _ = gen_least_abs_dev(GenSpec(n=20, d=4, kappa=2, p_fail=0.1,
                                            seed=11))
        cfg = SolverConfig(algorithm="accelerated", kind=ModelKind.PROX_LINEAR,
                           K=1, m=2, schedule=AcceleratedSchedule(d_tilde=2.0),
                           seed=5, store_iterates=True, record_every=1)
        rec = run_accelerated(inst, cfg)
        # theta_0 = 1: y^0 = z^0 and x^1 = z^1
        np.testing.assert_array_equal(rec.iterates[2], rec.z_iterates[2])

    def test_constant_objective_freezes(self):
        inst = ProblemInstance(kind=ProblemKind.LEAST_ABS_DEV, dim=2,
                               b=np.array([3.0, -1.0]), A=np.zeros((2, 2)))
        x0 = np.array([0.5, -0.25])
        cfg = SolverConfig(algorithm="accelerated", kind=ModelKind.PROX_LINEAR,
                           K=20, m=1, schedule=AcceleratedSchedule(d_tilde=1.0),
                           seed=6, x0=x0)
        rec = run_accelerated(inst, cfg)
        np.testing.assert_allclose(rec.final_x, x0, atol=1e-12)

    def test_gap_improves_with_horizon(self):
        from oracles import lad_reference
        inst, _ = gen_least_abs_dev(GenSpec(n=60, d=10, kappa=3, p_fail=0.2,
                                            seed=12))
        _, f_star = lad_reference(inst.A, inst.b)
        gaps = {}
        for K in (50, 400):
            finals = []
            for seed in range(3):
                cfg = SolverConfig(algorithm="accelerated",
                                   kind=ModelKind.PROX_LINEAR, K=K, m=4,
                                   schedule=AcceleratedSchedule(d_tilde=3.0),
                                   seed=seed)
                finals.append(run_accelerated(inst, cfg).final_objective - f_star)
            gaps[K] = np.mean(finals)
        assert gaps[400] < gaps[50]


class TestRunSolverDispatch:
    def test_dispatch(self):
        inst, _ = gen_synthetic_phase_retrieval(GenSpec(n=10, d=3, seed=13))
        for alg in ("minibatch", "momentum", "momentum_mb"):
            cfg = SolverConfig(algorithm=alg, kind=ModelKind.PROX_LINEAR, K=5,
                               m=1 if alg == "momentum" else 2,
                               beta=0.0 if alg == "minibatch" else 0.5,
                               schedule=ExperimentSchedule(1.0), seed=1)
            assert run_solver(inst, cfg).K == 5
