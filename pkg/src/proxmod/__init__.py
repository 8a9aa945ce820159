"""proxmod: stochastic model-based optimization with minibatching and momentum.

A library and CLI harness for nonsmooth weakly convex finite-sum problems
(robust phase retrieval, blind deconvolution, least absolute deviations),
covering the subgradient, prox-linear and proximal-point instantiations of
the model-based proximal update, their minibatch / heavy-ball / accelerated
variants, Moreau-envelope stationarity estimation, and an empirical
stability lab for the proximal map.
"""

from .algorithms import (AcceleratedSchedule, ExperimentSchedule, FixedGamma,
                         RunRecord, SolverConfig, TheoryMinibatch,
                         TheoryMomentum, TheoryMomentumConvex,
                         TheoryMomentumMinibatch, epoch_iterations,
                         nesterov_schedule, run_accelerated, run_minibatch,
                         run_momentum, run_solver, stepsize_experiment,
                         stepsize_theory_minibatch, stepsize_theory_momentum,
                         stepsize_theory_momentum_minibatch)
from .models import (ModelConstants, ModelKind, linearize_batch,
                     model_constants, model_lipschitz, model_value,
                     weak_convexity)
from .problems import (GenSpec, ProblemInstance, ProblemKind, Sample,
                       gen_hadamard_measurements, gen_least_abs_dev,
                       gen_synthetic_blind_deconv,
                       gen_synthetic_phase_retrieval, gen_zipcode_instance,
                       load_image, load_instance, loss_eval, sample_loss,
                       sample_subgradient, save_instance)
from .prox import (ProxRequest, ProxResult, prox_seq_blind_deconv, prox_sgd,
                   prox_spl_batch, prox_spl_seq, prox_spp_batch,
                   prox_spp_seq_phase, prox_step)
from .rng import rng_for
from .stability import (StabilityReport, StabilityTrial,
                        expectation_gap_estimate, run_stability_trials,
                        stability_trial)
from .stationarity import (ObjectiveOracle, full_objective_oracle,
                           moreau_grad_norm, moreau_prox)

__version__ = "0.1.0"
