"""Bounded-support noise for differentially private query answering.

Noise is drawn from densities proportional to ``exp(-f(eta/R))`` on
``(-R, R)``.  The package calibrates ``R`` with a sound numerical
certificate and compares the result against the Gaussian mechanism.  It also
plans query budgets for adaptive data analysis.
"""
from .adaptive import (GAUSSIAN, AdaptiveSession, Plan, Transcript, feasible,
                       max_queries_for_sample_size, plan_for_queries, run_adaptive_session,
                       sample_size_for_queries, transfer_accuracy)
from .certification import (CertConfig, Certificate, PrivacyParams, deviation_bound,
                            gaussian_delta, gaussian_sigma_opt, log_mgf, max_error_quantile,
                            mgf_atoms, minimize_chernoff, noise_upper_bound, test_privacy,
                            truncation_threshold)
from .empirical import (FalsifierReport, LossSampleSet, estimate_delta_hat,
                        exact_delta_oracle_1d, falsifier_check, privacy_loss_samples)
from .errors import BudgetExhausted, DomainError, InfeasibleError, NumericError
from .noise import FamilyKind, NoiseFamily, ScaledNoise, eval_f, normalize, unit_table
from .sampler import RngState, answer_query, sample
from .theory import (GrowthReport, RateFunction, delta_star_k, double_exp_delta_threshold,
                     heavy_tail_bound, moment_constant_m, t_star, theoretical_r, verify_growth_conditions)

__version__ = "0.1.0"

__all__ = [n for n in dir() if not n.startswith("_")]
