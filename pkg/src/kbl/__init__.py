"""Numerical laboratory for Brownian particle systems with mean-field killing."""

from .analytic import LimitProfile, gaussian_expectation, limit_observable, solve_limit
from .bl import BLDictionary, GaussianMeasure, bl_distance_lower, default_dictionary
from .core import (EmpiricalMeasurePath, HazardPath, KillingFunction, ParticleEnsemble, TimeGrid,
                   WeightedSample, eval_zeta)
from .errors import ConfigError, DomainError, KBLError, NonConvergenceError, NumericError
from .fixedpoint import (FixedPointResult, ThetaSample, j_cost, sample_theta, self_consistency_check,
                         solve_fixed_point)
from .rng import rng_stream
from .sim import (AffineFeedback, ControlSpec, CostLedger, ExpThreshold, PiecewiseHazard, ReplicaSpec,
                  TimeDependentDrift, ZeroDrift, entropy_exp, run_replicas, simulate_controlled,
                  simulate_uncontrolled)
from .variational import (LaplaceReport, RateCertificate, TerminalMassFunctional, laplace_mc,
                          laplace_variational_upper, rate_frontier, varrep_check)

__version__ = "0.1.0"
