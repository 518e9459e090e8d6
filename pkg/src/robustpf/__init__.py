"""Fault-robust GNSS particle filtering with mixture-likelihood integrity monitoring."""

from .types import (DegenerateWeightsError, EpochMeasurements, ExtendedParticles, GeometryError,
                    GmmCoefficients, Odometry, ParticleSet, PseudorangeMeasurement, SatelliteState,
                    StateVector, effective_sample_size, normalize_log_weights)
from .measurement import GmmLikelihood, chi2_1_density, expected_pseudorange, normalized_residual, vote
from .filter import (FaultRobustPF, FilterConfig, NoMeasurementsError, StepResult, compute_votes,
                     iterative_weighting, pool_votes, propagate, reduced_resample, step,
                     systematic_resample)
from .integrity import (IntegrityConfig, IntegrityReport, accuracy, availability, bayesian_monitor,
                        bayesian_pmir, disk_cubature, monitor, p_mir, weighted_covariance)
from .baselines import JointPF, JpfConfig, KfRaim, KfRaimConfig, raim_global_test, raim_local_test
from .simulator import IntegrityScenarioConfig, Scenario, ScenarioConfig, simulate_integrity_scenario, simulate_scenario
from .metrics import (ExperimentConfig, RunRecord, integrity_study, pct_over, pfa_pir, rmse,
                      run_experiment, threshold_sweep)

__version__ = "0.1.0"
