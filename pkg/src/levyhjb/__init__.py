"""Controlled jump-diffusions on bounded domains: simulation, a monotone HJB grid solver,
policy synthesis, boundary barriers and Monte Carlo verification of the value function."""
from .barrier import build_barrier, composite_supersolution, evaluate_barrier, supersolution_probe
from .config import ExperimentConfig, load_config
from .geometry import DomainSpec, dilate, exterior_ball_check, make_domain, proximal_normal
from .hjb import GridSpec, ValueField, cascade_study, evaluate, export_field_csv, residual, solve
from .levy import LevyModel, build_discrete_measure, empty_measure, sample_jumps
from .policy import MarkovPolicy, finite_subset, project_control, synthesize
from .problem import FAMILIES, ControlSet, ProblemSpec, make_problem, validate_assumptions
from .sde import estimate_cost, run_batch, simulate
from .verification import (
    Budget, MonteCarlo, VerificationReport, control_projection_probe, coupling_probe, dpp_check,
    representation_check,
)

__version__ = "0.1.0"
