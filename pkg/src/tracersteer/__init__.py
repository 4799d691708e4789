"""Tracer-informed covariance steering.

Linear feedback flows ``x' = K_t x`` that steer a Gaussian ensemble while
also moving a few tagged particles (tracers) along prescribed data, solved
from Pontryagin's necessary conditions by multistart single shooting.
"""
from .boundary import TerminalSurface, determined_endpoint, gram_feasibility, tangent_basis
from .config import ScenarioConfig, builtin_tracer_generator, load_config, parse_config
from .ensemble import (kinetic_cost, attention_cost, perturbation_optimality_check,
                       simulate_ensemble, transcription_oracle)
from .errors import *  # noqa: F401,F403
from .estimator import CovarianceSteerer
from .necessary_p1 import Problem1
from .necessary_p2 import Problem3
from .paths import (TracerEndpoints, mccann_path, sampled_covariance_path, sampled_tracer_path,
                    tracer_trajectory)
from .shoot import IntegratorGrid, ShootingOptions, solve_shooting
from .solution import FlowSolution

__version__ = "0.1.0"
