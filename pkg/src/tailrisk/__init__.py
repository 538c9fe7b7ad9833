"""CVaR estimation and minimization with importance sampling for rare tail events."""
from ._kernels import BACKEND
from .dist import DomainError, Gaussian, WeibullIID, seed_stream
from .exptilt import TiltMixture, oracle_exptilt
from .loss import DecisionConstraint, LinearPortfolio, MaxAffine, Quadratic
from .risk import (RiskParams, WeightedSampleBatch, empirical_var_cvar, is_objective,
                   saa_objective, subgrad_G)
from .selfstruct import SelfStructLaw, SelfStructParams, select_h
from .solve import RASchedule, SolveReport, project_theta, run_ra, run_sa, solve_subproblem
from .strategy import make_strategy

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "DecisionConstraint", "DomainError", "Gaussian", "LinearPortfolio", "MaxAffine",
    "Quadratic", "RASchedule", "RiskParams", "SelfStructLaw", "SelfStructParams", "SolveReport",
    "TiltMixture", "WeibullIID", "WeightedSampleBatch", "empirical_var_cvar", "is_objective",
    "make_strategy", "oracle_exptilt", "project_theta", "run_ra", "run_sa", "saa_objective",
    "seed_stream", "select_h", "solve_subproblem", "subgrad_G",
]
