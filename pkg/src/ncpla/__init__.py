"""Tag embedding for physical-layer authentication over non-coherent massive SIMO links."""

__version__ = "0.1.0"

from .analysis import (
    ErrorReport,
    conditional_tag_ser_exact,
    message_ser,
    message_ser_upper_bound,
    tag_ser,
    tag_ser_message_based,
)
from .auth import detection_rate, make_mac, np_threshold, run_auth_experiment
from .config import ConfigError, SystemConfig, db_to_linear, linear_to_db
from .constellation import InfeasibleError, MessageConstellation, design_constellation
from .embedding import EmbeddingScheme, build_message_based, build_uniform, detect
from .optimizer import (
    OptSolution,
    scheme_from_solution,
    solve_inner,
    solve_power_allocation,
    tradeoff_curve,
)
from .simulator import SimResult, chi2_statistic_check, simulate_ser
from .special_math import DomainError, chi2_cdf, chi2_pdf, chi2_sf

__all__ = [
    "ConfigError", "DomainError", "InfeasibleError",
    "SystemConfig", "db_to_linear", "linear_to_db",
    "chi2_cdf", "chi2_pdf", "chi2_sf",
    "MessageConstellation", "design_constellation",
    "EmbeddingScheme", "build_uniform", "build_message_based", "detect",
    "ErrorReport", "message_ser", "tag_ser", "tag_ser_message_based",
    "message_ser_upper_bound", "conditional_tag_ser_exact",
    "OptSolution", "solve_inner", "solve_power_allocation", "tradeoff_curve",
    "scheme_from_solution",
    "SimResult", "simulate_ser", "chi2_statistic_check",
    "make_mac", "np_threshold", "detection_rate", "run_auth_experiment",
]
