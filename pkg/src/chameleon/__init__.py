"""Local deterministic two-station harness reproducing the singlet correlations.

Two stations share only a seed for the hidden-angle stream. Each measures a
sign with a setting-dependent local weight, and the weighted correlations come
out as ``-cos(b - a)``.
"""

from .analysis import (
    CorrelationEstimate,
    bell1964_check,
    chsh_statistic,
    ekert_group_correlations,
    estimate_correlation,
)
from .model import closed_form_correlation
from .prng import hidden_state_stream
from .protocol import RunConfig, coordinate_run
from .quadrature import correlation_quadrature
from .station import Fixed, RecordSet, Schedule, SeededRandom, run_station

__version__ = "0.1.0"

__all__ = [
    "CorrelationEstimate",
    "Fixed",
    "RecordSet",
    "RunConfig",
    "Schedule",
    "SeededRandom",
    "bell1964_check",
    "chsh_statistic",
    "closed_form_correlation",
    "coordinate_run",
    "correlation_quadrature",
    "ekert_group_correlations",
    "estimate_correlation",
    "hidden_state_stream",
    "run_station",
]
