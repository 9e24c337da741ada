"""Perfect simulation via probabilistic recursion.

Rejection samplers, coupling from the past and Bernoulli factories are all
expressed as recursive schemes run by :mod:`perfsim.engine`, which can swap
recursive calls at a chosen level for exact oracles.
"""

from .densities import EnvelopePair, FiniteDensity
from .engine import PrsSpec, RunTrace, Sources, TerminationGuard, coupled_compare, run, run_truncated
from .rand import CoinStream, UniformSource, derive_stream

__all__ = [
    "CoinStream",
    "EnvelopePair",
    "FiniteDensity",
    "PrsSpec",
    "RunTrace",
    "Sources",
    "TerminationGuard",
    "UniformSource",
    "coupled_compare",
    "derive_stream",
    "run",
    "run_truncated",
]

__version__ = "0.1.0"
