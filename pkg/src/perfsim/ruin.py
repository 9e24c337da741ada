"""Gambler's ruin absorption times and flip-count bounds for the linear factory.

The ruin chain moves ``i -> i+1`` with probability ``r`` and ``i -> i-1``
otherwise, absorbing at 0 and ``n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .factory import THRESHOLD_CONSTANT

_K = THRESHOLD_CONSTANT
PRIOR_CONSTANT = 9.5


@dataclass(frozen=True)
class RuinChain:
    r: float
    n: int
    start: int = 1

    def __post_init__(self):
        if not 0.0 < self.r <= 1.0:
            raise ValueError(f"r must lie in (0, 1], got {self.r}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if not 0 <= self.start <= self.n:
            raise ValueError(f"start must lie in 0..n, got {self.start}")


def ruin_expected_steps(chain: RuinChain) -> float:
    """Closed-form expected absorption time from state 1 (needs ``r > 1/2``)."""
    r, n = chain.r, chain.n
    if chain.start != 1:
        raise ValueError("the closed form is for start = 1; use ruin_oracle otherwise")
    if not r > 0.5:
        raise ValueError(f"closed form needs r > 1/2, got {r}")
    rho = (1.0 - r) / r
    drift = 2.0 * r - 1.0
    return n / drift * (1.0 - rho) / (1.0 - rho**n) - 1.0 / drift


def ruin_oracle(chain: RuinChain) -> float:
    """Expected absorption time by solving ``(I - Q) t = 1`` over the transient states.

    Tridiagonal elimination (Thomas algorithm); independent of the closed form.
    """
    r, n, s = chain.r, chain.n, chain.start
    if s == 0 or s == n:
        return 0.0
    m = n - 1
    # row j (state j+1): t_j - r t_{j+1} - (1-r) t_{j-1} = 1
    lower = np.full(m, -(1.0 - r))
    diag = np.ones(m)
    upper = np.full(m, -r)
    rhs = np.ones(m)
    c = np.empty(m)
    d = np.empty(m)
    c[0] = upper[0] / diag[0]
    d[0] = rhs[0] / diag[0]
    for j in range(1, m):
        denom = diag[j] - lower[j] * c[j - 1]
        if denom == 0.0:
            raise ArithmeticError("singular ruin system")
        c[j] = upper[j] / denom
        d[j] = (rhs[j] - lower[j] * d[j - 1]) / denom
    t = np.empty(m)
    t[-1] = d[-1]
    for j in range(m - 2, -1, -1):
        t[j] = d[j] - c[j] * t[j + 1]
    return float(t[s - 1])


def ruin_upper_bound(chain: RuinChain) -> float:
    """``(n - i)/(2r - 1)``, valid for ``r > 1/2``."""
    if not chain.r > 0.5:
        raise ValueError("bound needs r > 1/2")
    return (chain.n - chain.start) / (2.0 * chain.r - 1.0)


def ruin_monte_carlo(chain: RuinChain, walks: int, gen: np.random.Generator) -> tuple[float, float]:
    """Mean and standard error of simulated absorption times."""
    pos = np.full(walks, chain.start, dtype=np.int64)
    steps = np.zeros(walks, dtype=np.int64)
    live = (pos > 0) & (pos < chain.n)
    while live.any():
        idx = np.flatnonzero(live)
        up = gen.random(idx.size) < chain.r
        pos[idx] += np.where(up, 1, -1)
        steps[idx] += 1
        live[idx] = (pos[idx] > 0) & (pos[idx] < chain.n)
    return float(steps.mean()), float(steps.std(ddof=1) / math.sqrt(walks)) if walks > 1 else 0.0


def _check(C, eps):
    if not C >= 1.0:
        raise ValueError(f"C must be >= 1, got {C}")
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")


def bound_coefficient() -> float:
    """``3.55 / [(1 - e^-3.55)(1 - 2 e^-1.775)]``, about 5.529."""
    return _K / ((1.0 - math.exp(-_K)) * (1.0 - 2.0 * math.exp(-_K / 2.0)))


def bound_bf2(C: float, eps: float) -> float:
    """Upper bound on expected coin flips of the linear factory BF2(C, 1, eps).

    Carries the ``3.55`` factor from the ``ceil(3.55/eps)`` step counts, so the
    bound is ``5.529 * C * (1 + 1/eps)``.  ``eps = 1`` is accepted as a
    degenerate limit for evaluation only.
    """
    _check(C, eps)
    return bound_coefficient() * C * (1.0 + 1.0 / eps)


def bound_bf2_literal(C: float, eps: float) -> float:
    """The same bound without the 3.55 factor, about ``1.557 * C * (1 + 1/eps)``; for comparison."""
    _check(C, eps)
    return C * (1.0 + 1.0 / eps) / ((1.0 - math.exp(-_K)) * (1.0 - 2.0 * math.exp(-_K / 2.0)))


def prior_bound(C: float, eps: float) -> float:
    """Earlier linear-factory bound ``9.5 C / eps``."""
    _check(C, eps)
    return PRIOR_CONSTANT * C / eps
