"""Local-correctness and tail-inequality checks over the shipped schemes.

Each named algorithm pairs an engine scheme with its exact target law.  The
checks run the scheme through the engine with requests at level ``n``
answered by an exact oracle, and couple full runs against truncated ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import accept_reject as ar
from . import cftp
from .engine import PrsSpec, Sources, coupled_compare, sample_many
from .rand import derive_stream
from .stats import DEFAULT_SIGNIFICANCE, GofReport, chi_squared_gof, counts_of, tv_distance


@dataclass(frozen=True)
class Target:
    spec: PrsSpec
    outcomes: tuple
    probs: np.ndarray


def target(name: str, alpha0: int = 100) -> Target:
    if name == "ar2":
        return Target(ar.ar_basic(), tuple(range(1, 6)), np.full(5, 0.2))
    if name == "ar3":
        return Target(ar.ar_adaptive_param(alpha0), tuple(range(1, 6)), np.full(5, 0.2))
    if name == "ar4":
        pair = ar.example_pair()
        return Target(ar.ar_general(pair), pair.target.domain, pair.target.normalize())
    if name == "ar5":
        pair = ar.example_wide_pair()
        spec = ar.ar_adaptive_envelope(pair, ar.HalvingClampRule())
        return Target(spec, pair.target.domain, pair.target.normalize())
    if name == "cftp-walk3":
        u = cftp.walk3()
        return Target(cftp.cftp_run(u, 1), tuple(range(u.size)), cftp.stationary_exact(u))
    raise KeyError(f"unknown algorithm {name!r}")


ALGORITHMS = ("ar2", "ar3", "ar4", "ar5", "cftp-walk3")


def local_correctness(name: str, n: int, samples: int, seed: int,
                      significance: float = DEFAULT_SIGNIFICANCE) -> tuple[GofReport, np.ndarray]:
    """GOF of the level-``n`` truncated scheme (exact oracle) against its target."""
    t = target(name)
    sources = Sources.from_seed(seed)
    batch = sample_many(t.spec, sources, samples, truncate_at=n)
    if batch.levels.max(initial=0) > n:
        raise AssertionError("truncated run went deeper than its truncation level")
    counts = counts_of(batch.outcomes, t.outcomes)
    return chi_squared_gof(counts, t.probs, significance, seed=seed), counts


@dataclass
class TailReport:
    n: int
    runs: int
    tail: float                 # empirical P(T > n)
    tv: float                   # TV between empirical laws of Y_n and X
    slack: float                # 3 combined standard errors
    mismatches_within: int      # runs with T <= n but X != Y_n (must be 0)
    max_singleton_excess: float # max_i |freq_X(i) - pi_i| - tail, in standard errors
    passed: bool

    def to_dict(self):
        d = dict(self.__dict__)
        d["pass"] = d.pop("passed")
        return d


def tail_check(name: str, n: int, runs: int, seed: int) -> TailReport:
    """Couple full and level-``n`` runs; check ``TV(Y_n, X) <= P(T > n)`` within 3 SEs.

    Also checks every singleton against the exact law:
    ``|P(X = i) - pi_i| <= P(T > n)`` with 4-sigma slack.
    """
    t = target(name)
    xs, ys, ts = [], [], []
    for k in range(runs):
        x, y, depth = coupled_compare(t.spec, n, derive_stream(seed, k))
        xs.append(x)
        ys.append(y)
        ts.append(depth)
    ts = np.array(ts)
    fx = counts_of(xs, t.outcomes) / runs
    fy = counts_of(ys, t.outcomes) / runs
    deep = ts > n
    mismatches = int(sum(1 for x, y, d in zip(xs, ys, deep) if not d and x != y))
    tail = float(deep.mean())
    tv = tv_distance(fx, fy)
    pi = t.probs
    se_tail = math.sqrt(tail * (1.0 - tail) / runs)
    # conservative: per-cell SE of a difference of two frequencies, summed
    se_tv = 0.5 * float(np.sum(np.sqrt(2.0 * pi * (1.0 - pi) / runs)))
    slack = 3.0 * math.hypot(se_tail, se_tv)
    se_cell = np.sqrt(pi * (1.0 - pi) / runs + se_tail**2)
    excess = float(np.max((np.abs(fx - pi) - tail) / se_cell))
    passed = mismatches == 0 and tv <= tail + slack and excess <= 4.0
    return TailReport(n, runs, tail, tv, slack, mismatches, excess, passed)
