"""Goodness-of-fit and mean tests that turn exact-law claims into pass/fail checks."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

DEFAULT_SIGNIFICANCE = 1e-3

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma ``Q(a, x)``.

    Power series for ``x < a + 1`` and a Lentz continued fraction otherwise;
    both converge to near machine precision for the ``a`` used here.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0:
        return 1.0
    log_prefactor = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        term = total = 1.0 / a
        ap = a
        for _ in range(_MAX_ITER):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * _EPS:
                break
        return max(0.0, 1.0 - total * math.exp(log_prefactor))
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for k in range(1, _MAX_ITER):
        an = -k * (k - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return min(1.0, math.exp(log_prefactor) * h)


def chi2_sf(statistic: float, dof: int) -> float:
    return gamma_q(dof / 2.0, statistic / 2.0)


@dataclass
class GofReport:
    statistic: float
    dof: int
    p_value: float
    passed: bool
    test: str = "chi2-gof"
    seed: Optional[int] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


def _merge_small(obs: np.ndarray, exp: np.ndarray, minimum: float = 5.0):
    """Pool cells whose expected count is below ``minimum``.

    Small cells are merged in ascending order of expectation; a pooled
    remainder still under the minimum joins the smallest large cell.
    """
    big = exp >= minimum
    if big.all():
        return obs, exp
    keep_o, keep_e = list(obs[big]), list(exp[big])
    order = np.argsort(exp[~big], kind="stable")
    small_o, small_e = obs[~big][order], exp[~big][order]
    acc_o = acc_e = 0.0
    for o, e in zip(small_o, small_e):
        acc_o += o
        acc_e += e
        if acc_e >= minimum:
            keep_o.append(acc_o)
            keep_e.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if keep_e:
            j = int(np.argmin(keep_e))
            keep_o[j] += acc_o
            keep_e[j] += acc_e
        else:
            keep_o.append(acc_o)
            keep_e.append(acc_e)
    return np.array(keep_o, dtype=float), np.array(keep_e, dtype=float)


def chi_squared_gof(counts, expected, significance: float = DEFAULT_SIGNIFICANCE,
                    seed: Optional[int] = None) -> GofReport:
    """Pearson chi-squared test of ``counts`` against probability vector ``expected``.

    ``counts`` and ``expected`` may be aligned sequences, or mappings from
    outcome to count / probability (outcomes absent from ``counts`` count 0).
    Observing an outcome of probability zero fails outright.
    """
    if isinstance(expected, Mapping):
        keys = list(expected)
        if isinstance(counts, Mapping):
            stray = set(counts) - set(keys)
            if any(counts[k] for k in stray):
                return GofReport(math.inf, len(keys) - 1, 0.0, False, seed=seed)
            counts = [counts.get(k, 0) for k in keys]
        expected = [expected[k] for k in keys]
    obs = np.asarray(counts, dtype=float)
    probs = np.asarray(expected, dtype=float)
    if obs.shape != probs.shape or obs.ndim != 1:
        raise ValueError("counts and expected must be aligned 1-d vectors")
    if np.any(obs < 0):
        raise ValueError("counts must be nonnegative")
    N = obs.sum()
    if N < 1:
        raise ValueError("no observations")
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError("expected must be a probability vector")

    impossible = probs == 0
    if np.any(obs[impossible] > 0):
        return GofReport(math.inf, int((~impossible).sum()) - 1, 0.0, False, seed=seed)
    o, e = _merge_small(obs[~impossible], probs[~impossible] * N)
    dof = len(e) - 1
    if dof < 1:
        return GofReport(0.0, 0, 1.0, True, seed=seed)
    stat = float(np.sum((o - e) ** 2 / e))
    p = chi2_sf(stat, dof)
    return GofReport(stat, dof, p, p >= significance, seed=seed)


def counts_of(samples, outcomes: Sequence) -> np.ndarray:
    """Histogram of ``samples`` over ``outcomes`` in the given order."""
    samples = np.asarray(samples)
    return np.array([int(np.count_nonzero(samples == x)) for x in outcomes], dtype=np.int64)


def majority_pass(reports) -> bool:
    reports = list(reports)
    return sum(bool(r.passed) for r in reports) * 2 > len(reports)


@dataclass
class MeanTest:
    passed: bool
    estimate: float
    margin: float   # |estimate - q0|
    sigma: float    # standard error under q0
    z: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


def binomial_mean_test(successes: int, trials: int, q0: float, z: float = 4.0) -> MeanTest:
    """Two-sided z test of a success frequency against ``q0``.

    For ``q0`` in {0, 1} the standard error vanishes and only an exact match passes.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in 0..trials")
    if not 0.0 <= q0 <= 1.0:
        raise ValueError("q0 must lie in [0, 1]")
    if not z > 0:
        raise ValueError("z must be positive")
    est = successes / trials
    sigma = math.sqrt(q0 * (1.0 - q0) / trials)
    margin = abs(est - q0)
    return MeanTest(margin <= z * sigma, est, margin, sigma, z)


def mean_within(values, target: float, z: float = 4.0) -> MeanTest:
    """z test of a sample mean against ``target`` using the sample standard error."""
    values = np.asarray(values, dtype=float)
    n = values.size
    est = float(values.mean())
    sigma = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    margin = abs(est - target)
    return MeanTest(margin <= z * sigma, est, margin, sigma, z)


def tv_distance(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("vectors must have the same length")
    for v in (p, q):
        if abs(v.sum() - 1.0) > 1e-9:
            raise ValueError("inputs must be probability vectors")
    return float(min(1.0, 0.5 * np.abs(p - q).sum()))
