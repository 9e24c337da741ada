"""Bernoulli factories for ``Cp/(1+Cp)``, ``(Cp)**i`` and the linear case ``Cp``.

Factory code touches the unknown coin only through ``coin.flip()``.  Known
probabilities (``C/(1+C)``, ``beta**-i``) come from the uniform stream.

The promise ``Cp <= 1 - eps`` cannot be checked here since ``p`` is hidden;
if it is false the output law is unspecified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import BatchTrace, DepthExceeded, PrsSpec, RunTrace, Sources, TerminationGuard, run
from .rand import CoinStream, UniformSource

THRESHOLD_CONSTANT = 3.55
_SCALAR_TAIL = 64


@dataclass(frozen=True)
class FactoryParams:
    C: float
    i: int
    eps: float

    def __post_init__(self):
        if not self.C >= 1.0 or math.isinf(self.C):
            raise ValueError(f"C must be a finite real >= 1, got {self.C}")
        if int(self.i) != self.i or self.i < 0:
            raise ValueError(f"i must be a nonnegative integer, got {self.i}")
        if not 0.0 < self.eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")


@dataclass(frozen=True)
class FactoryConstants:
    threshold: float
    beta: float

    @classmethod
    def for_eps(cls, eps: float) -> "FactoryConstants":
        return cls(THRESHOLD_CONSTANT / eps, (1.0 - eps / 2.0) / (1.0 - eps))

    def inverse_power(self, i: int) -> float:
        """``beta ** -i``, computed in log space so large ``i`` cannot underflow badly."""
        return math.exp(-i * math.log(self.beta))


# ---------------------------------------------------------------------------
# engine schemes
# ---------------------------------------------------------------------------

def _bf1_body(C, sources):
    if sources.uniform.bernoulli(C / (1.0 + C)) == 0:
        return 0
    if sources.coin.flip() == 1:
        return 1
    y = yield C
    return y


def bf1(C: float) -> PrsSpec:
    """Scheme whose output is Bern(Cp/(1+Cp)) for the coin in ``sources``."""
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")
    return PrsSpec("bf1", _bf1_body, initial=float(C))


_BF1 = bf1(1.0)


def _bf2_body(params, sources):
    C, i, eps = params
    if i == 0:
        return 1
    const = FactoryConstants.for_eps(eps)
    if i > const.threshold:
        if sources.uniform.bernoulli(const.inverse_power(i)) == 0:
            return 0
        y = yield (const.beta * C, i, eps / 2.0)
        return y
    # BF1 is a separate scheme; its own recursion does not count as levels here
    b2, _ = run(_BF1, sources, C)
    y = yield (C, i + 1 - 2 * b2, eps)
    return y


def bf2(params: FactoryParams) -> PrsSpec:
    """Scheme whose output is Bern((Cp)**i), parameter ``(C, i, eps)``."""
    return PrsSpec("bf2", _bf2_body, initial=(float(params.C), int(params.i), float(params.eps)))


def linear_factory(C: float, eps: float, coin: CoinStream, src: UniformSource,
                   guard: TerminationGuard = None) -> tuple[int, RunTrace]:
    """One Bern(Cp) bit, given the promise ``Cp <= 1 - eps``."""
    return run(bf2(FactoryParams(C, 1, eps)), Sources(src, coin), guard=guard)


def bernoulli_oracle(prob):
    """Oracle answering a request ``beta`` with an exact Bern(prob(beta)) bit.

    ``prob`` is harness-side (it may know the coin's bias); it never reaches
    factory code, which only sees the returned bits.
    """

    def draw(param, sources):
        return sources.uniform.bernoulli(prob(param))

    return draw


# ---------------------------------------------------------------------------
# vectorized replicate runners
# ---------------------------------------------------------------------------

class VectorCoin:
    """Vector of independent Bern(p) flips with hidden ``p`` (batch counterpart of CoinStream)."""

    __slots__ = ("_bias", "_gen", "flips", "p_reads")

    def __init__(self, p: float, gen: np.random.Generator):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"coin bias out of [0, 1]: {p}")
        self._bias = float(p)
        self._gen = gen
        self.flips = 0
        self.p_reads = 0

    @property
    def p(self) -> float:
        self.p_reads += 1
        return self._bias

    def flip(self, k: int) -> np.ndarray:
        self.flips += k
        return (self._gen.random(k) < self._bias).astype(np.int64)


def bf1_batch(n: int, C: float, coin: VectorCoin, gen: np.random.Generator) -> BatchTrace:
    out = np.empty(n, dtype=np.int64)
    levels = np.zeros(n, dtype=np.int64)
    flips = np.zeros(n, dtype=np.int64)
    q = C / (1.0 + C)
    active = np.arange(n)
    level = draws = 0
    while active.size:
        b = gen.random(active.size) < q
        draws += active.size
        zero = active[~b]
        out[zero] = 0
        levels[zero] = level
        active = active[b]
        x = coin.flip(active.size)
        flips[active] += 1
        one = active[x == 1]
        out[one] = 1
        levels[one] = level
        active = active[x == 0]
        level += 1
    return BatchTrace(out, levels, draws, flips)


@dataclass
class FactoryBatchTrace(BatchTrace):
    # tallies of BF1 outcomes inside the low-i branch: exponent moves up / down
    up_moves: int = 0
    down_moves: int = 0
    # smallest slack 1 - eps' - C'p seen on entering the high-i branch (harness-only)
    min_promise_slack: float = math.inf


def bf2_batch(n: int, params: FactoryParams, coin: VectorCoin, gen: np.random.Generator,
              guard: TerminationGuard = None, audit_p: float = None) -> FactoryBatchTrace:
    """Vectorized BF2 over ``n`` replicates.

    Each replicate carries its own ``(C, i, eps)``; a round advances every
    live replicate by one BF2 level, running its BF1 call to completion.
    ``audit_p`` is for harness checks only: when given, the promise on every
    high-i recursion is recorded in ``min_promise_slack``.
    """
    guard = guard or TerminationGuard()
    out = np.empty(n, dtype=np.int64)
    levels = np.zeros(n, dtype=np.int64)
    flips = np.zeros(n, dtype=np.int64)
    C = np.full(n, float(params.C))
    i = np.full(n, int(params.i), dtype=np.int64)
    eps = np.full(n, float(params.eps))
    active = np.arange(n)
    finished = np.zeros(n, dtype=bool)
    trace = FactoryBatchTrace(out, levels, 0, flips)
    level = 0
    while active.size:
        if level > guard.max_depth:
            raise DepthExceeded(guard.max_depth)
        if active.size <= _SCALAR_TAIL:
            # a few stragglers: per-replicate loops beat per-round array overhead
            for k in active:
                _bf2_scalar(k, level, C, i, eps, coin, gen, guard, trace, audit_p)
            break
        ia, Ca, ea = i[active], C[active], eps[active]
        done = ia == 0
        out[active[done]] = 1
        levels[active[done]] = level
        finished[active[done]] = True

        high = ~done & (ia > THRESHOLD_CONSTANT / ea)
        if high.any():
            hi_idx = active[high]
            beta = (1.0 - ea[high] / 2.0) / (1.0 - ea[high])
            b1 = gen.random(hi_idx.size) < np.exp(-ia[high] * np.log(beta))
            trace.uniform_draws += hi_idx.size
            stop = hi_idx[~b1]
            out[stop] = 0
            levels[stop] = level
            finished[stop] = True
            go = hi_idx[b1]
            C[go] = beta[b1] * Ca[high][b1]
            eps[go] = ea[high][b1] / 2.0
            if audit_p is not None and go.size:
                slack = 1.0 - eps[go] - C[go] * audit_p
                trace.min_promise_slack = min(trace.min_promise_slack, float(slack.min()))

        low = ~done & ~high
        if low.any():
            lo_idx = active[low]
            b2 = _bf1_inline(lo_idx, C[lo_idx], coin, gen, flips, trace)
            i[lo_idx] += 1 - 2 * b2
            trace.down_moves += int(b2.sum())
            trace.up_moves += int(b2.size - b2.sum())

        active = active[~finished[active]]
        level += 1
    return trace


def _bf2_scalar(k, level, C, i, eps, coin, gen, guard, trace, audit_p):
    """Finish replicate ``k`` of a batch run from ``level`` onward, one level at a time."""
    Ck, ik, ek = float(C[k]), int(i[k]), float(eps[k])
    while True:
        if level > guard.max_depth:
            raise DepthExceeded(guard.max_depth)
        if ik == 0:
            bit = 1
            break
        if ik > THRESHOLD_CONSTANT / ek:
            beta = (1.0 - ek / 2.0) / (1.0 - ek)
            trace.uniform_draws += 1
            if not gen.random() < math.exp(-ik * math.log(beta)):
                bit = 0
                break
            Ck, ek = beta * Ck, ek / 2.0
            if audit_p is not None:
                trace.min_promise_slack = min(trace.min_promise_slack, 1.0 - ek - Ck * audit_p)
        else:
            q = Ck / (1.0 + Ck)
            while True:
                trace.uniform_draws += 1
                if not gen.random() < q:
                    b2 = 0
                    break
                trace.coin_flips[k] += 1
                if coin.flip(1)[0] == 1:
                    b2 = 1
                    break
            ik += 1 - 2 * b2
            trace.down_moves += b2
            trace.up_moves += 1 - b2
        level += 1
    trace.outcomes[k] = bit
    trace.levels[k] = level


def _bf1_inline(idx, C, coin, gen, flips, trace):
    """Run one BF1(C) to completion for each replicate in ``idx``; returns its bits."""
    res = np.empty(idx.size, dtype=np.int64)
    pos = np.arange(idx.size)
    q = C / (1.0 + C)
    while pos.size:
        b = gen.random(pos.size) < q[pos]
        trace.uniform_draws += pos.size
        res[pos[~b]] = 0
        pos = pos[b]
        x = coin.flip(pos.size)
        flips[idx[pos]] += 1
        res[pos[x == 1]] = 1
        pos = pos[x == 0]
    return res


def linear_factory_batch(n: int, C: float, eps: float, coin: VectorCoin,
                         gen: np.random.Generator, **kw) -> FactoryBatchTrace:
    return bf2_batch(n, FactoryParams(C, 1, eps), coin, gen, **kw)
