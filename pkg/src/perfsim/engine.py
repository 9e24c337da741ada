"""Execution engine for probabilistic recursive schemes.

A scheme body is a generator function ``body(param, sources)``.  It draws its
randomness from ``sources`` and requests a recursive call by yielding the new
parameter; the engine sends back the recursive call's output.  Returning ends
the body with that value::

    def body(alpha, sources):
        x = sources.uniform.integer(1, 10)
        if x <= 5:
            return x
        y = yield alpha
        return y

Because every recursive call passes through the engine, it can track the
level of recursion, enforce a depth guard, and answer requests at a chosen
level with an exact oracle instead of recursing (the truncated run used to
couple a scheme against its oracle-terminated copies).  The call stack is
explicit, so deep recursions never touch Python's own stack limit.
"""

from __future__ import annotations

import inspect
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .rand import CoinStream, UniformSource, derive_stream

DEFAULT_MAX_DEPTH = 10**6


class DepthExceeded(RuntimeError):
    """A run tried to go deeper than its guard allows."""

    def __init__(self, max_depth: int):
        super().__init__(
            f"recursion level would exceed max_depth={max_depth}; the scheme may not "
            "terminate for this parameter, or the cap is too small"
        )
        self.max_depth = max_depth


class OracleUnavailable(LookupError):
    pass


@dataclass(frozen=True)
class TerminationGuard:
    max_depth: int = DEFAULT_MAX_DEPTH

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")


@dataclass
class Sources:
    """Randomness handed to a scheme body: a uniform stream and optionally a coin."""

    uniform: UniformSource
    coin: Optional[CoinStream] = None

    @classmethod
    def from_seed(cls, seed: int, coin_p: Optional[float] = None) -> "Sources":
        # the coin gets its own child stream so uniform draw counts stay the algorithm's own
        uniform = UniformSource(derive_stream(seed, 0))
        coin = None
        if coin_p is not None:
            coin = CoinStream(coin_p, UniformSource(derive_stream(seed, 1)))
        return cls(uniform, coin)


@dataclass(frozen=True)
class PrsSpec:
    """A probabilistic recursive scheme.

    ``law``, when given, maps a parameter to the exact target distribution
    (an object with ``sample(UniformSource)``); it backs the default oracle.
    """

    name: str
    body: Callable[[Any, Sources], Any]
    initial: Any = None
    law: Optional[Callable[[Any], Any]] = None

    def oracle(self) -> Callable[[Any, Sources], Any]:
        if self.law is None:
            raise OracleUnavailable(f"scheme {self.name!r} has no exact law attached")
        law = self.law

        def draw(param, sources):
            return law(param).sample(sources.uniform)

        return draw


@dataclass
class RunTrace:
    outcome: Any = None
    max_level: int = 0
    uniform_draws: int = 0
    coin_flips: int = 0
    oracle_calls: int = 0
    # parameter of every body invocation, in call order; filled only on request
    params: Optional[list] = field(default=None, repr=False)


@dataclass
class BatchTrace:
    """Per-replicate results of a vectorized replicate run.

    Replicates advance in lock step, one recursion level per round, each with
    its own independent draws; ``levels[k]`` is replicate ``k``'s deepest level.
    """

    outcomes: np.ndarray
    levels: np.ndarray
    uniform_draws: int = 0
    coin_flips: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.outcomes)


def _execute(spec, param, sources, guard, truncate_at=None, oracle=None, record_params=False):
    guard = guard or TerminationGuard()
    if param is None:
        param = spec.initial
    coin = sources.coin
    draws0 = sources.uniform.draws_made
    flips0 = coin.flips if coin is not None else 0
    trace = RunTrace(params=[] if record_params else None)

    stack = []
    level = 0
    if record_params:
        trace.params.append(param)
    gen = spec.body(param, sources)
    value = None
    while True:
        if not inspect.isgenerator(gen):
            # a body with no recursion branch may be a plain function
            value, gen = gen, None
        else:
            try:
                request = gen.send(value)
            except StopIteration as stop:
                value, gen = stop.value, None
        if gen is None:
            if not stack:
                break
            gen = stack.pop()
            level -= 1
            continue

        if truncate_at is not None and level == truncate_at:
            trace.oracle_calls += 1
            try:
                value = oracle(request, sources)
            except KeyError as exc:
                raise OracleUnavailable(f"oracle cannot serve parameter {request!r}") from exc
            continue

        if level + 1 > guard.max_depth:
            raise DepthExceeded(guard.max_depth)
        stack.append(gen)
        level += 1
        if level > trace.max_level:
            trace.max_level = level
        if record_params:
            trace.params.append(request)
        gen = spec.body(request, sources)
        value = None

    trace.outcome = value
    trace.uniform_draws = sources.uniform.draws_made - draws0
    if coin is not None:
        trace.coin_flips = coin.flips - flips0
    return value, trace


def run(spec: PrsSpec, sources: Sources, param=None, guard: TerminationGuard = None,
        record_params: bool = False):
    """Run ``spec`` with full recursion. Returns ``(output, trace)``."""
    return _execute(spec, param, sources, guard, record_params=record_params)


def run_truncated(spec: PrsSpec, sources: Sources, n: int, param=None, oracle=None,
                  guard: TerminationGuard = None, record_params: bool = False):
    """Run ``spec`` with recursive requests made at level ``n`` answered by ``oracle``.

    Levels below ``n`` recurse as usual, so ``trace.max_level <= n``.  Each
    oracle request gets a fresh independent draw.  ``oracle`` defaults to the
    scheme's exact law.
    """
    if n < 0:
        raise ValueError("truncation level must be nonnegative")
    if oracle is None:
        oracle = spec.oracle()
    return _execute(spec, param, sources, guard, truncate_at=n, oracle=oracle,
                    record_params=record_params)


def coupled_compare(spec: PrsSpec, n: int, seed: int, param=None, oracle=None,
                    coin_p: Optional[float] = None, guard: TerminationGuard = None):
    """Run the full scheme and its level-``n`` truncation on the same randomness.

    Returns ``(x_full, y_n, t)`` where ``t`` is the deepest level the full run
    reached.  When ``t <= n`` the truncated run never consults its oracle and
    replays the full run draw for draw, so ``x_full == y_n``.
    """
    x, full = run(spec, Sources.from_seed(seed, coin_p), param, guard)
    y, _ = run_truncated(spec, Sources.from_seed(seed, coin_p), n, param, oracle, guard)
    return x, y, full.max_level


def sample_many(spec: PrsSpec, sources: Sources, n_samples: int, param=None,
                guard: TerminationGuard = None, truncate_at: Optional[int] = None,
                oracle=None) -> BatchTrace:
    """Run ``spec`` ``n_samples`` times in sequence on one stream through the engine."""
    outcomes = []
    levels = np.empty(n_samples, dtype=np.int64)
    flips = np.zeros(n_samples, dtype=np.int64)
    draws0 = sources.uniform.draws_made
    for k in range(n_samples):
        if truncate_at is None:
            x, tr = run(spec, sources, param, guard)
        else:
            x, tr = run_truncated(spec, sources, truncate_at, param, oracle, guard)
        outcomes.append(x)
        levels[k] = tr.max_level
        flips[k] = tr.coin_flips
    return BatchTrace(np.array(outcomes), levels, sources.uniform.draws_made - draws0,
                      flips if sources.coin is not None else None)
