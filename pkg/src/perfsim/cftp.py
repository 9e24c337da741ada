"""Coupling from the past over finite state spaces.

An :class:`UpdateSpec` describes one *primitive* random update of the chain:
how to draw its randomness, how it moves a state, and an exact finite
partition of its randomness law (``cells``) on which the update is constant.
The randomness of a level with parameter ``alpha`` is ``alpha`` independent
primitives applied in order.

States are handled by index ``0..m-1``; ``UpdateSpec.states`` holds labels.

Ordering matters: a level's randomness is applied *after* the result of the
deeper (older) level, so the level-0 block is the most recent one.  Reversing
this gives forward coupling, which is biased.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .densities import FiniteDensity
from .engine import BatchTrace, DepthExceeded, PrsSpec, TerminationGuard


class NoUniqueStationary(ValueError):
    pass


def doubling(alpha):
    return 2 * alpha


@dataclass(frozen=True)
class UpdateSpec:
    name: str
    states: tuple
    step: Callable[[int, Any], int]
    draw: Callable[[Any], Any]
    cells: tuple
    advance_batch: Callable[[np.ndarray, np.random.Generator], np.ndarray]
    draws_per_primitive: int = 1
    schedule: Callable[[Any], Any] = doubling

    @property
    def size(self) -> int:
        return len(self.states)

    def draw_r(self, src, alpha: int) -> list:
        return [self.draw(src) for _ in range(alpha)]

    def compose(self, R) -> tuple:
        """Image of every state under the primitives of ``R`` applied in order."""
        step = self.step
        image = list(range(self.size))
        for r in R:
            image = [step(x, r) for x in image]
        return tuple(image)

    def apply(self, x: int, R) -> int:
        for r in R:
            x = self.step(x, r)
        return x

    def kernel(self) -> np.ndarray:
        """Exact one-primitive transition matrix, from the randomness partition."""
        m = self.size
        K = np.zeros((m, m))
        for weight, r in self.cells:
            for x in range(m):
                K[x, self.step(x, r)] += weight
        return K

    def with_schedule(self, schedule) -> "UpdateSpec":
        return UpdateSpec(self.name, self.states, self.step, self.draw, self.cells,
                          self.advance_batch, self.draws_per_primitive, schedule)


@dataclass(frozen=True)
class CouplingCertificate:
    coalesced: bool
    image: Optional[int]
    mapping: tuple = field(repr=False)


def detect_coupling(u: UpdateSpec, R) -> CouplingCertificate:
    """Brute-force check whether ``R`` sends every state to the same place."""
    mapping = u.compose(R)
    if all(y == mapping[0] for y in mapping):
        return CouplingCertificate(True, mapping[0], mapping)
    return CouplingCertificate(False, None, mapping)


def coalescence_probability(u: UpdateSpec, k: int) -> float:
    """Exact chance that a block of ``k`` primitives completely couples.

    Dynamic programming over the law of the composed map, enumerating the
    randomness cells at each step.
    """
    dist = {tuple(range(u.size)): 1.0}
    for _ in range(k):
        nxt: dict = {}
        for mapping, p in dist.items():
            for weight, r in u.cells:
                key = tuple(u.step(x, r) for x in mapping)
                nxt[key] = nxt.get(key, 0.0) + p * weight
        dist = nxt
    return math.fsum(p for mp, p in dist.items() if len(set(mp)) == 1)


def verify_stationarity(u: UpdateSpec, pi) -> float:
    """``max |pi K - pi|`` for the one-primitive kernel ``K``."""
    pi = np.asarray(pi, dtype=float)
    return float(np.max(np.abs(pi @ u.kernel() - pi)))


def stationary_exact(u: UpdateSpec) -> np.ndarray:
    """Solve ``pi K = pi, sum(pi) = 1`` for the one-primitive kernel."""
    K = u.kernel()
    m = K.shape[0]
    n_comp, labels = connected_components(K > 0, directed=True, connection="strong")
    closed = []
    for c in range(n_comp):
        members = labels == c
        if K[np.ix_(members, ~members)].sum() == 0.0:
            closed.append(c)
    if len(closed) != 1:
        raise NoUniqueStationary(f"{u.name}: {len(closed)} closed classes, stationary law not unique")
    A = np.vstack([K.T - np.eye(m), np.ones((1, m))])
    b = np.zeros(m + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    res = float(np.max(np.abs(pi @ K - pi)))
    if res > 1e-10:
        raise NoUniqueStationary(f"{u.name}: stationary solve residual {res:.3g}")
    return pi


# ---------------------------------------------------------------------------
# the recursive sampler
# ---------------------------------------------------------------------------

def cftp_run(u: UpdateSpec, alpha0: int = 1) -> PrsSpec:
    """CFTP as a recursive scheme whose parameter is the block length."""

    def body(alpha, sources):
        R = u.draw_r(sources.uniform, alpha)
        cert = detect_coupling(u, R)
        if cert.coalesced:
            return cert.image
        y = yield u.schedule(alpha)
        return cert.mapping[y]

    law_cache = []

    def law(_alpha):
        if not law_cache:
            law_cache.append(FiniteDensity(range(u.size), stationary_exact(u)))
        return law_cache[0]

    return PrsSpec(f"cftp[{u.name}]", body, initial=alpha0, law=law)


def cftp_batch(u: UpdateSpec, alpha0: int, n: int, gen: np.random.Generator,
               guard: TerminationGuard = None) -> BatchTrace:
    """Vectorized CFTP for ``n`` independent replicates; outcomes are state indices."""
    guard = guard or TerminationGuard()
    m = u.size
    history = []
    levels = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    alpha, level, draws = alpha0, 0, 0
    while active.size:
        if level > guard.max_depth:
            raise DepthExceeded(guard.max_depth)
        k = active.size
        X = np.tile(np.arange(m), (k, 1))
        for _ in range(alpha):
            X = u.advance_batch(X, gen)
        draws += k * alpha * u.draws_per_primitive
        coal = (X == X[:, :1]).all(axis=1)
        history.append((X, coal))
        levels[active[coal]] = level
        active = active[~coal]
        alpha = u.schedule(alpha)
        level += 1
    # fold back up: the deeper result feeds this level's map
    deeper = np.empty(0, dtype=np.int64)
    for X, coal in reversed(history):
        res = np.empty(len(X), dtype=np.int64)
        res[coal] = X[coal, 0]
        res[~coal] = X[~coal][np.arange(deeper.size), deeper]
        deeper = res
    return BatchTrace(deeper, levels, draws)


# ---------------------------------------------------------------------------
# shipped chains
# ---------------------------------------------------------------------------

def _cells_from_breaks(breaks, scale=1.0, tag=None):
    pts = sorted({0.0, 1.0} | {b for b in breaks if 0.0 < b < 1.0})
    cells = []
    for a, b in zip(pts, pts[1:]):
        mid = 0.5 * (a + b)
        cells.append((scale * (b - a), mid if tag is None else (tag, mid)))
    return cells


def metropolis_walk(weights: Sequence[float], acceptance=None, name=None) -> UpdateSpec:
    """Nearest-neighbour Metropolis walk on a path graph targeting ``weights``.

    A primitive is a direction (one integer draw) and a uniform (one unit
    draw).  ``acceptance(w_from, w_to)`` defaults to ``min(1, w_to / w_from)``;
    passing a different rule builds deliberately broken chains.
    """
    w = [float(x) for x in weights]
    m = len(w)
    if m < 1 or any(x <= 0 for x in w):
        raise ValueError("metropolis weights must be positive")
    if acceptance is None:
        def acceptance(a, b):
            return min(1.0, b / a)
    # acc[x][0] for a move down, acc[x][1] for a move up
    acc = [[acceptance(w[x], w[x - 1]) if x > 0 else 0.0,
            acceptance(w[x], w[x + 1]) if x < m - 1 else 0.0] for x in range(m)]

    def step(x, r):
        d, v = r
        return x + (2 * d - 1) if v < acc[x][d] else x

    def draw(src):
        return (src.integer(0, 1), src.unit())

    cells = []
    for d in (0, 1):
        cells += _cells_from_breaks([acc[x][d] for x in range(m)], 0.5, d)

    acc_arr = np.array(acc)

    def advance_batch(X, gen):
        k = X.shape[0]
        d = gen.integers(0, 2, size=k)[:, None]
        v = gen.random(k)[:, None]
        move = v < acc_arr[X, d]
        return np.where(move, X + 2 * d - 1, X)

    return UpdateSpec(name or f"metropolis{tuple(weights)}", tuple(range(m)), step, draw,
                      tuple(cells), advance_batch, draws_per_primitive=2)


def kernel_chain(K, states=None, name="kernel") -> UpdateSpec:
    """Chain driven by an explicit transition matrix via inverse-CDF on one shared uniform."""
    K = np.asarray(K, dtype=float)
    m = K.shape[0]
    if K.shape != (m, m) or np.any(K < 0):
        raise ValueError("kernel must be a square nonnegative matrix")
    if np.any(np.abs(K.sum(axis=1) - 1.0) > 1e-12):
        raise ValueError("kernel rows must sum to 1")
    cum = np.cumsum(K, axis=1)
    cum[:, -1] = 1.0
    cum_rows = [list(row) for row in cum]

    def step(x, v):
        return min(bisect_right(cum_rows[x], v), m - 1)

    def draw(src):
        return src.unit()

    cells = _cells_from_breaks(cum.ravel().tolist())

    def advance_batch(X, gen):
        v = gen.random(X.shape[0])[:, None]
        return np.minimum((cum[X] <= v[..., None]).sum(axis=-1), m - 1)

    labels = tuple(states) if states is not None else tuple(range(m))
    return UpdateSpec(name, labels, step, draw, tuple(cells), advance_batch)


def walk3() -> UpdateSpec:
    """Metropolis walk on {0, 1, 2} with target proportional to (1, 2, 3)."""
    return metropolis_walk((1, 2, 3), name="walk3")


TWOSTATE_KERNEL = ((0.9, 0.1), (0.2, 0.8))


def twostate() -> UpdateSpec:
    return kernel_chain(TWOSTATE_KERNEL, name="twostate")


def identity_chain(m: int = 2) -> UpdateSpec:
    """Never moves, so never coalesces for ``m >= 2``; a negative control."""

    def advance_batch(X, gen):
        gen.random(X.shape[0])
        return X

    return UpdateSpec("identity", tuple(range(m)), lambda x, v: x, lambda src: src.unit(),
                      ((1.0, 0.5),), advance_batch)


def constant_chain(m: int, target: int) -> UpdateSpec:
    """Sends every state to ``target`` in one step."""

    def advance_batch(X, gen):
        gen.random(X.shape[0])
        return np.full_like(X, target)

    return UpdateSpec("constant", tuple(range(m)), lambda x, v: target, lambda src: src.unit(),
                      ((1.0, 0.5),), advance_batch)


def chain_from_json(source) -> UpdateSpec:
    """Load ``{"kernel": [[...]], "states": [...]}`` or ``{"weights": [...]}`` (Metropolis)."""
    if isinstance(source, dict):
        doc = source
    else:
        doc = json.loads(Path(source).read_text())
    if "kernel" in doc:
        return kernel_chain(doc["kernel"], doc.get("states"), name=doc.get("name", "custom"))
    if "weights" in doc:
        return metropolis_walk(doc["weights"], name=doc.get("name", "custom"))
    raise ValueError("chain document needs a 'kernel' or 'weights' field")


CHAINS = {"walk3": walk3, "twostate": twostate, "identity": identity_chain}
