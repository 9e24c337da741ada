"""Acceptance/rejection samplers written as recursive schemes.

Four variants:

* :func:`ar_basic` -- uniform on {1..10}, accept if at most 5, else recurse.
* :func:`ar_adaptive_param` -- uniform on {1..max(5, a)}, on rejection recurse
  with the rejected draw as the new parameter.
* :func:`ar_general` -- draw from an envelope ``g``, accept with probability
  ``h(x)/g(x)``.
* :func:`ar_adaptive_envelope` -- as above, but each rejection refines the
  envelope before recursing.

Each comes as an engine :class:`~perfsim.engine.PrsSpec` plus a vectorized
``*_batch`` runner that advances many independent replicates in lock step.
"""

from __future__ import annotations

import numpy as np

from .densities import EnvelopePair, EnvelopeViolation, FiniteDensity
from .engine import BatchTrace, PrsSpec

UNIFORM5 = FiniteDensity.uniform(range(1, 6))


def _uniform5(_param):
    return UNIFORM5


# ---------------------------------------------------------------------------
# basic and adaptive-parameter rejection
# ---------------------------------------------------------------------------

def _basic_body(alpha, sources):
    x = sources.uniform.integer(1, 10)
    if x <= 5:
        return x
    y = yield alpha
    return y


def ar_basic() -> PrsSpec:
    return PrsSpec("ar-basic", _basic_body, initial=None, law=_uniform5)


def _adaptive_param_body(alpha, sources):
    x = sources.uniform.integer(1, max(5, alpha))
    if x <= 5:
        return x
    y = yield x
    return y


def ar_adaptive_param(alpha0: int) -> PrsSpec:
    if int(alpha0) != alpha0 or alpha0 < 1:
        raise ValueError(f"alpha0 must be a positive integer, got {alpha0}")
    return PrsSpec("ar-adaptive-param", _adaptive_param_body, initial=int(alpha0), law=_uniform5)


def ar_basic_batch(n: int, gen: np.random.Generator) -> BatchTrace:
    out = np.empty(n, dtype=np.int64)
    levels = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    level = draws = 0
    while active.size:
        x = gen.integers(1, 11, size=active.size)
        draws += active.size
        ok = x <= 5
        out[active[ok]] = x[ok]
        levels[active[ok]] = level
        active = active[~ok]
        level += 1
    return BatchTrace(out, levels, draws)


def ar_adaptive_param_batch(n: int, alpha0: int, gen: np.random.Generator,
                            check_monotone: bool = True) -> BatchTrace:
    if int(alpha0) != alpha0 or alpha0 < 1:
        raise ValueError(f"alpha0 must be a positive integer, got {alpha0}")
    out = np.empty(n, dtype=np.int64)
    levels = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    alpha = np.full(n, int(alpha0), dtype=np.int64)
    level = draws = 0
    while active.size:
        x = gen.integers(1, np.maximum(5, alpha) + 1)
        draws += active.size
        ok = x <= 5
        out[active[ok]] = x[ok]
        levels[active[ok]] = level
        active, alpha = active[~ok], x[~ok]
        if check_monotone and alpha.size and alpha.max() > alpha0:
            raise AssertionError("recursive parameter exceeded the initial value")
        level += 1
    return BatchTrace(out, levels, draws)


# ---------------------------------------------------------------------------
# general envelope rejection
# ---------------------------------------------------------------------------

def _general_body(pair, sources):
    src = sources.uniform
    x = pair.envelope.sample(src)
    u = src.unit()
    if u < pair.ratio(x):
        return x
    y = yield pair
    return y


def _target_law(pair):
    return pair.target


def ar_general(pair: EnvelopePair) -> PrsSpec:
    return PrsSpec("ar-general", _general_body, initial=pair, law=_target_law)


def _sample_rows(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF index per row of ``cum`` (shape (k, m)) for unit draws ``u``."""
    # u * total can round up to the total; clipping maps that (measure ~2**-53)
    # case onto the last column, which a zero weight there would reject anyway
    if cum.ndim == 1:
        idx = np.searchsorted(cum, u * cum[-1], side="right")
    else:
        idx = (cum <= (u * cum[:, -1])[:, None]).sum(axis=1)
    return np.minimum(idx, cum.shape[-1] - 1)


def ar_general_batch(n: int, pair: EnvelopePair, gen: np.random.Generator) -> BatchTrace:
    """Vectorized AR over a fixed envelope; outcomes are domain indices."""
    h = np.asarray(pair.target.weights)
    g = np.asarray(pair.envelope.weights)
    ratio = np.divide(h, g, out=np.zeros_like(h), where=g > 0)
    cum = np.cumsum(g)
    out = np.empty(n, dtype=np.int64)
    levels = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    level = draws = 0
    while active.size:
        k = active.size
        x = _sample_rows(cum, gen.random(k))
        u = gen.random(k)
        draws += 2 * k
        ok = u < ratio[x]
        out[active[ok]] = x[ok]
        levels[active[ok]] = level
        active = active[~ok]
        level += 1
    return BatchTrace(out, levels, draws)


# ---------------------------------------------------------------------------
# adaptive envelope rejection
# ---------------------------------------------------------------------------

class AdaptiveEnvelopeRule:
    """Envelope refinement applied after a rejection at point ``x``.

    Subclasses implement :meth:`refine`; rules that can act on a matrix of
    envelope weights (one row per replicate) also implement
    :meth:`refine_rows` so the batch runner can use them.
    """

    name = "rule"

    def refine(self, pair: EnvelopePair, x) -> EnvelopePair:
        raise NotImplementedError

    def refine_rows(self, G: np.ndarray, idx: np.ndarray, h: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class IdentityRule(AdaptiveEnvelopeRule):
    name = "identity"

    def refine(self, pair, x):
        return pair

    def refine_rows(self, G, idx, h):
        return G


class HalvingClampRule(AdaptiveEnvelopeRule):
    """Set ``g(x) <- max(h(x), g(x)/2)`` at the rejected point only."""

    name = "halving-clamp"

    def refine(self, pair, x):
        h = pair.target(x)
        g = pair.envelope(x)
        return EnvelopePair(pair.target, pair.envelope.with_weight(x, max(h, g / 2.0)))

    def refine_rows(self, G, idx, h):
        G = G.copy()
        rows = np.arange(G.shape[0])
        G[rows, idx] = np.maximum(h[idx], G[rows, idx] / 2.0)
        return G


def check_refinement(old: EnvelopePair, new: EnvelopePair) -> None:
    """Fail fast unless ``h <= g_new <= g_old`` pointwise with ``h`` unchanged."""
    if not isinstance(new, EnvelopePair):
        raise EnvelopeViolation(f"refinement returned {type(new).__name__}, not EnvelopePair")
    if new.target != old.target:
        raise EnvelopeViolation("refinement changed the target density")
    if any(gn > go for gn, go in zip(new.envelope.weights, old.envelope.weights)):
        raise EnvelopeViolation("refined envelope exceeds the previous envelope")
    # h <= g_new is enforced by EnvelopePair construction


def ar_adaptive_envelope(pair: EnvelopePair, rule: AdaptiveEnvelopeRule) -> PrsSpec:
    def body(current, sources):
        src = sources.uniform
        x = current.envelope.sample(src)
        u = src.unit()
        if u < current.ratio(x):
            return x
        refined = rule.refine(current, x)
        check_refinement(current, refined)
        y = yield refined
        return y

    return PrsSpec(f"ar-adaptive-envelope[{rule.name}]", body, initial=pair, law=_target_law)


def ar_adaptive_envelope_batch(n: int, pair: EnvelopePair, rule: AdaptiveEnvelopeRule,
                               gen: np.random.Generator, chunk: int = 1 << 17) -> BatchTrace:
    """Vectorized adaptive-envelope AR; outcomes are domain indices.

    Every replicate carries its own envelope row.  Each refinement is checked
    against ``h <= g_new <= g_old``, and the per-attempt acceptance mass of
    every row is asserted non-decreasing.
    """
    h = np.asarray(pair.target.weights)
    g0 = np.asarray(pair.envelope.weights)
    out = np.empty(n, dtype=np.int64)
    levels = np.zeros(n, dtype=np.int64)
    draws = 0
    for start in range(0, n, chunk):
        active = np.arange(start, min(n, start + chunk))
        G = np.tile(g0, (active.size, 1))
        level = 0
        while active.size:
            k = active.size
            x = _sample_rows(np.cumsum(G, axis=1), gen.random(k))
            u = gen.random(k)
            draws += 2 * k
            gx = G[np.arange(k), x]
            ok = u < np.divide(h[x], gx, out=np.zeros(k), where=gx > 0)
            out[active[ok]] = x[ok]
            levels[active[ok]] = level
            G_old = G[~ok]
            G = rule.refine_rows(G_old, x[~ok], h)
            if np.any(G < h) or np.any(G > G_old):
                raise EnvelopeViolation("refinement broke h <= g_new <= g_old")
            active = active[~ok]
            level += 1
    return BatchTrace(out, levels, draws)


def example_pair() -> EnvelopePair:
    """h = (1, 2, 3) under the envelope g = (2, 2, 4) on {1, 2, 3}."""
    dom = (1, 2, 3)
    return EnvelopePair(FiniteDensity(dom, (1, 2, 3)), FiniteDensity(dom, (2, 2, 4)))


def example_wide_pair() -> EnvelopePair:
    """h = (1, 2, 3) under a loose flat envelope g = (8, 8, 8); exercises refinement."""
    dom = (1, 2, 3)
    return EnvelopePair(FiniteDensity(dom, (1, 2, 3)), FiniteDensity(dom, (8, 8, 8)))
