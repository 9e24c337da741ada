"""Finite unnormalized densities and envelope pairs (counting measure)."""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from itertools import accumulate
from pathlib import Path
from typing import Hashable, Sequence

import numpy as np


class DegenerateDensityError(ValueError):
    pass


class EnvelopeViolation(ValueError):
    pass


class FiniteDensity:
    """Unnormalized density ``h`` over a finite ordered domain.

    Immutable after construction.  Sampling is inverse-CDF over the stored
    order, so it is deterministic given the unit draw.
    """

    __slots__ = ("domain", "weights", "Z", "_cum", "_index")

    def __init__(self, domain: Sequence[Hashable], weights: Sequence[float]):
        domain = tuple(domain)
        weights = tuple(float(w) for w in weights)
        if len(domain) != len(weights):
            raise ValueError("domain and weights differ in length")
        if not domain:
            raise DegenerateDensityError("empty domain")
        if len(set(domain)) != len(domain):
            raise ValueError("domain points must be distinct")
        for w in weights:
            if not (w >= 0.0) or math.isinf(w):
                raise ValueError(f"weights must be finite and nonnegative, got {w}")
        Z = math.fsum(weights)
        if Z <= 0.0:
            raise DegenerateDensityError("total mass is zero")
        self.domain = domain
        self.weights = weights
        self.Z = Z
        self._cum = list(accumulate(weights))
        self._index = {x: k for k, x in enumerate(domain)}

    @classmethod
    def uniform(cls, domain) -> "FiniteDensity":
        domain = tuple(domain)
        return cls(domain, [1.0] * len(domain))

    @classmethod
    def from_json(cls, source) -> "FiniteDensity":
        """Load ``{"domain": [...], "weights": [...]}`` from a dict, path or JSON text."""
        if isinstance(source, dict):
            doc = source
        elif isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
            doc = json.loads(Path(source).read_text())
        else:
            doc = json.loads(source)
        try:
            return cls(doc["domain"], doc["weights"])
        except KeyError as exc:
            raise ValueError(f"density document missing field {exc}") from None

    def to_json(self) -> dict:
        return {"domain": list(self.domain), "weights": list(self.weights)}

    def __len__(self):
        return len(self.domain)

    def __repr__(self):
        return f"FiniteDensity({list(self.domain)!r}, {list(self.weights)!r})"

    def __eq__(self, other):
        if not isinstance(other, FiniteDensity):
            return NotImplemented
        return self.domain == other.domain and self.weights == other.weights

    def __hash__(self):
        return hash((self.domain, self.weights))

    def __call__(self, x) -> float:
        return self.weights[self._index[x]]

    def index(self, x) -> int:
        return self._index[x]

    def with_weight(self, x, w: float) -> "FiniteDensity":
        weights = list(self.weights)
        weights[self._index[x]] = w
        return FiniteDensity(self.domain, weights)

    def normalize(self) -> np.ndarray:
        return np.array([w / self.Z for w in self.weights])

    def sample(self, src) -> Hashable:
        """Draw a point with probability ``h(x) / Z`` using one unit draw."""
        cum = self._cum
        k = bisect_right(cum, src.unit() * cum[-1])
        if k >= len(cum):
            # u * total rounded up to the total; fall back to the last massive point
            k = max(j for j, w in enumerate(self.weights) if w > 0)
        return self.domain[k]


def normalize(d: FiniteDensity) -> np.ndarray:
    return d.normalize()


def sample_exact(d: FiniteDensity, src):
    return d.sample(src)


class EnvelopePair:
    """Target ``h`` with an envelope ``g`` dominating it pointwise."""

    __slots__ = ("target", "envelope")

    def __init__(self, target: FiniteDensity, envelope: FiniteDensity):
        if target.domain != envelope.domain:
            raise EnvelopeViolation("target and envelope are defined on different domains")
        # exact comparison on purpose: a violated envelope silently biases rejection
        bad = [x for x, h, g in zip(target.domain, target.weights, envelope.weights) if g < h]
        if bad:
            raise EnvelopeViolation(f"envelope below target at {bad[:5]}")
        assert envelope.Z >= target.Z
        self.target = target
        self.envelope = envelope

    def __repr__(self):
        return f"EnvelopePair(target={self.target!r}, envelope={self.envelope!r})"

    def __eq__(self, other):
        if not isinstance(other, EnvelopePair):
            return NotImplemented
        return self.target == other.target and self.envelope == other.envelope

    def __hash__(self):
        return hash((self.target, self.envelope))

    def ratio(self, x) -> float:
        k = self.target.index(x)
        return self.target.weights[k] / self.envelope.weights[k]

    def acceptance_mass(self) -> float:
        return self.target.Z / self.envelope.Z


def acceptance_mass(e: EnvelopePair) -> float:
    """Per-attempt acceptance probability ``Z_h / Z_g`` of rejection from ``e``."""
    return e.acceptance_mass()
