"""Seedable randomness with exact draw accounting.

Every sampler in the package pulls its randomness through a
:class:`UniformSource` (or a :class:`CoinStream` for Bernoulli factories), so
runs are replayable from a 64-bit seed and every draw is counted.

Unit draws are 53-bit dyadic floats ``k / 2**53``.  They are not exact reals,
but the resolution is far below anything the statistical checks can see.
"""

from __future__ import annotations

import math

import numpy as np

SEED_MAX = 2**64 - 1
_BLOCK = 2048
_UNIT = 2.0**-53


class InvalidRangeError(ValueError):
    pass


class InvalidProbabilityError(ValueError):
    pass


def check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def derive_stream(seed: int, index: int) -> int:
    """Child seed for replicate ``index`` of ``seed``.

    Uses numpy's SeedSequence hashing, so children of the same parent are
    statistically independent and the mapping is fully deterministic.
    """
    seed = check_seed(seed)
    if index < 0:
        raise ValueError("stream index must be nonnegative")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_generator(seed: int) -> np.random.Generator:
    """numpy Generator for vectorized replicate loops, keyed by ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(check_seed(seed))))


class UniformSource:
    """Buffered PCG64 stream of unit, integer and known-probability draws.

    ``draws_made`` counts calls (one per logical draw), not raw words; an
    integer draw that rejects a word internally still counts once.
    """

    def __init__(self, seed: int):
        self.seed = check_seed(seed)
        self._bitgen = np.random.PCG64(np.random.SeedSequence(self.seed))
        self._buf: list[int] = []
        self._pos = 0
        self._block = 32
        self.draws_made = 0

    def __repr__(self):
        return f"UniformSource(seed={self.seed}, draws_made={self.draws_made})"

    def _word(self) -> int:
        if self._pos == len(self._buf):
            # short first blocks keep many tiny replicate streams cheap
            self._buf = self._bitgen.random_raw(self._block).tolist()
            self._block = min(2 * self._block, _BLOCK)
            self._pos = 0
        w = self._buf[self._pos]
        self._pos += 1
        return w

    def unit(self) -> float:
        """Uniform draw on [0, 1)."""
        self.draws_made += 1
        return (self._word() >> 11) * _UNIT

    def integer(self, a: int, b: int) -> int:
        """Uniform integer on {a, ..., b}, without modulo bias."""
        if a > b:
            raise InvalidRangeError(f"empty range [{a}, {b}]")
        self.draws_made += 1
        span = b - a + 1
        if span == 1:
            return a
        # largest multiple of span that fits in 64 bits
        limit = (1 << 64) - ((1 << 64) % span)
        while True:
            w = self._word()
            if w < limit:
                return a + w % span

    def bernoulli(self, q: float) -> int:
        """1 with probability ``q``; consumes exactly one unit draw."""
        if not 0.0 <= q <= 1.0 or math.isnan(q):
            raise InvalidProbabilityError(f"probability out of [0, 1]: {q}")
        return 1 if self.unit() < q else 0


class CoinStream:
    """iid Bernoulli(p) coin whose bias is hidden from factory code.

    Factories only ever call :meth:`flip` and read :attr:`flips`.  The bias is
    available to the test harness through :attr:`p`, and every such read is
    counted in ``p_reads`` so the access discipline can be audited.
    """

    __slots__ = ("_bias", "_src", "flips", "p_reads")

    def __init__(self, p: float, source: UniformSource):
        if not 0.0 <= p <= 1.0:
            raise InvalidProbabilityError(f"coin bias out of [0, 1]: {p}")
        self._bias = float(p)
        self._src = source
        self.flips = 0
        self.p_reads = 0

    @property
    def p(self) -> float:
        self.p_reads += 1
        return self._bias

    def flip(self) -> int:
        self.flips += 1
        return 1 if self._src.unit() < self._bias else 0
