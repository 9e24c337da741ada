import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from perfsim.densities import (DegenerateDensityError, EnvelopePair, EnvelopeViolation,
                               FiniteDensity, acceptance_mass, normalize, sample_exact)
from perfsim.rand import UniformSource
from perfsim.stats import binomial_mean_test, chi_squared_gof, counts_of


def test_normalize_examples():
    np.testing.assert_allclose(normalize(FiniteDensity.uniform(range(5))), [0.2] * 5)
    np.testing.assert_allclose(normalize(FiniteDensity("abc", (1, 2, 3))), [1 / 6, 2 / 6, 3 / 6])
    np.testing.assert_array_equal(normalize(FiniteDensity((0, 1), (0, 5))), [0.0, 1.0])


@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=40).filter(lambda w: sum(w) > 0))
def test_normalize_sums_to_one(weights):
    p = normalize(FiniteDensity(range(len(weights)), weights))
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.all(p >= 0)


def test_degenerate_and_invalid():
    with pytest.raises(DegenerateDensityError):
        FiniteDensity((1, 2), (0, 0))
    with pytest.raises(DegenerateDensityError):
        FiniteDensity((), ())
    with pytest.raises(ValueError):
        FiniteDensity((1, 2), (1, -1))
    with pytest.raises(ValueError):
        FiniteDensity((1, 1), (1, 1))
    with pytest.raises(ValueError):
        FiniteDensity((1, 2), (1, math.inf))
    with pytest.raises(ValueError):
        FiniteDensity((1, 2), (1,))


def test_sample_point_mass():
    src = UniformSource(0)
    d = FiniteDensity("xyz", (0, 0, 1))
    assert {sample_exact(d, src) for _ in range(10_000)} == {"z"}


def test_sample_uniform_gof():
    src = UniformSource(1)
    d = FiniteDensity.uniform(range(6))
    xs = [d.sample(src) for _ in range(10**6)]
    assert src.draws_made == 10**6
    assert chi_squared_gof(counts_of(xs, d.domain), normalize(d)).passed


def test_sample_one_to_three():
    src = UniformSource(2)
    d = FiniteDensity((0, 1), (1, 3))
    n = 10**6
    hits = sum(d.sample(src) == 0 for _ in range(n))
    assert binomial_mean_test(hits, n, 0.25).passed


def test_json_roundtrip(tmp_path):
    d = FiniteDensity(["a", "b"], [0.5, 2.0])
    path = tmp_path / "h.json"
    path.write_text(json.dumps(d.to_json()))
    assert FiniteDensity.from_json(path) == d
    assert FiniteDensity.from_json(str(path)) == d
    assert FiniteDensity.from_json(json.dumps(d.to_json())) == d
    assert FiniteDensity.from_json(d.to_json()) == d
    with pytest.raises(ValueError):
        FiniteDensity.from_json({"domain": [1]})


def test_acceptance_mass_examples():
    h = FiniteDensity((1, 2, 3), (1, 2, 3))
    assert acceptance_mass(EnvelopePair(h, h)) == 1.0
    assert acceptance_mass(EnvelopePair(h, FiniteDensity((1, 2, 3), (2, 2, 4)))) == 0.75
    dom = range(1, 11)
    h5 = FiniteDensity(dom, [1] * 5 + [0] * 5)
    assert acceptance_mass(EnvelopePair(h5, FiniteDensity.uniform(dom))) == 0.5


def test_envelope_rejects_violations():
    h = FiniteDensity((1, 2, 3), (1, 2, 3))
    with pytest.raises(EnvelopeViolation):
        EnvelopePair(h, FiniteDensity((1, 2, 3), (2, 2, 2.999999999)))
    with pytest.raises(EnvelopeViolation):
        EnvelopePair(h, FiniteDensity((1, 2, 4), (5, 5, 5)))


@given(st.lists(st.tuples(st.floats(0, 100), st.floats(0, 100)), min_size=1, max_size=20))
def test_envelope_adversarial(pairs):
    hs = [a for a, _ in pairs]
    gs = [b for _, b in pairs]
    if sum(hs) == 0 or sum(gs) == 0:
        return
    h = FiniteDensity(range(len(hs)), hs)
    g = FiniteDensity(range(len(gs)), gs)
    if all(b >= a for a, b in pairs):
        e = EnvelopePair(h, g)
        assert 0 < acceptance_mass(e) <= 1
    else:
        with pytest.raises(EnvelopeViolation):
            EnvelopePair(h, g)


def test_immutable():
    d = FiniteDensity((1, 2), (1, 1))
    with pytest.raises(AttributeError):
        d.extra = 3
    e = d.with_weight(2, 5)
    assert d(2) == 1.0 and e(2) == 5.0
