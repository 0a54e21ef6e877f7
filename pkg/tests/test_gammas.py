import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from addisgraph.errors import InvalidSpec, NonMonotoneGamma
from addisgraph.gammas import GammaSpec


FAMILIES = ["basel", "power:1.6", "logq", "geometric:0.6"]


@pytest.mark.parametrize("name", FAMILIES)
def test_nonincreasing_and_positive(name):
    spec = GammaSpec.parse(name)
    vals = spec.values(500)
    assert np.all(vals > 0)
    assert np.all(np.diff(vals) <= 1e-15)
    spec.require_nonincreasing()


@pytest.mark.parametrize("name", FAMILIES)
def test_mass_at_most_one(name):
    spec = GammaSpec.parse(name)
    assert spec.prefix_sum(2000) <= 1.0 + 1e-12


@pytest.mark.parametrize("name", ["basel", "power:1.6", "geometric:0.6"])
def test_mass_converges_to_one(name):
    # these families are exactly normalized; tail_sum(0) carries the rest
    spec = GammaSpec.parse(name)
    assert spec.prefix_sum(200_000) + spec.tail_sum(200_000) == pytest.approx(1.0, abs=1e-9)
    assert spec.tail_sum(0) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("name", FAMILIES)
@pytest.mark.parametrize("m", [0, 1, 7, 100])
def test_tail_sum_consistent_with_values(name, m):
    spec = GammaSpec.parse(name)
    big = 300_000
    direct = float(np.sum(spec.values(big)[m:]))
    assert spec.tail_sum(m) == pytest.approx(direct + spec.tail_sum(big), rel=1e-6)


def test_basel_values():
    spec = GammaSpec.parse("basel")
    # 6/pi^2 * 1/i^2
    assert spec.value(1) == pytest.approx(6 / np.pi**2, abs=1e-12)
    assert spec.value(2) == pytest.approx(6 / np.pi**2 / 4, abs=1e-12)


def test_geometric_tail_is_exact_power():
    spec = GammaSpec(kind="geometric", q=0.6)
    assert spec.tail_sum(12) == pytest.approx(0.6**12, abs=1e-15)
    assert spec.value(3) == pytest.approx(0.6**2 * 0.4, abs=1e-15)


def test_parse_rejects_unknown():
    with pytest.raises(InvalidSpec):
        GammaSpec.parse("nope")
    with pytest.raises(InvalidSpec):
        GammaSpec.parse("power:0.5")  # diverges


def test_custom_table_must_be_nonincreasing_when_required():
    spec = GammaSpec(kind="custom", table=(0.1, 0.5, 0.2))
    assert not spec.is_nonincreasing()
    with pytest.raises(NonMonotoneGamma):
        spec.require_nonincreasing()


@given(m=st.integers(min_value=0, max_value=50), q=st.floats(0.2, 0.9))
@settings(max_examples=50, deadline=None)
def test_geometric_tail_identity_property(m, q):
    spec = GammaSpec(kind="geometric", q=q)
    assert spec.tail_sum(m) == pytest.approx(q**m, rel=1e-12)


@given(st.sampled_from(FAMILIES), st.integers(min_value=1, max_value=200))
@settings(max_examples=60, deadline=None)
def test_prefix_plus_tail_constant(name, m):
    spec = GammaSpec.parse(name)
    total = spec.prefix_sum(m) + spec.tail_sum(m)
    assert total == pytest.approx(spec.tail_sum(0), rel=1e-9)
