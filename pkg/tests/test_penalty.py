import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dro_sens.penalty import GrowthWarning, Penalty, PenaltyError, parse_penalty

TABLE = Penalty.table([0.0, 0.5, 1.0, 2.0], [0.0, 0.1, 0.5, 2.5])

families = st.one_of(
    st.floats(0.1, 5.0).map(Penalty.indicator),
    st.tuples(st.floats(1.2, 5.0), st.floats(0.2, 3.0)).map(lambda a: Penalty.power(*a)),
    st.just(TABLE),
)


def test_indicator_conjugate_and_u():
    L = Penalty.indicator(1.0)
    assert L.conjugate(3.7) == pytest.approx(3.7)
    assert L.optimal_u(2.0) == 1.0
    assert L.optimal_u(0.0) == 0.0
    assert L(1.0) == 0.0 and L(1.01) == np.inf


def test_power_conjugate_and_u():
    L = Penalty.power(3.0, 1.0)
    v = 2.0
    mc = 1.5
    assert L.conjugate(v) == pytest.approx(v**mc / mc)
    assert L.optimal_u(4.0) == pytest.approx(2.0)


@given(families)
def test_conjugate_at_zero(L):
    assert L.conjugate(0.0) == 0.0
    assert L.optimal_u(0.0) == 0.0


@settings(max_examples=60)
@given(families, st.floats(0.0, 1.9))
def test_fenchel_young(L, v):
    us = np.linspace(0, 5, 501)
    Lu = L(us)
    finite = np.isfinite(Lu)
    assert np.all(us[finite] * v <= Lu[finite] + L.conjugate(v) + 1e-9)
    u = L.optimal_u(v)
    assert u * v - float(L(u)) == pytest.approx(float(L.conjugate(v)), abs=1e-9)


@given(families)
def test_conjugate_monotone_convex(L):
    v = np.linspace(0, 1.9, 200)
    c = L.conjugate(v)
    assert np.all(np.diff(c) >= -1e-12)
    assert np.all(c[:-2] + c[2:] - 2 * c[1:-1] >= -1e-9)


@given(families)
def test_penalty_nondecreasing_from_zero(L):
    u = np.linspace(0, 3, 300)
    vals = L(u)
    assert vals[0] == 0.0
    assert np.all(vals[1:] >= vals[:-1])


def test_table_conjugate_matches_grid_sup():
    v = 1.7
    u = np.linspace(0, 50, 500_001)
    brute = np.max(u * v - TABLE(u))
    assert TABLE.conjugate(v) == pytest.approx(brute, abs=1e-4)
    assert TABLE.conjugate(2.5) == np.inf
    with pytest.raises(PenaltyError):
        TABLE.optimal_u(3.0)


def test_growth_validation():
    assert Penalty.indicator(1.0).validate_growth(2.0) == ("ok", "")
    assert Penalty.power(3.0).validate_growth(2.0)[0] == "ok"
    with pytest.warns(GrowthWarning):
        assert Penalty.power(2.0).validate_growth(2.0)[0] == "warn"
    with pytest.warns(GrowthWarning):
        assert TABLE.validate_growth(2.0)[0] == "warn"


def test_scaled_indicator_is_radius_constraint():
    L = Penalty.indicator(0.8)
    delta = 0.25
    assert L.scaled(delta, 0.2) == 0.0
    assert L.scaled(delta, 0.2001) == np.inf
    assert L.scaled(0.0, 0.0) == 0.0 and L.scaled(0.0, 1e-9) == np.inf
    P = Penalty.power(3.0, 2.0)
    assert P.scaled(0.5, 1.0) == pytest.approx(0.5 * P(2.0))


def test_parse_penalty(tmp_path):
    assert parse_penalty("indicator:2.5") == Penalty.indicator(2.5)
    assert parse_penalty("power:m=4,kappa=2") == Penalty.power(4, 2)
    f = tmp_path / "L.csv"
    f.write_text("u,L\n0,0\n1,0.5\n2,2\n")
    assert parse_penalty(f"table:{f}") == Penalty.table([0, 1, 2], [0, 0.5, 2])
    with pytest.raises(PenaltyError):
        parse_penalty("huber:1")


def test_invalid_penalties():
    with pytest.raises(PenaltyError):
        Penalty.indicator(0.0)
    with pytest.raises(PenaltyError):
        Penalty.power(1.0)
    with pytest.raises(PenaltyError):
        Penalty.table([0, 1, 2], [0, 2, 3])  # concave
    with pytest.raises(PenaltyError):
        Penalty.indicator().conjugate(-1.0)


def test_no_warning_for_valid_families():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        Penalty.power(3.0).validate_growth(2.0)
