"""Tests for twisted transfer operators, UNI margins and band masses."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import half_third_system, lebesgue_system, similitude_control_system, uni_system
from dynfourier.ifs import IFSSystem, word_derivative
from dynfourier.measures import GibbsPotential, gibbs_measure, normalize_potential
from dynfourier.transfer import (
    BandOutOfRange,
    FunctionGrid,
    GridMismatch,
    TwistedOperator,
    WordBudgetExceeded,
    apply_transfer,
    band_mass_histogram,
    frequency_band_mass,
    log_lambda_gradients,
    norm_decay,
    transfer_power,
    transfer_word_sum,
    uni_example_margin,
    uni_margin,
    valid_c,
)

P4 = [0.25] * 4


def uni_op(b=0.0):
    return TwistedOperator(uni_system(), P4, b)


@pytest.mark.parametrize("b", [0.0, 3.0, 17.5])
def test_similitude_power_is_geometric(b):
    """Oracle: with constant derivatives ``L^n 1 = (sum p_a r_a^(ib))^n``."""
    S = half_third_system()
    op = TwistedOperator(S, [0.3, 0.7], b)
    z = 0.3 * 0.5 ** (1j * b) + 0.7 * (1 / 3) ** (1j * b)
    hs = transfer_power(op, FunctionGrid.constant(S, 3, 3, 1.0, b), 6)
    for n, h in enumerate(hs):
        np.testing.assert_allclose(h.values, z**n, atol=1e-12)
    np.testing.assert_allclose(transfer_word_sum(op, [[0.2]], 6), z**6, atol=1e-12)


def test_normalised_operator_fixes_constants():
    op = uni_op(0.0)
    h = transfer_power(op, FunctionGrid.constant(op.system, 2, 3), 5)[-1]
    np.testing.assert_allclose(h.values, 1.0, atol=1e-12)
    assert op.residual() < 1e-12


def test_matrix_route_matches_word_sum():
    """The collocation iterate agrees with the exact word sum within its error field."""
    op = uni_op(6.0)
    h0 = FunctionGrid.constant(op.system, 3, 3, 1.0, 6.0)
    h = transfer_power(op, h0, 4)[-1]
    nodes = h.nodes().reshape(-1, 2)
    first = np.repeat(h.words[:, 0], h.values.shape[1])
    exact = transfer_word_sum(op, nodes, 4, first=first)
    assert np.max(np.abs(exact - h.values.ravel())) <= h.error + 1e-12


def test_word_sum_vectorised_over_b():
    op = uni_op()
    x = [[0.4, 0.5]]
    many = transfer_word_sum(op, x, 3, b=np.array([0.0, 5.0]))
    assert many.shape == (2, 1)
    np.testing.assert_allclose(many[1], transfer_word_sum(op.with_b(5.0), x, 3))
    assert many[0, 0] == pytest.approx(1.0)


def test_gibbs_weights_on_subshift_fix_constants():
    S = IFSSystem(half_third_system().maps, subshift=[[1, 1], [1, 0]])
    pot = normalize_potential(S, S.subshift, GibbsPotential("G0", values=np.log([0.5, 0.5])))
    op = TwistedOperator(S, pot)
    h = transfer_power(op, FunctionGrid.constant(S, 3, 3), 4)[-1]
    np.testing.assert_allclose(h.values, 1.0, atol=1e-10)
    assert op.residual() < 1e-10
    with pytest.raises(TypeError):
        TwistedOperator(S, gibbs_measure(S, pot))


def test_grid_mismatch():
    op = uni_op()
    with pytest.raises(GridMismatch):
        apply_transfer(op, FunctionGrid.constant(similitude_control_system(), 2))


def test_word_budget():
    with pytest.raises(WordBudgetExceeded):
        transfer_word_sum(uni_op(), [[0.5, 0.5]], 12, budget=1000)


def test_norm_decay_no_twist_has_rate_one():
    tab = norm_decay(uni_op(), 8, [0.0, 20.0], depth=2)
    assert tab.rho[0] == pytest.approx(1.0, abs=1e-9)
    assert tab.rho[1] < 0.9
    rows = list(tab.rows())
    assert len(rows) == 2 * 9 and set(rows[0]) == {"b", "n", "sup", "b_norm", "rho"}


def test_resonant_twist_does_not_decay():
    """Equal ratios 1/2 and b = 2 pi / log 2 make every phase equal."""
    op = TwistedOperator(lebesgue_system(), [0.5, 0.5])
    b = 2 * math.pi / math.log(2)
    tab = norm_decay(op, 10, [b], depth=2)
    assert tab.rho[0] == pytest.approx(1.0, abs=1e-9)


# ---------------------------------------------------------------------------
# UNI
# ---------------------------------------------------------------------------


@settings(max_examples=20, deadline=None)
@given(word=st.lists(st.integers(0, 3), min_size=1, max_size=4), x=st.floats(0.1, 0.9),
       y=st.floats(0.1, 0.9))
def test_log_lambda_gradients_match_finite_differences(word, x, y):
    S = uni_system()
    g = log_lambda_gradients(S, np.array([word]), [x, y])[0]
    h = 1e-6
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fp = math.log(abs(word_derivative(S, word, np.array([x, y]) + e)[0]))
        fm = math.log(abs(word_derivative(S, word, np.array([x, y]) - e)[0]))
        assert (fp - fm) / (2 * h) == pytest.approx(g[i], abs=1e-6)


def test_similitude_system_has_zero_margin():
    rep = uni_margin(similitude_control_system(), 3)
    assert rep.eps0 == 0.0


def test_conformal_margin_positive_and_dominates_closed_form():
    S = uni_system()
    x = [0.5, 0.5]
    rep = uni_margin(S, 1, probe=x)
    assert rep.eps0 > 0
    assert rep.eps0 >= uni_example_margin(S, x) - 1e-12
    assert uni_example_margin(similitude_control_system(), x) == 0.0


def test_margin_stable_in_depth():
    a = uni_margin(uni_system(), 4, probe=[0.5, 0.5]).eps0
    b = uni_margin(uni_system(), 5, probe=[0.5, 0.5]).eps0
    assert abs(a - b) / a < 0.02


def test_ball_variant_not_larger_than_point():
    S = uni_system()
    pt = uni_margin(S, 2, probe=[0.5, 0.5])
    ball = uni_margin(S, 2, probe=[0.5, 0.5], variant="ball", radius=0.05)
    assert ball.eps0 <= pt.eps0 + 1e-12
    with pytest.raises(ValueError):
        uni_margin(S, 2, variant="ball")


def test_explicit_pairs_margin():
    S = uni_system()
    rep = uni_margin(S, 1, probe=[0.5, 0.5], pairs=[((0,), (3,))], directions=8)
    g = log_lambda_gradients(S, np.array([[0], [3]]), [0.5, 0.5])
    np.testing.assert_allclose(rep.margins, np.abs(rep.directions @ (g[0] - g[1])))


# ---------------------------------------------------------------------------
# band masses
# ---------------------------------------------------------------------------


def test_band_histogram_conserves_mass():
    hist = band_mass_histogram(uni_op(), log_norm=30 * math.log(10), c=valid_c(uni_system()))
    assert hist["mass"].sum() == pytest.approx(1.0, abs=1e-12)
    assert hist["total"] == pytest.approx(1.0, abs=1e-12)


def test_band_mass_routes_agree():
    L = 30 * math.log(10)
    hist = band_mass_histogram(uni_op(), log_norm=L, c=valid_c(uni_system()))
    lo, hi = hist["window"]
    inside = hist["bands"][(hist["bands"] >= lo) & (hist["bands"] <= hi)]
    band = int(inside[np.argmax(hist["mass"][(hist["bands"] >= lo) & (hist["bands"] <= hi)])])
    bm = frequency_band_mass(uni_op(), band=band, log_norm=L, c=valid_c(uni_system()))
    assert bm.direct == pytest.approx(hist["mass"][hist["bands"] == band][0], abs=1e-12)
    assert bm.consistent


def test_band_out_of_range():
    with pytest.raises(BandOutOfRange):
        frequency_band_mass(uni_op(), xi=[1e6, 0.0], band=1)


def test_valid_c_for_similitudes():
    """Oracle: 1 / (6 log(1/r_min)) when derivatives are constant."""
    assert valid_c(similitude_control_system()) == pytest.approx(1 / (6 * math.log(5)))
