"""Tests for the Fourier evaluators, decay profiles and exceptional sets."""

from __future__ import annotations

import cmath
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import I2, similitude_control_system, uni_system
from dynfourier.fourier import (
    DecayProfile,
    DegenerateFit,
    FunctionalEquation,
    IncompatibleEvaluator,
    MonteCarlo,
    ProductFormula,
    TolTooTight,
    band_edges,
    decay_profile,
    exceptional_set_count,
    fit_decay_exponent,
    fourier_eval,
    fourier_transform,
    frequency_grid,
)
from dynfourier.ifs import IFSSystem, Similitude, rotation_matrix
from dynfourier.measures import self_similar


def lebesgue_closed_form(xi: float) -> complex:
    """Fourier transform of Lebesgue measure on [0, 1] with kernel exp(2 pi i xi x)."""
    return (cmath.exp(2j * math.pi * xi) - 1) / (2j * math.pi * xi)


def cantor_oracle(xi: float, terms: int = 80) -> complex:
    """Infinite product for the middle-thirds Cantor measure, in 50-digit arithmetic."""
    with mpmath.workdps(50):
        x = mpmath.mpf(xi)
        prod = mpmath.exp(1j * mpmath.pi * x)
        for k in range(1, terms):
            prod *= mpmath.cos(2 * mpmath.pi * x / mpmath.mpf(3) ** k)
        return complex(prod)


@pytest.mark.parametrize("xi", [0.37, 1.0, 2.5, 17.2, 123.4])
def test_lebesgue_matches_closed_form(lebesgue, xi):
    val, err = fourier_transform(lebesgue, xi, FunctionalEquation(1e-10))
    assert abs(val - lebesgue_closed_form(xi)) <= err + 1e-12


@pytest.mark.parametrize("xi", [1.0, 3.0, 7.7, 81.0, 1000.3])
def test_cantor_matches_infinite_product(cantor, xi):
    for ev in (FunctionalEquation(1e-11), ProductFormula(1e-12)):
        val, err = fourier_transform(cantor, xi, ev)
        assert abs(val - cantor_oracle(xi)) <= err + 1e-12


def test_value_at_zero_is_one(half_third):
    val, err = fourier_transform(half_third, 0.0)
    assert val == 1 and err == 0


@settings(max_examples=30, deadline=None)
@given(xi=st.floats(-500, 500, allow_nan=False))
def test_conjugate_symmetry_and_bound(half_third, xi):
    a, ea = fourier_transform(half_third, xi, FunctionalEquation(1e-9))
    b, eb = fourier_transform(half_third, -xi, FunctionalEquation(1e-9))
    assert abs(a - np.conj(b)) <= ea + eb + 1e-12
    assert abs(a) <= 1 + ea


def test_translation_rule():
    """Shifting the measure by t multiplies the transform by exp(2 pi i xi t)."""
    base = IFSSystem([Similitude(0.5, np.eye(1), [0.0]), Similitude(1 / 3, np.eye(1), [0.5])])
    # G_i(x) = F_i(x - s) + s with s = 0.1 has attractor K + s
    shifted = IFSSystem([Similitude(0.5, np.eye(1), [0.05]), Similitude(1 / 3, np.eye(1), [0.5 + 0.2 / 3])])
    mu, nu = self_similar(base, [0.4, 0.6]), self_similar(shifted, [0.4, 0.6])
    for xi in (1.3, 9.0, 40.5):
        a, ea = fourier_transform(mu, xi, FunctionalEquation(1e-10))
        b, eb = fourier_transform(nu, xi, FunctionalEquation(1e-10))
        assert abs(b - a * cmath.exp(2j * math.pi * xi * 0.1)) <= ea + eb + 1e-12


def test_monte_carlo_band_covers_functional_equation(half_third):
    xi = np.array([1.3, 17.2, 250.1])
    v1, e1 = fourier_transform(half_third, xi, FunctionalEquation(1e-10))
    v2, e2 = fourier_transform(half_third, xi, MonteCarlo(200000, seed=3))
    assert np.all(np.abs(v1 - v2) <= e1 + e2)


def test_monte_carlo_is_seeded(half_third):
    a = fourier_transform(half_third, 3.3, MonteCarlo(10000, seed=1))
    b = fourier_transform(half_third, 3.3, MonteCarlo(10000, seed=1))
    assert a == b


def test_two_dimensional_rotation_system():
    S = IFSSystem([Similitude(0.5, rotation_matrix(0.1), [0.1, 0.1]), Similitude(0.4, I2, [0.55, 0.5])])
    mu = self_similar(S, [0.5, 0.5])
    xi = np.array([[3.0, -2.0], [20.0, 7.0]])
    v1, e1 = fourier_transform(mu, xi, FunctionalEquation(1e-8))
    v2, e2 = fourier_transform(mu, xi, MonteCarlo(300000, seed=0))
    assert np.all(np.abs(v1 - v2) <= e1 + e2)


def test_conformal_system_cylinder_route():
    mu = self_similar(uni_system(), [0.25] * 4)
    xi = np.array([[3.0, 4.0]])
    v1, e1 = fourier_transform(mu, xi, FunctionalEquation(1e-3))
    v2, e2 = fourier_transform(mu, xi, MonteCarlo(300000, seed=0))
    assert np.all(np.abs(v1 - v2) <= e1 + e2)


def test_tight_tolerance_over_budget_raises():
    mu = self_similar(uni_system(), [0.25] * 4)
    with pytest.raises(TolTooTight):
        fourier_transform(mu, [[50.0, 50.0]], FunctionalEquation(1e-12, budget=10000))


def test_product_formula_needs_homogeneous(half_third):
    with pytest.raises(IncompatibleEvaluator):
        fourier_transform(half_third, 1.0, ProductFormula())


def test_fourier_eval_returns_value_only(cantor):
    assert fourier_eval(cantor, 1.0) == pytest.approx(cantor_oracle(1.0), abs=1e-8)


def test_band_edges_dyadic():
    e = band_edges(1.0, 16.0)
    np.testing.assert_allclose(e, [[1, 2], [2, 4], [4, 8], [8, 16]])
    assert len(band_edges(1.0, 1e3, bands_per_decade=4)) == 12


def test_frequency_grid_in_range():
    g = frequency_grid(2, 10.0, 20.0, 1.0, directions=8)
    n = np.linalg.norm(g, axis=1)
    assert np.all((n >= 10 - 1e-9) & (n < 20))


def test_cantor_profile_does_not_decay(cantor):
    prof = decay_profile(cantor, 1e3, grid_step=0.1, T_min=1.0)
    assert isinstance(prof, DecayProfile)
    # every triadic band contains some 3^k, where |mu^| equals |mu^(1)|
    assert prof.max.min() >= abs(cantor_oracle(1.0)) - 1e-6


def test_half_third_profile_fits(half_third):
    prof = decay_profile(half_third, 1e3, grid_step=0.1, T_min=10.0)
    fit = fit_decay_exponent(prof, "poly")
    # the fitted model is log max = a - kappa log T, so decay means kappa > 0
    assert fit["exponent"] > 0 and fit["residual"] < 0.5
    with pytest.raises(ValueError):
        fit_decay_exponent(prof, "spline")


def test_degenerate_fit():
    bands = band_edges(1.0, 32.0)
    n = len(bands)
    prof = DecayProfile(bands, np.full(n, 0.5), np.full(n, 0.1), bands[:, 0], np.zeros(n), 0.1, "fe")
    with pytest.raises(DegenerateFit):
        fit_decay_exponent(prof)


def test_exceptional_set_counts_monotone_in_tau(half_third):
    # a larger tau lowers the threshold T**-tau, so more frequencies exceed it
    a = exceptional_set_count(half_third, [1e2, 1e3], 0.05, 0.1)
    b = exceptional_set_count(half_third, [1e2, 1e3], 0.2, 0.1)
    assert np.all(a.counts <= b.counts)


def test_similitude_control_exceptional_count_applicable():
    mu = self_similar(similitude_control_system(), [0.25] * 4)
    rep = exceptional_set_count(mu, [10.0, 30.0], 0.3, 0.5, directions=8)
    assert rep.counts.shape == (2,)
