"""Tests for stationary and Gibbs measures, sampling and ball masses."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize, stats

from conftest import half_third_system, lebesgue_system, similitude_control_system
from dynfourier.ifs import IFSSystem, InadmissibleWord
from dynfourier.measures import (
    EmptyAdmissibleSet,
    GibbsPotential,
    affine_nonconcentration_profile,
    ball_mass_estimate,
    cylinder_mass,
    gibbs_measure,
    normalize_potential,
    perron_data,
    pressure_estimate,
    probability_vector,
    sample,
    self_similar,
    slab_ball_mass,
)

PHI = (1 + math.sqrt(5)) / 2


def golden_system():
    return IFSSystem(half_third_system().maps, subshift=[[1, 1], [1, 0]])


@pytest.mark.parametrize("p", [[0.5, 0.5], [0.1, 0.9], [0.25, 0.25, 0.5]])
def test_probability_vector_accepts(p):
    v = probability_vector(p)
    assert v.sum() == pytest.approx(1.0) and not v.flags.writeable


@pytest.mark.parametrize("p", [[0.5, -0.1], [0.0, 0.0], [np.nan, 1.0], [1, 1, 2]])
def test_probability_vector_rejects(p):
    with pytest.raises(ValueError):
        probability_vector(p)


@settings(max_examples=25, deadline=None)
@given(p0=st.floats(0.05, 0.95), n=st.integers(1, 6))
def test_bernoulli_cylinder_masses_conserve(p0, n):
    mu = self_similar(half_third_system(), [p0, 1 - p0])
    W = mu.system.words(n)
    assert mu.masses(W).sum() == pytest.approx(1.0, abs=1e-12)
    w = W[len(W) // 2]
    assert mu.mass(w) == pytest.approx(p0 ** np.sum(w == 0) * (1 - p0) ** np.sum(w == 1))


def test_cylinder_mass_bracket_exact_for_bernoulli(half_third):
    b = cylinder_mass(half_third, [0, 1, 1])
    assert b.lo == b.hi == pytest.approx(0.125)


def test_golden_mean_parry_measure():
    """Normalised uniform potential on the golden mean shift is the Parry measure."""
    S = golden_system()
    pot = normalize_potential(S, S.subshift, GibbsPotential("G0", values=np.log([0.5, 0.5])))
    mu = gibbs_measure(S, pot)
    assert mu.mass([0]) == pytest.approx(PHI**2 / (PHI**2 + 1), rel=1e-12)
    for n in (2, 5):
        assert mu.masses(S.words(n)).sum() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(InadmissibleWord):
        mu.mass([1, 1])


def test_perron_data_of_golden_matrix():
    lam = perron_data(np.array([[1.0, 1.0], [1.0, 0.0]]))[0]
    assert lam == pytest.approx(PHI)


def test_pressure_vanishes_at_similarity_dimension():
    """Oracle: the dimension solves 2^-s + 3^-s = 1."""
    s = optimize.brentq(lambda t: 2.0**-t + 3.0**-t - 1, 0.1, 1.0)
    P = pressure_estimate(half_third_system(), None, GibbsPotential("G1", s=s), 8)
    assert abs(P) < 1e-9
    assert pressure_estimate(half_third_system(), None, GibbsPotential("G1", s=0.5), 8) > 0


def test_geometric_potential_on_subshift_normalises():
    S = golden_system()
    pot = normalize_potential(S, S.subshift, GibbsPotential("G1", s=0.5), depth=2)
    mu = gibbs_measure(S, pot, 2)
    assert mu.masses(S.words(4)).sum() == pytest.approx(1.0, abs=1e-9)


def test_unknown_grade_rejected():
    with pytest.raises(ValueError):
        GibbsPotential("G7")


def test_sampling_is_deterministic(half_third):
    np.testing.assert_array_equal(sample(half_third, 3, 50), sample(half_third, 3, 50))
    assert not np.array_equal(sample(half_third, 3, 50), sample(half_third, 4, 50))


def test_lebesgue_samples_are_uniform(lebesgue):
    """Oracle: Kolmogorov-Smirnov against the uniform law."""
    x = sample(lebesgue, 0, 20000)[:, 0]
    assert stats.kstest(x, "uniform").pvalue > 1e-3


def test_samples_lie_in_attractor_cylinders(half_third):
    x = sample(half_third, 1, 2000)[:, 0]
    inside = (x <= 0.5 + 1e-12) | (x >= 2 / 3 - 1e-12)
    assert inside.all()


@pytest.mark.parametrize("c,r", [(0.3, 0.1), (0.5, 0.25), (0.05, 0.01)])
def test_ball_mass_bracket_for_lebesgue(lebesgue, c, r):
    """Oracle: Lebesgue measure of [c - r, c + r]."""
    b = ball_mass_estimate(lebesgue, [c], r, rel_tol=0.05)
    exact = min(c + r, 1) - max(c - r, 0)
    assert b.lo - 1e-12 <= exact <= b.hi + 1e-12


def test_ball_mass_bracket_contains_monte_carlo(half_third):
    x = sample(half_third, 2, 200000)[:, 0]
    b = ball_mass_estimate(half_third, [0.7], 0.05, rel_tol=0.05)
    freq = np.mean(np.abs(x - 0.7) <= 0.05)
    band = 4 * math.sqrt(freq * (1 - freq) / len(x))
    assert b.lo - band <= freq <= b.hi + band


def test_slab_mass_below_ball_mass():
    mu = self_similar(similitude_control_system(), [0.25] * 4)
    ball = ball_mass_estimate(mu, [0.3, 0.3], 0.3)
    slab = slab_ball_mass(mu, [0.3, 0.3], 0.3, [0.3, 0.3], [1.0, 0.0], 0.05)
    assert slab.lo <= ball.hi + 1e-12


def test_nonconcentration_profile_shape():
    mu = self_similar(similitude_control_system(), [0.25] * 4)
    prof = affine_nonconcentration_profile(mu, [0.1, 0.05, 0.02], trials=4, seed=0)
    assert prof.delta.shape == (3,) and np.all((prof.delta >= 0) & (prof.delta <= 1))
    assert prof.alpha > 0 and not prof.flagged


def test_empty_admissible_set_is_typed():
    assert issubclass(EmptyAdmissibleSet, ValueError)
