"""Tests for restricted products, disintegration and random fibre operators."""

from __future__ import annotations

import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynfourier.nonconformal import (
    Component,
    HypothesisViolation,
    IntervalMap,
    PrefixTooShort,
    RestrictedProductIFS,
    disintegration_check,
    fiber_concentration_profile,
    gauss_example,
    product_fourier,
    project_alphabet,
    random_measure,
    random_norm_decay,
    restricted_product_from_dict,
    sample_beta,
)


@pytest.fixture(scope="module")
def gauss():
    return gauss_example()


@pytest.fixture(scope="module")
def gauss_data(gauss):
    return project_alphabet(gauss, 0)


def cantor_component():
    return Component([IntervalMap.affine(1 / 3, 0.0), IntervalMap.affine(1 / 3, 2 / 3)])


def cantor_hat(xi: float) -> complex:
    """Infinite product for the middle-thirds Cantor measure."""
    with mpmath.workdps(30):
        x = mpmath.mpf(xi)
        v = mpmath.exp(1j * mpmath.pi * x)
        for k in range(1, 60):
            v *= mpmath.cos(2 * mpmath.pi * x / mpmath.mpf(3) ** k)
        return complex(v)


def test_gauss_projection_values(gauss_data):
    """Each first symbol pairs with the two other second symbols."""
    assert gauss_data.B == [(1,), (2,), (0,)]
    np.testing.assert_allclose(gauss_data.q, [1 / 3] * 3)
    assert gauss_data.gamma == pytest.approx(0.5)
    for fam, w in zip(gauss_data.fibres, gauss_data.weights):
        assert len(fam) == 2 and w.sum() == pytest.approx(1.0)


def test_gauss_hypotheses_hold(gauss):
    rep = gauss.check_hypotheses()
    assert all(g > 0 for g in rep["gaps"])
    assert all(m > 1e-3 for m in rep["uni_margins"])


def test_touching_images_violate_separation():
    """On [0, 1] the branches 1/(x+1) and 1/(x+2) share the point 1/2."""
    comp = Component([IntervalMap.gauss(i) for i in (1, 2, 3)], (0.0, 1.0))
    ifs = RestrictedProductIFS((comp, comp), gauss_example().tuples)
    with pytest.raises(HypothesisViolation) as exc:
        ifs.check_hypotheses()
    assert exc.value.condition == 1


def test_missing_sibling_violates_condition_two():
    comp = Component([IntervalMap.gauss(i) for i in (1, 2, 3)], (0.25, 1.0))
    ifs = RestrictedProductIFS((comp, comp), [(0, 1), (1, 2), (2, 0)])
    with pytest.raises(HypothesisViolation) as exc:
        ifs.check_hypotheses()
    assert exc.value.condition == 2


def test_affine_components_violate_condition_three():
    comp = cantor_component()
    ifs = RestrictedProductIFS((comp, comp), [(0, 0), (0, 1), (1, 0), (1, 1)])
    with pytest.raises(HypothesisViolation) as exc:
        ifs.check_hypotheses()
    assert exc.value.condition == 3
    with pytest.raises(HypothesisViolation):
        random_norm_decay(project_alphabet(ifs, 0), 4, [10.0], 2, 0)


def test_bad_tuples_rejected():
    comp = cantor_component()
    with pytest.raises(ValueError):
        RestrictedProductIFS((comp, comp), [(0, 0), (0, 0)])
    with pytest.raises(ValueError):
        RestrictedProductIFS((comp, comp), [(0, 2)])


def test_json_round_trip(gauss):
    back = restricted_product_from_dict(json.loads(json.dumps(gauss.to_dict())))
    x = np.array([[0.3, 0.6], [0.9, 0.5]])
    idx = np.array([1, 4])
    np.testing.assert_allclose(back.apply(idx, x), gauss.apply(idx, x))
    with pytest.raises(ValueError):
        restricted_product_from_dict({"kind": "product"})


def test_sample_beta_frequencies(gauss_data):
    beta = sample_beta(gauss_data, 3, 30000)
    freq = np.bincount(beta, minlength=3) / len(beta)
    assert np.all(np.abs(freq - gauss_data.q) <= 4 * np.sqrt(gauss_data.q * (1 - gauss_data.q) / len(beta)))
    np.testing.assert_array_equal(beta, sample_beta(gauss_data, 3, 30000))
    with pytest.raises(ValueError):
        sample_beta(gauss_data, 3, 0)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6), level=st.integers(1, 7))
def test_fibre_masses_conserve(gauss_data, seed, level):
    mu = random_measure(gauss_data, sample_beta(gauss_data, seed, 10), 8)
    assert mu.cylinder_masses(level).sum() == pytest.approx(1.0, abs=1e-12)


def test_one_step_self_similarity(gauss_data):
    """``mu_beta = sum_a w_a (f_a)_* mu_{sigma beta}`` on the Fourier side."""
    beta = sample_beta(gauss_data, 11, 20)
    mu = random_measure(gauss_data, beta, 12)
    tail = mu.shifted(1)
    xi = np.array([3.0, 12.5, 40.0])
    lhs, e0 = mu.fourier(xi, 12)
    comp = gauss_data.fibre_component
    rhs = np.zeros(len(xi), dtype=complex)
    err = np.zeros(len(xi))
    for a, w in zip(gauss_data.fibres[beta[0]], gauss_data.weights[beta[0]]):
        lip = float(np.abs(comp.maps[a].df(np.array(comp.domain))).max())
        v, e = tail.pushforward_fourier(comp.maps[a], lip, xi, 11)
        rhs += w * v
        err += w * e
    assert np.all(np.abs(lhs - rhs) <= e0 + err + 1e-12)


def test_prefix_too_short(gauss_data):
    beta = sample_beta(gauss_data, 0, 5)
    with pytest.raises(PrefixTooShort):
        random_measure(gauss_data, beta, 6)
    mu = random_measure(gauss_data, beta, 5)
    with pytest.raises(PrefixTooShort):
        mu.fourier(1.0, 6)
    with pytest.raises(PrefixTooShort):
        mu.cylinder_masses(6)


def test_product_of_affine_components_factorises():
    """Oracle: a full product of Cantor components has transform mu^(x) mu^(y)."""
    comp = cantor_component()
    ifs = RestrictedProductIFS((comp, comp), [(0, 0), (0, 1), (1, 0), (1, 1)])
    xi = np.array([[1.0, 2.0], [2.5, -3.0], [0.7, 0.5]])
    vals, err = product_fourier(ifs, xi, tol=1e-3)
    exact = np.array([cantor_hat(a) * cantor_hat(b) for a, b in xi])
    assert np.all(np.abs(vals - exact) <= err + 1e-12)


def test_base_point_converges(gauss_data):
    beta = sample_beta(gauss_data, 2, 40, 5)
    a = gauss_data.base_point(beta[:, :20])
    b = gauss_data.base_point(beta)
    assert np.all(np.abs(a - b) <= gauss_data.base_error(20) + 1e-15)


def test_disintegration_small_sample(gauss):
    xi = np.array([[4.0, 1.0], [-2.0, 7.0], [10.0, -10.0]])
    rep = disintegration_check(gauss, xi, n_samples=2000, seed=1)
    assert rep.agree.all() and rep.inequality.all()
    assert [r["axis"] for r in rep.rows()] == [0, 1, 0]


def test_untwisted_random_operator_does_not_decay(gauss_data):
    rep = random_norm_decay(gauss_data, 12, [0.0], 4, seed=0, nodes=401)
    np.testing.assert_allclose(rep.sup[0], 1.0, atol=1e-12)
    assert np.all(rep.exceptional[0] == 1.0)


def test_twisted_random_operator_decays(gauss_data):
    rep = random_norm_decay(gauss_data, 30, [20.0], 6, seed=0, nodes=1001)
    assert np.all(rep.rho[0, :, -1] < 0.95)
    assert rep.exceptional[0, -1] == 0.0


def test_fibre_concentration_is_polynomial(gauss_data):
    prof = fiber_concentration_profile(gauss_data, [1e-1, 3e-2, 1e-2, 3e-3], n_betas=8, depth=9)
    assert np.all(np.diff(prof["mass"]) <= 0)
    assert 0 < prof["alpha"] <= 1 + 1e-9
    assert math.isfinite(prof["C"])
