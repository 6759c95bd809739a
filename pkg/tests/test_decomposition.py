"""Tests for stopping sets, good words, Diophantine certificates and audits."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import I1, half_third_system, lebesgue_system, uni_system
from dynfourier.decomposition import (
    DecayGapViolated,
    ThresholdOutOfRange,
    WordBudgetExceeded,
    WrongLength,
    average_bound_report,
    bad_mass_estimate,
    certified_exponent,
    classify_good,
    decay_gap,
    diophantine_lower_bound,
    good_count_vectors,
    good_word_params,
    multinomial_max,
    multinomial_scaling,
    separation_check,
    stopping_words,
)
from dynfourier.ifs import IFSSystem, Similitude


def three_map_system():
    return IFSSystem([Similitude(0.5, I1, [0.0]), Similitude(0.3, I1, [0.55]),
                      Similitude(0.1, I1, [0.9])])


def brute_stopping_set(r, t, max_len=40):
    """Oracle: scan every word and keep those with r_w < t <= r_parent."""
    out = set()
    for n in range(1, max_len + 1):
        found = False
        for w in itertools.product(range(len(r)), repeat=n):
            rw = math.prod(r[a] for a in w)
            rp = math.prod(r[a] for a in w[:-1])
            if rw < t <= rp:
                out.add(w)
            if rp >= t:
                found = True
        if not found:
            break
    return out


@pytest.mark.parametrize("t", [0.3, 0.05, 0.011])
def test_stopping_words_match_brute_force(t):
    S = half_third_system()
    cut = stopping_words(S, t)
    assert {tuple(w) for w in cut.words} == brute_stopping_set([0.5, 1 / 3], t)
    assert cut.is_prefix_free()


@settings(max_examples=20, deadline=None)
@given(t=st.floats(0.005, 0.9), p0=st.floats(0.1, 0.9))
def test_stopping_set_weights_sum_to_one(t, p0):
    """A stopping set is a maximal antichain, so its weights sum to one."""
    cut = stopping_words(half_third_system(), t, [p0, 1 - p0])
    assert cut.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(cut.ratios < t)


def test_stopping_set_three_maps():
    cut = stopping_words(three_map_system(), 0.02)
    assert {tuple(w) for w in cut.words} == brute_stopping_set([0.5, 0.3, 0.1], 0.02)


@pytest.mark.parametrize("t", [0.0, 1.0, -0.5])
def test_stopping_threshold_out_of_range(t):
    with pytest.raises(ThresholdOutOfRange):
        stopping_words(half_third_system(), t)


def test_stopping_budget():
    with pytest.raises(WordBudgetExceeded):
        stopping_words(half_third_system(), 1e-6, budget=100)


def test_stopping_needs_similitudes():
    with pytest.raises(TypeError):
        stopping_words(uni_system(), 0.1)


def test_good_word_params_closed_form():
    """Oracle: the defining formulas evaluated by hand."""
    S = half_third_system()
    par = good_word_params(S, [0.5, 0.5], 1e13, l=2, delta=0.1)
    L = math.log(1e13) - 6 * math.log(math.log(1e13))
    H = 0.5 * math.log(2) + 0.5 * math.log(3)
    assert par.n == math.floor((1 - L**-0.4) * L / H)
    np.testing.assert_allclose(par.E, L**0.6 / (2 * np.array([math.log(2), math.log(3)])))


def test_classify_good_agrees_with_count_vectors():
    par = good_word_params(half_third_system(), [0.5, 0.5], 1e13)
    good = {tuple(c) for c in good_count_vectors(par)}
    for w in itertools.product(range(2), repeat=par.n):
        c = (w.count(0), w.count(1))
        assert classify_good(w, par) == (c in good)
    with pytest.raises(WrongLength):
        classify_good([0] * (par.n + 1), par)


def test_decay_gap_guard():
    assert decay_gap(2, 0.1, 0.1) < 0
    with pytest.raises(DecayGapViolated):
        good_word_params(IFSSystem([Similitude(0.1, I1, [0.1 * i]) for i in range(6)]),
                         [1 / 6] * 6, 1e13, delta=0.45, eps=0.5)


def test_threshold_out_of_range_for_small_frequency():
    with pytest.raises(ThresholdOutOfRange):
        good_word_params(half_third_system(), [0.5, 0.5], 1e4)


def test_bad_mass_matches_binomial_tail():
    """Oracle: the exact binomial mass outside the window."""
    S = half_third_system()
    par = good_word_params(S, [0.5, 0.5], 1e13)
    rep = bad_mass_estimate(S, [0.5, 0.5], [30.0, 60.0, 120.0], par, 20000, 0)
    for log_norm, m, se in zip(rep["log_norm"], rep["mass"], rep["stderr"]):
        q = par.at(float(log_norm))
        ks = np.arange(q.n + 1)
        c = np.stack([ks, q.n - ks], axis=1)
        lo, hi = q.window()
        outside = ~np.all((c >= lo) & (c <= hi), axis=1)
        exact = stats.binom.pmf(ks, q.n, 0.5)[outside].sum()
        assert abs(m - exact) <= 4 * max(se, 1e-3)


# ---------------------------------------------------------------------------
# Diophantine certificates
# ---------------------------------------------------------------------------


def brute_certificate(x: float, l: float, Q: int) -> float:
    q = np.arange(1, Q + 1, dtype=float)
    d = np.abs(q * x - np.rint(q * x))
    return float(np.min(q ** (l - 1) * d))


@pytest.mark.parametrize("x,Q", [(math.sqrt(2), 5000), (math.pi, 5000), (math.log(2) / math.log(3), 20000)])
def test_diophantine_matches_scan(x, Q):
    cert = diophantine_lower_bound(x, 2, Q)
    assert cert.value == pytest.approx(brute_certificate(x, 2, Q), rel=1e-6)


def test_golden_ratio_certificate():
    """The golden ratio has bounded partial quotients; q = 1 is extremal."""
    cert = diophantine_lower_bound((1 + mpmath.sqrt(5)) / 2, 2, 1000)
    assert cert.value == pytest.approx((3 - math.sqrt(5)) / 2, rel=1e-12)
    assert cert.argmin == (1,)


def test_log_ratio_certificate_large_range():
    cert = diophantine_lower_bound(mpmath.log(2) / mpmath.log(3), 2, 10**6)
    assert cert.argmin == (301994,)
    assert cert.value == pytest.approx(0.01773, abs=1e-5)


def test_rational_has_zero_certificate():
    assert diophantine_lower_bound(Fraction(2, 7), 2, 100).value == 0.0
    l, _ = certified_exponent(Fraction(1, 3), 100)
    assert l is None


def test_pair_certificate_scan():
    t = (math.sqrt(2), math.sqrt(3))
    cert = diophantine_lower_bound(t, 3, 30)
    p, q = cert.argmin
    v = p * t[0] + q * t[1]
    assert cert.value == pytest.approx(max(abs(p), abs(q)) ** 3 * abs(v - round(v)))


def test_diophantine_small_range_rejected():
    with pytest.raises(ValueError):
        diophantine_lower_bound(0.3, 2, 1)


# ---------------------------------------------------------------------------
# separation and multinomials
# ---------------------------------------------------------------------------


def test_separation_irrational_ratio_passes():
    audit = separation_check(half_third_system(), [0.5, 0.5], 1e13)
    assert audit.ok and audit.n_members > 0


def test_separation_homogeneous_fails():
    """Equal ratios send different count pairs to the same frequency."""
    audit = separation_check(lebesgue_system(), [0.5, 0.5], 1e13)
    assert not audit.ok
    assert all(row["pairs"] > 1 for row in audit.violations)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 40), p0=st.floats(0.05, 0.9), p1=st.floats(0.05, 0.9))
def test_multinomial_pruned_equals_brute(n, p0, p1):
    p = np.array([p0, p1, 1.0])
    p = p / p.sum()
    a, b = multinomial_max(n, p, "pruned"), multinomial_max(n, p, "brute")
    assert a["max"] == pytest.approx(b["max"], rel=1e-12)


def test_binomial_max_is_central():
    """Oracle: scipy's binomial pmf at the mode."""
    m = multinomial_max(100, [0.5, 0.5])
    assert m["max"] == pytest.approx(stats.binom.pmf(50, 100, 0.5), rel=1e-12)
    assert m["argmax"] == (50, 50)


def test_multinomial_scaling_bounded():
    res = multinomial_scaling([0.2, 0.3, 0.5], 200)
    assert np.all(np.isfinite(res["scaled"])) and res["scaled"][-1] < 1
    with pytest.raises(ValueError):
        multinomial_max(0, [0.5, 0.5])
    with pytest.raises(ValueError):
        multinomial_max(5, [0.5, 0.5], "greedy")


def test_pipeline_inequalities_hold(half_third):
    rep = average_bound_report(half_third, 1e5, log_power=3)
    assert rep.triangle_ok and rep.majorant_ok
    assert rep.direct <= 1 and rep.n_words > 0


def test_pipeline_rejects_gibbs():
    from dynfourier.measures import GibbsPotential, gibbs_measure, normalize_potential

    S = IFSSystem(half_third_system().maps, subshift=[[1, 1], [1, 0]])
    mu = gibbs_measure(S, normalize_potential(S, S.subshift, GibbsPotential("G0", values=np.log([0.5, 0.5]))))
    with pytest.raises(TypeError):
        average_bound_report(mu, 1e5, log_power=3)
