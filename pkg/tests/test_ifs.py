"""Tests for maps, words, subshifts and geometric bounds."""

from __future__ import annotations

import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import I1, I2, cantor_system, half_third_system, uni_system
from dynfourier.ifs import (
    IFSSystem,
    InadmissibleWord,
    MobiusMap,
    Similitude,
    SubshiftMatrix,
    SystemDefinitionError,
    UserMap,
    Word,
    apply_words,
    check_strong_separation,
    compose_word,
    cylinder_boxes,
    distortion_constants,
    rotation_matrix,
    system_from_dict,
    word_boxes,
    word_derivative,
    word_derivative_sup,
)


def _mobius():
    return MobiusMap((0.3, 0.2), 0.4, rotation_matrix(0.1), (-1.0, 0.5))


# ---------------------------------------------------------------------------
# maps
# ---------------------------------------------------------------------------


def test_similitude_action_is_affine():
    m = Similitude(0.5, rotation_matrix(0.25), [0.1, 0.2])
    x = np.array([[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(m(x), [[0.1, 0.7], [-0.4, 0.2]], atol=1e-15)


@pytest.mark.parametrize("ratio", [0.0, 1.0, -1.5])
def test_similitude_rejects_bad_ratio(ratio):
    with pytest.raises(SystemDefinitionError):
        Similitude(ratio, I1, [0.0])


def test_rotation_must_be_orthogonal():
    with pytest.raises(Exception):
        Similitude(0.5, [[1.0, 0.5], [0.0, 1.0]], [0.0, 0.0])


def test_mobius_centre_inside_cube_rejected():
    with pytest.raises(SystemDefinitionError):
        MobiusMap((0.0, 0.0), 0.4, I2, (0.5, 0.5))


def test_mobius_jacobian_matches_finite_differences():
    m = _mobius()
    x = np.array([[0.3, 0.7], [0.9, 0.1]])
    lam, O = m.conformal(x)
    h = 1e-6
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        col = (m(x + e) - m(x - e)) / (2 * h)
        np.testing.assert_allclose(col, lam[:, None] * O[:, :, i], atol=1e-8)
    # conformality: the orthogonal part really is orthogonal
    np.testing.assert_allclose(np.einsum("nij,nkj->nik", O, O), np.broadcast_to(I2, O.shape), atol=1e-12)


def test_mobius_grad_log_lambda_matches_finite_differences():
    m = _mobius()
    x = np.array([[0.4, 0.6]])
    h = 1e-6
    g = m.grad_log_lambda(x)[0]
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (np.log(m.conformal(x + e)[0]) - np.log(m.conformal(x - e)[0])) / (2 * h)
        assert abs(fd[0] - g[i]) < 1e-7


@settings(max_examples=40, deadline=None)
@given(cx=st.floats(0, 1), cy=st.floats(0, 1), r=st.floats(0.01, 0.5))
def test_mobius_ball_image_contains_sampled_boundary(cx, cy, r):
    """Oracle: the image of dense boundary samples lies on the computed sphere."""
    m = _mobius()
    c, rad = m.image_ball([cx, cy], r)
    t = np.linspace(0, 2 * np.pi, 400, endpoint=False)
    pts = np.c_[cx + r * np.cos(t), cy + r * np.sin(t)]
    d = np.linalg.norm(m(pts) - c[0], axis=1)
    np.testing.assert_allclose(d, rad[0], rtol=1e-9)


def test_mobius_ball_meeting_centre_rejected():
    with pytest.raises(ValueError):
        _mobius().image_ball([0.0, 0.5], 1.5)


def test_user_map_numerical_jacobian():
    f = UserMap(lambda x: 0.3 * np.asarray(x) + 0.1, 1)
    lam, _ = f.conformal(np.array([[0.2], [0.7]]))
    np.testing.assert_allclose(lam, 0.3, rtol=1e-6)


# ---------------------------------------------------------------------------
# words and subshifts
# ---------------------------------------------------------------------------


def test_word_parent_and_counts():
    w = Word([0, 2, 2, 1])
    assert w.parent == Word([0, 2, 2])
    assert w.counts(3).tolist() == [1, 1, 2]
    assert w.common_prefix([0, 2, 1]) == Word([0, 2])
    with pytest.raises(ValueError):
        Word().parent


def test_golden_mean_words_count_fibonacci():
    S = SubshiftMatrix([[1, 1], [1, 0]])
    counts = [len(S.words(n)) for n in range(1, 9)]
    assert counts == [2, 3, 5, 8, 13, 21, 34, 55]


def test_non_primitive_subshift_rejected():
    with pytest.raises(SystemDefinitionError):
        SubshiftMatrix([[0, 1], [1, 0]])


def test_inadmissible_word_rejected():
    S = IFSSystem(cantor_system().maps, subshift=[[1, 1], [1, 0]])
    with pytest.raises(InadmissibleWord):
        S.check_word([1, 1])


@pytest.mark.parametrize("n", [1, 2, 3])
def test_words_enumerate_full_shift(n):
    S = half_third_system()
    W = S.words(n)
    assert sorted(map(tuple, W)) == list(itertools.product(range(2), repeat=n))


# ---------------------------------------------------------------------------
# compositions
# ---------------------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(word=st.lists(st.integers(0, 3), min_size=1, max_size=6), x=st.floats(0, 1), y=st.floats(0, 1))
def test_compose_word_matches_manual_composition(word, x, y):
    S = uni_system()
    expect = np.array([x, y])
    for a in reversed(word):
        expect = S.maps[a](expect)
    np.testing.assert_allclose(compose_word(S, word, [x, y]), expect, atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(word=st.lists(st.integers(0, 3), min_size=1, max_size=5))
def test_word_derivative_matches_chain_rule(word):
    S = uni_system()
    x = np.array([0.4, 0.3])
    lam, _ = word_derivative(S, word, x)
    expect, y = 1.0, x.copy()
    for a in reversed(word):
        expect *= S.maps[a].conformal(y)[0][0]
        y = S.maps[a](y)
    assert lam == pytest.approx(expect, rel=1e-12)


def test_apply_words_batch_matches_single():
    S = uni_system()
    W = S.words(3)
    pts = apply_words(S, W, [0.5, 0.5])
    for w, p in zip(W[:10], pts[:10]):
        np.testing.assert_allclose(compose_word(S, w, [0.5, 0.5]), p, atol=1e-14)


# ---------------------------------------------------------------------------
# geometric bounds
# ---------------------------------------------------------------------------


def test_cantor_strong_separation_gap():
    rep = check_strong_separation(cantor_system())
    assert rep.ok and rep.gap == pytest.approx(1 / 3)


def test_overlapping_system_fails_separation():
    S = IFSSystem([Similitude(0.6, I1, [0.0]), Similitude(0.6, I1, [0.4])])
    assert not check_strong_separation(S).ok


def test_uni_system_separated():
    assert check_strong_separation(uni_system()).ok


def test_word_boxes_contain_sampled_images():
    """Oracle: images of a dense grid stay inside the certified boxes."""
    S = uni_system()
    W = S.words(2)
    lo, hi = word_boxes(S, W)
    g = np.stack(np.meshgrid(np.linspace(0, 1, 25), np.linspace(0, 1, 25)), -1).reshape(-1, 2)
    for w, a, b in zip(W, lo, hi):
        y = g
        for s in reversed(w):
            y = S.maps[s](y)
        assert np.all(y >= a - 1e-12) and np.all(y <= b + 1e-12)


def test_cylinder_boxes_shapes():
    words, lo, hi = cylinder_boxes(half_third_system(), 3)
    assert words.shape == (8, 3) and lo.shape == hi.shape == (8, 1)
    np.testing.assert_allclose(sorted((hi - lo).ravel()), sorted(
        [0.5 ** (3 - j) * (1 / 3) ** j for w in itertools.product(range(2), repeat=3) for j in [sum(w)]]))


def test_word_derivative_sup_dominates_samples():
    S = uni_system()
    W = S.words(3)
    sup = word_derivative_sup(S, W)
    g = np.stack(np.meshgrid(np.linspace(0, 1, 15), np.linspace(0, 1, 15)), -1).reshape(-1, 2)
    for w, s in zip(W, sup):
        lam = apply_words(S, np.repeat(w[None], len(g), 0), g, derivatives=True)[1]
        assert np.abs(lam).max() <= s * (1 + 1e-12)


def test_similitude_distortion_is_trivial():
    d = distortion_constants(half_third_system(), 3)
    assert d["C_lin"] == 0.0 and d["C_diam"] == pytest.approx(1.0)
    assert distortion_constants(uni_system(), 3)["C_lin"] > 0


def test_json_round_trip():
    S = uni_system()
    T = system_from_dict(json.loads(json.dumps(S.to_dict())))
    np.testing.assert_allclose(compose_word(S, [0, 3, 1], [0.2, 0.9]), compose_word(T, [0, 3, 1], [0.2, 0.9]))


@pytest.mark.parametrize("spec", [
    {"maps": []},
    {"dimension": 1, "maps": [{"kind": "spiral"}]},
    {"dimension": 1, "maps": [{"kind": "similitude", "translation": [0.0]}]},
    {"dimension": 2, "maps": [{"kind": "similitude", "ratio": 0.5, "translation": [0.0]}]},
])
def test_malformed_system_definitions(spec):
    with pytest.raises(SystemDefinitionError):
        system_from_dict(spec)
