"""Fourier transforms of IFS measures with explicit error bounds.

Three evaluators are available.

:class:`FunctionalEquation`
    Expands ``mu^(xi)`` through the stationarity relation until the
    remaining frequencies are small, then closes every leaf with the phase of
    the conditional barycentre.  For similitude systems with commuting
    linear parts the expansion is memoised on letter-count vectors, so the
    cost is polynomial in ``log|xi|``; other systems fall back to a plain
    cylinder expansion.
:class:`ProductFormula`
    Infinite-product formula for homogeneous self-similar measures.
:class:`MonteCarlo`
    Empirical characteristic function with a three-sigma band.

The sweep helpers build decay profiles over geometric frequency bands and
count the balls needed to cover the set where ``|mu^|`` is large.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ifs import IFSSystem, Similitude, distortion_constants, word_boxes, word_derivative_sup
from .measures import MarkovMeasure

__all__ = [
    "IncompatibleEvaluator",
    "TolTooTight",
    "DegenerateFit",
    "FunctionalEquation",
    "ProductFormula",
    "MonteCarlo",
    "fourier_transform",
    "fourier_eval",
    "DecayProfile",
    "decay_profile",
    "ExceptionalSetReport",
    "exceptional_set_count",
    "fit_decay_exponent",
    "frequency_grid",
    "band_edges",
]


class IncompatibleEvaluator(ValueError):
    """Raised when an evaluator cannot handle the given measure."""


class TolTooTight(RuntimeError):
    """Raised when the expansion needed for a tolerance exceeds the budget."""


class DegenerateFit(ValueError):
    """Raised when a decay fit has no information (all maxima equal)."""


@dataclass(frozen=True)
class FunctionalEquation:
    """Expansion of the stationarity equation with certified closure.

    Parameters
    ----------
    tol : float
        Target absolute error.
    budget : int
        Maximum number of expansion nodes (memoised route) or cylinder words
        (general route).
    chunk : int
        Frequencies processed together.
    """

    tol: float = 1e-8
    budget: int = 2_000_000
    chunk: int = 1 << 15


@dataclass(frozen=True)
class ProductFormula:
    """Infinite product for homogeneous self-similar measures."""

    tol: float = 1e-12


@dataclass(frozen=True)
class MonteCarlo:
    """Empirical characteristic function of ``n`` samples drawn with ``seed``."""

    n: int = 1_000_000
    seed: int = 0
    chunk: int = 200_000


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _as_freqs(xi, d: int) -> tuple[np.ndarray, bool]:
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 0 or (xi.ndim == 1 and d > 1 and xi.shape[0] == d)
    return xi.reshape(-1, d), single


def _commuting_similitudes(system: IFSSystem) -> bool:
    if not system.is_similitude:
        return False
    mats = [m.linear for m in system.maps]
    return all(np.allclose(A @ B, B @ A, atol=1e-13) for A, B in itertools.combinations(mats, 2))


def _letter_classes(system: IFSSystem):
    """Group letters with identical linear parts; returns (class_of, reps)."""
    reps: list[np.ndarray] = []
    cls = []
    for m in system.maps:
        for j, R in enumerate(reps):
            if np.array_equal(R, m.linear):
                cls.append(j)
                break
        else:
            reps.append(m.linear)
            cls.append(len(reps) - 1)
    return np.array(cls), reps


def _hull_radius(points: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Largest distance from each point to the corners of its box."""
    far = np.maximum(np.abs(points - lo), np.abs(hi - points))
    return np.sqrt((far**2).sum(axis=1))


# ---------------------------------------------------------------------------
# memoised functional equation
# ---------------------------------------------------------------------------


class _Expansion:
    """Expansion tree of the functional equation on count vectors.

    A node ``(c, s)`` stands for ``mu_s^(L_c^T xi)``, where ``c`` counts the
    letters applied so far by class, ``L_c`` is the product of the class
    linear parts and ``mu_s`` is the law of the point given the current
    chain state ``s``.  Bernoulli measures use a single aggregated state.
    """

    def __init__(self, measure: MarkovMeasure, xmax: float, tol: float, budget: int):
        sysm = measure.system
        self.d = sysm.dim
        self.cls, self.reps = _letter_classes(sysm)
        self.ncls = len(self.reps)
        self.scales = np.array([abs(np.linalg.det(R)) ** (1 / self.d) for R in self.reps])
        self.trans = np.array([m.translation for m in sysm.maps])
        if measure.is_bernoulli:
            self.nstates = 1
            p = measure.m
            # choices[s] = list of (coef, letter, child_state)
            self.choices = [[(p[a], a, 0) for a in range(sysm.k) if p[a] > 0]]
            bary = measure.state_barycenters()
            b = p @ bary
            lo, hi = np.zeros((1, self.d)), np.ones((1, self.d))
            wl, wh = word_boxes(sysm, np.arange(sysm.k)[:, None])
            lo, hi = wl.min(axis=0, keepdims=True), wh.max(axis=0, keepdims=True)
            self.bary = b[None, :]
            self.radius = _hull_radius(self.bary, lo, hi)
            self.top = [(1.0, 0)]
        else:
            self.nstates = len(measure.states)
            self.choices = [[(measure.P[s, t], int(measure.letter[s]), t)
                             for t in np.nonzero(measure.P[s])[0]] for s in range(self.nstates)]
            self.bary = measure.state_barycenters()
            lo, hi = word_boxes(sysm, measure.states)
            self.radius = _hull_radius(self.bary, lo, hi)
            self.top = [(measure.m[s], s) for s in range(self.nstates) if measure.m[s] > 0]
        self.xmax = xmax
        self.tol = tol
        self._mat: dict = {}
        self._build(budget)

    def linear(self, c: tuple) -> np.ndarray:
        M = self._mat.get(c)
        if M is None:
            M = np.eye(self.d)
            for j, n in enumerate(c):
                if n:
                    M = M @ np.linalg.matrix_power(self.reps[j], n)
            self._mat[c] = M
        return M

    def scale(self, c: tuple) -> float:
        return float(np.prod(self.scales ** np.array(c)))

    def is_leaf(self, c: tuple, s: int) -> bool:
        eta = self.scale(c) * self.xmax
        return 2 * math.pi**2 * (eta * self.radius[s]) ** 2 <= self.tol

    def _build(self, budget: int):
        zero = (0,) * self.ncls
        levels = [{(zero, s) for _, s in self.top if not self.is_leaf(zero, s)}]
        total = len(levels[0])
        while levels[-1]:
            nxt = set()
            for c, s in levels[-1]:
                for _, a, t in self.choices[s]:
                    cc = list(c)
                    cc[self.cls[a]] += 1
                    cc = tuple(cc)
                    if not self.is_leaf(cc, t):
                        nxt.add((cc, t))
            total += len(nxt)
            if total > budget:
                raise TolTooTight(f"expansion needs more than {budget} nodes")
            levels.append(nxt)
        self.levels = [sorted(lv) for lv in levels[:-1]]
        self.nodes = total

    def evaluate(self, xi: np.ndarray) -> np.ndarray:
        """Evaluate the expansion at the frequencies ``xi`` of shape (N, d)."""
        two_pi_i = 2j * math.pi
        below: dict = {}

        def child_value(c, t):
            v = below.get((c, t))
            if v is None:
                v = np.exp(two_pi_i * (xi @ (self.linear(c) @ self.bary[t])))
            return v

        for level in reversed(self.levels):
            current = {}
            for c, s in level:
                L = self.linear(c)
                acc = np.zeros(len(xi), dtype=complex)
                phases: dict = {}
                for coef, a, t in self.choices[s]:
                    cc = list(c)
                    cc[self.cls[a]] += 1
                    ph = phases.get(a)
                    if ph is None:
                        ph = np.exp(two_pi_i * (xi @ (L @ self.trans[a])))
                        phases[a] = ph
                    acc += coef * ph * child_value(tuple(cc), t)
                current[(c, s)] = acc
            below = current
        zero = (0,) * self.ncls
        out = np.zeros(len(xi), dtype=complex)
        for w, s in self.top:
            out += w * child_value(zero, s)
        return out


def _fe_memoised(measure: MarkovMeasure, xi: np.ndarray, ev: FunctionalEquation):
    out = np.empty(len(xi), dtype=complex)
    norms = np.linalg.norm(xi, axis=1)
    order = np.argsort(norms)
    for start in range(0, len(xi), ev.chunk):
        idx = order[start:start + ev.chunk]
        xmax = float(norms[idx].max())
        out[idx] = _Expansion(measure, xmax, ev.tol, ev.budget).evaluate(xi[idx])
    return out, np.full(len(xi), ev.tol)


# ---------------------------------------------------------------------------
# general cylinder expansion
# ---------------------------------------------------------------------------


def _fe_cylinders(measure: MarkovMeasure, xi: np.ndarray, ev: FunctionalEquation):
    """Cylinder expansion with barycentre-image closure.

    A leaf cylinder ``alpha = gamma t`` (``t`` the final chain state)
    contributes ``mu(alpha) exp(2 pi i <xi, f_gamma(b_t)>)`` where ``b_t``
    is the barycentre of the state ``t``.  With ``s = sup|Df_gamma| * |xi|``
    a second-order Taylor expansion of ``f_gamma`` around ``b_t`` bounds the
    leaf error by ``pi C R^2 s + 2 pi^2 R^2 s^2``, where ``C`` is the linear
    distortion constant and ``R`` the support radius around ``b_t``.  The
    distortion constant is sampled, so the bound is first-order certified
    rather than fully validated.  ``sup|Df_gamma|`` comes from
    :func:`word_derivative_sup`.
    """
    sysm = measure.system
    xmax = float(np.linalg.norm(xi, axis=1).max())
    out = np.zeros(len(xi), dtype=complex)
    err = 0.0
    if xmax == 0:
        return np.ones(len(xi), dtype=complex), np.zeros(len(xi))
    C = distortion_constants(sysm, 3)["C_lin"] if not sysm.is_similitude else 0.0
    bary = measure.state_barycenters()
    slo, shi = word_boxes(sysm, measure.states)
    R = float(_hull_radius(bary, slo, shi).max())
    k = measure.order

    def leaf_error(sup):
        s = sup * xmax
        return math.pi * C * R**2 * s + 2 * math.pi**2 * (R * s) ** 2

    frontier = sysm.words(k)
    used = 0
    while len(frontier):
        used += len(frontier)
        if used > ev.budget:
            raise TolTooTight(f"cylinder expansion needs more than {ev.budget} words")
        last = measure._codes(frontier[:, -k:])[:, 0]
        sup = word_derivative_sup(sysm, frontier[:, :-k], bary[last], R)
        e = np.array([leaf_error(s) for s in sup])
        leaf = e <= ev.tol
        if leaf.any():
            words = frontier[leaf]
            mass = measure.masses(words)
            last = measure._codes(words[:, -k:])[:, 0]
            # f_alpha(b_t) with b_t the barycentre of the last block state,
            # which already accounts for the last k letters.
            pts = _apply_prefix(sysm, words[:, :-k], bary[last]) if words.shape[1] > k else bary[last]
            for s0 in range(0, len(xi), 4096):
                xs = xi[s0:s0 + 4096]
                out[s0:s0 + 4096] += np.exp(2j * math.pi * (xs @ pts.T)) @ mass
            err += float(mass @ e[leaf])
        rest = frontier[~leaf]
        if not len(rest):
            break
        rows, cols = np.nonzero(sysm.shift.matrix[rest[:, -1]])
        frontier = np.concatenate([rest[rows], cols[:, None]], axis=1)
    return out, np.full(len(xi), max(err, 0.0))


def _apply_prefix(system, prefixes, pts):
    from .ifs import apply_words

    return apply_words(system, prefixes, pts)


# ---------------------------------------------------------------------------
# product formula and Monte Carlo
# ---------------------------------------------------------------------------


def _homogeneous(measure: MarkovMeasure) -> bool:
    sysm = measure.system
    if not (sysm.is_similitude and measure.is_bernoulli):
        return False
    L0 = sysm.maps[0].linear
    return all(np.array_equal(m.linear, L0) for m in sysm.maps)


def _product_formula(measure: MarkovMeasure, xi: np.ndarray, ev: ProductFormula):
    sysm = measure.system
    L = sysm.maps[0].linear
    r = abs(sysm.maps[0].ratio)
    p = measure.m
    T = np.array([m.translation for m in sysm.maps])
    tbar = p @ T
    var = float(p @ ((T - tbar) ** 2).sum(axis=1))
    xmax = float(np.linalg.norm(xi, axis=1).max()) if len(xi) else 0.0
    J = 0
    while 2 * math.pi**2 * var * (xmax * r**J) ** 2 / (1 - r * r) > ev.tol:
        J += 1
    out = np.ones(len(xi), dtype=complex)
    eta = xi.copy()
    for _ in range(J):
        out *= np.exp(2j * math.pi * (eta @ T.T)) @ p
        eta = eta @ L
    d = sysm.dim
    tail = np.linalg.matrix_power(L, J) @ np.linalg.solve(np.eye(d) - L, tbar)
    out *= np.exp(2j * math.pi * (xi @ tail))
    bound = 2 * math.pi**2 * var * (xmax * r**J) ** 2 / (1 - r * r)
    return out, np.full(len(xi), bound)


def _monte_carlo(measure, xi: np.ndarray, ev: MonteCarlo):
    pts = measure.sample(ev.seed, ev.n)
    out = np.empty(len(xi), dtype=complex)
    band = np.empty(len(xi))
    for i, x in enumerate(xi):
        s = np.zeros(2)
        s2 = np.zeros(2)
        for c0 in range(0, len(pts), ev.chunk):
            ph = 2 * math.pi * (pts[c0:c0 + ev.chunk] @ x)
            c, sn = np.cos(ph), np.sin(ph)
            s += (c.sum(), sn.sum())
            s2 += ((c * c).sum(), (sn * sn).sum())
        mean = s / ev.n
        var = np.maximum(s2 / ev.n - mean**2, 0.0)
        out[i] = complex(mean[0], mean[1])
        band[i] = 3 * math.sqrt(var.sum() / ev.n)
    return out, band


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------


def fourier_transform(measure, xi, evaluator=None):
    """Evaluate ``mu^`` at one or many frequencies.

    Parameters
    ----------
    measure : MarkovMeasure or compatible oracle
    xi : array_like
        A scalar (``d = 1``), a vector of length ``d`` or an ``(N, d)``
        array.  In dimension one a flat array is read as ``N`` frequencies.
    evaluator : FunctionalEquation, ProductFormula or MonteCarlo

    Returns
    -------
    values : complex or ndarray
    errors : float or ndarray
        Certified error (functional equation, product formula) or
        three-sigma band (Monte Carlo).
    """
    evaluator = FunctionalEquation() if evaluator is None else evaluator
    d = measure.dim
    arr, single = _as_freqs(xi, d)
    if isinstance(evaluator, MonteCarlo):
        vals, errs = _monte_carlo(measure, arr, evaluator)
    elif isinstance(evaluator, ProductFormula):
        if not isinstance(measure, MarkovMeasure) or not _homogeneous(measure):
            raise IncompatibleEvaluator("the product formula needs a homogeneous self-similar measure")
        vals, errs = _product_formula(measure, arr, evaluator)
    elif isinstance(evaluator, FunctionalEquation):
        if hasattr(measure, "fourier_expansion"):
            vals, errs = measure.fourier_expansion(arr, evaluator)
        elif not isinstance(measure, MarkovMeasure):
            raise IncompatibleEvaluator(f"no functional equation for {type(measure).__name__}")
        elif _commuting_similitudes(measure.system):
            vals, errs = _fe_memoised(measure, arr, evaluator)
        else:
            vals, errs = _fe_cylinders(measure, arr, evaluator)
    else:
        raise IncompatibleEvaluator(f"unknown evaluator {evaluator!r}")
    zero = ~np.any(arr != 0, axis=1)
    vals[zero] = 1.0
    errs[zero] = 0.0
    if single:
        return complex(vals[0]), float(errs[0])
    return vals, errs


def fourier_eval(measure, xi, evaluator=None):
    """``mu^(xi)`` as a complex number (or array); see :func:`fourier_transform`."""
    return fourier_transform(measure, xi, evaluator)[0]


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


def _directions(d: int, count: int) -> np.ndarray:
    if d == 1:
        return np.ones((1, 1))
    if d == 2:
        ang = np.pi * np.arange(count) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    v = np.random.default_rng(2024).normal(size=(count, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def frequency_grid(d: int, lo: float, hi: float, step: float, directions: int = 16) -> np.ndarray:
    """Integer-step frequencies ``t e`` with ``lo <= t < hi`` along sampled directions.

    One dimension uses the positive half-line; conjugate symmetry covers
    the rest.  In higher dimension the directions cover a half-sphere.
    """
    t = np.arange(lo, hi, step)
    dirs = _directions(d, directions)
    return (t[None, :, None] * dirs[:, None, :]).reshape(-1, d)


@dataclass
class DecayProfile:
    """Per-band maxima and means of ``|mu^|``.

    ``bands`` holds ``(lo, hi)`` edges sorted increasingly; ``argmax`` the
    frequency realising each band maximum; ``error`` the largest evaluator
    error in the band.
    """

    bands: np.ndarray
    max: np.ndarray
    mean: np.ndarray
    argmax: np.ndarray
    error: np.ndarray
    grid_step: float
    method: str

    def rows(self):
        for i, (lo, hi) in enumerate(self.bands):
            arg = np.atleast_1d(self.argmax[i])
            yield {"band": i, "T_lo": float(lo), "T_hi": float(hi), "max": float(self.max[i]),
                   "mean": float(self.mean[i]), "argmax": ";".join(f"{v:.6g}" for v in arg),
                   "error": float(self.error[i])}

    def decade_max(self, decades: Sequence[float]) -> np.ndarray:
        """Maximum of the band maxima over bands whose lower edge lies in each decade."""
        out = []
        for T in decades:
            sel = (self.bands[:, 0] >= T) & (self.bands[:, 0] < 10 * T)
            out.append(self.max[sel].max() if sel.any() else np.nan)
        return np.array(out)


def band_edges(T_min: float, T_max: float, bands_per_decade: float | None = None) -> np.ndarray:
    """Geometric band edges from ``T_min``, the last band reaching ``T_max``.

    Bands are dyadic when ``bands_per_decade`` is None.
    """
    ratio = 2.0 if bands_per_decade is None else 10 ** (1.0 / bands_per_decade)
    n = max(1, int(math.ceil(math.log(T_max / T_min) / math.log(ratio) - 1e-9)))
    edges = T_min * ratio ** np.arange(n + 1)
    return np.stack([edges[:-1], edges[1:]], axis=1)


def decay_profile(measure, T_max: float, bands_per_decade: float | None = None,
                  grid_step: float = 0.1, evaluator=None, T_min: float = 1.0,
                  directions: int = 16) -> DecayProfile:
    """Sweep ``|mu^|`` over geometric frequency bands up to ``T_max``.

    Parameters
    ----------
    T_max : float
        Upper end of the sweep, at least 10.
    bands_per_decade : float, optional
        Number of bands per decade; dyadic bands ``[T, 2T)`` by default.
    grid_step : float
        Spacing of the frequency grid along each direction.
    """
    if T_max < 10:
        raise ValueError("T_max must be at least 10")
    evaluator = FunctionalEquation(1e-6) if evaluator is None else evaluator
    bands = band_edges(T_min, T_max, bands_per_decade)
    d = measure.dim
    mx, mn, err, arg = [], [], [], []
    for lo, hi in bands:
        grid = frequency_grid(d, lo, hi, grid_step, directions)
        vals, errs = fourier_transform(measure, grid, evaluator)
        a = np.abs(vals)
        i = int(np.argmax(a))
        mx.append(min(float(a[i]), 1.0))
        mn.append(float(a.mean()))
        err.append(float(np.max(errs)))
        arg.append(grid[i] if d > 1 else grid[i, 0])
    return DecayProfile(bands, np.array(mx), np.array(mn), np.array(arg, dtype=object if d > 1 else float),
                        np.array(err), grid_step, type(evaluator).__name__)


@dataclass
class ExceptionalSetReport:
    """Ball counts covering ``{|xi| <= T : |mu^(xi)| > T**-tau}`` for each ``T``."""

    T: np.ndarray
    tau: float
    grid_step: float
    counts: np.ndarray
    cells: np.ndarray
    exponent: float
    residual: float
    applicable: bool

    def rows(self):
        for T, c, n in zip(self.T, self.counts, self.cells):
            yield {"T": float(T), "tau": self.tau, "count": int(c), "cells": int(n),
                   "exponent": self.exponent, "residual": self.residual}


def _greedy_cover(points: np.ndarray, radius: float = 1.0) -> int:
    if len(points) == 0:
        return 0
    if points.shape[1] == 1:
        x = np.sort(points[:, 0])
        count, i = 0, 0
        while i < len(x):
            count += 1
            i = np.searchsorted(x, x[i] + 2 * radius, side="right")
        return count
    from scipy.spatial import cKDTree

    tree = cKDTree(points)
    covered = np.zeros(len(points), dtype=bool)
    count = 0
    for i in np.argsort(np.linalg.norm(points, axis=1)):
        if covered[i]:
            continue
        count += 1
        covered[tree.query_ball_point(points[i], 2 * radius)] = True
    return count


def exceptional_set_count(measure, T, tau: float, grid_step: float = 0.1, evaluator=None,
                          directions: int = 16) -> ExceptionalSetReport:
    """Cover the exceptional set of the flattening statement by unit balls.

    For each ``T`` the grid of :func:`frequency_grid` on ``[0, T]`` is
    scanned; grid points with ``|mu^| > T**-tau`` are covered greedily by
    balls of radius one (one dimension scans the half-line and mirrors the
    exceptional points by conjugate symmetry).  The growth exponent is the least-squares slope of
    ``log count`` against ``log T``.  The report is marked not applicable
    when more than half the grid is exceptional.
    """
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    evaluator = FunctionalEquation(1e-6) if evaluator is None else evaluator
    Ts = np.atleast_1d(np.asarray(T, dtype=float))
    d = measure.dim
    grid = frequency_grid(d, 0.0, float(Ts.max()) + grid_step, grid_step, directions)
    vals, _ = fourier_transform(measure, grid, evaluator)
    a = np.abs(vals)
    norms = np.linalg.norm(grid, axis=1)
    counts, cells = [], []
    applicable = True
    for t in Ts:
        sel = norms <= t
        hot = sel & (a > t ** (-tau))
        pts = grid[hot]
        if d == 1:
            pts = np.concatenate([-pts, pts])
        counts.append(_greedy_cover(pts))
        cells.append(int(sel.sum()))
        if hot.sum() > 0.5 * sel.sum():
            applicable = False
    counts = np.array(counts)
    good = counts > 0
    if good.sum() >= 2:
        A = np.stack([np.ones(good.sum()), np.log(Ts[good])], axis=1)
        coef, *_ = np.linalg.lstsq(A, np.log(counts[good]), rcond=None)
        resid = float(np.sqrt(np.mean((A @ coef - np.log(counts[good])) ** 2)))
        expo = float(coef[1])
    else:
        expo, resid = 0.0, 0.0
    return ExceptionalSetReport(Ts, tau, grid_step, counts, np.array(cells), expo, resid, applicable)


def fit_decay_exponent(profile: DecayProfile, model: str = "poly") -> dict:
    """Fit ``log max = a - kappa * g(T)`` over the bands.

    ``g(T) = log T`` for ``model="poly"`` and ``log log T`` for
    ``model="polylog"``; ``T`` is the lower band edge.  Returns the exponent
    ``kappa``, the intercept and the RMS residual in log space.
    """
    if len(profile.max) < 4:
        raise ValueError("need at least four bands")
    y = np.log(np.asarray(profile.max, dtype=float))
    if np.ptp(y) == 0:
        raise DegenerateFit("all band maxima are equal")
    T = profile.bands[:, 0]
    if model == "poly":
        g = np.log(T)
    elif model == "polylog":
        if np.any(T <= 1):
            raise ValueError("polylog fits need bands above T = 1")
        g = np.log(np.log(T))
    else:
        raise ValueError(f"unknown model {model!r}")
    A = np.stack([np.ones_like(g), -g], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return {"model": model, "exponent": float(coef[1]), "intercept": float(coef[0]), "residual": resid}
