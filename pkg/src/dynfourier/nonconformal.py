"""Restricted product systems and their disintegration into random measures.

A restricted product system is built from one-dimensional systems
``{f_a^(i)}`` (one per coordinate) and a set of admissible tuples
``A subset A_1 x ... x A_d``; tuple ``a`` acts by ``F_a(x) = (f_{a_1}^(1)(x_1),
..., f_{a_d}^(d)(x_d))``.  Singling out one *fibre* coordinate, the stationary
measure is an average over sequences ``beta`` of the remaining symbols of
products ``mu_beta x delta_{x_beta}``, where ``mu_beta`` is a random
one-dimensional measure.  This module checks the standing hypotheses,
builds that disintegration, evaluates ``mu_beta`` and its Fourier transform,
audits the disintegration identity and measures decay of random products of
transfer operators.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .ifs import IFSSystem, Similitude, UserMap
from .measures import probability_vector

__all__ = [
    "HypothesisViolation",
    "PrefixTooShort",
    "IntervalMap",
    "Component",
    "RestrictedProductIFS",
    "gauss_example",
    "DisintegrationData",
    "project_alphabet",
    "sample_beta",
    "RandomMeasure",
    "random_measure",
    "product_fourier",
    "DisintegrationReport",
    "disintegration_check",
    "RandomDecayReport",
    "random_norm_decay",
    "fiber_concentration_profile",
    "restricted_product_from_dict",
]


class HypothesisViolation(ValueError):
    """A standing hypothesis fails.

    Attributes
    ----------
    condition : int
        1 (strong separation of a component), 2 (missing sibling) or 3 (no
        non-integrable fibre family).
    coordinate : int
        The coordinate concerned.
    """

    def __init__(self, condition: int, coordinate: int, detail: str = ""):
        self.condition = condition
        self.coordinate = coordinate
        super().__init__(f"hypothesis {condition} fails in coordinate {coordinate}: {detail}")


class PrefixTooShort(ValueError):
    """Raised when a sequence prefix is shorter than the requested depth."""


# ---------------------------------------------------------------------------
# one-dimensional components
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class IntervalMap:
    """A monotone ``C^2`` map of an interval with vectorised derivatives.

    Parameters
    ----------
    f, df, d2f : callable
        The map and its first two derivatives, acting on ndarrays.
    label : str
    spec : dict
        Serialisable description.
    """

    f: Callable
    df: Callable
    d2f: Callable
    label: str = ""
    spec: dict = field(default_factory=dict)

    @classmethod
    def affine(cls, ratio: float, translation: float) -> "IntervalMap":
        r, t = float(ratio), float(translation)
        return cls(lambda x: r * np.asarray(x) + t, lambda x: np.full(np.shape(x), r),
                   lambda x: np.zeros(np.shape(x)), f"{r}x+{t}",
                   {"kind": "affine", "ratio": r, "translation": t})

    @classmethod
    def gauss(cls, i: float) -> "IntervalMap":
        """The branch ``x -> 1 / (x + i)``."""
        i = float(i)
        return cls(lambda x: 1.0 / (np.asarray(x) + i), lambda x: -1.0 / (np.asarray(x) + i) ** 2,
                   lambda x: 2.0 / (np.asarray(x) + i) ** 3, f"1/(x+{i:g})", {"kind": "gauss", "i": i})

    @property
    def is_affine(self) -> bool:
        return self.spec.get("kind") == "affine"

    def __call__(self, x):
        return self.f(x)


@dataclass(frozen=True, eq=False)
class Component:
    """A one-dimensional system on the interval ``domain``."""

    maps: tuple
    domain: tuple = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "maps", tuple(self.maps))
        object.__setattr__(self, "domain", (float(self.domain[0]), float(self.domain[1])))

    @property
    def k(self) -> int:
        return len(self.maps)

    @property
    def length(self) -> float:
        return self.domain[1] - self.domain[0]

    def _probe(self, n: int = 257) -> np.ndarray:
        return np.linspace(self.domain[0], self.domain[1], n)

    def images(self, symbols: Sequence[int] | None = None) -> np.ndarray:
        """Image intervals ``f_a(domain)`` as rows ``(lo, hi)``."""
        symbols = range(self.k) if symbols is None else symbols
        lo, hi = self.domain
        out = [sorted((float(self.maps[a](lo)), float(self.maps[a](hi)))) for a in symbols]
        return np.array(out).reshape(-1, 2)

    def contraction(self, symbols: Sequence[int] | None = None) -> float:
        symbols = range(self.k) if symbols is None else symbols
        x = self._probe()
        return max(float(np.abs(self.maps[a].df(x)).max()) for a in symbols)

    def separation_gap(self, symbols: Sequence[int] | None = None) -> float:
        """Smallest gap between image intervals; negative when two overlap."""
        im = self.images(symbols)
        if len(im) < 2:
            return float("inf")
        im = im[np.argsort(im[:, 0])]
        return float((im[1:, 0] - im[:-1, 1]).min())

    def inside(self, symbols: Sequence[int] | None = None) -> bool:
        im = self.images(symbols)
        lo, hi = self.domain
        return bool(np.all(im[:, 0] >= lo - 1e-12) and np.all(im[:, 1] <= hi + 1e-12))

    def as_system(self, symbols: Sequence[int] | None = None) -> IFSSystem:
        """The sub-family as an :class:`IFSSystem` on ``[0, 1]``.

        Coordinates are rescaled affinely from ``domain`` to ``[0, 1]``;
        affine members become similitudes.
        """
        symbols = list(range(self.k)) if symbols is None else list(symbols)
        lo, L = self.domain[0], self.length
        maps = []
        for a in symbols:
            m = self.maps[a]
            if m.is_affine:
                r, t = m.spec["ratio"], m.spec["translation"]
                maps.append(Similitude(r, np.eye(1), [(r * lo + t - lo) / L]))
            else:
                maps.append(_rescaled_user_map(m, lo, L))
        return IFSSystem(maps)


def _rescaled_user_map(m: IntervalMap, lo: float, L: float) -> UserMap:
    def ev(y):
        return ((m.f(lo + L * y) - lo) / L).reshape(-1, 1)

    def jac(y):
        return m.df(lo + L * y).reshape(-1, 1, 1)

    def gll(y):
        x = lo + L * y
        return (L * m.d2f(x) / m.df(x)).reshape(-1, 1)

    return UserMap(ev, 1, jacobian=jac, grad_log_lambda=gll)


# ---------------------------------------------------------------------------
# restricted products
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class RestrictedProductIFS:
    """``{F_a : a in tuples}`` with weights ``p`` on the tuples.

    Parameters
    ----------
    components : sequence of Component
    tuples : sequence of tuple of int
        Admissible symbol tuples, one entry per coordinate.
    p : array_like, optional
        Probability vector on ``tuples``; uniform when omitted.
    """

    components: tuple
    tuples: tuple
    p: np.ndarray = None

    def __post_init__(self):
        self.components = tuple(self.components)
        self.tuples = tuple(tuple(int(s) for s in t) for t in self.tuples)
        if len(set(self.tuples)) != len(self.tuples):
            raise ValueError("tuples must be distinct")
        d = len(self.components)
        for t in self.tuples:
            if len(t) != d or any(not 0 <= s < self.components[i].k for i, s in enumerate(t)):
                raise ValueError(f"tuple {t} does not match the components")
        n = len(self.tuples)
        self.p = np.full(n, 1.0 / n) if self.p is None else probability_vector(self.p, n)

    @property
    def dim(self) -> int:
        return len(self.components)

    @property
    def T(self) -> np.ndarray:
        return np.array(self.tuples, dtype=int)

    def apply(self, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
        """``F_{tuples[idx]}(x)`` row-wise."""
        out = np.empty_like(x)
        T = self.T[idx]
        for i, comp in enumerate(self.components):
            for a in np.unique(T[:, i]):
                sel = T[:, i] == a
                out[sel, i] = comp.maps[a](x[sel, i])
        return out

    def fibre_family(self, t: Sequence[int], i: int) -> list[int]:
        """Symbols ``a'_i`` of tuples agreeing with ``t`` off coordinate ``i``."""
        return sorted({s[i] for s in self.tuples
                       if all(s[j] == t[j] for j in range(self.dim) if j != i)})

    def check_hypotheses(self, uni_depth: int = 4, uni_tol: float = 1e-6,
                         check_uni: bool = True) -> dict:
        """Check the three standing hypotheses; raise on the first failure.

        Returns a dict with per-coordinate separation gaps, UNI margins and
        the tuples realising them.

        Raises
        ------
        HypothesisViolation
        """
        from .transfer import uni_margin

        gaps, margins, witnesses = [], [], []
        for i, comp in enumerate(self.components):
            used = sorted({t[i] for t in self.tuples})
            gap = comp.separation_gap(used)
            if not (gap > 0 and comp.inside(used) and comp.contraction(used) < 1):
                raise HypothesisViolation(1, i, f"gap {gap:.3g}, contraction {comp.contraction(used):.3g}")
            gaps.append(gap)
        for t in self.tuples:
            for i in range(self.dim):
                if len(self.fibre_family(t, i)) < 2:
                    raise HypothesisViolation(2, i, f"tuple {t} has no sibling in coordinate {i}")
        if check_uni:
            for i, comp in enumerate(self.components):
                best, wit = 0.0, None
                seen = set()
                for t in self.tuples:
                    fam = tuple(self.fibre_family(t, i))
                    if fam in seen:
                        continue
                    seen.add(fam)
                    sysm = comp.as_system(fam)
                    probe = float(np.mean(sysm.maps[0](np.array([[0.5]]))))
                    rep = uni_margin(sysm, uni_depth, [probe], directions=1)
                    if rep.eps0 > best:
                        best, wit = rep.eps0, t
                if best <= uni_tol:
                    raise HypothesisViolation(3, i, "no fibre family is non-integrable")
                margins.append(best)
                witnesses.append(wit)
        return {"gaps": gaps, "uni_margins": margins, "uni_witnesses": witnesses}

    def to_dict(self) -> dict:
        return {"kind": "restricted_product",
                "components": [{"domain": list(c.domain), "maps": [m.spec for m in c.maps]}
                               for c in self.components],
                "tuples": [list(t) for t in self.tuples], "p": self.p.tolist()}


def _interval_map_from_dict(spec: dict) -> IntervalMap:
    kind = spec.get("kind")
    if kind == "affine":
        return IntervalMap.affine(spec["ratio"], spec["translation"])
    if kind == "gauss":
        return IntervalMap.gauss(spec["i"])
    raise ValueError(f"unknown interval map kind {kind!r}")


def restricted_product_from_dict(spec: dict) -> RestrictedProductIFS:
    """Build a system from ``{"kind": "restricted_product", "components": ..., "tuples": ...}``."""
    if spec.get("kind") != "restricted_product":
        raise ValueError("expected kind 'restricted_product'")
    comps = [Component([_interval_map_from_dict(m) for m in c["maps"]], tuple(c.get("domain", (0, 1))))
             for c in spec["components"]]
    return RestrictedProductIFS(comps, [tuple(t) for t in spec["tuples"]], spec.get("p"))


def gauss_example(p=None) -> RestrictedProductIFS:
    """``F_(i,j)(x, y) = (1/(x+i), 1/(y+j))`` over the six off-diagonal pairs.

    Each component ``{1/(x+i) : i = 1, 2, 3}`` acts on ``[1/4, 1]``, which it
    maps into itself with disjoint images.  Symbols are ``i - 1``.
    """
    comp = Component([IntervalMap.gauss(i) for i in (1, 2, 3)], (0.25, 1.0))
    tuples = [(i - 1, j - 1) for i, j in ((1, 2), (1, 3), (2, 1), (2, 3), (3, 1), (3, 2))]
    return RestrictedProductIFS((comp, comp), tuples, p)


# ---------------------------------------------------------------------------
# disintegration
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class DisintegrationData:
    """Projection of a restricted product onto all coordinates but ``axis``.

    Attributes
    ----------
    ifs : RestrictedProductIFS
    axis : int
        The fibre coordinate.
    B : list of tuple
        Projected alphabet: the admissible tuples with ``axis`` removed.
    q : ndarray
        ``q_b = sum_{pi(a) = b} p_a``.
    fibres : list of ndarray
        ``fibres[j]`` lists the fibre symbols ``a`` with ``(a, B[j])`` admissible.
    weights : list of ndarray
        ``weights[j][s] = p_{a b} / q_b`` for ``a = fibres[j][s]``.
    gamma : float
        ``max_{b, a} p_{ab} / q_b``.
    """

    ifs: RestrictedProductIFS
    axis: int
    B: list
    q: np.ndarray
    fibres: list
    weights: list
    gamma: float

    @property
    def fibre_component(self) -> Component:
        return self.ifs.components[self.axis]

    @property
    def base_axes(self) -> list[int]:
        return [i for i in range(self.ifs.dim) if i != self.axis]

    def base_point(self, beta: np.ndarray, start=None) -> np.ndarray:
        """``x_beta = lim F~_{b_1} o ... o F~_{b_n}(start)`` from a finite prefix.

        ``beta`` has shape ``(N, L)``; the result has shape ``(N, d - 1)``.
        """
        beta = np.atleast_2d(np.asarray(beta, dtype=int))
        comps = [self.ifs.components[i] for i in self.base_axes]
        Bt = np.array(self.B, dtype=int).reshape(len(self.B), -1)
        out = np.empty((len(beta), len(comps)))
        for j, comp in enumerate(comps):
            x = np.full(len(beta), comp.domain[0] if start is None else start[j], dtype=float)
            for col in range(beta.shape[1] - 1, -1, -1):
                sym = Bt[beta[:, col], j]
                for a in np.unique(sym):
                    sel = sym == a
                    x[sel] = comp.maps[a](x[sel])
            out[:, j] = x
        return out

    def base_error(self, length: int) -> float:
        """Bound on the distance of a prefix point from ``x_beta``."""
        comps = [self.ifs.components[i] for i in self.base_axes]
        return math.sqrt(sum((c.contraction() ** length * c.length) ** 2 for c in comps))


def project_alphabet(ifs: RestrictedProductIFS, axis: int = 0, check: bool = True) -> DisintegrationData:
    """Disintegrate along coordinate ``axis``.

    Raises
    ------
    HypothesisViolation
        When ``check`` is set and hypothesis 1 or 2 fails.
    """
    if check:
        ifs.check_hypotheses(check_uni=False)
    B, fib, wts = [], {}, {}
    for t, p in zip(ifs.tuples, ifs.p):
        b = t[:axis] + t[axis + 1:]
        if b not in fib:
            B.append(b)
            fib[b], wts[b] = [], []
        fib[b].append(t[axis])
        wts[b].append(p)
    q = np.array([sum(wts[b]) for b in B])
    fibres = [np.array(fib[b], dtype=int) for b in B]
    weights = [np.array(wts[b]) / qb for b, qb in zip(B, q)]
    gamma = float(max(w.max() for w in weights))
    return DisintegrationData(ifs, axis, B, q, fibres, weights, gamma)


def sample_beta(data: DisintegrationData, seed: int, length: int, n: int | None = None) -> np.ndarray:
    """I.i.d. ``q``-distributed symbols (indices into ``data.B``).

    Returns shape ``(length,)`` or ``(n, length)``.
    """
    if length < 1:
        raise ValueError("length must be at least 1")
    rng = np.random.default_rng(seed)
    size = length if n is None else (n, length)
    return rng.choice(len(data.B), size=size, p=data.q)


# ---------------------------------------------------------------------------
# random fibre measures
# ---------------------------------------------------------------------------


def _fibre_leaves(data: DisintegrationData, beta: np.ndarray, depth: int):
    """Leaf words of depth ``depth`` for a batch of sequences.

    Returns ``(lo, hi, mass)`` of shape ``(N, W)``: the image intervals
    ``f_alpha(domain)`` and the masses ``m_beta([alpha])`` where ``W`` is
    the largest number of words; padded entries carry mass zero.
    """
    comp = data.fibre_component
    beta = np.atleast_2d(beta)
    N = len(beta)
    sizes = np.array([len(f) for f in data.fibres])
    kmax = int(sizes.max())
    W = kmax**depth
    choice = np.array(list(itertools.product(range(kmax), repeat=depth)), dtype=int).reshape(W, depth)
    fib = np.full((len(data.B), kmax), -1, dtype=int)
    wt = np.zeros((len(data.B), kmax))
    for j, (f, w) in enumerate(zip(data.fibres, data.weights)):
        fib[j, :len(f)] = f
        wt[j, :len(w)] = w
    lo = np.full((N, W), comp.domain[0])
    hi = np.full((N, W), comp.domain[1])
    mass = np.ones((N, W))
    for level in range(depth - 1, -1, -1):
        bsym = beta[:, level][:, None]
        c = choice[None, :, level]
        sym = fib[bsym, c]
        mass *= wt[bsym, c]
        for a in range(comp.k):
            sel = sym == a
            if sel.any():
                lo[sel], hi[sel] = comp.maps[a](lo[sel]), comp.maps[a](hi[sel])
    lo, hi = np.minimum(lo, hi), np.maximum(lo, hi)
    return lo, hi, mass


@dataclass(eq=False)
class RandomMeasure:
    """The fibre measure ``mu_beta`` from a finite prefix of ``beta``."""

    data: DisintegrationData
    beta: np.ndarray
    depth: int

    def cylinder_masses(self, level: int) -> np.ndarray:
        """Masses ``m_beta([alpha])`` of all level-``level`` fibre words (padded with zeros)."""
        if level > len(self.beta):
            raise PrefixTooShort(f"prefix of length {len(self.beta)} < level {level}")
        return _fibre_leaves(self.data, self.beta[None, :level], level)[2][0]

    def fourier(self, xi, depth: int | None = None):
        """``mu_beta^(xi)`` with a certified closure error.

        Each depth-``depth`` cylinder is collapsed to the midpoint of its
        image interval, which moves every point by at most half the
        interval's length, so the error is at most ``pi |xi| sum m |I|``.
        """
        depth = self.depth if depth is None else depth
        if depth > len(self.beta):
            raise PrefixTooShort(f"prefix of length {len(self.beta)} < depth {depth}")
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        lo, hi, mass = _fibre_leaves(self.data, self.beta[None, :depth], depth)
        mid = 0.5 * (lo + hi)[0]
        vals = np.exp(2j * math.pi * np.outer(xi, mid)) @ mass[0]
        err = math.pi * np.abs(xi) * float((mass[0] * (hi - lo)[0]).sum())
        return vals, err

    def pushforward_fourier(self, g: Callable, lip: float, xi, depth: int | None = None):
        """``int exp(2 pi i xi g(y)) d mu_beta(y)`` for a map ``g`` with Lipschitz constant ``lip``."""
        depth = self.depth if depth is None else depth
        if depth > len(self.beta):
            raise PrefixTooShort(f"prefix of length {len(self.beta)} < depth {depth}")
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        lo, hi, mass = _fibre_leaves(self.data, self.beta[None, :depth], depth)
        mid = g(0.5 * (lo + hi)[0])
        vals = np.exp(2j * math.pi * np.outer(xi, mid)) @ mass[0]
        err = math.pi * np.abs(xi) * lip * float((mass[0] * (hi - lo)[0]).sum())
        return vals, err

    def shifted(self, n: int = 1) -> "RandomMeasure":
        return RandomMeasure(self.data, self.beta[n:], max(1, min(self.depth, len(self.beta) - n)))


def random_measure(data: DisintegrationData, beta, depth: int) -> RandomMeasure:
    """``mu_beta`` truncated at ``depth``.

    Raises
    ------
    PrefixTooShort
        When ``len(beta) < depth``.
    """
    beta = np.asarray(beta, dtype=int).ravel()
    if len(beta) < depth:
        raise PrefixTooShort(f"prefix of length {len(beta)} < depth {depth}")
    return RandomMeasure(data, beta, depth)


# ---------------------------------------------------------------------------
# direct transform of the stationary measure
# ---------------------------------------------------------------------------


def product_fourier(ifs: RestrictedProductIFS, xi, tol: float = 1e-4, budget: int = 4_000_000):
    """``mu^(xi)`` for the stationary measure by adaptive cylinder expansion.

    A cylinder becomes a leaf once ``pi sum_i |xi_i| |I_i| <= tol``, where
    ``I_i`` are the coordinate image intervals, and is collapsed to its
    centre.  Returns ``(values, error)`` with the mass-weighted error bound.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    T = ifs.T
    d = ifs.dim
    xmax = np.abs(xi).max(axis=0)
    lo = np.array([c.domain[0] for c in ifs.components])[None, :]
    hi = np.array([c.domain[1] for c in ifs.components])[None, :]
    words = np.zeros((1, 0), dtype=int)
    mass = np.ones(1)
    out = np.zeros(len(xi), dtype=complex)
    err = 0.0
    used = 0
    nw = len(T)
    while len(mass):
        # children append a symbol on the inside, F_w o F_a, so that the
        # leaves form a prefix code and sum_w p_w F_w mu = mu holds
        M = len(mass)
        idx = np.repeat(np.arange(M), nw)
        words = np.concatenate([words[idx], np.tile(np.arange(nw), M)[:, None]], axis=1)
        cmass = mass[idx] * ifs.p[words[:, -1]]
        used += len(cmass)
        if used > budget:
            raise RuntimeError(f"expansion exceeds {budget} cylinders")
        clo = np.repeat(lo, len(cmass), axis=0)
        chi = np.repeat(hi, len(cmass), axis=0)
        for col in range(words.shape[1] - 1, -1, -1):
            c1, c2 = ifs.apply(words[:, col], clo), ifs.apply(words[:, col], chi)
            clo, chi = np.minimum(c1, c2), np.maximum(c1, c2)
        e = math.pi * ((chi - clo) * xmax[None, :]).sum(axis=1)
        leaf = e <= tol
        if leaf.any():
            c = 0.5 * (clo[leaf] + chi[leaf])
            for s0 in range(0, len(xi), 256):
                out[s0:s0 + 256] += np.exp(2j * math.pi * (xi[s0:s0 + 256] @ c.T)) @ cmass[leaf]
            err += float(cmass[leaf] @ e[leaf])
        words, mass = words[~leaf], cmass[~leaf]
    return out, err


# ---------------------------------------------------------------------------
# disintegration audit
# ---------------------------------------------------------------------------


@dataclass
class DisintegrationReport:
    """Per-frequency comparison of the direct transform and its disintegration.

    For each frequency: ``direct`` with ``direct_error``; the Monte Carlo
    ``reconstruction`` of ``E_Q[exp(2 pi i <xi', x_beta>) mu_beta^(xi_fib)]``
    with 3-sigma ``band`` and closure ``closure``; ``abs_mean`` (the mean of
    ``|mu_beta^(xi_fib)|``) with its band; the chosen fibre ``axis``.
    """

    xi: np.ndarray
    axis: np.ndarray
    direct: np.ndarray
    direct_error: np.ndarray
    reconstruction: np.ndarray
    band: np.ndarray
    closure: np.ndarray
    abs_mean: np.ndarray
    abs_band: np.ndarray
    n_samples: int

    @property
    def agree(self) -> np.ndarray:
        gap = np.abs(self.direct - self.reconstruction)
        return gap <= self.band + self.closure + self.direct_error

    @property
    def inequality(self) -> np.ndarray:
        return np.abs(self.direct) <= self.abs_mean + self.abs_band + self.closure + self.direct_error

    def rows(self):
        for i in range(len(self.xi)):
            yield {"xi": self.xi[i].tolist(), "axis": int(self.axis[i]),
                   "direct_re": float(self.direct[i].real), "direct_im": float(self.direct[i].imag),
                   "recon_re": float(self.reconstruction[i].real),
                   "recon_im": float(self.reconstruction[i].imag), "band": float(self.band[i]),
                   "abs_mean": float(self.abs_mean[i]), "agree": bool(self.agree[i]),
                   "inequality": bool(self.inequality[i])}


def disintegration_check(ifs: RestrictedProductIFS, xi, n_samples: int = 10_000, seed: int = 0,
                         fibre_depth: int = 10, prefix: int = 48, direct_tol: float = 5e-3,
                         chunk: int = 64) -> DisintegrationReport:
    """Audit ``mu = int mu_beta x delta_{x_beta} dQ`` on its Fourier side.

    Each frequency uses as fibre the coordinate where ``|xi_i|`` is largest
    (the permutation is recorded in ``axis``).  The same ``beta`` samples
    are reused for every frequency with the same fibre coordinate.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    axes = np.argmax(np.abs(xi), axis=1)
    direct, derr = product_fourier(ifs, xi, direct_tol)
    K = len(xi)
    recon = np.zeros(K, dtype=complex)
    band = np.zeros(K)
    closure = np.zeros(K)
    amean = np.zeros(K)
    aband = np.zeros(K)
    for axis in np.unique(axes):
        sel = np.nonzero(axes == axis)[0]
        data = project_alphabet(ifs, int(axis), check=False)
        betas = sample_beta(data, seed + 7919 * int(axis), max(prefix, fibre_depth), n_samples)
        fib = xi[sel, axis]
        rest = np.delete(xi[sel], axis, axis=1)
        s1 = np.zeros(len(sel), dtype=complex)
        s2 = np.zeros(len(sel))
        a1 = np.zeros(len(sel))
        a2 = np.zeros(len(sel))
        cl = np.zeros(len(sel))
        for s0 in range(0, n_samples, chunk):
            bb = betas[s0:s0 + chunk]
            xb = data.base_point(bb)
            lo, hi, mass = _fibre_leaves(data, bb[:, :fibre_depth], fibre_depth)
            mid = 0.5 * (lo + hi)
            # (chunk, K') transforms of the fibre measures
            ft = np.einsum("nw,knw->nk", mass, np.exp(2j * math.pi * fib[:, None, None] * mid[None]))
            cl = np.maximum(cl, math.pi * np.abs(fib) * float((mass * (hi - lo)).sum(axis=1).max()))
            z = np.exp(2j * math.pi * (xb @ rest.T)) * ft
            s1 += z.sum(axis=0)
            s2 += (np.abs(z) ** 2).sum(axis=0)
            a1 += np.abs(ft).sum(axis=0)
            a2 += (np.abs(ft) ** 2).sum(axis=0)
        n = n_samples
        mean = s1 / n
        var = np.maximum(s2 / n - np.abs(mean) ** 2, 0.0)
        am = a1 / n
        avar = np.maximum(a2 / n - am**2, 0.0)
        base_err = 2 * math.pi * np.linalg.norm(rest, axis=1) * data.base_error(betas.shape[1])
        recon[sel] = mean
        band[sel] = 3 * np.sqrt(var / n)
        closure[sel] = cl + base_err
        amean[sel] = am
        aband[sel] = 3 * np.sqrt(avar / n)
    return DisintegrationReport(xi, axes, direct, np.full(K, derr), recon, band, closure, amean,
                                aband, n_samples)


# ---------------------------------------------------------------------------
# random transfer operators
# ---------------------------------------------------------------------------


@dataclass
class RandomDecayReport:
    """Decay of ``L^(sigma^{n-1} beta) ... L^(beta) 1`` for sampled ``beta``.

    ``sup[j, i, n]`` is the sup norm for ``b = b_list[j]``, sample ``i`` and
    step ``n``; ``rho[j, i, w]`` the rate fitted over ``n <= windows[w]``;
    ``exceptional[j, w]`` the fraction of samples with ``rho >= 1 - margin``.
    """

    b_list: np.ndarray
    windows: np.ndarray
    sup: np.ndarray
    rho: np.ndarray
    exceptional: np.ndarray
    margin: float

    def rows(self):
        for j, b in enumerate(self.b_list):
            for i in range(self.rho.shape[1]):
                for w, nw in enumerate(self.windows):
                    yield {"b": float(b), "sample": i, "n": int(nw), "rho": float(self.rho[j, i, w])}


def _fit_rho(y: np.ndarray, upto: int) -> float:
    n = np.arange(upto + 1, dtype=float)
    v = y[:upto + 1]
    keep = v > 1e-13
    n, v = n[keep], np.log(v[keep])
    lo = len(n) // 3
    n, v = n[lo:], v[lo:]
    if len(n) < 2:
        return 0.0
    return float(np.exp(np.polyfit(n, v, 1)[0]))


def random_norm_decay(data: DisintegrationData, n_max: int, b_list: Sequence[float], n_betas: int,
                      seed: int, nodes: int = 2001, margin: float = 0.02,
                      windows: Sequence[int] | None = None, require_uni: bool = True) -> RandomDecayReport:
    """Measure decay of random compositions of fibre transfer operators.

    ``L^(beta) h(x) = sum_{a in A_{b_1}} m_beta([a]) |f_a'(x)|^(ib) h(f_a(x))``
    acts on functions on the fibre domain sampled at ``nodes`` points with
    linear interpolation.

    Raises
    ------
    HypothesisViolation
        When ``require_uni`` is set and no fibre family is non-integrable.
    """
    if require_uni:
        sysm_ok = False
        for fam in data.fibres:
            if len(fam) >= 2:
                from .transfer import uni_margin

                sysm = data.fibre_component.as_system(fam)
                if uni_margin(sysm, 3, [0.5], directions=1).eps0 > 1e-6:
                    sysm_ok = True
                    break
        if not sysm_ok:
            raise HypothesisViolation(3, data.axis, "no fibre family is non-integrable")
    comp = data.fibre_component
    x = np.linspace(comp.domain[0], comp.domain[1], nodes)
    pushed = [[comp.maps[a](x) for a in fam] for fam in data.fibres]
    logd = [[np.log(np.abs(comp.maps[a].df(x))) for a in fam] for fam in data.fibres]
    betas = sample_beta(data, seed, n_max, n_betas)
    b_list = np.asarray(list(b_list), dtype=float)
    windows = np.array(sorted(set(windows or [max(3, n_max // 3), max(4, 2 * n_max // 3), n_max])))
    sup = np.zeros((len(b_list), n_betas, n_max + 1))
    for j, b in enumerate(b_list):
        phases = [[np.exp(1j * b * ld) for ld in row] for row in logd]
        for i in range(n_betas):
            h = np.ones(nodes, dtype=complex)
            sup[j, i, 0] = 1.0
            for n in range(n_max):
                s = betas[i, n]
                new = np.zeros(nodes, dtype=complex)
                for w, ph, y in zip(data.weights[s], phases[s], pushed[s]):
                    new += w * ph * (np.interp(y, x, h.real) + 1j * np.interp(y, x, h.imag))
                h = new
                sup[j, i, n + 1] = np.abs(h).max()
    rho = np.zeros((len(b_list), n_betas, len(windows)))
    for j in range(len(b_list)):
        for i in range(n_betas):
            for w, nw in enumerate(windows):
                rho[j, i, w] = _fit_rho(sup[j, i], int(nw))
    exceptional = (rho >= 1 - margin).mean(axis=1)
    return RandomDecayReport(b_list, windows, sup, rho, exceptional, margin)


def fiber_concentration_profile(data: DisintegrationData, eps_grid: Sequence[float], n_betas: int = 32,
                                seed: int = 0, depth: int = 12) -> dict:
    """Largest ``mu_beta``-mass of an interval of radius ``eps`` over sampled ``beta``.

    Masses are taken from depth-``depth`` cylinders (each counted when it
    meets the interval), giving upper bounds.  A power law ``C eps^alpha``
    is fitted to the envelope.
    """
    eps = np.asarray(list(eps_grid), dtype=float)
    betas = sample_beta(data, seed, depth, n_betas)
    env = np.zeros(len(eps))
    for bb in betas:
        lo, hi, mass = _fibre_leaves(data, bb[None, :], depth)
        lo, hi, mass = lo[0], hi[0], mass[0]
        keep = mass > 0
        lo, hi, mass = lo[keep], hi[keep], mass[keep]
        order = np.argsort(lo)
        lo, hi, mass = lo[order], hi[order], mass[order]
        cum = np.concatenate([[0.0], np.cumsum(mass)])
        for k, e in enumerate(eps):
            # window [x - e, x + e] anchored at each cylinder's left end
            right = np.searchsorted(lo, lo + 2 * e, side="right")
            env[k] = max(env[k], float((cum[right] - cum[np.arange(len(lo))]).max()))
    A = np.stack([np.ones(len(eps)), np.log(eps)], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(env), rcond=None)
    res = float(np.sqrt(np.mean((A @ coef - np.log(env)) ** 2)))
    return {"eps": eps, "mass": env, "C": float(np.exp(coef[0])), "alpha": float(coef[1]),
            "residual": res}
