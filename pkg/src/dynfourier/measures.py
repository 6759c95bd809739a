"""Self-similar and Gibbs measures on the attractor of a conformal IFS.

Every measure built here is a (block) Markov measure on the symbolic
space.  A depth-``k`` block chain has states given by admissible words of
length ``k``; the state ``alpha[i:i+k]`` moves to ``alpha[i+1:i+k+1]``.
Order one recovers ordinary Markov measures, which include Bernoulli
(self-similar) measures and Gibbs measures of potentials that are constant
on first-level cylinders.  Potentials depending on the point are handled by
freezing them at anchor points of depth-``k`` cylinders; the resulting
measure approximates the true Gibbs measure up to a multiplicative constant
that is reported alongside every cylinder mass.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from .ifs import IFSSystem, InadmissibleWord, SubshiftMatrix, apply_words, word_boxes

__all__ = [
    "EmptyAdmissibleSet",
    "NonPrimitiveSubshift",
    "probability_vector",
    "GibbsPotential",
    "MarkovMeasure",
    "RescaledRestriction",
    "Bracket",
    "self_similar",
    "gibbs_measure",
    "pressure_estimate",
    "normalize_potential",
    "cylinder_mass",
    "sample",
    "ball_mass_estimate",
    "slab_ball_mass",
    "NonConcentrationProfile",
    "affine_nonconcentration_profile",
    "perron_data",
]


class EmptyAdmissibleSet(ValueError):
    """Raised when no admissible word of the requested length exists."""


class NonPrimitiveSubshift(ValueError):
    """Raised when a weighted adjacency matrix is not primitive."""


def probability_vector(p, k: int | None = None) -> np.ndarray:
    """Validate a probability vector: positive entries summing to one."""
    p = np.array(p, dtype=float).ravel()
    if k is not None and p.size != k:
        raise ValueError(f"expected {k} weights, got {p.size}")
    if not np.all(np.isfinite(p)) or np.any(p <= 0) or abs(p.sum() - 1) > 1e-12:
        raise ValueError("probability vector needs positive entries summing to 1")
    p.setflags(write=False)
    return p


def perron_data(B: np.ndarray):
    """Perron eigenvalue and positive left/right eigenvectors of ``B``.

    Returns
    -------
    rho : float
    left : ndarray
        ``left @ B = rho * left``, normalised to sum one.
    right : ndarray
        ``B @ right = rho * right``, normalised to sum one.
    """
    vals, vl, vr = linalg.eig(B, left=True, right=True)
    i = int(np.argmax(vals.real))
    rho = float(vals[i].real)
    left = np.abs(vl[:, i].real)
    right = np.abs(vr[:, i].real)
    # A few power-iteration polishing steps tighten the eigenvectors.
    for _ in range(3):
        left = left @ B / rho
        right = B @ right / rho
    return rho, left / left.sum(), right / right.sum()


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GibbsPotential:
    """A potential ``psi`` through its weights ``w_a(x) = exp(psi(f_a x))``.

    Three grades are supported.

    ``G0``
        Locally constant: ``values[a]`` is ``log w_a``.  A ``(k, k)`` array
        ``values[a, b]`` gives weights that also depend on the first symbol
        ``b`` of the point, which is the form taken by normalised Markov
        potentials.
    ``G1``
        Geometric: ``log w_a(x) = s log|lambda_a(x)|``.
    ``G2``
        ``log w_a(x) = func(f_a(x))`` for a user function with gradient
        ``grad``.

    ``correction`` optionally adds ``log h(f_a x) - log h(x) - pressure`` with
    ``log h`` given by a callable; this is how normalised G1/G2 potentials
    are represented.
    """

    grade: str
    values: np.ndarray | None = None
    s: float | None = None
    func: Callable | None = None
    grad: Callable | None = None
    correction: Callable | None = None
    pressure: float = 0.0
    residual: float = 0.0

    def __post_init__(self):
        if self.grade not in ("G0", "G1", "G2"):
            raise ValueError(f"unknown grade {self.grade!r}")
        if self.grade == "G0":
            if self.values is None:
                raise ValueError("G0 potentials need values")
            v = np.array(self.values, dtype=float)
            v.setflags(write=False)
            object.__setattr__(self, "values", v)
        if self.grade == "G1" and self.s is None:
            raise ValueError("G1 potentials need the exponent s")
        if self.grade == "G2" and self.func is None:
            raise ValueError("G2 potentials need a function")

    @classmethod
    def bernoulli(cls, p) -> "GibbsPotential":
        return cls("G0", np.log(probability_vector(p)))

    @property
    def pairwise(self) -> bool:
        return self.grade == "G0" and self.values.ndim == 2

    def log_weight(self, system: IFSSystem, a: int, x, first=None) -> np.ndarray:
        """``log w_a(x)`` for points ``x`` of shape ``(N, d)``.

        ``first`` gives the first symbol of each point's coding and is only
        needed by pairwise G0 potentials.
        """
        x = np.asarray(x, dtype=float).reshape(-1, system.dim)
        if self.grade == "G0":
            if self.values.ndim == 1:
                out = np.full(len(x), self.values[a])
            else:
                if first is None:
                    raise ValueError("pairwise potentials need the first symbol of x")
                out = self.values[a, np.broadcast_to(first, (len(x),))].astype(float)
        elif self.grade == "G1":
            lam, _ = system.maps[a].conformal(x)
            out = self.s * np.log(np.abs(lam))
        else:
            out = np.asarray(self.func(system.maps[a](x)), dtype=float).reshape(len(x))
        if self.correction is not None:
            out = out + self.correction(system.maps[a](x)) - self.correction(x) - self.pressure
        return out

    def grad_log_weight(self, system: IFSSystem, a: int, x) -> np.ndarray:
        """Gradient in ``x`` of ``log w_a(x)``; the correction term is ignored."""
        x = np.asarray(x, dtype=float).reshape(-1, system.dim)
        if self.grade == "G0":
            return np.zeros_like(x)
        m = system.maps[a]
        if self.grade == "G1":
            return self.s * m.grad_log_lambda(x)
        lam, O = m.conformal(x)
        J = lam[:, None, None] * O
        g = self._grad(m(x))
        return np.einsum("nji,nj->ni", J, g)

    def _grad(self, y):
        if self.grad is not None:
            return np.asarray(self.grad(y), dtype=float).reshape(y.shape)
        h = 1e-6
        out = np.empty_like(y)
        for j in range(y.shape[1]):
            e = np.zeros(y.shape[1])
            e[j] = h
            out[:, j] = (np.asarray(self.func(y + e)) - np.asarray(self.func(y - e))) / (2 * h)
        return out

    def gradient_defect(self, dim: int, probes: int = 64, seed: int = 0) -> float:
        """Largest gap between ``grad`` and central differences of ``func``."""
        if self.grade != "G2" or self.grad is None:
            return 0.0
        y = 0.05 + 0.9 * np.random.default_rng(seed).random((probes, dim))
        h = 1e-5
        fd = np.empty_like(y)
        for j in range(dim):
            e = np.zeros(dim)
            e[j] = h
            fd[:, j] = (np.asarray(self.func(y + e)) - np.asarray(self.func(y - e))) / (2 * h)
        return float(np.abs(fd - self._grad(y)).max())


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Bracket:
    """A closed interval ``[lo, hi]`` with a flag for loose results."""

    lo: float
    hi: float
    flagged: bool = False

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def __iter__(self):
        return iter((self.lo, self.hi))


class MarkovMeasure:
    """A block-Markov measure on the symbolic space of an IFS, pushed to ``X``.

    Parameters
    ----------
    system : IFSSystem
    states : ndarray of int, shape (M, k)
        The admissible blocks of length ``k``.
    transition : ndarray, shape (M, M)
        Row-stochastic forward transition matrix between blocks.
    initial : ndarray, shape (M,)
        Stationary law of the first block.
    gibbs_constant : float
        Multiplicative uncertainty ``C >= 1`` of cylinder masses.
    label : str
        Free-form description.
    """

    def __init__(self, system: IFSSystem, states, transition, initial,
                 gibbs_constant: float = 1.0, label: str = ""):
        self.system = system
        self.states = np.asarray(states, dtype=int).reshape(len(initial), -1)
        self.order = self.states.shape[1]
        self.P = np.asarray(transition, dtype=float)
        self.m = np.asarray(initial, dtype=float)
        self.gibbs_constant = float(gibbs_constant)
        self.label = label
        self._index = {tuple(s): i for i, s in enumerate(self.states)}
        self.letter = self.states[:, 0]
        self._cum = np.cumsum(self.P, axis=1)
        self._cum[:, -1] = 1.0
        self._cum_m = np.cumsum(self.m)
        self._cum_m[-1] = 1.0

    # -- structure --------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.system.dim

    @property
    def is_bernoulli(self) -> bool:
        """True when symbols are i.i.d., i.e. every row of ``P`` equals ``m``."""
        return self.order == 1 and np.allclose(self.P, self.m[None, :], atol=1e-14, rtol=0)

    @property
    def exact(self) -> bool:
        return self.gibbs_constant == 1.0

    @property
    def quasi_bernoulli_constant(self) -> float:
        """Constant ``C`` in ``C^-1 <= mu(ab)/(mu(a)mu(b)) <= C`` for order one chains."""
        if self.order != 1:
            return self.gibbs_constant**3 * self._qb_block()
        mask = self.system.shift.matrix > 0
        ratio = self.P[mask] / np.broadcast_to(self.m[None, :], self.P.shape)[mask]
        return float(max(ratio.max(), 1 / ratio.min()))

    def _qb_block(self) -> float:
        mask = self.P > 0
        ratio = self.P[mask] / np.broadcast_to(self.m[None, :], self.P.shape)[mask]
        return float(max(ratio.max(), 1 / ratio.min()))

    # -- masses -----------------------------------------------------------
    def _state_path(self, word: Sequence[int]) -> list[int]:
        k = self.order
        try:
            return [self._index[tuple(word[i:i + k])] for i in range(len(word) - k + 1)]
        except KeyError:
            raise InadmissibleWord(f"word {list(word)} is not admissible") from None

    def mass(self, word: Sequence[int]) -> float:
        """Central (Markov-chain) mass of the cylinder of ``word``."""
        word = tuple(int(a) for a in word)
        self.system.check_word(word)
        k = self.order
        if len(word) < k:
            sel = np.all(self.states[:, :len(word)] == np.array(word, dtype=int), axis=1)
            return float(self.m[sel].sum())
        path = self._state_path(word)
        out = self.m[path[0]]
        for s, t in zip(path[:-1], path[1:]):
            out *= self.P[s, t]
        return float(out)

    def masses(self, words: np.ndarray) -> np.ndarray:
        """Vectorised central masses for an ``(M, n)`` array with ``n >= order``."""
        words = np.asarray(words, dtype=int)
        M, n = words.shape
        k = self.order
        if n < k:
            return np.array([self.mass(w) for w in words])
        code = self._codes(words)
        out = self.m[code[:, 0]].copy()
        for i in range(code.shape[1] - 1):
            out *= self.P[code[:, i], code[:, i + 1]]
        return out

    def _codes(self, words: np.ndarray) -> np.ndarray:
        k = self.order
        K = self.system.k
        lookup = np.full(K**k, -1, dtype=int)
        lookup[(self.states * K ** np.arange(k - 1, -1, -1)).sum(axis=1)] = np.arange(len(self.states))
        n = words.shape[1]
        codes = np.empty((len(words), n - k + 1), dtype=int)
        for i in range(n - k + 1):
            codes[:, i] = lookup[(words[:, i:i + k] * K ** np.arange(k - 1, -1, -1)).sum(axis=1)]
        if np.any(codes < 0):
            raise InadmissibleWord("batch contains inadmissible words")
        return codes

    def cylinder_mass(self, word: Sequence[int]) -> Bracket:
        c = self.mass(word)
        C = self.gibbs_constant
        return Bracket(c / C, min(1.0, c * C))

    # -- sampling -----------------------------------------------------------
    def sample_depth(self, precision: float = 1e-16) -> int:
        theta = self.system.contraction
        return int(np.ceil(np.log(precision / np.sqrt(self.dim)) / np.log(theta))) + 1

    def sample_symbols(self, rng: np.random.Generator, n: int, depth: int,
                       start_state: np.ndarray | None = None) -> np.ndarray:
        """Draw ``n`` symbol strings of length ``depth`` from the chain."""
        k = self.order
        steps = max(depth - k + 1, 1)
        states = np.empty((n, steps), dtype=int)
        if start_state is None:
            states[:, 0] = np.searchsorted(self._cum_m, rng.random(n), side="right")
        else:
            states[:, 0] = start_state
        for i in range(1, steps):
            u = rng.random(n)
            states[:, i] = (u[:, None] >= self._cum[states[:, i - 1]]).sum(axis=1)
        syms = np.concatenate([self.states[states[:, 0]], self.states[states[:, 1:], -1]], axis=1)
        return syms[:, :depth]

    def sample(self, seed: int, n: int) -> np.ndarray:
        """``n`` i.i.d. points, deterministic in ``seed``."""
        rng = np.random.default_rng(seed)
        syms = self.sample_symbols(rng, n, self.sample_depth())
        return apply_words(self.system, syms, self.system.reference_point())

    # -- Fourier helpers ------------------------------------------------------
    def state_barycenters(self) -> np.ndarray:
        """Conditional means ``E[x | first block = s]`` for every state.

        Solves the linear system ``b_s = sum_t P[s, t] f_{s_0}(b_t)`` for
        similitude systems; other systems fall back to Monte Carlo.
        """
        sysm = self.system
        M, d = len(self.states), self.dim
        if sysm.is_similitude:
            # b_s = r O sum_t P_st b_t + t_{a}
            A = np.zeros((M * d, M * d))
            rhs = np.zeros(M * d)
            for s in range(M):
                f = sysm.maps[self.letter[s]]
                for t in np.nonzero(self.P[s])[0]:
                    A[s * d:(s + 1) * d, t * d:(t + 1) * d] -= self.P[s, t] * f.linear
                A[s * d:(s + 1) * d, s * d:(s + 1) * d] += np.eye(d)
                rhs[s * d:(s + 1) * d] = f.translation
            return np.linalg.solve(A, rhs).reshape(M, d)
        rng = np.random.default_rng(12345)
        out = np.empty((M, d))
        depth = self.sample_depth()
        for s in range(M):
            syms = self.sample_symbols(rng, 4000, depth, start_state=s)
            out[s] = apply_words(sysm, syms, sysm.reference_point()).mean(axis=0)
        return out

    def __repr__(self):
        return f"MarkovMeasure(order={self.order}, states={len(self.states)}, label={self.label!r})"


@dataclass(frozen=True, eq=False)
class RescaledRestriction:
    """The normalised restriction of ``parent`` to ``X_beta``, scaled by ``scale``.

    Points are distributed as ``scale * x`` with ``x`` drawn from
    ``parent`` conditioned on the cylinder of ``beta``.
    """

    parent: MarkovMeasure
    beta: tuple
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(int(a) for a in self.beta))
        if len(self.beta) < self.parent.order:
            raise ValueError("beta must be at least as long as the chain order")
        self.parent.system.check_word(self.beta)

    @property
    def anchor(self) -> np.ndarray:
        """``x_beta = f_beta(x_ref)``, a fixed point of ``X_beta``."""
        sysm = self.parent.system
        return apply_words(sysm, np.array([self.beta]), sysm.reference_point())[0]

    def diameter_bound(self) -> float:
        lo, hi = word_boxes(self.parent.system, np.array([self.beta]))
        return float(self.scale * np.linalg.norm(hi - lo))

    def sample(self, seed: int, n: int) -> np.ndarray:
        par = self.parent
        rng = np.random.default_rng(seed)
        last = par._index[self.beta[-par.order:]]
        depth = par.sample_depth()
        tail = par.sample_symbols(rng, n, depth, start_state=last)[:, par.order:]
        syms = np.concatenate([np.broadcast_to(self.beta, (n, len(self.beta))), tail], axis=1)
        return self.scale * apply_words(par.system, syms, par.system.reference_point())


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------


def self_similar(system: IFSSystem, p) -> MarkovMeasure:
    """The stationary measure ``mu = sum_a p_a f_a mu`` on the full shift."""
    if system.subshift is not None and not system.subshift.is_full:
        raise ValueError("self-similar measures need the full shift; use gibbs_measure")
    p = probability_vector(p, system.k)
    states = np.arange(system.k)[:, None]
    return MarkovMeasure(system, states, np.tile(p, (system.k, 1)), p.copy(), label="self-similar")


def _anchors(system: IFSSystem, blocks: np.ndarray) -> np.ndarray:
    return apply_words(system, blocks, system.reference_point())


def _block_weights(system: IFSSystem, potential: GibbsPotential, depth: int):
    """Weighted adjacency between depth-``depth`` blocks.

    ``B[s, t] = w_{s_0}(x_t)`` when ``s = s_0 + t[:-1]`` is admissible, where
    ``x_t`` is the anchor of the block ``t``.
    """
    blocks = system.words(depth)
    M = len(blocks)
    K = system.k
    idx = {tuple(b): i for i, b in enumerate(blocks)}
    anchors = _anchors(system, blocks)
    B = np.zeros((M, M))
    for t, blk in enumerate(blocks):
        for a in range(K):
            if not system.shift.allows(a, blk[0]):
                continue
            s = idx.get((a,) + tuple(blk[:-1]))
            if s is None:
                continue
            lw = potential.log_weight(system, a, anchors[t:t + 1], first=np.array([blk[0]]))
            B[s, t] = np.exp(lw[0])
    return blocks, B


def _chain_from_weights(B: np.ndarray):
    """Normalise block weights and return the forward chain ``(P, m, rho, h)``."""
    if B.shape[0] > 1:
        Q = (B > 0).astype(float)
        R = np.linalg.matrix_power(Q, min(B.shape[0] ** 2, 64))
        if not (R > 0).all():
            raise NonPrimitiveSubshift("weighted adjacency matrix is not primitive")
    rho, h, _ = perron_data(B)
    Wn = B * h[:, None] / (rho * h[None, :])
    vals, vecs = np.linalg.eig(Wn)
    i = int(np.argmin(np.abs(vals - 1)))
    m = np.abs(vecs[:, i].real)
    m /= m.sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        P = np.where(Wn > 0, Wn * m[None, :] / m[:, None], 0.0)
    P /= P.sum(axis=1, keepdims=True)
    return P, m, rho, h, Wn


def gibbs_measure(system: IFSSystem, potential: GibbsPotential, depth: int = 1) -> MarkovMeasure:
    """Gibbs measure of ``potential`` via a depth-``depth`` block chain.

    For G0 potentials and ``depth = 1`` the result is exact.  Otherwise the
    potential is frozen at block anchors and the reported Gibbs constant
    bounds the resulting multiplicative error.
    """
    if potential.grade == "G0" and not potential.pairwise:
        depth = 1
    blocks, B = _block_weights(system, potential, depth)
    P, m, rho, h, _ = _chain_from_weights(B)
    C = 1.0
    if potential.grade != "G0":
        C = _gibbs_inflation(system, potential, depth)
    return MarkovMeasure(system, blocks, P, m, gibbs_constant=C, label=f"gibbs-{potential.grade}")


def _gibbs_inflation(system: IFSSystem, potential: GibbsPotential, depth: int) -> float:
    """``exp(2 Lip diam / (1 - theta))`` bounding anchor-freezing errors."""
    x = np.random.default_rng(7).random((256, system.dim))
    lip = max(float(np.linalg.norm(potential.grad_log_weight(system, a, x), axis=1).max())
              for a in range(system.k))
    _, lo, hi = (None, *word_boxes(system, system.words(depth)))
    diam = float(np.linalg.norm(hi - lo, axis=1).max())
    theta = system.contraction
    return float(np.exp(2 * lip * diam / (1 - theta)))


# ---------------------------------------------------------------------------
# pressure and normalisation
# ---------------------------------------------------------------------------


def _probe_grid(d: int, per_axis: int = 9) -> np.ndarray:
    g = np.linspace(0.0, 1.0, per_axis)
    return np.stack(np.meshgrid(*([g] * d), indexing="ij"), -1).reshape(-1, d)


def pressure_estimate(system: IFSSystem, subshift: SubshiftMatrix | None,
                      potential: GibbsPotential, n: int, probes: np.ndarray | None = None) -> float:
    """``(1/n) log sum_alpha sup_x w_alpha(x)`` over admissible length-``n`` words.

    G0 potentials are evaluated exactly: for the pairwise form the supremum
    is over the symbol following the word, taken outside the sum.  G1/G2
    potentials use a probe grid of ``[0, 1]^d``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    shift = subshift if subshift is not None else system.shift
    if potential.grade == "G0":
        V = potential.values
        A = shift.matrix.astype(float)
        if V.ndim == 1:
            # vec[b]: total weight of the words of the current length ending in b
            vec = np.exp(V)
            for _ in range(n - 1):
                vec = np.exp(V) * (vec @ A)
            total = float(vec.sum())
        else:
            # vec[b]: total weight of the words that may be followed by b
            B = np.exp(V) * A
            vec = np.ones(shift.k)
            for _ in range(n):
                vec = B.T @ vec
            total = float(vec.max())
        if total <= 0:
            raise EmptyAdmissibleSet(f"no admissible words of length {n}")
        return float(np.log(total) / n)
    words = shift.words(n)
    if len(words) == 0:
        raise EmptyAdmissibleSet(f"no admissible words of length {n}")
    x = _probe_grid(system.dim) if probes is None else np.asarray(probes, float)
    best = np.full(len(words), -np.inf)
    for chunk in np.array_split(np.arange(len(x)), max(1, len(x) // 16)):
        pts = x[chunk]
        M = len(words)
        rep_w = np.repeat(words, len(pts), axis=0)
        y = np.tile(pts, (M, 1))
        lw = np.zeros(len(rep_w))
        for i in range(n - 1, -1, -1):
            col = rep_w[:, i]
            for a in np.unique(col):
                sel = col == a
                lw[sel] += potential.log_weight(system, a, y[sel])
                y[sel] = system.maps[a](y[sel])
        best = np.maximum(best, lw.reshape(M, len(pts)).max(axis=1))
    top = best.max()
    return float((top + np.log(np.exp(best - top).sum())) / n)


def normalize_potential(system: IFSSystem, subshift: SubshiftMatrix | None,
                        potential: GibbsPotential, depth: int = 1) -> GibbsPotential:
    """Conjugate ``potential`` so that the untwisted transfer operator fixes 1.

    G0 potentials are normalised exactly from Perron-Frobenius data of the
    weighted adjacency matrix; the result is a pairwise G0 potential (or a
    per-symbol one when the shift is full).  G1/G2 potentials are normalised
    from a depth-``depth`` block approximation with the eigenfunction frozen
    on cylinders; the worst defect of ``sum_a w_a(x) = 1`` on probe points is
    stored in ``residual``.

    Raises
    ------
    NonPrimitiveSubshift
    """
    shift = subshift if subshift is not None else system.shift
    if shift is not system.shift:
        system = IFSSystem(system.maps, system.alphabet, shift, system.boxes)
    if potential.grade == "G0":
        V = potential.values
        E = np.exp(V) if V.ndim == 2 else np.exp(V)[:, None] * np.ones((1, shift.k))
        B = E * shift.matrix
        _, _, rho, h, Wn = _chain_from_weights(B)
        if shift.is_full and V.ndim == 1:
            return GibbsPotential("G0", V - np.log(rho))
        with np.errstate(divide="ignore"):
            return GibbsPotential("G0", np.where(shift.matrix > 0, np.log(Wn), -np.inf))
    blocks, B = _block_weights(system, potential, depth)
    _, _, rho, h, _ = _chain_from_weights(B)
    anchors = _anchors(system, blocks)
    logh = np.log(h)
    from scipy.spatial import cKDTree

    tree = cKDTree(anchors)

    def correction(y):
        _, i = tree.query(np.asarray(y, float).reshape(-1, system.dim))
        return logh[i]

    out = GibbsPotential(potential.grade, potential.values, potential.s, potential.func,
                         potential.grad, correction=correction, pressure=float(np.log(rho)))
    probe = _anchors(system, system.words(depth + 2))
    total = np.zeros(len(probe))
    for a in range(system.k):
        total += np.exp(out.log_weight(system, a, probe))
    res = float(np.abs(total - 1).max()) if shift.is_full else float("nan")
    object.__setattr__(out, "residual", res)
    return out


# ---------------------------------------------------------------------------
# module-level wrappers
# ---------------------------------------------------------------------------


def cylinder_mass(measure: MarkovMeasure, word: Sequence[int]) -> Bracket:
    """Mass bracket of the cylinder ``X_word``."""
    return measure.cylinder_mass(word)


def sample(measure, seed: int, n: int) -> np.ndarray:
    """Draw ``n`` points from ``measure`` deterministically in ``seed``."""
    return measure.sample(seed, n)


# ---------------------------------------------------------------------------
# ball and slab masses
# ---------------------------------------------------------------------------


def _region_mass(measure: MarkovMeasure, inside: Callable, outside: Callable,
                 rel_tol: float = 0.1, max_depth: int = 60, max_nodes: int = 200_000) -> Bracket:
    """Bracket the mass of a region by cylinder refinement.

    ``inside(lo, hi)`` must return true only for boxes contained in the
    region and ``outside(lo, hi)`` only for boxes disjoint from it.
    Undecided cylinders are refined, heaviest first.
    """
    sysm = measure.system
    C = measure.gibbs_constant
    lo_mass = 0.0
    heap: list = []
    counter = 0
    start = sysm.words(max(1, measure.order))
    masses = measure.masses(start)
    blo, bhi = word_boxes(sysm, start)
    und = 0.0
    for w, mass, l, h in zip(start, masses, blo, bhi):
        if outside(l[None], h[None])[0]:
            continue
        if inside(l[None], h[None])[0]:
            lo_mass += mass
            continue
        heapq.heappush(heap, (-mass, counter, tuple(w)))
        counter += 1
        und += mass
    flagged = False
    nodes = 0
    while heap:
        hi_mass = lo_mass + und
        if hi_mass - lo_mass <= rel_tol * max(hi_mass, 1e-300):
            break
        neg, _, w = heapq.heappop(heap)
        und -= -neg
        if len(w) >= max_depth or nodes > max_nodes:
            und += -neg
            flagged = True
            heapq.heappush(heap, (neg, counter, w))
            counter += 1
            break
        children = np.array([w + (b,) for b in range(sysm.k) if sysm.shift.allows(w[-1], b)])
        cm = measure.masses(children)
        clo, chi = word_boxes(sysm, children)
        ins = inside(clo, chi)
        outs = outside(clo, chi)
        nodes += len(children)
        for c, mass, i_, o_ in zip(children, cm, ins, outs):
            if o_:
                continue
            if i_:
                lo_mass += mass
            else:
                heapq.heappush(heap, (-mass, counter, tuple(c)))
                counter += 1
                und += mass
    und = max(und, 0.0)
    return Bracket(lo_mass / C, min(1.0, (lo_mass + und) * C), flagged)


def _corners(lo, hi):
    d = lo.shape[1]
    idx = np.array(np.meshgrid(*([[0, 1]] * d), indexing="ij")).reshape(d, -1).T
    return np.where(idx[None, :, :] == 1, hi[:, None, :], lo[:, None, :])


def _ball_tests(x, r):
    x = np.asarray(x, dtype=float).ravel()

    def inside(lo, hi):
        far = np.maximum(np.abs(lo - x), np.abs(hi - x))
        return np.sqrt((far**2).sum(axis=1)) <= r

    def outside(lo, hi):
        near = np.maximum(0.0, np.maximum(lo - x, x - hi))
        return np.sqrt((near**2).sum(axis=1)) > r

    return inside, outside


def ball_mass_estimate(measure: MarkovMeasure, x, r: float, rel_tol: float = 0.1,
                       max_depth: int = 60) -> Bracket:
    """Bracket ``mu(B(x, r))`` for the closed Euclidean ball.

    The result is flagged when the depth or node cap stops the refinement
    before the relative width reaches ``rel_tol``.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    inside, outside = _ball_tests(x, r)
    return _region_mass(measure, inside, outside, rel_tol, max_depth)


def slab_ball_mass(measure: MarkovMeasure, x, r: float, point, normal, width: float,
                   rel_tol: float = 0.1, max_depth: int = 60) -> Bracket:
    """Bracket the mass of ``B(x, r)`` intersected with a slab.

    The slab is ``{y : |<y - point, normal>| <= width}`` for a unit normal.
    """
    bin_, bout = _ball_tests(x, r)
    point = np.asarray(point, float).ravel()
    normal = np.asarray(normal, float).ravel()
    normal = normal / np.linalg.norm(normal)

    def proj(lo, hi):
        return (_corners(lo, hi) - point) @ normal

    def inside(lo, hi):
        return bin_(lo, hi) & (np.abs(proj(lo, hi)).max(axis=1) <= width)

    def outside(lo, hi):
        p = proj(lo, hi)
        return bout(lo, hi) | (p.min(axis=1) > width) | (p.max(axis=1) < -width)

    return _region_mass(measure, inside, outside, rel_tol, max_depth)


@dataclass
class NonConcentrationProfile:
    """Worst-case slab-to-ball mass ratios and their power-law fit."""

    eps: np.ndarray
    delta: np.ndarray
    C: float
    alpha: float
    residual: float
    flagged: bool
    rows: list = field(default_factory=list)


def _candidate_normals(rng, pool, y, r, d, count):
    normals = [rng.normal(size=d) for _ in range(count)]
    normals += list(np.eye(d))
    if d > 1:
        near = pool[np.linalg.norm(pool - y, axis=1) <= r]
        if len(near) > d:
            cov = np.cov((near - near.mean(axis=0)).T)
            normals.append(np.linalg.eigh(cov)[1][:, 0])
    return [n / np.linalg.norm(n) for n in normals]


def affine_nonconcentration_profile(measure: MarkovMeasure, eps_grid, trials: int, seed: int,
                                    c: float = 1.0, scales: Sequence[int] = (2, 4, 6),
                                    normals_per_trial: int = 4, fail_level: float = 0.5,
                                    rel_tol: float = 0.1) -> NonConcentrationProfile:
    """Empirical non-concentration profile ``delta(eps)``.

    For each trial a centre ``x`` is drawn from the measure, a radius from
    the dyadic grid ``2**-j`` for ``j`` in ``scales``, and hyperplanes are
    taken through a support point of ``B(x, r)`` with random normals plus
    the coordinate normals and, in dimension at least two, the direction of
    least local variance.  ``delta(eps)`` is the largest ratio of the upper
    bracket of ``mu(slab of half-width eps*r ∩ B(x, r))`` to the lower
    bracket of ``mu(B(x, c*r))``.

    The power law ``delta = C eps**alpha`` is fitted by least squares in
    log-log coordinates.  The profile is flagged when ``delta`` at the
    smallest ``eps`` is at least ``fail_level``.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    eps = np.sort(np.asarray(eps_grid, dtype=float))
    d = measure.dim
    pool = measure.sample(seed, 4000)
    delta = np.zeros(len(eps))
    rows = []
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        x = pool[rng.integers(len(pool))]
        r = 2.0 ** -int(rng.choice(scales))
        near = pool[np.linalg.norm(pool - x, axis=1) <= r]
        y = near[rng.integers(len(near))] if len(near) else x
        den = ball_mass_estimate(measure, x, c * r, rel_tol).lo
        if den <= 0:
            continue
        for nvec in _candidate_normals(rng, pool, y, r, d, normals_per_trial):
            for j, e in enumerate(eps):
                num = slab_ball_mass(measure, x, r, y, nvec, e * r, rel_tol).hi
                ratio = min(1.0, num / den)
                rows.append((t, float(r), float(e), ratio))
                delta[j] = max(delta[j], ratio)
    pos = delta > 0
    if pos.sum() >= 2:
        A = np.stack([np.ones(pos.sum()), np.log(eps[pos])], axis=1)
        coef, *_ = np.linalg.lstsq(A, np.log(delta[pos]), rcond=None)
        resid = float(np.sqrt(np.mean((A @ coef - np.log(delta[pos])) ** 2)))
        C, alpha = float(np.exp(coef[0])), float(coef[1])
    else:
        C, alpha, resid = float("nan"), float("nan"), float("nan")
    return NonConcentrationProfile(eps, delta, C, alpha, resid, bool(delta[0] >= fail_level), rows)
