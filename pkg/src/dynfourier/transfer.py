"""Twisted transfer operators, UNI margins and frequency-band masses.

The twisted operator acts on functions on the cylinder set by::

    L_ib h(x) = sum_{a -> x} w_a(x) |lambda_a(x)|^(ib) h(f_a(x))

where ``w_a`` are normalised weights and ``a -> x`` means that ``a`` may
precede the first symbol of ``x``.  Functions are discretised by cylinder
collocation: every admissible depth-``m`` cylinder ``alpha`` carries a
uniform tensor grid of ``q**d`` parameter points ``g`` in ``[0, 1]^d`` and
the physical nodes ``f_alpha(g)``.  Because ``f_a(f_alpha(g)) =
f_{a alpha'}(f_c(g))`` with ``alpha' = alpha[:-1]`` and ``c`` the last symbol
of ``alpha``, every pushed node has a known cylinder and a known parameter
point, so interpolation never has to search.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.special import ndtr

from .ifs import IFSSystem, apply_words
from .measures import GibbsPotential, MarkovMeasure

__all__ = [
    "GridMismatch",
    "BandOutOfRange",
    "WordBudgetExceeded",
    "FunctionGrid",
    "TwistedOperator",
    "apply_transfer",
    "transfer_power",
    "transfer_word_sum",
    "DecayTable",
    "norm_decay",
    "UNIReport",
    "uni_margin",
    "log_lambda_gradients",
    "uni_example_margin",
    "BandMass",
    "band_mass_histogram",
    "frequency_band_mass",
    "valid_c",
]

WORD_BUDGET = 2_000_000


class GridMismatch(ValueError):
    """Raised when a grid and an operator belong to different systems."""


class BandOutOfRange(ValueError):
    """Raised when a band index lies outside ``[|xi|^(1/6), |xi|^(1/3)]``."""


class WordBudgetExceeded(RuntimeError):
    """Raised when a word enumeration would exceed its budget."""


def _check_budget(system: IFSSystem, n: int, budget: int):
    if system.k**n > budget and len(system.words(min(n, 1))) ** n > budget:
        raise WordBudgetExceeded(f"{system.k}^{n} words exceed the budget {budget}")


# ---------------------------------------------------------------------------
# function grids
# ---------------------------------------------------------------------------


def _param_grid(d: int, q: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, q)
    return np.array(list(itertools.product(t, repeat=d)))


@dataclass(eq=False)
class FunctionGrid:
    """A function sampled on depth-``m`` cylinder collocation nodes.

    Attributes
    ----------
    system : IFSSystem
    words : ndarray, shape (M, m)
        Admissible depth-``m`` words, one cylinder each.
    q : int
        Nodes per axis inside each cylinder.
    values : ndarray, shape (M, q**d), complex
    deriv : float
        Majorant of ``sup ||D h||``.
    b : float
        Twist used by :attr:`norm_b`.
    error : float
        Accumulated bound on the gap between the node values and the exact
        iterate they approximate.
    sup_bound : float
        Bound on ``sup |h|`` over the whole domain for the exact iterate.
    """

    system: IFSSystem
    words: np.ndarray
    q: int
    values: np.ndarray
    deriv: float = 0.0
    b: float = 0.0
    error: float = 0.0
    sup_bound: float = float("nan")

    def __post_init__(self):
        if self.sup_bound != self.sup_bound:
            self.sup_bound = float(np.abs(self.values).max()) if self.deriv == 0 else float("inf")

    @classmethod
    def constant(cls, system: IFSSystem, m: int, q: int = 3, value: complex = 1.0,
                 b: float = 0.0) -> "FunctionGrid":
        words = system.words(m)
        vals = np.full((len(words), q**system.dim), complex(value))
        return cls(system, words, q, vals, 0.0, b, 0.0)

    @property
    def m(self) -> int:
        return self.words.shape[1]

    @property
    def params(self) -> np.ndarray:
        return _param_grid(self.system.dim, self.q)

    def nodes(self) -> np.ndarray:
        """Physical node positions, shape ``(M, q**d, d)``."""
        P = self.params
        M, Q = len(self.words), len(P)
        pts = apply_words(self.system, np.repeat(self.words, Q, axis=0), np.tile(P, (M, 1)))
        return pts.reshape(M, Q, self.system.dim)

    @property
    def sup(self) -> float:
        return float(np.abs(self.values).max())

    @property
    def norm_b(self) -> float:
        """``||h||_inf + sup||Dh|| / |b|`` (the derivative term is dropped at ``b = 0``)."""
        return self.sup + (self.deriv / abs(self.b) if self.b else 0.0)

    def compatible(self, other: "FunctionGrid") -> bool:
        return (self.system is other.system and self.q == other.q
                and self.words.shape == other.words.shape and np.array_equal(self.words, other.words))


def _stencil(P: np.ndarray, Y: np.ndarray, q: int):
    """Multilinear interpolation stencils of points ``Y`` on the tensor grid ``P``.

    Returns ``(idx, wts)`` of shape ``(len(Y), 2**d)``.
    """
    d = Y.shape[1]
    t = np.clip(Y, 0.0, 1.0) * (q - 1)
    i0 = np.minimum(np.floor(t).astype(int), q - 2) if q > 1 else np.zeros_like(t, dtype=int)
    fr = t - i0
    strides = q ** np.arange(d - 1, -1, -1)
    idx, wts = [], []
    for corner in itertools.product((0, 1), repeat=d):
        c = np.array(corner)
        idx.append(((i0 + c) * strides).sum(axis=1))
        wts.append(np.prod(np.where(c == 1, fr, 1 - fr), axis=1))
    return np.stack(idx, axis=1), np.stack(wts, axis=1)


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


def _potential_of(source) -> GibbsPotential:
    if isinstance(source, GibbsPotential):
        return source
    if isinstance(source, MarkovMeasure):
        if not source.is_bernoulli:
            raise TypeError("pass the normalised potential for non-Bernoulli measures")
        return GibbsPotential.bernoulli(source.m)
    return GibbsPotential.bernoulli(source)


@dataclass(eq=False)
class TwistedOperator:
    """The operator ``L_ib`` of a system with normalised weights.

    Parameters
    ----------
    system : IFSSystem
    potential : GibbsPotential, MarkovMeasure or array_like
        Normalised potential (pressure zero).  A Bernoulli measure or a
        probability vector gives constant weights.
    b : float
        Twist.
    """

    system: IFSSystem
    potential: object
    b: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.potential = _potential_of(self.potential)

    @property
    def subshift(self):
        return self.system.shift

    def with_b(self, b: float) -> "TwistedOperator":
        op = replace(self, b=float(b), _cache={})
        op._cache = self._cache  # the structure does not depend on b
        return op

    # -- structure --------------------------------------------------------
    def _structure(self, words: np.ndarray, q: int):
        key = (words.shape, q, words.tobytes())
        if key in self._cache:
            return self._cache[key]
        sysm = self.system
        d, k = sysm.dim, sysm.k
        A = sysm.shift.matrix
        M, m = words.shape
        P = _param_grid(d, q)
        Q = len(P)
        index = {tuple(w): i for i, w in enumerate(words)}
        x = apply_words(sysm, np.repeat(words, Q, axis=0), np.tile(P, (M, 1)))
        first = np.repeat(words[:, 0], Q)
        last = words[:, -1]
        # stencil per last letter: f_c(P) in parameter coordinates
        stencils = [_stencil(P, sysm.maps[c](P).reshape(Q, d), q) for c in range(k)]
        rows, cols, base, loglam = [], [], [], []
        logw_all, grad_w = [], 0.0
        for a in range(k):
            ok = A[a, words[:, 0]] > 0
            if not ok.any():
                continue
            tgt = np.array([index.get((a,) + tuple(w[:-1]), -1) for w in words])
            ok &= tgt >= 0
            node_ok = np.repeat(ok, Q)
            lw = self.potential.log_weight(sysm, a, x[node_ok], first=first[node_ok])
            lam, _ = sysm.maps[a].conformal(x[node_ok])
            ll = np.log(np.abs(lam))
            cyl = np.repeat(np.arange(M), Q)[node_ok]
            nodes = np.tile(np.arange(Q), M)[node_ok]
            sidx = np.empty((len(cyl), 2**d), dtype=int)
            swt = np.empty((len(cyl), 2**d))
            for c in range(k):
                sel = last[cyl] == c
                sidx[sel] = stencils[c][0][nodes[sel]]
                swt[sel] = stencils[c][1][nodes[sel]]
            r = np.repeat(cyl * Q + nodes, 2**d)
            cc = (tgt[cyl][:, None] * Q + sidx).ravel()
            rows.append(r)
            cols.append(cc)
            base.append((np.exp(lw)[:, None] * swt).ravel())
            loglam.append(np.repeat(ll, 2**d))
            logw_all.append((cyl * Q + nodes, np.exp(lw), np.abs(lam)))
            if self.potential.grade != "G0":
                g = self.potential.grad_log_weight(sysm, a, x[node_ok])
                grad_w = max(grad_w, 1.1 * float(np.linalg.norm(g, axis=1).max()))
        rows, cols = np.concatenate(rows), np.concatenate(cols)
        base, loglam = np.concatenate(base), np.concatenate(loglam)
        N = M * Q
        G = max(mp.log_lambda_lipschitz() for mp in sysm.maps)
        theta = sysm.contraction
        wsum = np.zeros(N)
        wlam = np.zeros(N)
        for nodes_i, w, lam in logw_all:
            np.add.at(wsum, nodes_i, w)
            np.add.at(wlam, nodes_i, w * lam)
        # per-cylinder diameter of a parameter cell: |lambda_alpha| at the
        # nodes inflated by the distortion over half a cell diagonal
        sp = math.sqrt(d) / max(q - 1, 1)
        _, lam_nodes, _ = apply_words(sysm, np.repeat(words, Q, axis=0), np.tile(P, (M, 1)),
                                      derivatives=True)
        lip = G / (1 - theta)
        cell = np.abs(lam_nodes).reshape(M, Q).max(axis=1) * math.exp(lip * sp / 2) * sp
        data = {
            "rows": rows, "cols": cols, "base": base, "loglam": loglam, "N": N,
            "wsum": float(wsum.max()), "wlam": float(wlam.max()),
            "residual": float(np.abs(wsum - 1).max()), "grad_w": grad_w, "G": G,
            "theta": theta, "cell": float(cell.max()),
        }
        self._cache[key] = data
        return data

    def matrix(self, words: np.ndarray, q: int) -> sparse.csr_matrix:
        """Sparse matrix of the discretised operator on the given grid."""
        s = self._structure(words, q)
        key = ("matrix", self.b, words.shape, q, words.tobytes())
        if key not in self._cache:
            for stale in [kk for kk in self._cache if kk[0] == "matrix"]:
                del self._cache[stale]
            vals = s["base"] * np.exp(1j * self.b * s["loglam"])
            self._cache[key] = sparse.csr_matrix((vals, (s["rows"], s["cols"])),
                                                 shape=(s["N"], s["N"]))
        return self._cache[key]

    def residual(self, m: int = 3, q: int = 3) -> float:
        """``max |sum_a w_a(x) - 1|`` over the nodes of a depth-``m`` grid."""
        return self._structure(self.system.words(m), q)["residual"]


def _advance(op: TwistedOperator, h: FunctionGrid, s: dict, vals: np.ndarray) -> FunctionGrid:
    """Wrap new node values with the updated derivative and error majorants."""
    b = abs(op.b)
    deriv = s["wsum"] * (s["grad_w"] + b * s["G"]) * h.sup_bound + s["wlam"] * h.deriv
    error = s["wsum"] * h.error + s["wsum"] * h.deriv * s["cell"]
    return FunctionGrid(h.system, h.words, h.q, vals, deriv, op.b if op.b else h.b, error,
                        s["wsum"] * h.sup_bound)


def apply_transfer(op: TwistedOperator, h: FunctionGrid) -> FunctionGrid:
    """One application of ``L_ib`` on a collocation grid.

    Pushed nodes are evaluated by multilinear interpolation in the target
    cylinder.  The derivative field is updated by the chain-rule majorant
    ``sup sum w_a (|grad log w_a| + |b| |grad log|lambda_a||) ||h|| +
    sup sum w_a |lambda_a| ||Dh||`` and the error field by the interpolation
    bound ``sup||Dh|| * cell diameter``.

    Raises
    ------
    GridMismatch
        When ``h`` lives on another system.
    """
    if h.system is not op.system:
        raise GridMismatch("grid and operator belong to different systems")
    s = op._structure(h.words, h.q)
    L = op.matrix(h.words, h.q)
    vals = (L @ h.values.ravel()).reshape(h.values.shape)
    return _advance(op, h, s, vals)


def transfer_power(op: TwistedOperator, h: FunctionGrid, n: int) -> list[FunctionGrid]:
    """The iterates ``h, L h, ..., L^n h``."""
    out = [h]
    for _ in range(n):
        out.append(apply_transfer(op, out[-1]))
    return out


def transfer_word_sum(op: TwistedOperator, x, n: int, first=None, b=None,
                      budget: int = WORD_BUDGET) -> np.ndarray:
    """``L_ib^n 1(x) = sum_{|alpha| = n, alpha -> x} w_alpha(x) |lambda_alpha(x)|^(ib)``.

    ``x`` has shape ``(N, d)`` and ``first`` holds the first symbol of each
    point's coding (needed for subshifts and pairwise weights).  ``b`` may be
    an array, in which case the result has shape ``(len(b), N)``.
    """
    sysm = op.system
    x = np.asarray(x, dtype=float).reshape(-1, sysm.dim)
    first = np.zeros(len(x), dtype=int) if first is None else np.broadcast_to(first, (len(x),))
    bs = np.atleast_1d(op.b if b is None else b).astype(float)
    out = np.zeros((len(bs), len(x)), dtype=complex)
    _check_budget(sysm, n, budget)
    words = sysm.words(n)
    for j, (pt, f0) in enumerate(zip(x, first)):
        logw, loglam = _word_logs(sysm, op.potential, words, pt, int(f0))
        out[:, j] = np.exp(logw[None, :] + 1j * bs[:, None] * loglam[None, :]).sum(axis=1)
    return out if np.ndim(b) else out[0]


def _word_logs(sysm: IFSSystem, potential: GibbsPotential, words: np.ndarray, x, first: int):
    """``log w_alpha(x)`` and ``log|lambda_alpha(x)|`` for admissible ``alpha -> x``."""
    A = sysm.shift.matrix
    words = words[A[words[:, -1], first] > 0] if len(words) else words
    M, n = words.shape
    pts = np.broadcast_to(np.asarray(x, dtype=float), (M, sysm.dim)).copy()
    fs = np.full(M, first)
    logw = np.zeros(M)
    loglam = np.zeros(M)
    for i in range(n - 1, -1, -1):
        col = words[:, i]
        for a in np.unique(col):
            sel = col == a
            logw[sel] += potential.log_weight(sysm, a, pts[sel], first=fs[sel])
            lam, _ = sysm.maps[a].conformal(pts[sel])
            loglam[sel] += np.log(np.abs(lam))
            pts[sel] = sysm.maps[a](pts[sel])
        fs = col
    return logw, loglam


# ---------------------------------------------------------------------------
# norm decay
# ---------------------------------------------------------------------------


@dataclass
class DecayTable:
    """Norms of ``L_ib^n 1`` with per-``b`` log-linear fits.

    ``sup[i, n]`` and ``bnorm[i, n]`` hold ``||L^n 1||_inf`` and
    ``||L^n 1||_b`` for ``b = b_list[i]``; ``rho[i]`` is the fitted decay
    rate of the sup norm and ``residual[i]`` the fit's RMS residual.
    """

    b_list: np.ndarray
    n: np.ndarray
    sup: np.ndarray
    bnorm: np.ndarray
    rho: np.ndarray
    residual: np.ndarray
    depth: int
    q: int

    def rows(self):
        for i, b in enumerate(self.b_list):
            for j, n in enumerate(self.n):
                yield {"b": float(b), "n": int(n), "sup": float(self.sup[i, j]),
                       "b_norm": float(self.bnorm[i, j]), "rho": float(self.rho[i])}

    @property
    def rho_max(self) -> float:
        return float(np.max(self.rho))


def _fit_rate(n: np.ndarray, y: np.ndarray, floor: float = 1e-13):
    keep = y > floor
    nn, yy = n[keep], np.log(y[keep])
    lo = len(nn) // 3
    nn, yy = nn[lo:], yy[lo:]
    if len(nn) < 2:
        return 0.0, 0.0
    A = np.stack([np.ones_like(nn, dtype=float), nn], axis=1)
    coef, *_ = np.linalg.lstsq(A, yy, rcond=None)
    res = float(np.sqrt(np.mean((A @ coef - yy) ** 2)))
    return float(np.exp(coef[1])), res


def norm_decay(op_family: TwistedOperator, n_max: int, b_list: Sequence[float], depth: int = 4,
               q: int = 3) -> DecayTable:
    """Measure ``||L_ib^n 1||`` for ``n <= n_max`` and fit ``rho`` per ``b``.

    The fit is a least squares line through ``log ||L_ib^n 1||_inf`` over
    the last two thirds of the ``n`` range (values below ``1e-13`` are
    dropped), so ``rho = exp(slope)``.
    """
    b_list = np.asarray(list(b_list), dtype=float)
    ns = np.arange(n_max + 1)
    sup = np.zeros((len(b_list), n_max + 1))
    bn = np.zeros_like(sup)
    rho = np.zeros(len(b_list))
    res = np.zeros(len(b_list))
    for i, b in enumerate(b_list):
        op = op_family.with_b(b)
        h = FunctionGrid.constant(op.system, depth, q, 1.0, b)
        for j, g in enumerate(transfer_power(op, h, n_max)):
            sup[i, j] = g.sup
            bn[i, j] = g.norm_b
        rho[i], res[i] = _fit_rate(ns.astype(float), sup[i])
    return DecayTable(b_list, ns, sup, bn, rho, res, depth, q)


# ---------------------------------------------------------------------------
# UNI margins
# ---------------------------------------------------------------------------


def log_lambda_gradients(system: IFSSystem, words: np.ndarray, x) -> np.ndarray:
    """``grad log|lambda_alpha|(x)`` for a batch of words, shape ``(M, d)``.

    Uses ``grad log|lambda_{a beta}|(x) = grad log|lambda_beta|(x) +
    lambda_beta(x) O_beta(x)^T grad log|lambda_a|(f_beta x)``.
    """
    words = np.asarray(words, dtype=int).reshape(len(words), -1)
    M, n = words.shape
    d = system.dim
    pts = np.broadcast_to(np.asarray(x, dtype=float).reshape(-1, d), (M, d)).copy()
    J = np.broadcast_to(np.eye(d), (M, d, d)).copy()
    grad = np.zeros((M, d))
    for i in range(n - 1, -1, -1):
        col = words[:, i]
        for a in np.unique(col):
            sel = col == a
            m = system.maps[a]
            g = m.grad_log_lambda(pts[sel])
            grad[sel] += np.einsum("nji,nj->ni", J[sel], g)
            lam, O = m.conformal(pts[sel])
            J[sel] = lam[:, None, None] * np.einsum("nij,njk->nik", O, J[sel])
            pts[sel] = m(pts[sel])
    return grad


def _directions(d: int, count: int) -> np.ndarray:
    if d == 1:
        return np.ones((1, 1))
    if d == 2:
        t = np.pi * np.arange(count) / count
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    rng = np.random.default_rng(11)
    v = rng.normal(size=(count, d))
    v = np.concatenate([np.eye(d), v / np.linalg.norm(v, axis=1, keepdims=True)])
    return v


@dataclass
class UNIReport:
    """Result of :func:`uni_margin`.

    ``margins[j]`` is the margin in direction ``directions[j]`` and
    ``pairs[j]`` the realising word pair; ``eps0`` is the minimum over
    directions.
    """

    n: int
    probe: np.ndarray
    variant: str
    radius: float
    directions: np.ndarray
    margins: np.ndarray
    pairs: list
    eps0: float

    def as_dict(self) -> dict:
        return {"n": self.n, "probe": self.probe.tolist(), "variant": self.variant,
                "radius": self.radius, "eps0": self.eps0,
                "directions": self.directions.tolist(), "margins": self.margins.tolist(),
                "pairs": [[list(map(int, p)), list(map(int, q))] for p, q in self.pairs]}


def uni_margin(system: IFSSystem, n: int, probe=None, variant: str = "point", radius: float = 0.0,
               directions: int | np.ndarray = 64, pairs=None, ball_points: int = 16,
               first: int | None = None, budget: int = WORD_BUDGET) -> UNIReport:
    """Non-integrability margin of ``log|lambda_alpha|`` at a probe point.

    For each unit direction ``e`` the margin is ``max |d_e(log|lambda_a1| -
    log|lambda_a2|)|`` over admissible pairs of length-``n`` words that may
    precede the probe, which equals ``max_alpha <g_alpha, e> - min_alpha
    <g_alpha, e>`` with ``g_alpha = grad log|lambda_alpha|``.  The ball
    variant asks for one pair that works at every sampled point of
    ``B(probe, radius)`` (the centre included) and takes the minimum there.
    ``pairs`` restricts the search to the given word pairs.

    Parameters
    ----------
    system : IFSSystem
    n : int
    probe : array_like, optional
        Defaults to the fixed point of the first map.
    variant : {"point", "ball"}
    directions : int or ndarray
        Number of grid directions, or explicit unit vectors.
    first : int, optional
        First symbol of the probe's coding, for subshifts.
    """
    d = system.dim
    x = system.reference_point() if probe is None else np.asarray(probe, dtype=float).reshape(d)
    dirs = _directions(d, directions) if np.isscalar(directions) else np.asarray(directions, float)
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    if variant == "point":
        pts = x[None, :]
    elif variant == "ball":
        if radius <= 0:
            raise ValueError("the ball variant needs a positive radius")
        rng = np.random.default_rng(5)
        v = rng.normal(size=(ball_points - 1, d))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        pts = np.concatenate([x[None, :], x + radius * v * rng.random((ball_points - 1, 1)) ** (1 / d)])
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if pairs is None:
        if system.k**n > budget:
            raise WordBudgetExceeded(f"{system.k}^{n} words exceed the budget {budget}")
        words = system.words(n)
        if first is not None:
            words = words[system.shift.matrix[words[:, -1], first] > 0]
        grads = np.stack([log_lambda_gradients(system, words, p) for p in pts])  # (P, M, d)
        proj = grads @ dirs.T  # (P, M, D)
        margins = np.empty(len(dirs))
        best = []
        for j in range(len(dirs)):
            pj = proj[:, :, j]
            if len(pts) == 1:
                hi, lo = int(np.argmax(pj[0])), int(np.argmin(pj[0]))
                margins[j] = pj[0, hi] - pj[0, lo]
            else:
                # pair uniform over the ball: candidates from extremes at each point
                cand = set(np.argmax(pj, axis=1)) | set(np.argmin(pj, axis=1))
                cand = sorted(cand)
                diff = np.abs(pj[:, cand][:, :, None] - pj[:, cand][:, None, :]).min(axis=0)
                u, v = np.unravel_index(int(np.argmax(diff)), diff.shape)
                hi, lo = cand[u], cand[v]
                margins[j] = diff[u, v]
            best.append((tuple(words[hi]), tuple(words[lo])))
    else:
        pairs = [(tuple(p), tuple(q)) for p, q in pairs]
        margins = np.zeros(len(dirs))
        best = [None] * len(dirs)
        for p_, q_ in pairs:
            W = np.array([p_, q_])
            gdiff = np.stack([np.subtract(*log_lambda_gradients(system, W, p)) for p in pts])
            val = np.abs(gdiff @ dirs.T).min(axis=0)
            better = val > margins
            margins = np.where(better, val, margins)
            for j in np.nonzero(better)[0]:
                best[j] = (p_, q_)
    return UNIReport(n, x, variant, float(radius), dirs, margins, best, float(margins.min()))


def uni_example_margin(system: IFSSystem, x, directions: int | np.ndarray = 64) -> float:
    """Closed-form margin ``min_e max_i 2|<x - u_i, e>| / |x - u_i|^2`` over Möbius maps."""
    d = system.dim
    x = np.asarray(x, dtype=float).reshape(d)
    dirs = _directions(d, directions) if np.isscalar(directions) else np.asarray(directions, float)
    vals = []
    for m in system.maps:
        if getattr(m, "kind", "") == "mobius":
            v = x - m.center
            vals.append(2 * np.abs(dirs @ v) / (v @ v))
    if not vals:
        return 0.0
    return float(np.max(vals, axis=0).min())


# ---------------------------------------------------------------------------
# frequency-band masses
# ---------------------------------------------------------------------------


def valid_c(system: IFSSystem) -> float:
    """Largest ``c`` with ``|lambda_alpha| |xi|^(1/3) >= |xi|^(1/6)`` for all ``|alpha| = c log|xi|``.

    This is ``1 / (6 L)`` with ``L = -log min_a inf |lambda_a|``, the infimum
    estimated on a probe grid of the cube.
    """
    pts = np.array(list(itertools.product(np.linspace(0, 1, 9), repeat=system.dim)))
    lam = min(float(np.abs(m.conformal(pts)[0]).min()) for m in system.maps)
    return 1.0 / (6.0 * -math.log(lam))


def _mollifier(lo: float, hi: float, margin: float):
    """Gaussian-smoothed indicator ``h >= chi_[lo, hi]``.

    ``h = (chi_[A, B] * N(0, sigma^2)) / kappa`` with ``A = lo - margin/2``,
    ``B = hi + margin/2``, ``sigma = margin/8`` and ``kappa`` the smallest
    value of the convolution on ``[lo, hi]``, so ``h >= 1`` there.  Outside
    ``[lo - margin, hi + margin]`` it is below ``Phi(-4) / kappa``.  Its
    Fourier transform is explicit and decays like a Gaussian, while
    ``||h||_1`` scales with the width and ``||h''||_1`` with its inverse.

    Returns ``(h, h_hat, tail)``.
    """
    A, B, sigma = lo - margin / 2, hi + margin / 2, margin / 8

    def conv(t):
        return ndtr((t - A) / sigma) - ndtr((t - B) / sigma)

    kappa = float(min(conv(np.array([lo, hi]))))

    def h(t):
        return conv(np.asarray(t, dtype=float)) / kappa

    def h_hat(eta):
        eta = np.asarray(eta, dtype=float)
        safe = np.where(eta == 0, 1.0, eta)
        box = (np.exp(-2j * math.pi * safe * A) - np.exp(-2j * math.pi * safe * B)) / (2j * math.pi * safe)
        box = np.where(eta == 0, B - A, box)
        return box * np.exp(-2 * (math.pi * sigma * eta) ** 2) / kappa

    return h, h_hat, float(ndtr(-4.0)) / kappa


@dataclass
class BandMass:
    """Weighted mass of the band ``[n, n + 1)`` by two routes.

    ``direct`` is ``sum w_alpha`` over words whose scaled derivative lies in
    the band.  ``mollified`` is the Fourier-inversion value ``int h^(eta)
    L_{2 pi i eta}^n 1(x) d eta`` for a smooth ``h >= chi``; ``bound`` majorises
    ``sum w_alpha (h - chi)`` using only the words near the mollifier's
    effective support plus the Gaussian tail, so ``0 <= mollified - direct
    <= bound`` up to the measured quadrature error ``quadrature``.
    """

    band: int
    n_xi: int
    direct: float
    mollified: float
    bound: float
    quadrature: float

    @property
    def discrepancy(self) -> float:
        return self.mollified - self.direct

    @property
    def consistent(self) -> bool:
        tol = self.quadrature + 1e-12
        return -tol <= self.discrepancy <= self.bound + tol


def _band_logs(op: TwistedOperator, log_norm: float, c: float, x, first: int, budget: int):
    n_xi = int(math.floor(c * log_norm))
    if n_xi < 1:
        raise ValueError(f"n(xi) = floor(c log|xi|) = {n_xi} < 1")
    _check_budget(op.system, n_xi, budget)
    words = op.system.words(n_xi)
    logw, loglam = _word_logs(op.system, op.potential, words, x, first)
    return n_xi, logw, loglam


def band_mass_histogram(op, xi=None, c: float = 0.5, x=None, first: int = 0, log_norm=None,
                        budget: int = WORD_BUDGET) -> dict:
    """Masses of all bands ``[n, n + 1)`` of ``|lambda_alpha(x)| |xi|^(1/3)``.

    Returns ``{"n_xi", "bands", "mass", "total", "window"}`` where ``window``
    is the admissible band range ``[|xi|^(1/6), |xi|^(1/3)]``.
    """
    op = op if isinstance(op, TwistedOperator) else TwistedOperator(op.system, op)
    L = float(log_norm) if log_norm is not None else math.log(float(np.linalg.norm(xi)))
    x = op.system.reference_point() if x is None else np.asarray(x, float)
    n_xi, logw, loglam = _band_logs(op, L, c, x, first, budget)
    v = np.floor(np.exp(loglam + L / 3)).astype(np.int64)
    bands, inv = np.unique(v, return_inverse=True)
    mass = np.bincount(inv.ravel(), weights=np.exp(logw))
    return {"n_xi": n_xi, "bands": bands, "mass": mass, "total": float(np.exp(logw).sum()),
            "window": (math.exp(L / 6), math.exp(L / 3))}


def frequency_band_mass(op, xi=None, band: int = 1, c: float = 0.5, route: str = "both", x=None,
                        first: int = 0, log_norm=None, width_exponent: float = 1 / 12,
                        budget: int = WORD_BUDGET) -> BandMass:
    """Weighted mass of the band ``[band, band + 1)`` at frequency ``xi``.

    Words ``alpha`` of length ``n(xi) = floor(c log|xi|)`` preceding the
    anchor ``x`` are weighted by ``w_alpha(x)`` and placed by
    ``||(D_x f_alpha)^T xi / |xi|^(2/3)|| = |lambda_alpha(x)| |xi|^(1/3)``.
    The mollified route replaces the band's log-interval by a smooth bump of
    plateau width ``|xi|^-width_exponent`` and evaluates it through Fourier
    inversion against ``L_{2 pi i eta}^{n(xi)} 1(x)``.

    Raises
    ------
    BandOutOfRange
        When ``band`` is outside ``[|xi|^(1/6), |xi|^(1/3)]``.
    """
    op = op if isinstance(op, TwistedOperator) else TwistedOperator(op.system, op)
    L = float(log_norm) if log_norm is not None else math.log(float(np.linalg.norm(xi)))
    if not math.exp(L / 6) <= band <= math.exp(L / 3):
        raise BandOutOfRange(f"band {band} outside [{math.exp(L / 6):.4g}, {math.exp(L / 3):.4g}]")
    x = op.system.reference_point() if x is None else np.asarray(x, float)
    n_xi, logw, loglam = _band_logs(op, L, c, x, first, budget)
    w = np.exp(logw)
    lo, hi = math.log(band) - L / 3, math.log(band + 1) - L / 3
    direct = float(w[(loglam >= lo) & (loglam < hi)].sum())
    if route == "direct":
        return BandMass(band, n_xi, direct, float("nan"), float("nan"), 0.0)
    width = max(math.exp(-width_exponent * L), hi - lo)
    mid = 0.5 * (lo + hi)
    plo, phi = mid - width / 2, mid + width / 2
    margin = width
    h, h_hat, tail = _mollifier(plo, phi, margin)
    near = (loglam >= plo - margin) & (loglam <= phi + margin)
    bound = float(w[near].sum() / (1 - 2 * tail) - direct + tail * w.sum())
    # Fourier inversion on an eta grid whose period exceeds the spread of
    # log|lambda| (no aliasing) and whose range covers the Gaussian decay
    t_span = float(loglam.max() - loglam.min()) + width + 2 * margin
    d_eta = 1.0 / (2.0 * t_span + 1.0)
    eta_max = 1.5 / (margin / 8)
    eta = np.arange(-eta_max, eta_max + d_eta / 2, d_eta)
    centre = mid
    hh = h_hat(eta) * np.exp(2j * math.pi * eta * centre)
    total = 0.0 + 0.0j
    tl = loglam - centre
    for s0 in range(0, len(eta), 4096):
        e = eta[s0:s0 + 4096]
        total += hh[s0:s0 + 4096] @ (np.exp(2j * math.pi * e[:, None] * tl[None, :]) @ w)
    mollified = float(total.real * d_eta)
    exact = float((w * h(loglam)).sum())
    return BandMass(band, n_xi, direct, mollified, bound, abs(mollified - exact) + 1e-9)
