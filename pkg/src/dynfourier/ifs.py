"""Geometric and symbolic primitives for conformal iterated function systems.

The module provides the maps (similitudes, Möbius involution maps and
user-supplied conformal maps), finite words over an alphabet, subshifts of
finite type, and the :class:`IFSSystem` container tying them together.  All
maps act on the unit cube ``[0, 1]^d`` and accept batches of points of shape
``(N, d)``.

Boxes are represented by pairs of arrays ``(lo, hi)`` of shape ``(N, d)`` and
are pushed forward by sound over-approximations, which is all the separation
checks require.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "InadmissibleWord",
    "SystemDefinitionError",
    "orthogonal_matrix",
    "rotation_matrix",
    "Similitude",
    "MobiusMap",
    "UserMap",
    "Word",
    "SubshiftMatrix",
    "IFSSystem",
    "SeparationReport",
    "compose_word",
    "word_derivative",
    "apply_words",
    "word_boxes",
    "cylinder_boxes",
    "check_strong_separation",
    "distortion_constants",
    "word_derivative_sup",
    "system_from_dict",
    "load_system",
]


class InadmissibleWord(ValueError):
    """Raised when a word violates the subshift transition rule."""


class SystemDefinitionError(ValueError):
    """Raised when a system definition is malformed or violates an invariant."""


def orthogonal_matrix(entries, tol: float = 1e-12) -> np.ndarray:
    """Validate and return a real orthogonal matrix.

    Parameters
    ----------
    entries : array_like
        Square matrix.
    tol : float
        Tolerance on ``max|O^T O - I|`` and on ``||det O| - 1|``.
    """
    O = np.array(entries, dtype=float)
    if O.ndim == 0:
        O = O.reshape(1, 1)
    if O.ndim != 2 or O.shape[0] != O.shape[1]:
        raise SystemDefinitionError(f"orthogonal matrix must be square, got shape {O.shape}")
    err = np.abs(O.T @ O - np.eye(O.shape[0])).max()
    if err > tol or abs(abs(np.linalg.det(O)) - 1.0) > tol:
        raise SystemDefinitionError(f"matrix is not orthogonal (defect {err:.3g})")
    O.setflags(write=False)
    return O


def rotation_matrix(theta: float) -> np.ndarray:
    """Planar rotation by the angle ``2*pi*theta`` (``theta`` in turns)."""
    c, s = np.cos(2 * np.pi * theta), np.sin(2 * np.pi * theta)
    return orthogonal_matrix([[c, -s], [s, c]])


def _as_points(x, dim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    x = x.reshape(-1, dim)
    return x, single


# ---------------------------------------------------------------------------
# maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Similitude:
    """The similitude ``x -> r O x + t``.

    Parameters
    ----------
    ratio : float
        Contraction ratio ``r`` with ``0 < |r| < 1``.
    rotation : array_like
        Orthogonal matrix ``O``.
    translation : array_like
        Translation vector ``t``.
    """

    ratio: float
    rotation: np.ndarray
    translation: np.ndarray
    kind: str = field(default="similitude", init=False)

    def __post_init__(self):
        if not 0 < abs(self.ratio) < 1:
            raise SystemDefinitionError(f"similitude ratio must satisfy 0<|r|<1, got {self.ratio}")
        t = np.atleast_1d(np.array(self.translation, dtype=float))
        O = orthogonal_matrix(np.atleast_2d(self.rotation))
        if O.shape[0] != t.shape[0]:
            raise SystemDefinitionError("rotation and translation dimensions differ")
        t.setflags(write=False)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", O)
        object.__setattr__(self, "ratio", float(self.ratio))

    @property
    def dim(self) -> int:
        return self.translation.shape[0]

    @property
    def linear(self) -> np.ndarray:
        """The matrix ``r O``."""
        return self.ratio * self.rotation

    def __call__(self, x):
        pts, single = _as_points(x, self.dim)
        out = pts @ self.linear.T + self.translation
        return out[0] if single else out

    def conformal(self, x):
        """Return ``(lambda, O)`` with ``D_x f = lambda * O`` for each point."""
        pts, _ = _as_points(x, self.dim)
        n = pts.shape[0]
        return np.full(n, self.ratio), np.broadcast_to(self.rotation, (n, self.dim, self.dim))

    def grad_log_lambda(self, x):
        pts, _ = _as_points(x, self.dim)
        return np.zeros_like(pts)

    def image_box(self, lo, hi):
        c, h = (lo + hi) / 2, (hi - lo) / 2
        cc = c @ self.linear.T + self.translation
        hh = h @ np.abs(self.linear).T
        return cc - hh, cc + hh

    def image_ball(self, c, rad):
        return self(c).reshape(c.shape), abs(self.ratio) * rad

    def derivative_bound(self) -> float:
        return abs(self.ratio)

    def log_lambda_lipschitz(self) -> float:
        """Supremum of ``|grad log|lambda||`` over the unit cube."""
        return 0.0

    def to_dict(self) -> dict:
        return {
            "kind": "similitude",
            "ratio": self.ratio,
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        }


@dataclass(frozen=True, eq=False)
class MobiusMap:
    """The Möbius involution map ``x -> t + lam * O (x - u) / |x - u|^2``.

    The derivative is ``lam / |x - u|^2`` times the orthogonal matrix
    ``O (I - 2 v v^T)`` with ``v`` the unit vector along ``x - u``, so the map
    is conformal with ``log|lambda(x)| = log lam - 2 log|x - u|``.

    Parameters
    ----------
    translation : array_like
        Translation ``t``.
    lam : float
        Scale ``0 < lam < 1``.
    rotation : array_like
        Orthogonal matrix ``O``.
    center : array_like
        Inversion centre ``u``, which must lie outside ``[0, 1]^d``.
    """

    translation: np.ndarray
    lam: float
    rotation: np.ndarray
    center: np.ndarray
    kind: str = field(default="mobius", init=False)

    def __post_init__(self):
        t = np.atleast_1d(np.array(self.translation, dtype=float))
        u = np.atleast_1d(np.array(self.center, dtype=float))
        O = orthogonal_matrix(np.atleast_2d(self.rotation))
        if not (t.shape == u.shape and O.shape[0] == t.shape[0]):
            raise SystemDefinitionError("Möbius map parameters have inconsistent dimensions")
        if not 0 < self.lam < 1:
            raise SystemDefinitionError(f"Möbius scale must lie in (0,1), got {self.lam}")
        if np.all((u >= 0) & (u <= 1)):
            raise SystemDefinitionError(f"inversion centre {u.tolist()} lies inside the unit cube")
        for a in (t, u):
            a.setflags(write=False)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "center", u)
        object.__setattr__(self, "rotation", O)
        object.__setattr__(self, "lam", float(self.lam))
        if self.derivative_bound() >= 1:
            raise SystemDefinitionError("Möbius map does not contract the unit cube")

    @property
    def dim(self) -> int:
        return self.translation.shape[0]

    def _dist_to_cube(self) -> float:
        u = self.center
        return float(np.linalg.norm(u - np.clip(u, 0.0, 1.0)))

    def __call__(self, x):
        pts, single = _as_points(x, self.dim)
        v = pts - self.center
        out = self.translation + self.lam * (v @ self.rotation.T) / np.einsum("ij,ij->i", v, v)[:, None]
        return out[0] if single else out

    def conformal(self, x):
        pts, _ = _as_points(x, self.dim)
        v = pts - self.center
        n2 = np.einsum("ij,ij->i", v, v)
        vh = v / np.sqrt(n2)[:, None]
        refl = np.eye(self.dim) - 2 * vh[:, :, None] * vh[:, None, :]
        return self.lam / n2, np.einsum("ij,njk->nik", self.rotation, refl)

    def grad_log_lambda(self, x):
        pts, _ = _as_points(x, self.dim)
        v = pts - self.center
        return -2 * v / np.einsum("ij,ij->i", v, v)[:, None]

    def image_ball(self, c, rad):
        """Exact image of the ball ``B(c, rad)``: inversions map spheres to spheres."""
        c = np.asarray(c, dtype=float).reshape(-1, self.dim)
        v = c - self.center
        den = np.einsum("ij,ij->i", v, v) - rad**2
        if np.any(den <= 0):
            raise ValueError("ball meets the inversion centre")
        centre = self.translation + self.lam * (v @ self.rotation.T) / den[:, None]
        return centre, self.lam * rad / den

    def image_box(self, lo, hi):
        c, rad = self.image_ball((lo + hi) / 2, np.linalg.norm(hi - lo, axis=-1) / 2)
        return c - rad[:, None], c + rad[:, None]

    def derivative_bound(self) -> float:
        return self.lam / self._dist_to_cube() ** 2

    def log_lambda_lipschitz(self) -> float:
        """Supremum of ``|grad log|lambda|| = 2 / |x - u|`` over the unit cube."""
        return 2.0 / self._dist_to_cube()

    def to_dict(self) -> dict:
        return {
            "kind": "mobius",
            "translation": self.translation.tolist(),
            "lam": self.lam,
            "rotation": self.rotation.tolist(),
            "center": self.center.tolist(),
        }


class UserMap:
    """A user-supplied conformal map.

    Parameters
    ----------
    evaluate : callable
        Vectorised map taking an ``(N, d)`` array to an ``(N, d)`` array.
    dim : int
        Ambient dimension.
    jacobian : callable, optional
        Vectorised Jacobian returning ``(N, d, d)``.  Central finite
        differences are used when omitted.
    grad_log_lambda : callable, optional
        Gradient of ``log|lambda(x)|``; finite differences when omitted.
    probes : int
        Number of probe points used to validate conformality and contraction.
    """

    kind = "user"

    def __init__(self, evaluate: Callable, dim: int, jacobian: Callable | None = None,
                 grad_log_lambda: Callable | None = None, probes: int = 1000, seed: int = 0):
        self._f = evaluate
        self.dim = int(dim)
        self._jac = jacobian
        self._gll = grad_log_lambda
        self._gll_bound = None
        x = np.random.default_rng(seed).random((probes, self.dim))
        lam, O = self.conformal(x)
        defect = np.abs(np.einsum("nji,njk->nik", O, O) - np.eye(self.dim)).max()
        if defect > 1e-8:
            raise SystemDefinitionError(f"Jacobian is not conformal (defect {defect:.3g})")
        self._bound = float(np.abs(lam).max())
        if self._bound >= 1:
            raise SystemDefinitionError("user map does not contract the unit cube")

    def __call__(self, x):
        pts, single = _as_points(x, self.dim)
        out = np.asarray(self._f(pts), dtype=float).reshape(pts.shape)
        return out[0] if single else out

    def jacobian(self, x):
        pts, _ = _as_points(x, self.dim)
        if self._jac is not None:
            return np.asarray(self._jac(pts), dtype=float).reshape(-1, self.dim, self.dim)
        h = 1e-6
        J = np.empty((pts.shape[0], self.dim, self.dim))
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = h
            J[:, :, j] = (self(pts + e) - self(pts - e)) / (2 * h)
        return J

    def conformal(self, x):
        J = self.jacobian(x)
        det = np.linalg.det(J)
        lam = np.sign(det) * np.abs(det) ** (1.0 / self.dim)
        return lam, J / lam[:, None, None]

    def grad_log_lambda(self, x):
        pts, _ = _as_points(x, self.dim)
        if self._gll is not None:
            return np.asarray(self._gll(pts), dtype=float).reshape(pts.shape)
        h = 1e-5
        g = np.empty_like(pts)
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = h
            g[:, j] = (np.log(np.abs(self.conformal(pts + e)[0]))
                       - np.log(np.abs(self.conformal(pts - e)[0]))) / (2 * h)
        return g

    def image_ball(self, c, rad):
        # Sampled Lipschitz bound inflated by a safety factor; not certified.
        return self(c).reshape(c.shape), 1.5 * self._bound * rad

    def image_box(self, lo, hi):
        c, rad = self.image_ball((lo + hi) / 2, np.linalg.norm(hi - lo, axis=-1) / 2)
        return c - rad[:, None], c + rad[:, None]

    def derivative_bound(self) -> float:
        return self._bound

    def log_lambda_lipschitz(self) -> float:
        """Sampled supremum of ``|grad log|lambda||`` with a 1.5 safety factor."""
        if self._gll_bound is None:
            x = np.random.default_rng(3).random((256, self.dim))
            self._gll_bound = 1.5 * float(np.linalg.norm(self.grad_log_lambda(x), axis=1).max())
        return self._gll_bound

    def to_dict(self) -> dict:
        raise TypeError("user maps cannot be serialised")


def _map_from_dict(spec: dict, dim: int):
    kind = spec.get("kind")
    try:
        if kind == "similitude":
            rot = spec.get("rotation")
            if rot is None and "angle" in spec:
                rot = rotation_matrix(spec["angle"])
            if rot is None:
                rot = np.eye(dim)
            return Similitude(spec["ratio"], rot, spec["translation"])
        if kind == "mobius":
            rot = spec.get("rotation")
            if rot is None:
                rot = np.eye(dim)
            return MobiusMap(spec["translation"], spec["lam"], rot, spec["center"])
    except KeyError as exc:
        raise SystemDefinitionError(f"map of kind {kind!r} is missing field {exc}") from None
    raise SystemDefinitionError(f"unknown map kind {kind!r}")


# ---------------------------------------------------------------------------
# symbolic layer
# ---------------------------------------------------------------------------


class Word(tuple):
    """A finite word over the integer alphabet ``{0, ..., k-1}``.

    Words are tuples of symbols.  ``parent`` drops the last symbol
    (written ``alpha^-`` in the literature) and :meth:`counts` returns the
    letter counts.
    """

    def __new__(cls, symbols: Iterable[int] = ()):
        return super().__new__(cls, (int(s) for s in symbols))

    @property
    def parent(self) -> "Word":
        if not self:
            raise ValueError("the empty word has no parent")
        return Word(self[:-1])

    def counts(self, k: int) -> np.ndarray:
        return np.bincount(np.asarray(self, dtype=int), minlength=k)[:k] if self else np.zeros(k, int)

    def common_prefix(self, other: Sequence[int]) -> "Word":
        n = 0
        for a, b in zip(self, other):
            if a != b:
                break
            n += 1
        return Word(self[:n])

    def __add__(self, other):
        return Word(tuple(self) + tuple(other))

    def __repr__(self):
        return f"Word({list(self)})"


class SubshiftMatrix:
    """A primitive 0/1 transition matrix.

    ``A[a, b] = 1`` means that ``b`` may follow ``a`` in a word.  The
    constructor looks for a power ``n <= k**2`` with ``A**n > 0``; that power
    is stored as the mixing certificate.
    """

    def __init__(self, matrix):
        A = np.array(matrix, dtype=int)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.isin(A, (0, 1)).all():
            raise SystemDefinitionError("subshift matrix must be a square 0/1 matrix")
        self.matrix = A
        self.matrix.setflags(write=False)
        self.k = A.shape[0]
        self.certificate = self._mixing_power()
        if self.certificate is None:
            raise SystemDefinitionError("subshift matrix is not primitive (no mixing certificate)")

    def _mixing_power(self) -> int | None:
        B = (self.matrix > 0).astype(np.int64)
        P = B.copy()
        for n in range(1, self.k**2 + 1):
            if (P > 0).all():
                return n
            P = ((P @ B) > 0).astype(np.int64)
        return None

    @classmethod
    def full(cls, k: int) -> "SubshiftMatrix":
        return cls(np.ones((k, k), dtype=int))

    @property
    def is_full(self) -> bool:
        return bool(self.matrix.all())

    def allows(self, a: int, b: int) -> bool:
        return bool(self.matrix[a, b])

    def admissible(self, word: Sequence[int]) -> bool:
        w = np.asarray(word, dtype=int)
        return bool(w.size < 2 or self.matrix[w[:-1], w[1:]].all())

    def words(self, n: int, first: int | None = None) -> np.ndarray:
        """All admissible words of length ``n`` as an ``(M, n)`` array."""
        if n == 0:
            return np.zeros((1, 0), dtype=int)
        W = np.arange(self.k)[:, None] if first is None else np.array([[first]])
        for _ in range(n - 1):
            last = W[:, -1]
            rows, cols = np.nonzero(self.matrix[last])
            W = np.concatenate([W[rows], cols[:, None]], axis=1)
        return W


@dataclass(frozen=True, eq=False)
class IFSSystem:
    """A conformal iterated function system on ``[0, 1]^d``.

    Parameters
    ----------
    maps : sequence
        One map per symbol.
    alphabet : sequence of str, optional
        Symbol labels, defaulting to ``"a", "b", ...``.
    subshift : SubshiftMatrix, optional
        Transition constraint; the full shift when omitted.
    boxes : array_like, optional
        Open-cover metadata ``U_a`` as an array of shape ``(k, 2, d)`` of
        ``(lo, hi)`` corners.  When present, the boxes must be pairwise
        disjoint and ``f_a`` must map the union of the boxes into ``U_a``.
    """

    maps: tuple
    alphabet: tuple = ()
    subshift: SubshiftMatrix | None = None
    boxes: np.ndarray | None = None

    def __post_init__(self):
        maps = tuple(self.maps)
        if not maps:
            raise SystemDefinitionError("a system needs at least one map")
        dims = {m.dim for m in maps}
        if len(dims) != 1:
            raise SystemDefinitionError("maps have inconsistent dimensions")
        object.__setattr__(self, "maps", maps)
        alphabet = tuple(self.alphabet) or tuple(_default_labels(len(maps)))
        if len(alphabet) != len(maps):
            raise SystemDefinitionError("alphabet and maps differ in length")
        object.__setattr__(self, "alphabet", alphabet)
        if self.subshift is not None and not isinstance(self.subshift, SubshiftMatrix):
            object.__setattr__(self, "subshift", SubshiftMatrix(self.subshift))
        if self.subshift is not None and self.subshift.k != len(maps):
            raise SystemDefinitionError("subshift size differs from the number of maps")
        if self.boxes is not None:
            boxes = np.array(self.boxes, dtype=float)
            if boxes.shape != (len(maps), 2, self.dim):
                raise SystemDefinitionError("boxes must have shape (k, 2, d)")
            boxes.setflags(write=False)
            object.__setattr__(self, "boxes", boxes)
            self._check_cover()

    def _check_cover(self):
        lo, hi = self.boxes[:, 0], self.boxes[:, 1]
        for a, b in itertools.combinations(range(self.k), 2):
            if np.all(lo[a] < hi[b]) and np.all(lo[b] < hi[a]):
                raise SystemDefinitionError(f"cover boxes {a} and {b} overlap")
        ulo, uhi = lo.min(axis=0, keepdims=True), hi.max(axis=0, keepdims=True)
        for a, m in enumerate(self.maps):
            ilo, ihi = m.image_box(ulo, uhi)
            if np.any(ilo < lo[a] - 1e-12) or np.any(ihi > hi[a] + 1e-12):
                raise SystemDefinitionError(f"map {a} does not send the cover into its box")

    @property
    def dim(self) -> int:
        return self.maps[0].dim

    @property
    def k(self) -> int:
        return len(self.maps)

    @property
    def shift(self) -> SubshiftMatrix:
        return self.subshift if self.subshift is not None else SubshiftMatrix.full(self.k)

    @property
    def is_similitude(self) -> bool:
        return all(isinstance(m, Similitude) for m in self.maps)

    @property
    def contraction(self) -> float:
        """Upper bound on ``sup ||D f_a||`` over the unit cube."""
        return max(m.derivative_bound() for m in self.maps)

    def words(self, n: int) -> np.ndarray:
        return self.shift.words(n)

    def check_word(self, word: Sequence[int]) -> Word:
        w = Word(word)
        if any(not 0 <= s < self.k for s in w):
            raise InadmissibleWord(f"symbol outside the alphabet in {list(w)}")
        if self.subshift is not None and not self.subshift.admissible(w):
            raise InadmissibleWord(f"word {list(w)} is not admissible")
        return w

    def reference_point(self) -> np.ndarray:
        """Fixed point of the first map, used as a deterministic anchor in ``X``."""
        x = np.full(self.dim, 0.5)
        f = self.maps[0]
        for _ in range(200):
            y = f(x)
            if np.abs(y - x).max() < 1e-15:
                break
            x = y
        return x

    def to_dict(self) -> dict:
        out = {"dimension": self.dim, "alphabet": list(self.alphabet),
               "maps": [m.to_dict() for m in self.maps]}
        if self.subshift is not None:
            out["subshift"] = self.subshift.matrix.tolist()
        if self.boxes is not None:
            out["boxes"] = self.boxes.tolist()
        return out


def _default_labels(k: int) -> list[str]:
    letters = "abcdefghijklmnopqrstuvwxyz"
    return [letters[i] if k <= 26 else f"s{i}" for i in range(k)]


def system_from_dict(spec: dict) -> IFSSystem:
    """Build an :class:`IFSSystem` from its JSON-style description."""
    if not isinstance(spec, dict):
        raise SystemDefinitionError("system definition must be a JSON object")
    for key in ("dimension", "maps"):
        if key not in spec:
            raise SystemDefinitionError(f"system definition is missing {key!r}")
    dim = int(spec["dimension"])
    maps = [_map_from_dict(m, dim) for m in spec["maps"]]
    if any(m.dim != dim for m in maps):
        raise SystemDefinitionError("map dimension differs from declared dimension")
    return IFSSystem(maps, tuple(spec.get("alphabet", ())), spec.get("subshift"), spec.get("boxes"))


def load_system(path) -> IFSSystem:
    with open(path) as fh:
        return system_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# word evaluation
# ---------------------------------------------------------------------------


def apply_words(system: IFSSystem, words: np.ndarray, x, derivatives: bool = False):
    """Evaluate ``f_alpha`` on a batch of equal-length words.

    Parameters
    ----------
    system : IFSSystem
    words : ndarray of int, shape (M, n)
    x : array_like, shape (d,) or (M, d)
        Starting point(s).
    derivatives : bool
        When true also return ``lambda_alpha(x)`` (signed) and the orthogonal
        part ``O_alpha(x)``.

    Returns
    -------
    points : ndarray, shape (M, d)
    lam : ndarray, shape (M,), only when ``derivatives``
    O : ndarray, shape (M, d, d), only when ``derivatives``
    """
    words = np.asarray(words, dtype=int)
    if words.ndim == 1:
        words = words[None, :]
    M, n = words.shape
    d = system.dim
    pts = np.broadcast_to(np.asarray(x, dtype=float).reshape(-1, d), (M, d)).copy()
    lam = np.ones(M)
    O = np.broadcast_to(np.eye(d), (M, d, d)).copy()
    for i in range(n - 1, -1, -1):
        col = words[:, i]
        for a in np.unique(col):
            sel = col == a
            m = system.maps[a]
            if derivatives:
                la, Oa = m.conformal(pts[sel])
                lam[sel] *= la
                O[sel] = np.einsum("nij,njk->nik", Oa, O[sel])
            pts[sel] = m(pts[sel])
    return (pts, lam, O) if derivatives else pts


def compose_word(system: IFSSystem, word: Sequence[int], x) -> np.ndarray:
    """Return ``f_alpha(x) = f_{a_1}(f_{a_2}(... f_{a_n}(x)))``.

    Raises
    ------
    InadmissibleWord
        If the word violates the subshift.
    """
    w = system.check_word(word)
    x = np.asarray(x, dtype=float)
    if not w:
        return x.copy()
    return apply_words(system, np.array([w]), x)[0].reshape(x.shape)


def word_derivative(system: IFSSystem, word: Sequence[int], x) -> tuple[float, np.ndarray]:
    """Return ``(lambda_alpha(x), O_alpha(x))`` with ``D_x f_alpha = lambda O``.

    For similitudes ``lambda`` carries the sign of the product of ratios.
    """
    w = system.check_word(word)
    if not w:
        return 1.0, np.eye(system.dim)
    _, lam, O = apply_words(system, np.array([w]), x, derivatives=True)
    return float(lam[0]), O[0]


def word_boxes(system: IFSSystem, words: np.ndarray, subdivide: int | None = None):
    """Axis-aligned hulls of ``f_alpha([0, 1]^d)`` for a batch of words.

    Similitude systems push boxes forward exactly.  Otherwise the cube is
    split into ``subdivide**d`` sub-cubes, each replaced by its circumscribed
    ball, and the balls are pushed forward map by map.  Möbius maps send
    balls to balls exactly; other maps use the supremum of the derivative
    over the ball.  The default subdivision is 4 for ``d <= 2`` and 2 above.

    Returns
    -------
    lo, hi : ndarray, shape (M, d)
    """
    words = np.asarray(words, dtype=int).reshape(len(words), -1)
    M, n = words.shape
    d = system.dim
    if system.is_similitude:
        lo, hi = np.zeros((M, d)), np.ones((M, d))
        for i in range(n - 1, -1, -1):
            col = words[:, i]
            for a in np.unique(col):
                sel = col == a
                lo[sel], hi[sel] = system.maps[a].image_box(lo[sel], hi[sel])
        return lo, hi
    if n == 0:
        return np.zeros((M, d)), np.ones((M, d))
    s = subdivide if subdivide is not None else (4 if d <= 2 else 2)
    ticks = (np.arange(s) + 0.5) / s
    centres = np.array(list(itertools.product(ticks, repeat=d)))
    S = len(centres)
    rep = np.repeat(words, S, axis=0)
    c = np.tile(centres, (M, 1))
    rad = np.full(M * S, 0.5 * np.sqrt(d) / s)
    for i in range(n - 1, -1, -1):
        col = rep[:, i]
        for a in np.unique(col):
            sel = col == a
            c[sel], rad[sel] = system.maps[a].image_ball(c[sel], rad[sel])
    lo = (c - rad[:, None]).reshape(M, S, d).min(axis=1)
    hi = (c + rad[:, None]).reshape(M, S, d).max(axis=1)
    return lo, hi


def word_derivative_sup(system: IFSSystem, words: np.ndarray, centres=None,
                        radius: float | None = None) -> np.ndarray:
    """Upper bounds for ``sup ||D f_alpha||`` over a ball or the unit cube.

    With ``G = max_a sup |grad log|lambda_a||`` and ``theta`` the contraction
    bound, ``log|lambda_alpha|`` is ``G / (1 - theta)``-Lipschitz, so its
    supremum over ``B(c, r)`` is at most ``|lambda_alpha(c)| exp(G r / (1 -
    theta))``.  Without ``centres`` the ball circumscribing the unit cube is
    used.
    """
    words = np.asarray(words, dtype=int).reshape(len(words), -1)
    d = system.dim
    if centres is None:
        centres, radius = np.full(d, 0.5), 0.5 * math.sqrt(d)
    if words.shape[1] == 0:
        return np.ones(len(words))
    _, lam, _ = apply_words(system, words, centres, derivatives=True)
    G = max(m.log_lambda_lipschitz() for m in system.maps)
    theta = system.contraction
    return np.abs(lam) * math.exp(G * radius / (1 - theta))


def cylinder_boxes(system: IFSSystem, depth: int):
    """Interval hulls of all admissible depth-``depth`` cylinders.

    Returns
    -------
    words : ndarray, shape (M, depth)
    lo, hi : ndarray, shape (M, d)
    """
    words = system.words(depth)
    lo, hi = word_boxes(system, words)
    return words, lo, hi


def _box_distances(lo1, hi1, lo2, hi2) -> np.ndarray:
    gap = np.maximum(0.0, np.maximum(lo1[:, None, :] - hi2[None, :, :], lo2[None, :, :] - hi1[:, None, :]))
    return np.sqrt((gap**2).sum(-1))


@dataclass(frozen=True)
class SeparationReport:
    """Outcome of :func:`check_strong_separation`."""

    ok: bool
    gap: float
    depth: int


def check_strong_separation(system: IFSSystem, depth: int = 1) -> SeparationReport:
    """Check that the first-level cylinders are pairwise disjoint.

    Each first-level cylinder is over-approximated by the union of the boxes
    of its depth-``depth`` sub-cylinders; the reported gap is the smallest
    distance between unions belonging to different first symbols.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if system.k == 1:
        return SeparationReport(True, float("inf"), depth)
    words, lo, hi = cylinder_boxes(system, depth)
    first = words[:, 0]
    gap = float("inf")
    for a, b in itertools.combinations(range(system.k), 2):
        sa, sb = first == a, first == b
        if sa.any() and sb.any():
            gap = min(gap, float(_box_distances(lo[sa], hi[sa], lo[sb], hi[sb]).min()))
    return SeparationReport(gap > 0, gap, depth)


def _probe_points(d: int, n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).random((n, d))


def distortion_constants(system: IFSSystem, depth: int, max_words: int = 2048,
                         probes: int = 8) -> dict:
    """Empirical distortion constants up to word length ``depth``.

    Returns a dict with

    ``C_lin``
        ``sup ||D_x f_alpha - D_y f_alpha|| / (sup_z ||D_z f_alpha|| * |x - y|)``
    ``C_diam``
        ``sup max(diam / ||D_x f_alpha||, ||D_x f_alpha|| / diam)`` where
        ``diam`` is the diameter of the image of the unit cube, estimated
        from the images of its corners and of the probe points.

    Every length uses a fixed, length-seeded word sample, so the suprema
    are non-decreasing in ``depth`` by construction.
    """
    d = system.dim
    corners = np.array(list(itertools.product((0.0, 1.0), repeat=d)))
    xs = _probe_points(d, probes, 1)
    ys = _probe_points(d, probes, 2)
    pts = np.concatenate([corners, xs, ys])
    npts = len(pts)
    c_lin, c_diam = 0.0, 0.0
    for n in range(1, depth + 1):
        words = system.words(n) if system.k**n <= 4 * max_words else None
        if words is None or len(words) > max_words:
            rng = np.random.default_rng(1000 + n)
            words = _random_words(system, n, max_words, rng)
        M = len(words)
        rep = np.repeat(words, npts, axis=0)
        img, lam, O = apply_words(system, rep, np.tile(pts, (M, 1)), derivatives=True)
        img = img.reshape(M, npts, d)
        J = (lam[:, None, None] * O).reshape(M, npts, d, d)
        norms = np.abs(lam).reshape(M, npts)
        sup = norms.max(axis=1)
        jx = J[:, len(corners):len(corners) + probes]
        jy = J[:, len(corners) + probes:]
        dx = np.linalg.norm(xs - ys, axis=1)
        num = np.linalg.norm(jx - jy, ord=2, axis=(2, 3))
        c_lin = max(c_lin, float((num / (sup[:, None] * dx[None, :])).max()))
        diam = np.sqrt(((img[:, :, None, :] - img[:, None, :, :]) ** 2).sum(-1)).max(axis=(1, 2))
        ratio = diam[:, None] / norms
        c_diam = max(c_diam, float(np.maximum(ratio, 1 / ratio).max()))
    return {"C_lin": c_lin, "C_diam": c_diam}


def _random_words(system: IFSSystem, n: int, count: int, rng) -> np.ndarray:
    A = system.shift.matrix
    W = np.empty((count, n), dtype=int)
    W[:, 0] = rng.integers(0, system.k, count)
    for i in range(1, n):
        allowed = A[W[:, i - 1]].astype(float)
        cum = np.cumsum(allowed / allowed.sum(axis=1, keepdims=True), axis=1)
        W[:, i] = (rng.random(count)[:, None] > cum).sum(axis=1)
    return W
