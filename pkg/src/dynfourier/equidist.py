"""Weyl sums along orbits of expanding integer matrices and normality testing.

For an integer matrix ``A`` with all singular values above one, ``T(x) = A x
mod 1`` acts on the torus.  A point is *A-normal* when its orbit
equidistributes, which by Weyl's criterion means that every normalised Weyl
sum ``S_N(x) = (1/N) sum_{n<N} exp(2 pi i k . T^n x)`` tends to zero.  The
second moment ``r_N = int |S_N|^2 dmu`` is estimated by Monte Carlo over
points drawn from a measure, and summability of ``r_N / N`` along the
schedule is the route to almost-everywhere normality.

Orbits are computed in exact fixed-point arithmetic.  A point is stored as an
integer vector ``X`` with ``x = X / 2^P``; then ``T`` becomes ``X -> A X mod
2^P`` with no rounding at all.  The only error is the initial truncation of
``x`` to ``P`` bits, which ``T^n`` amplifies by at most ``||A||^n``, so
``P = N log2 ||A|| + 64`` bits keep ``N`` steps accurate to ``2^-64``.
Rational points are iterated exactly as fractions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .ifs import Similitude

__all__ = [
    "PrecisionBudgetExceeded",
    "ExpandingMatrix",
    "FixedPoint",
    "Lebesgue",
    "Dirac",
    "required_bits",
    "sample_points",
    "weyl_trajectory",
    "weyl_sum",
    "bridging_check",
    "REstimate",
    "r_N_estimate",
    "NormalityReport",
    "normality_test",
]

DEFAULT_MAX_BITS = 1 << 18
GUARD_BITS = 64


class PrecisionBudgetExceeded(RuntimeError):
    """Raised when an orbit would need more bits than the configured maximum."""


@dataclass(frozen=True, eq=False)
class ExpandingMatrix:
    """An integer matrix whose smallest singular value exceeds one.

    Parameters
    ----------
    A : array_like of int
        Square integer matrix.

    Raises
    ------
    ValueError
        When ``A`` is not integral, not square, not expanding or has
        ``|det A| < 2``.
    """

    A: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if not np.all(A == np.round(A)):
            raise ValueError("A must have integer entries")
        A = np.round(A).astype(object).astype(int)
        object.__setattr__(self, "A", A)
        if self.sigma_d <= 1:
            raise ValueError(f"A is not expanding: smallest singular value {self.sigma_d:.6g}")
        if abs(round(np.linalg.det(A))) < 2:
            raise ValueError("|det A| must be at least 2")

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def sigma_d(self) -> float:
        return float(np.linalg.svd(self.A.astype(float), compute_uv=False).min())

    @property
    def norm(self) -> float:
        return float(np.linalg.svd(self.A.astype(float), compute_uv=False).max())

    @property
    def log2_norm(self) -> float:
        return math.log2(self.norm)

    @property
    def n0(self) -> int:
        """Smallest ``n`` with ``sigma_d^n >= 1 + 1 / (sigma_d - 1)``."""
        s = self.sigma_d
        return max(0, math.ceil(math.log(1 + 1 / (s - 1)) / math.log(s) - 1e-12))

    def rows(self) -> list[list[int]]:
        return [[int(v) for v in row] for row in self.A]

    def transpose_rows(self) -> list[list[int]]:
        return [[int(v) for v in row] for row in self.A.T]


def _as_matrix(A) -> ExpandingMatrix:
    return A if isinstance(A, ExpandingMatrix) else ExpandingMatrix(A)


def _matvec(M: list[list[int]], v: Sequence) -> list:
    return [sum(m * x for m, x in zip(row, v)) for row in M]


@dataclass(frozen=True)
class FixedPoint:
    """The point ``X / 2^bits`` of the torus with integer coordinates ``X``."""

    X: tuple
    bits: int

    @classmethod
    def from_value(cls, x, bits: int) -> "FixedPoint":
        """Truncate a float, fraction or vector of them to ``bits`` bits."""
        vals = x if isinstance(x, (tuple, list, np.ndarray)) else [x]
        X = tuple(math.floor(Fraction(v) * (1 << bits)) % (1 << bits) for v in vals)
        return cls(X, bits)

    def to_float(self) -> np.ndarray:
        return np.array([math.ldexp(x >> max(self.bits - 60, 0), -min(self.bits, 60)) for x in self.X])


def required_bits(A, N: int) -> int:
    """Bits keeping ``N`` steps of ``T`` accurate to ``2^-64``."""
    return int(math.ceil(N * _as_matrix(A).log2_norm)) + GUARD_BITS


# ---------------------------------------------------------------------------
# measures as point sources
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Lebesgue:
    """Lebesgue measure on the torus ``[0, 1)^dim``."""

    dim: int = 1

    def sample_fixed(self, seed: int, n: int, bits: int) -> list[FixedPoint]:
        rng = np.random.default_rng(seed)
        nbytes = (bits + 7) // 8
        out = []
        for _ in range(n):
            X = tuple(int.from_bytes(rng.bytes(nbytes), "little") >> (8 * nbytes - bits)
                      for _ in range(self.dim))
            out.append(FixedPoint(X, bits))
        return out


@dataclass(frozen=True)
class Dirac:
    """Point mass at ``x`` (floats are taken as exact dyadic rationals)."""

    x: tuple

    def __post_init__(self):
        vals = self.x if isinstance(self.x, (tuple, list, np.ndarray)) else (self.x,)
        object.__setattr__(self, "x", tuple(Fraction(v) for v in vals))

    @property
    def dim(self) -> int:
        return len(self.x)

    def sample_fixed(self, seed: int, n: int, bits: int) -> list[FixedPoint]:
        p = FixedPoint.from_value(self.x, bits)
        return [p] * n


def _rational(v: float) -> Fraction:
    """The simplest fraction within rounding of ``v`` (so 0.333... becomes 1/3)."""
    f = Fraction(float(v))
    g = f.limit_denominator(10**9)
    return g if abs(float(g) - float(v)) <= 4 * np.finfo(float).eps * max(1.0, abs(float(v))) else f


def _exact_similitude(m) -> tuple:
    """``(r O, t)`` of a similitude as rational matrices."""
    if not isinstance(m, Similitude):
        raise PrecisionBudgetExceeded("exact sampling needs similitudes; this map cannot supply more than 53 bits")
    L = [[_rational(m.ratio * v) for v in row] for row in m.rotation]
    t = [_rational(v) for v in m.translation]
    return L, t


def _sample_measure_fixed(measure, seed: int, n: int, bits: int) -> list[FixedPoint]:
    system = measure.system
    maps = [_exact_similitude(m) for m in system.maps]
    theta = system.contraction
    d = system.dim
    depth = int(math.ceil((bits + 2 + math.log2(math.sqrt(d))) / -math.log2(theta))) + 1
    rng = np.random.default_rng(seed)
    syms = measure.sample_symbols(rng, n, depth)
    ref = [_rational(v) for v in system.reference_point()]
    # common denominators keep the Horner evaluation free of gcd computations
    out = []
    for word in syms:
        den = 1
        for v in ref:
            den = den * v.denominator // math.gcd(den, v.denominator)
        num = [v.numerator * (den // v.denominator) for v in ref]
        for a in word[::-1]:
            L, t = maps[a]
            D = 1
            for row in L:
                for v in row:
                    D = D * v.denominator // math.gcd(D, v.denominator)
            for v in t:
                D = D * v.denominator // math.gcd(D, v.denominator)
            new = []
            for i in range(d):
                s = sum(L[i][j].numerator * (D // L[i][j].denominator) * num[j] for j in range(d))
                s += t[i].numerator * (D // t[i].denominator) * den
                new.append(s)
            num, den = new, den * D
        X = tuple(((v << bits) // den) % (1 << bits) for v in num)
        out.append(FixedPoint(X, bits))
    return out


def sample_points(measure, seed: int, n: int, bits: int, max_bits: int = DEFAULT_MAX_BITS) -> list[FixedPoint]:
    """Draw ``n`` points as ``bits``-bit fixed-point vectors.

    ``measure`` may be :class:`Lebesgue`, :class:`Dirac` or a self-similar
    measure of the ``measures`` module whose maps are similitudes; map
    parameters are read as the simplest nearby fractions.

    Raises
    ------
    PrecisionBudgetExceeded
        When ``bits > max_bits`` or the measure cannot supply exact digits.
    """
    if bits > max_bits:
        raise PrecisionBudgetExceeded(f"{bits} bits requested, budget {max_bits}")
    if hasattr(measure, "sample_fixed"):
        return measure.sample_fixed(seed, n, bits)
    return _sample_measure_fixed(measure, seed, n, bits)


# ---------------------------------------------------------------------------
# Weyl sums
# ---------------------------------------------------------------------------


def _phase_fixed(v: int, bits: int) -> complex:
    """``exp(2 pi i v / 2^bits)`` for an integer ``v``."""
    v %= 1 << bits
    shift = max(bits - 62, 0)
    frac = math.ldexp(v >> shift, -(bits - shift))
    return complex(math.cos(2 * math.pi * frac), math.sin(2 * math.pi * frac))


def _phase_fraction(v: Fraction) -> complex:
    frac = float(v - math.floor(v))
    return complex(math.cos(2 * math.pi * frac), math.sin(2 * math.pi * frac))


def _terms(x, A: ExpandingMatrix, k: Sequence[int], N: int, route: str, max_bits: int) -> np.ndarray:
    k = [int(v) for v in k]
    if len(k) != A.dim:
        raise ValueError("frequency and matrix dimensions differ")
    if not any(k):
        raise ValueError("k must be non-zero")
    out = np.empty(N, dtype=complex)
    M, Mt = A.rows(), A.transpose_rows()
    if isinstance(x, FixedPoint):
        need = required_bits(A, N)
        if need > max_bits:
            raise PrecisionBudgetExceeded(f"{need} bits needed, budget {max_bits}")
        if x.bits < need:
            raise PrecisionBudgetExceeded(f"point carries {x.bits} bits, {N} steps need {need}")
        mod = 1 << x.bits
        if route == "orbit":
            X = list(x.X)
            for n in range(N):
                out[n] = _phase_fixed(sum(a * b for a, b in zip(k, X)), x.bits)
                X = [v % mod for v in _matvec(M, X)]
        else:
            kk = list(k)
            for n in range(N):
                out[n] = _phase_fixed(sum(a * b for a, b in zip(kk, x.X)), x.bits)
                kk = _matvec(Mt, kk)
        return out
    vals = x if isinstance(x, (tuple, list, np.ndarray)) else [x]
    X = [Fraction(v) for v in vals]
    if len(X) != A.dim:
        raise ValueError("point and matrix dimensions differ")
    if route == "orbit":
        for n in range(N):
            out[n] = _phase_fraction(sum(a * b for a, b in zip(k, X)))
            X = [v - math.floor(v) for v in _matvec(M, X)]
    else:
        kk = list(k)
        for n in range(N):
            out[n] = _phase_fraction(sum(a * b for a, b in zip(kk, X)))
            kk = _matvec(Mt, kk)
    return out


def weyl_trajectory(x, A, k, N: int, route: str = "orbit", max_bits: int = DEFAULT_MAX_BITS) -> np.ndarray:
    """Cumulative sums ``N S_N`` for ``N = 1..N`` (not normalised).

    Parameters
    ----------
    x : FixedPoint, float, Fraction or sequence of them
        Floats and fractions are iterated exactly as rationals.
    A : array_like or ExpandingMatrix
    k : sequence of int
        Non-zero frequency.
    route : {"orbit", "dual"}
        ``exp(2 pi i k . T^n x)`` or ``exp(2 pi i (A^T)^n k . x)``.

    Raises
    ------
    PrecisionBudgetExceeded
    """
    if route not in ("orbit", "dual"):
        raise ValueError("route must be 'orbit' or 'dual'")
    return np.cumsum(_terms(x, _as_matrix(A), np.atleast_1d(k), N, route, max_bits))


def weyl_sum(x, A, k, N: int, route: str = "both", max_bits: int = DEFAULT_MAX_BITS,
             tol: float = 1e-9) -> complex:
    """``S_N(x) = (1/N) sum_{n<N} exp(2 pi i k . T^n x)``.

    With ``route="both"`` the orbit and dual-frequency routes are both
    evaluated and must agree to ``tol``.
    """
    A = _as_matrix(A)
    if route == "both":
        a = weyl_trajectory(x, A, k, N, "orbit", max_bits)[-1] / N
        b = weyl_trajectory(x, A, k, N, "dual", max_bits)[-1] / N
        if abs(a - b) > tol:
            raise ArithmeticError(f"orbit and dual routes disagree by {abs(a - b):.3g}")
        return complex(a)
    return complex(weyl_trajectory(x, A, k, N, route, max_bits)[-1] / N)


def bridging_check(cumulative: np.ndarray, schedule: Sequence[int], slack: float = 1e-12) -> dict:
    """Check ``|N S_N - N_j S_{N_j}| <= N - N_j`` for all ``N_j <= N`` in ``schedule``.

    ``cumulative[n - 1]`` holds ``n S_n``.  The bound holds exactly for exact
    values; ``slack * N`` absorbs floating-point summation error.
    """
    sched = sorted(set(int(n) for n in schedule))
    worst, fails, pairs = -math.inf, 0, 0
    for i, nj in enumerate(sched):
        for n in sched[i:]:
            gap = abs(cumulative[n - 1] - cumulative[nj - 1]) - (n - nj)
            worst = max(worst, gap)
            fails += gap > slack * n
            pairs += 1
    return {"pairs": pairs, "failures": int(fails), "max_excess": float(worst)}


# ---------------------------------------------------------------------------
# second moments and normality
# ---------------------------------------------------------------------------


@dataclass
class REstimate:
    """Monte Carlo estimates of ``r_N`` along a schedule with 3-sigma bands."""

    k: tuple
    N: np.ndarray
    r_hat: np.ndarray
    band: np.ndarray
    samples: int
    S_final: np.ndarray
    bridging: dict

    def rows(self):
        for n, r, b in zip(self.N, self.r_hat, self.band):
            yield {"k": " ".join(map(str, self.k)), "N": int(n), "r_hat": float(r), "band": float(b)}


def _trajectories(points, A, k, N_max, max_bits):
    return np.array([weyl_trajectory(x, A, k, N_max, "orbit", max_bits) for x in points])


def r_N_estimate(measure, A, k, N, samples: int, seed: int, max_bits: int = DEFAULT_MAX_BITS,
                 points=None) -> REstimate:
    """Estimate ``r_N = int |S_N|^2 dmu`` for every ``N`` in a schedule.

    Parameters
    ----------
    measure : Lebesgue, Dirac or self-similar measure
    N : int or sequence of int
        A single ``N`` or a schedule; one set of orbits serves all of them.
    """
    A = _as_matrix(A)
    sched = np.array(sorted(set(np.atleast_1d(N).astype(int).tolist())))
    k = tuple(int(v) for v in np.atleast_1d(k))
    if points is None:
        points = sample_points(measure, seed, samples, required_bits(A, int(sched[-1])), max_bits)
    cum = _trajectories(points, A, k, int(sched[-1]), max_bits)
    S = cum[:, sched - 1] / sched[None, :]
    sq = np.clip(np.abs(S) ** 2, 0.0, 1.0)
    r = sq.mean(axis=0)
    band = 3 * sq.std(axis=0, ddof=1) / math.sqrt(len(points)) if len(points) > 1 else np.zeros(len(sched))
    worst = {"pairs": 0, "failures": 0, "max_excess": -math.inf}
    for row in cum:
        b = bridging_check(row, sched)
        worst = {"pairs": worst["pairs"] + b["pairs"], "failures": worst["failures"] + b["failures"],
                 "max_excess": max(worst["max_excess"], b["max_excess"])}
    return REstimate(k, sched, r, band, len(points), S[:, -1], worst)


@dataclass
class NormalityReport:
    """Per-frequency diagnostics and verdicts.

    Verdict thresholds (disclosed): *consistent-with-normality* when
    ``r_hat_N sqrt(N) <= scaled_bound`` along the whole schedule and
    ``max |S_{N_max}| < s_bound``; *resonant* when the lower band edge of
    ``r_hat`` at ``N_max`` exceeds ``floor`` and ``r_hat sqrt(N)`` exceeds
    ``scaled_bound``; otherwise *inconclusive*.
    """

    A: ExpandingMatrix
    estimates: dict
    partial_sums: dict
    verdicts: dict
    scaled_bound: float
    s_bound: float
    floor: float

    @property
    def n0(self) -> int:
        return self.A.n0

    def rows(self):
        for k, est in self.estimates.items():
            for row, ps in zip(est.rows(), self.partial_sums[k]):
                row.update(partial_sum=float(ps), verdict=self.verdicts[k])
                yield row


def normality_test(measure, A, k_set, N_schedule, samples: int, seed: int,
                   scaled_bound: float = 2.0, s_bound: float = 0.1, floor: float = 0.01,
                   max_bits: int = DEFAULT_MAX_BITS) -> NormalityReport:
    """Weyl-criterion diagnostics for points drawn from ``measure``.

    The same sample points serve every frequency.
    """
    A = _as_matrix(A)
    sched = sorted(set(int(n) for n in N_schedule))
    points = sample_points(measure, seed, samples, required_bits(A, sched[-1]), max_bits)
    estimates, partial, verdicts = {}, {}, {}
    for k in k_set:
        k = tuple(int(v) for v in np.atleast_1d(k))
        est = r_N_estimate(measure, A, k, sched, samples, seed, max_bits, points=points)
        scaled = est.r_hat * np.sqrt(est.N)
        smax = float(np.abs(est.S_final).max())
        if scaled.max() <= scaled_bound and smax < s_bound:
            verdict = "consistent-with-normality"
        elif est.r_hat[-1] - est.band[-1] > floor and scaled[-1] > scaled_bound:
            verdict = "resonant"
        else:
            verdict = "inconclusive"
        estimates[k] = est
        partial[k] = np.cumsum(est.r_hat / est.N)
        verdicts[k] = verdict
    return NormalityReport(A, estimates, partial, verdicts, scaled_bound, s_bound, floor)
