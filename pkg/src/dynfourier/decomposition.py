"""Stopping sets, good words and separation audits for self-similar measures.

The averaging argument for self-similar measures bounds ``|mu^(xi)|`` by an
average of ``|mu^|`` over the frequencies ``r_alpha O_alpha^T xi`` where
``alpha`` runs through a stopping set of words.  This module makes each step
of that argument computable:

* :func:`stopping_words` enumerates the stopping set ``{alpha : |r_alpha| <
  t <= |r_alpha^-|}``;
* :func:`good_word_params` and :func:`classify_good` implement the letter
  frequency windows, and :func:`bad_mass_estimate` measures the mass of
  words outside them;
* :func:`diophantine_lower_bound` certifies Diophantine conditions over a
  finite range of denominators;
* :func:`separation_check` audits that frequencies from different letter
  counts are separated by more than one;
* :func:`multinomial_max` locates the largest multinomial probability;
* :func:`average_bound_report` assembles the whole chain at one frequency.

Everything here needs similitude systems whose linear parts commute, so that
``r_alpha O_alpha`` depends only on letter counts.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np
from scipy.special import gammaln

from .ifs import IFSSystem, Word
from .measures import probability_vector

__all__ = [
    "ThresholdOutOfRange",
    "DecayGapViolated",
    "WrongLength",
    "WordBudgetExceeded",
    "CutoffSet",
    "stopping_words",
    "GoodWordParams",
    "good_word_params",
    "classify_good",
    "good_count_vectors",
    "bad_mass_estimate",
    "DiophantineCertificate",
    "diophantine_lower_bound",
    "certified_exponent",
    "SeparationAudit",
    "separation_check",
    "multinomial_max",
    "multinomial_scaling",
    "PipelineAudit",
    "average_bound_report",
]

WORD_BUDGET = 10_000_000


class ThresholdOutOfRange(ValueError):
    """Raised when a stopping threshold is not in ``(0, 1)``."""


class DecayGapViolated(ValueError):
    """Raised when ``eps - (k-1)/2 + (1/2 + delta)(k-2) >= 0``."""


class WrongLength(ValueError):
    """Raised when a word does not have length ``n(xi)``."""


class WordBudgetExceeded(RuntimeError):
    """Raised when an enumeration would exceed the word budget."""


def _ratios(system: IFSSystem) -> np.ndarray:
    if not system.is_similitude:
        raise TypeError("this operation needs a similitude system")
    return np.array([abs(m.ratio) for m in system.maps])


# ---------------------------------------------------------------------------
# stopping sets
# ---------------------------------------------------------------------------


@dataclass
class CutoffSet:
    """Stopping set for a threshold ``t``: words with ``|r_alpha| < t <= |r_alpha^-|``.

    Attributes
    ----------
    threshold : float
    words : list of Word
    ratios : ndarray
        ``|r_alpha|`` per word.
    weights : ndarray
        ``p_alpha`` per word.
    """

    threshold: float
    words: list
    ratios: np.ndarray
    weights: np.ndarray
    k: int

    def __len__(self):
        return len(self.words)

    @property
    def counts(self) -> np.ndarray:
        return np.array([w.counts(self.k) for w in self.words]).reshape(-1, self.k)

    def is_prefix_free(self) -> bool:
        seen = set(self.words)
        return not any(tuple(w[:j]) in seen for w in self.words for j in range(len(w)))


def stopping_words(system: IFSSystem, threshold: float, p=None, budget: int = WORD_BUDGET) -> CutoffSet:
    """Depth-first enumeration of the stopping set for ``threshold``.

    Parameters
    ----------
    system : IFSSystem
        Similitude system.
    threshold : float
        Value in ``(0, 1)``.
    p : array_like, optional
        Weights used for ``p_alpha``; uniform when omitted.
    """
    if not 0 < threshold < 1:
        raise ThresholdOutOfRange(f"threshold must lie in (0, 1), got {threshold}")
    r = _ratios(system)
    k = len(r)
    p = np.full(k, 1.0 / k) if p is None else probability_vector(p, k)
    words, ratios, weights = [], [], []
    stack = [((), 1.0, 1.0)]
    while stack:
        w, rr, pp = stack.pop()
        for a in range(k - 1, -1, -1):
            r2, p2 = rr * r[a], pp * p[a]
            if r2 < threshold:
                words.append(Word(w + (a,)))
                ratios.append(r2)
                weights.append(p2)
                if len(words) > budget:
                    raise WordBudgetExceeded(f"stopping set exceeds {budget} words")
            else:
                stack.append((w + (a,), r2, p2))
    return CutoffSet(threshold, words, np.array(ratios), np.array(weights), k)


# ---------------------------------------------------------------------------
# good words
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GoodWordParams:
    """Frequency-window parameters at one frequency magnitude.

    ``log_norm`` is ``log|xi|`` (kept in log form so that astronomically
    large frequencies are representable).  ``log_xi_tilde`` is
    ``log_power * log(log|xi|) - log|xi|``.
    """

    delta: float
    eps: float
    l: float
    log_power: float
    log_norm: float
    log_xi_tilde: float
    n: int
    E: np.ndarray
    p: np.ndarray
    ratios: np.ndarray

    @property
    def xi_tilde(self) -> float:
        return math.exp(self.log_xi_tilde)

    @property
    def k(self) -> int:
        return len(self.p)

    def window(self) -> tuple[np.ndarray, np.ndarray]:
        """Closed letter-count window ``[p_a n - E_a, p_a n + E_a]``."""
        return self.p * self.n - self.E, self.p * self.n + self.E

    def at(self, log_norm: float) -> "GoodWordParams":
        """The same parameters re-evaluated at another ``log|xi|``."""
        return _params(self.ratios, self.p, log_norm, self.l, self.delta, self.eps, self.log_power)


def decay_gap(k: int, delta: float, eps: float) -> float:
    """Left-hand side of the decay-gap inequality, which must be negative."""
    return eps - 0.5 * (k - 1) + (0.5 + delta) * (k - 2)


def _params(r, p, log_norm, l, delta, eps, log_power) -> GoodWordParams:
    k = len(r)
    if not decay_gap(k, delta, eps) < 0:
        raise DecayGapViolated(f"decay gap {decay_gap(k, delta, eps):.4g} is not negative")
    if not 0 < delta < 0.5:
        raise DecayGapViolated("delta must lie in (0, 1/2)")
    if log_norm <= 1:
        raise ValueError("|xi| must exceed e")
    lp = 3 * l if log_power is None else log_power
    log_tilde = lp * math.log(log_norm) - log_norm
    if log_tilde >= 0:
        raise ThresholdOutOfRange(
            f"xi_tilde = (log|xi|)^{lp:g}/|xi| >= 1 at log|xi| = {log_norm:.4g}; lower log_power")
    L = -log_tilde
    H = -float(np.dot(p, np.log(r)))
    n = math.floor((1 - L ** (-(0.5 - delta))) * L / H)
    if n < 1:
        raise ValueError(f"n(xi) = {n} < 1; |xi| is too small")
    E = L ** (0.5 + delta) / (-k * np.log(r))
    return GoodWordParams(delta, eps, l, lp, log_norm, log_tilde, n, E, np.asarray(p, float),
                          np.asarray(r, float))


def _log_norm(xi=None, log_norm=None) -> float:
    if log_norm is not None:
        return float(log_norm)
    return math.log(float(np.linalg.norm(np.atleast_1d(np.asarray(xi, dtype=float)))))


def good_word_params(system: IFSSystem, p, xi=None, l: float = 2, delta: float = 0.1,
                     eps: float = 0.1, log_power: float | None = None,
                     log_norm: float | None = None) -> GoodWordParams:
    """Compute ``n(xi)`` and the windows ``E_a(xi)``.

    With ``L = -log(xi_tilde)`` and ``H = -sum_a p_a log|r_a|``::

        n(xi)   = floor((1 - L**-(1/2 - delta)) * L / H)
        E_a(xi) = L**(1/2 + delta) / (-k log|r_a|)

    where ``xi_tilde = (log|xi|)**log_power / |xi|``.  ``log_power``
    defaults to ``3 l``.

    Parameters
    ----------
    xi : array_like, optional
        The frequency (only its norm matters).
    log_norm : float, optional
        ``log|xi|`` directly, for frequencies beyond floating point range.

    Raises
    ------
    DecayGapViolated
    ThresholdOutOfRange
        When ``xi_tilde >= 1``.
    """
    r = _ratios(system)
    p = probability_vector(p, len(r))
    return _params(r, p, _log_norm(xi, log_norm), l, delta, eps, log_power)


def classify_good(word: Sequence[int], params: GoodWordParams, p=None) -> bool:
    """True when ``word`` has length ``n(xi)`` and all letter counts lie in the window."""
    if len(word) != params.n:
        raise WrongLength(f"word has length {len(word)}, expected n(xi) = {params.n}")
    c = Word(word).counts(params.k)
    lo, hi = params.window()
    return bool(np.all((c >= lo) & (c <= hi)))


def _in_window(counts: np.ndarray, params: GoodWordParams) -> np.ndarray:
    lo, hi = params.window()
    return np.all((counts >= lo) & (counts <= hi), axis=-1)


def good_count_vectors(params: GoodWordParams) -> np.ndarray:
    """All letter-count vectors of good words, as an ``(M, k)`` array."""
    lo, hi = params.window()
    n, k = params.n, params.k
    lo_i = np.maximum(0, np.ceil(lo - 1e-12)).astype(int)
    hi_i = np.minimum(n, np.floor(hi + 1e-12)).astype(int)
    if k == 1:
        return np.array([[n]]) if lo_i[0] <= n <= hi_i[0] else np.zeros((0, 1), int)
    ranges = [range(lo_i[a], hi_i[a] + 1) for a in range(k - 1)]
    out = []
    for head in itertools.product(*ranges):
        last = n - sum(head)
        if lo_i[-1] <= last <= hi_i[-1]:
            out.append(head + (last,))
    return np.array(out, dtype=int).reshape(-1, k)


def bad_mass_estimate(system: IFSSystem, p, xi_sweep, params: GoodWordParams, samples: int,
                      seed: int) -> dict:
    """Monte Carlo mass of non-good words of length ``n(xi)`` across a sweep.

    Letter counts of ``samples`` i.i.d. words are drawn from the multinomial
    law at every sweep point; ``params`` supplies ``delta``, ``eps``, ``l``
    and ``log_power``.  The sweep is given by ``log|xi|`` values.  The
    result holds the per-point estimates with standard errors and the least
    squares fit of ``log(mass)`` against ``(log|xi|)**(2 delta)``.
    """
    if samples < 1000:
        raise ValueError("need at least 1e3 samples")
    p = probability_vector(p, system.k)
    rng = np.random.default_rng(seed)
    sweep = np.atleast_1d(np.asarray(xi_sweep, dtype=float))
    masses, errs, ns = [], [], []
    for log_norm in sweep:
        par = params.at(float(log_norm))
        counts = rng.multinomial(par.n, p, size=samples)
        bad = ~_in_window(counts, par)
        m = float(bad.mean())
        masses.append(m)
        errs.append(math.sqrt(max(m * (1 - m), 1e-300) / samples))
        ns.append(par.n)
    masses = np.array(masses)
    x = sweep ** (2 * params.delta)
    fit = {"slope": float("nan"), "intercept": float("nan"), "r2": float("nan")}
    pos = masses > 0
    if pos.sum() >= 2:
        y = np.log(masses[pos])
        A = np.stack([np.ones(pos.sum()), x[pos]], axis=1)
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        ss = float(((y - y.mean()) ** 2).sum())
        r2 = 1 - float(((A @ coef - y) ** 2).sum()) / ss if ss > 0 else float("nan")
        fit = {"slope": float(coef[1]), "intercept": float(coef[0]), "r2": r2}
    return {"log_norm": sweep, "n": np.array(ns), "mass": masses, "stderr": np.array(errs),
            "x": x, **fit}


# ---------------------------------------------------------------------------
# Diophantine certificates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiophantineCertificate:
    """Finite-range Diophantine certificate.

    ``value`` is ``min q**l |x - p/q|`` over ``1 <= q <= Q`` (equivalently
    ``min q**(l-1) dist(q x, Z)``) for one variable, or ``min
    max(|p|,|q|)**l dist(p t1 + q t2, Z)`` over the nonzero lattice box for
    two variables; ``argmin`` records the minimiser.
    """

    x: object
    l: float
    Q: int
    value: float
    argmin: tuple


def _convergent_denominators(x: mpmath.mpf, Q: int) -> list[int]:
    dens = []
    q_prev, q = 0, 1
    y = x
    while q <= Q:
        dens.append(q)
        a = mpmath.floor(y)
        frac = y - a
        if frac < mpmath.mpf(10) ** (-(mpmath.mp.dps - 5)):
            break
        y = 1 / frac
        a = int(mpmath.floor(y))
        q_prev, q = q, a * q + q_prev
    return dens


def diophantine_lower_bound(x, l: float, Q: int, dps: int = 60) -> DiophantineCertificate:
    """Certify ``|x - p/q| >= c / q**l`` for ``q <= Q`` (or the 2-D analogue).

    For one variable only convergent denominators can minimise
    ``q**(l-1) dist(qx, Z)`` when ``l >= 1``, so the continued fraction
    expansion gives the exact minimum.  Pass ``x`` as an ``mpmath`` number,
    a :class:`fractions.Fraction` or a string for full precision.  For a
    pair ``x = (t1, t2)`` the lattice box ``max(|p|, |q|) <= Q`` is scanned.

    The value is zero when ``x`` is rational with denominator at most ``Q``.
    """
    if Q < 2:
        raise ValueError("Q must be at least 2")
    if isinstance(x, (tuple, list)) and len(x) == 2:
        return _diophantine_pair(x, l, int(Q))
    with mpmath.workdps(dps):
        if isinstance(x, Fraction):
            X = mpmath.mpf(x.numerator) / x.denominator
        else:
            X = mpmath.mpf(x)
        best, arg = None, None
        for q in _convergent_denominators(X, int(Q)):
            dist = abs(q * X - mpmath.nint(q * X))
            val = mpmath.mpf(q) ** (l - 1) * dist
            if best is None or val < best:
                best, arg = val, (q,)
        value = float(best)
        if isinstance(x, Fraction) and x.denominator <= Q:
            value = 0.0
            arg = (x.denominator,)
    return DiophantineCertificate(x, l, int(Q), value, arg)


def _diophantine_pair(x, l, Q) -> DiophantineCertificate:
    t1, t2 = (float(v) for v in x)
    best, arg = np.inf, None
    qs = np.arange(-Q, Q + 1)
    for p in range(0, Q + 1):
        v = p * t1 + qs * t2
        dist = np.abs(v - np.rint(v))
        h = np.maximum(abs(p), np.abs(qs)).astype(float)
        val = h**l * dist
        if p == 0:
            val = np.where(qs > 0, val, np.inf)
        i = int(np.argmin(val))
        if val[i] < best:
            best, arg = float(val[i]), (p, int(qs[i]))
    return DiophantineCertificate(tuple(x), l, Q, best, arg)


def certified_exponent(x, Q: int = 1_000_000, candidates: Sequence[float] = (2, 3, 4)) -> tuple:
    """Smallest candidate ``l`` with a strictly positive certificate at ``Q``."""
    for l in candidates:
        cert = diophantine_lower_bound(x, l, Q)
        if cert.value > 0:
            return l, cert
    return None, cert


# ---------------------------------------------------------------------------
# separation audit
# ---------------------------------------------------------------------------


def _count_vectors_below(log_r: np.ndarray, log_limit: float, budget: int) -> np.ndarray:
    """All count vectors ``c`` with ``sum c_a (-log r_a) <= log_limit``."""
    k = len(log_r)
    w = -log_r
    out = []

    def rec(prefix, used):
        a = len(prefix)
        if a == k:
            out.append(prefix)
            if len(out) > budget:
                raise WordBudgetExceeded(f"more than {budget} count vectors")
            return
        m = int(math.floor((log_limit - used) / w[a] + 1e-12))
        for c in range(max(m, -1) + 1):
            rec(prefix + (c,), used + c * w[a])

    rec((), 0.0)
    return np.array(out, dtype=int).reshape(-1, k)


def _cutoff_members(params: GoodWordParams, budget: int):
    """Count vectors (with last letter) of the stopping set and their goodness.

    Returns ``(counts, last, good)`` where ``counts`` are letter counts of
    stopping-set words whose final letter is ``last``; ``good`` marks those
    for which some arrangement has a good prefix of length ``n(xi)``, which
    is exactly membership in the good cut-off set.
    """
    log_r = np.log(params.ratios)
    lt = params.log_xi_tilde
    cand = _count_vectors_below(log_r, -lt - log_r.min(), budget)
    lr = cand @ log_r
    G = good_count_vectors(params)
    counts, last, good = [], [], []
    for a in range(params.k):
        sel = (cand[:, a] >= 1) & (lr < lt) & (lr - log_r[a] >= lt)
        for c in cand[sel]:
            length = int(c.sum())
            if length < params.n:
                ok = False
            elif length == params.n:
                ok = bool(_in_window(c[None, :], params)[0])
            else:
                rest = c.copy()
                rest[a] -= 1
                ok = bool(len(G)) and bool(np.any(np.all(G <= rest, axis=1)))
            counts.append(c)
            last.append(a)
            good.append(ok)
    return (np.array(counts, dtype=int).reshape(-1, params.k), np.array(last, dtype=int),
            np.array(good, dtype=bool))


@dataclass
class SeparationAudit:
    """Result of :func:`separation_check`.

    ``rows`` holds one entry per (class, band) with the number of distinct
    ``(a1, a2)`` count pairs and the smallest frequency gap between
    distinct pairs; ``violations`` lists the offending rows.
    """

    form: str
    log_norm: float
    params: GoodWordParams
    n_members: int
    n_classes: int
    K_constant: float
    rows: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    min_gap: float = float("inf")

    @property
    def ok(self) -> bool:
        return not self.violations


def _linear_for_counts(system: IFSSystem, c: np.ndarray) -> np.ndarray:
    M = np.eye(system.dim)
    for a, n in enumerate(c):
        if n:
            M = M @ np.linalg.matrix_power(system.maps[a].linear, int(n))
    return M


def separation_check(system: IFSSystem, p, xi, l: float = 2, delta: float = 0.1, eps: float = 0.1,
                     log_power: float | None = None, pair: tuple = (0, 1), form: str = "auto",
                     small: float = 0.0, budget: int = WORD_BUDGET) -> SeparationAudit:
    """Audit the separation of child frequencies within conditioning classes.

    Members of the good cut-off set are grouped into classes by their letter
    counts outside ``pair = (a1, a2)`` and into unit bands ``[n, n+1)`` by
    ``|r_alpha| |xi|``.  In the ratio form a (class, band) cell is a
    violation when it contains two different ``(a1, a2)`` count pairs.  In
    the rotation form it is a violation when two different count pairs give
    frequencies ``r_alpha O_alpha^T xi`` at distance at most one.  Only bands
    with ``n >= |xi|**small`` are audited.

    The enumeration runs over letter-count vectors, which is exact because
    ``r_alpha O_alpha`` depends on counts only; the budget caps the number
    of count vectors.
    """
    r = _ratios(system)
    p = probability_vector(p, len(r))
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    norm = float(np.linalg.norm(xi))
    params = _params(r, p, math.log(norm), l, delta, eps, log_power)
    if form == "auto":
        rotating = system.dim > 1 and any(not np.allclose(m.rotation, np.eye(system.dim))
                                          for m in system.maps)
        form = "rotation" if rotating else "ratio"
    counts, last, good = _cutoff_members(params, budget)
    counts = counts[good]
    a1, a2 = pair
    others = [a for a in range(len(r)) if a not in pair]
    values = np.exp(counts @ np.log(r)) * norm
    bands = np.floor(values).astype(np.int64)
    if form == "rotation":
        freqs = np.array([_linear_for_counts(system, c).T @ xi for c in counts]).reshape(-1, system.dim)
    else:
        freqs = values[:, None]
    cells: dict = {}
    for i, c in enumerate(counts):
        if bands[i] < norm**small:
            continue
        key = (tuple(c[others]), int(bands[i]))
        cells.setdefault(key, {})[(int(c[a1]), int(c[a2]))] = freqs[i]
    classes = {key[0] for key in cells} | {tuple(c[others]) for c in counts}
    audit = SeparationAudit(form, math.log(norm), params, len(counts), len(classes),
                            len(classes) / max(math.log(norm) ** ((len(r) - 2) * (0.5 + delta)), 1e-300))
    for (cls, band), pairs in sorted(cells.items()):
        keys = list(pairs)
        gap = float("inf")
        for u, v in itertools.combinations(keys, 2):
            gap = min(gap, float(np.linalg.norm(pairs[u] - pairs[v])))
        row = {"class": cls, "band": band, "pairs": len(keys), "min_gap": gap}
        audit.rows.append(row)
        audit.min_gap = min(audit.min_gap, gap)
        if (form == "ratio" and len(keys) > 1) or (form == "rotation" and gap <= 1):
            audit.violations.append(row)
    return audit


# ---------------------------------------------------------------------------
# multinomial maximum
# ---------------------------------------------------------------------------


def _log_multinomial(C: np.ndarray, n: int, logp: np.ndarray) -> np.ndarray:
    return gammaln(n + 1) - gammaln(C + 1).sum(axis=1) + (C * logp).sum(axis=1)


def _compositions(n: int, k: int) -> np.ndarray:
    if k == 1:
        return np.array([[n]])
    out = []
    for head in itertools.product(range(n + 1), repeat=k - 1):
        s = sum(head)
        if s <= n:
            out.append(head + (n - s,))
    return np.array(out, dtype=int)


def multinomial_max(n: int, p, method: str = "pruned") -> dict:
    """Largest multinomial probability ``n!/prod k_a! prod p_a**k_a``.

    ``method="pruned"`` searches only the window ``floor(p_a n) +- 10 k`` in
    every coordinate, where the maximiser is known to lie; ``"brute"``
    enumerates every composition.  Both scan compositions in lexicographic
    order and keep the first maximiser.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    p = probability_vector(p)
    k = len(p)
    logp = np.log(p)
    if method == "brute":
        C = _compositions(n, k)
    elif method == "pruned":
        base = np.floor(p * n).astype(int)
        ranges = [range(max(0, base[a] - 10 * k), min(n, base[a] + 10 * k) + 1) for a in range(k - 1)]
        C = []
        for head in itertools.product(*ranges):
            last = n - sum(head)
            if 0 <= last and abs(last - base[-1]) <= 10 * k:
                C.append(head + (last,))
        C = np.array(C, dtype=int).reshape(-1, k)
    else:
        raise ValueError(f"unknown method {method!r}")
    lv = _log_multinomial(C, n, logp)
    i = int(np.argmax(lv))
    return {"max": float(np.exp(lv[i])), "argmax": tuple(int(v) for v in C[i])}


def multinomial_scaling(p, n_max: int) -> dict:
    """``max_n * n**((k-1)/2)`` for ``n = 1 .. n_max`` using the pruned search."""
    p = probability_vector(p)
    k = len(p)
    ns = np.arange(1, n_max + 1)
    vals = np.array([multinomial_max(int(n), p)["max"] for n in ns])
    return {"n": ns, "max": vals, "scaled": vals * ns ** ((k - 1) / 2)}


# ---------------------------------------------------------------------------
# pipeline audit
# ---------------------------------------------------------------------------


@dataclass
class PipelineAudit:
    """The quantities compared by the averaging argument at one frequency."""

    xi: np.ndarray
    direct: float
    average: float
    bad_mass: float
    bad_band_actual: float
    bad_band_majorant: float
    good_band_part: float
    bad_bands: list
    evaluator_error: float
    n_words: int

    @property
    def triangle_ok(self) -> bool:
        return self.direct <= self.average + self.bad_mass + self.evaluator_error

    @property
    def majorant_ok(self) -> bool:
        return self.bad_band_actual <= self.bad_band_majorant + self.evaluator_error

    def as_dict(self) -> dict:
        return {"xi": np.atleast_1d(self.xi).tolist(), "direct": self.direct, "average": self.average,
                "bad_mass": self.bad_mass, "bad_band_actual": self.bad_band_actual,
                "bad_band_majorant": self.bad_band_majorant, "good_band_part": self.good_band_part,
                "bad_bands": self.bad_bands, "evaluator_error": self.evaluator_error,
                "n_words": self.n_words, "triangle_ok": self.triangle_ok,
                "majorant_ok": self.majorant_ok}


def average_bound_report(measure, xi, l: float = 2, delta: float = 0.1, eps: float = 0.1,
                         tau: float = 0.1, evaluator=None, log_power: float | None = None,
                         pair: tuple = (0, 1), grid_step: float = 0.05,
                         budget: int = 2_000_000) -> PipelineAudit:
    """Evaluate the chain of inequalities of the averaging argument at ``xi``.

    Reports the direct value ``|mu^(xi)|``, the average ``sum p_alpha
    |mu^(r_alpha O_alpha^T xi)|`` over the good cut-off set, the mass of the
    remaining stopping-set words, and the multinomial majorant of the
    contribution from bands where ``|mu^|`` is large.  The bad bands are the
    unit bands ``[n, n+1)`` holding some ``zeta`` with ``|zeta| <=
    (log|xi|)**log_power`` and ``|mu^(zeta)| >= (log|xi|)**-tau``, found on a
    grid of step ``grid_step``.
    """
    from .fourier import FunctionalEquation, fourier_transform, frequency_grid

    evaluator = FunctionalEquation(1e-9) if evaluator is None else evaluator
    system = measure.system
    r = _ratios(system)
    p = measure.m
    if not measure.is_bernoulli:
        raise TypeError("the averaging audit needs a self-similar (Bernoulli) measure")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    norm = float(np.linalg.norm(xi))
    log_norm = math.log(norm)
    params = _params(r, p, log_norm, l, delta, eps, log_power)
    cut = stopping_words(system, params.xi_tilde, p, budget)
    C = cut.counts
    good = np.zeros(len(cut), dtype=bool)
    for i, w in enumerate(cut.words):
        if len(w) >= params.n:
            good[i] = bool(_in_window(Word(w[:params.n]).counts(params.k)[None, :], params)[0])
    uniq, inv = np.unique(C, axis=0, return_inverse=True)
    inv = inv.ravel()
    child = np.array([_linear_for_counts(system, c).T @ xi for c in uniq]).reshape(-1, system.dim)
    vals, errs = fourier_transform(measure, child, evaluator)
    mod = np.abs(vals)[inv]
    direct, derr = fourier_transform(measure, xi if system.dim > 1 else xi[0], evaluator)
    average = float((cut.weights[good] * mod[good]).sum())
    bad_mass = float(cut.weights[~good].sum())
    T = log_norm ** params.log_power
    grid = frequency_grid(system.dim, 0.0, T + grid_step, grid_step)
    gv, _ = fourier_transform(measure, grid, evaluator)
    gn = np.linalg.norm(grid, axis=1)
    hot = (np.abs(gv) >= log_norm ** (-tau)) & (gn <= T)
    bad_bands = sorted({int(b) for b in np.floor(gn[hot])})
    bands = np.floor(cut.ratios * norm).astype(np.int64)
    in_bad = np.isin(bands, bad_bands) & good
    actual = float((cut.weights[in_bad] * mod[in_bad]).sum())
    good_part = float((cut.weights[good & ~in_bad] * mod[good & ~in_bad]).sum())
    # multinomial majorant: every count vector present in a bad band contributes
    # the probability of all words with those counts
    seen = {tuple(c) for c in C[in_bad]}
    logp = np.log(p)
    majorant = 0.0
    for c in seen:
        c = np.array(c)
        majorant += float(np.exp(_log_multinomial(c[None, :], int(c.sum()), logp))[0])
    ev_err = float(np.max(errs)) + float(derr) if len(errs) else float(derr)
    return PipelineAudit(xi, float(abs(direct)), average, bad_mass, actual, majorant, good_part,
                         bad_bands, ev_err, len(cut))
