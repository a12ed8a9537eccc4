"""Alternating Cauchy series and retrospective event simulation.

An event of probability ``p`` is decided with one uniform ``u`` by comparing
``u`` against lower and upper partial sums converging to ``p``; only finitely
many terms are ever evaluated.

Every series here exposes ``bounds(k) -> (S_{2k}, S_{2k+1})`` where the even
term is a lower bound and the odd term an upper bound of ``p``, both monotone
from ``start_index`` on.
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import ContractViolation, NumericalPrecisionError, PreconditionError

MAX_ITER = 10_000
WIDTH_FLOOR = 1e-12
_MONO_TOL = 1e-12


def _clip01(v: float) -> float:
    if v < 0.0:
        return 0.0
    if v > 1.0:
        return 1.0
    return v


class AlternatingSeries:
    """Lazily evaluated bracketing sequence for a probability ``p``.

    Subclasses implement ``_raw(k)``. From ``start_index`` on the brackets are
    cached and made exactly monotone in floating point (running max of the
    lower terms, running min of the upper terms), which only absorbs roundoff.
    """

    start_index: int = 0
    meta: str = ""

    def _raw(self, k: int) -> tuple[float, float]:
        raise NotImplementedError

    def bounds(self, k: int) -> tuple[float, float]:
        s = self.start_index
        if k < s:
            return self._raw(k)
        cache = self.__dict__.setdefault("_bcache", [])
        i = k - s
        while len(cache) <= i:
            lo, hi = self._raw(s + len(cache))
            if cache:
                plo, phi_ = cache[-1]
                if hi > phi_:
                    hi = phi_
                if lo < plo:
                    lo = plo
            if lo > hi:
                # roundoff crossed the brackets; collapse inside the previous bracket
                v = hi if not cache else min(max(hi, cache[-1][0]), cache[-1][1])
                lo = hi = v
            cache.append((lo, hi))
        return cache[i]

    def eval(self, n: int) -> float:
        """Return ``S_n``; even indices are lower bounds, odd ones upper bounds."""
        lo, hi = self.bounds(n // 2)
        return lo if n % 2 == 0 else hi

    def limit(self, tol: float = 1e-14, kmax: int = 2000) -> float:
        """Midpoint of the bracket once narrower than ``tol`` (diagnostics only)."""
        k = self.start_index
        lo, hi = self.bounds(k)
        while hi - lo > tol and k < self.start_index + kmax:
            k += 1
            lo, hi = self.bounds(k)
        return 0.5 * (lo + hi)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.meta})"


class ConstantSeries(AlternatingSeries):
    """Series whose brackets collapse onto a known constant."""

    def __init__(self, value: float):
        self.value = float(value)
        self.meta = f"{value:g}"

    def _raw(self, k):
        return self.value, self.value

    def bounds(self, k):
        return self.value, self.value


ZERO = ConstantSeries(0.0)
ONE = ConstantSeries(1.0)


class GammaSeries(AlternatingSeries):
    """Probability that the bridge (s,x)->(t,y) stays inside ``[ell, ups]``.

    ``classic_partial(n)`` returns the partial sums in their textbook indexing,
    ``S_{2k} = 1 - sum_{j<=k} (varsigma_j - varphi_j)`` and
    ``S_{2k+1} = S_{2k} - varsigma_{k+1}``, in which the even terms are the
    upper bounds. ``bounds`` reorders them into (lower, upper) pairs.
    """

    def __init__(self, s: float, t: float, x: float, y: float, ell: float, ups: float):
        if not t > s:
            raise PreconditionError(f"need t > s, got s={s}, t={t}")
        if not ell < ups:
            raise PreconditionError(f"need ell < ups, got [{ell}, {ups}]")
        self.s, self.t, self.x, self.y, self.ell, self.ups = s, t, x, y, ell, ups
        self._L = t - s
        self._D = ups - ell
        self._sig = [0.0]
        self._cum = [0.0]
        self.meta = f"[{ell:.6g},{ups:.6g}] x={x:.6g} y={y:.6g} dt={self._L:.6g}"

    def varsigma(self, j: int) -> float:
        x, y, ell, ups = self.x, self.y, self.ell, self.ups
        a = self._D * j
        c = -2.0 / self._L
        return math.exp(c * (a + ell - x) * (a + ell - y)) + math.exp(c * (a - ups + x) * (a - ups + y))

    def varphi(self, j: int) -> float:
        D = self._D
        c = -2.0 * j / self._L
        dxy = D * (self.x - self.y)
        return math.exp(c * (D * D * j + dxy)) + math.exp(c * (D * D * j - dxy))

    def _grow(self, j: int) -> None:
        while len(self._sig) <= j:
            i = len(self._sig)
            self._sig.append(self.varsigma(i))
            self._cum.append(self._cum[-1] + self._sig[i] - self.varphi(i))

    def classic_partial(self, n: int) -> float:
        k = n // 2
        self._grow(k + 1)
        s2k = 1.0 - self._cum[k]
        return s2k if n % 2 == 0 else s2k - self._sig[k + 1]

    def _raw(self, k):
        self._grow(k + 1)
        hi = 1.0 - self._cum[k]
        return hi - self._sig[k + 1], hi


def gamma_series(s: float, t: float, x: float, y: float, ell: float, ups: float) -> AlternatingSeries:
    """Containment probability of a Brownian bridge in ``[ell, ups]``.

    Bands that do not contain both endpoints in their interior give the
    constant-zero series (the probability is exactly zero).
    """
    if not t > s:
        raise PreconditionError(f"need t > s, got s={s}, t={t}")
    if ell >= min(x, y) or ups <= max(x, y):
        return ZERO
    if _log_gamma_spectral_bound(t - s, x, y, ell, ups) < _LOG_TINY:
        return ZERO
    return GammaSeries(s, t, x, y, ell, ups)


_LOG_TINY = -745.0  # log of the smallest subnormal double


def _log_gamma_spectral_bound(L, x, y, ell, ups) -> float:
    """Log of an upper bound on the containment probability from the eigenfunction expansion.

    Narrow bands make the image sum converge only after about sqrt(L) / D
    terms, but there the probability is far below double precision anyway.
    """
    D = ups - ell
    r = math.pi ** 2 * L / (2.0 * D * D)
    return (math.log(2.0 * math.sqrt(2.0 * math.pi * L) / D) + (y - x) ** 2 / (2.0 * L) - r
            - math.log1p(-math.exp(-3.0 * r)))


class Delta1Series(AlternatingSeries):
    """P(max <= ups) for a minimum-conditioned bridge whose endpoints both exceed ``mhat``."""

    def __init__(self, s, t, x, y, mhat, ups):
        if not mhat < min(x, y):
            raise PreconditionError("delta1 needs mhat below both endpoints; use delta2")
        self._gamma = gamma_series(s, t, x, y, mhat, ups)
        self._den = -math.expm1(-2.0 * (x - mhat) * (y - mhat) / (t - s))
        if not self._den > 0.0:
            raise NumericalPrecisionError("delta1 normaliser underflowed")
        self.meta = f"m={mhat:.6g} ups={ups:.6g} x={x:.6g} y={y:.6g} dt={t - s:.6g}"

    def _raw(self, k):
        lo, hi = self._gamma.bounds(k)
        return lo / self._den, hi / self._den


class Delta2Series(AlternatingSeries):
    """P(max <= ups) for a bridge from its minimum ``mhat`` to ``y`` over ``[s, t]``."""

    def __init__(self, s, t, y, mhat, ups):
        if not t > s:
            raise PreconditionError("need t > s")
        if not (mhat < y <= ups):
            raise PreconditionError(f"delta2 needs mhat < y <= ups, got m={mhat}, y={y}, ups={ups}")
        self._L = t - s
        self._c = y - mhat
        self._D = ups - mhat
        self.start_index = math.ceil(math.sqrt(self._L + self._D ** 2) / (2.0 * self._D))
        self._psi = [0.0]
        self._cum = [0.0]
        self.meta = f"m={mhat:.6g} ups={ups:.6g} y={y:.6g} dt={self._L:.6g}"

    def psi(self, j: int) -> float:
        a = self._D * j
        return (2.0 * a - self._c) * math.exp(-2.0 * a * (a - self._c) / self._L)

    def chi(self, j: int) -> float:
        a = self._D * j
        return (2.0 * a + self._c) * math.exp(-2.0 * a * (a + self._c) / self._L)

    def _grow(self, j):
        while len(self._psi) <= j:
            i = len(self._psi)
            self._psi.append(self.psi(i))
            self._cum.append(self._cum[-1] + self._psi[i] - self.chi(i))

    def _raw(self, k):
        self._grow(k + 1)
        hi = 1.0 - self._cum[k] / self._c
        return hi - self._psi[k + 1] / self._c, hi


def delta_series(s, t, x, y, mhat, ups) -> AlternatingSeries:
    """P(max <= ups | min = mhat) on ``[s, t]``; picks delta1 or delta2."""
    if ups <= max(x, y):
        return ZERO
    if x == mhat and y == mhat:
        raise PreconditionError("both endpoints sit at the minimum")
    if x == mhat:
        return Delta2Series(s, t, y, mhat, ups)
    if y == mhat:
        return Delta2Series(s, t, x, mhat, ups)
    return Delta1Series(s, t, x, y, mhat, ups)


class ComposedSeries(AlternatingSeries):
    """``f(p_1, ..., p_m)`` for ``f`` monotone in each argument.

    ``signs[i]`` is +1 if ``f`` increases in argument ``i`` and -1 if it
    decreases. The lower bracket plugs in the lower bounds of increasing
    arguments and the upper bounds of decreasing ones; the upper bracket the
    reverse. Component brackets are clipped to [0, 1] when ``clip`` is set,
    which keeps products of probability brackets monotone.
    """

    def __init__(self, f: Callable[[Sequence[float]], float], parts: Sequence[AlternatingSeries],
                 signs: Sequence[int], clip: bool = True, meta: str = ""):
        if len(parts) != len(signs):
            raise PreconditionError("one sign per part required")
        for sg in signs:
            if sg not in (1, -1):
                raise ContractViolation(f"partial derivative sign must be +1 or -1, got {sg}")
        self.f = f
        self.parts = list(parts)
        self.signs = list(signs)
        self.clip = clip
        self.meta = meta

    def _raw(self, k):
        lo_args = []
        hi_args = []
        for p, sg in zip(self.parts, self.signs):
            a, b = p.bounds(p.start_index + k)
            if self.clip:
                a, b = _clip01(a), _clip01(b)
            if sg > 0:
                lo_args.append(a)
                hi_args.append(b)
            else:
                lo_args.append(b)
                hi_args.append(a)
        return self.f(lo_args), self.f(hi_args)


def compose_series(f, parts, signs, clip: bool = True, meta: str = "") -> AlternatingSeries:
    return ComposedSeries(f, parts, signs, clip=clip, meta=meta)


def _inclusion_exclusion(v):
    return v[0] - v[1] - v[2] + v[3]


def _product(v):
    out = 1.0
    for a in v:
        out *= a
    return out


def _ratio(v):
    num, den = v
    if den <= 0.0:
        return math.inf if num > 0.0 else 0.0
    return num / den


def band_series(s, t, x, y, l_lo, l_hi, u_lo, u_hi) -> AlternatingSeries:
    """P(min in [l_lo, l_hi], max in [u_lo, u_hi]) for a single bridge."""
    parts = [gamma_series(s, t, x, y, l_lo, u_hi), gamma_series(s, t, x, y, l_hi, u_hi),
             gamma_series(s, t, x, y, l_lo, u_lo), gamma_series(s, t, x, y, l_hi, u_lo)]
    if all(p is ZERO for p in parts):
        return ZERO
    return ComposedSeries(_inclusion_exclusion, parts, (1, -1, -1, 1), meta="beta")


def _check_partition(times, values):
    if len(times) != len(values) or len(times) < 2:
        raise PreconditionError("need matching times/values with at least two entries")
    for a, b in zip(times[:-1], times[1:]):
        if not b > a:
            raise PreconditionError("partition times must be strictly increasing")


def rho_series(times, values, l_lo, l_hi, u_lo, u_hi) -> AlternatingSeries:
    """P(path min in [l_lo, l_hi] and path max in [u_lo, u_hi]) given the partition values."""
    _check_partition(times, values)
    if not (l_lo <= l_hi <= min(values) and max(values) <= u_lo <= u_hi):
        raise PreconditionError("band ordering violated")
    segs = list(zip(times[:-1], times[1:], values[:-1], values[1:]))
    groups = []
    for lo_b, hi_b in ((l_lo, u_hi), (l_hi, u_hi), (l_lo, u_lo), (l_hi, u_lo)):
        groups.append([gamma_series(s, t, x, y, lo_b, hi_b) for s, t, x, y in segs])
    n = len(segs)
    parts = [g for grp in groups for g in grp]
    signs = [1] * n + [-1] * n + [-1] * n + [1] * n

    def f(v):
        return (_product(v[:n]) - _product(v[n:2 * n]) - _product(v[2 * n:3 * n])
                + _product(v[3 * n:]))

    return ComposedSeries(f, parts, signs, meta=f"rho(n={n - 1})")


def beta_series(times, values, bands) -> AlternatingSeries:
    """Product over sub-intervals of single-interval band probabilities.

    ``bands[i] = (l_lo, l_hi, u_lo, u_hi)`` applies to ``[times[i], times[i+1]]``.
    """
    _check_partition(times, values)
    if len(bands) != len(times) - 1:
        raise PreconditionError("one band quadruple per sub-interval")
    factors = []
    for (s, t, x, y), b in zip(zip(times[:-1], times[1:], values[:-1], values[1:]), bands):
        l_lo, l_hi, u_lo, u_hi = b
        if not (l_lo <= l_hi <= min(x, y) and max(x, y) <= u_lo <= u_hi):
            raise PreconditionError("band ordering violated")
        factors.append(band_series(s, t, x, y, *b))
    if any(f is ZERO for f in factors):
        return ZERO
    if len(factors) == 1:
        return factors[0]
    return ComposedSeries(_product, factors, [1] * len(factors), meta=f"beta(n={len(factors) - 1})")


def ratio_series(num: AlternatingSeries, den: AlternatingSeries) -> AlternatingSeries:
    """``num / den`` for two probability series."""
    if num is ZERO:
        return ZERO
    return ComposedSeries(_ratio, [num, den], (1, -1), meta="ratio")


def series_decide(seq: AlternatingSeries, u: float) -> tuple[bool, int]:
    """Decide ``u <= p`` retrospectively; returns the outcome and stopping index."""
    k = seq.start_index
    plo, phi_ = -math.inf, math.inf
    for _ in range(MAX_ITER):
        lo, hi = seq.bounds(k)
        if lo < plo - _MONO_TOL or hi > phi_ + _MONO_TOL or lo > hi + _MONO_TOL:
            raise ContractViolation(f"series lost its alternating structure at k={k}: {seq!r}")
        if u <= lo:
            return True, k
        if u >= hi:
            return False, k
        if hi - lo < WIDTH_FLOOR:
            raise NumericalPrecisionError(f"u={u!r} within {hi - lo:.3g} of the limit of {seq!r}")
        plo, phi_ = lo, hi
        k += 1
    raise NumericalPrecisionError(f"iteration cap reached for {seq!r}")


def series_event(seq: AlternatingSeries, rng: np.random.Generator) -> bool:
    """Return True with probability exactly ``lim S_k``."""
    return series_decide(seq, rng.random())[0]


def inversion_select(probs: Sequence[AlternatingSeries], u: float) -> int:
    """Index ``j`` with ``C_{j-1} < u <= C_j`` for cumulative sums of ``probs``.

    The probabilities must sum to one; the last index is returned once ``u``
    is certified to exceed every earlier cumulative sum.
    """
    m = len(probs)
    j = 0
    k = 0
    for _ in range(MAX_ITER):
        if j == m - 1:
            return j
        clo = chi = 0.0
        for p in probs[: j + 1]:
            a, b = p.bounds(p.start_index + k)
            clo += a
            chi += b
        if u <= clo:
            return j
        if u > chi:
            j += 1
            continue
        if chi - clo < WIDTH_FLOOR:
            raise NumericalPrecisionError("inversion bracket collapsed around u")
        k += 1
    raise NumericalPrecisionError("iteration cap reached during inversion")
