"""Intersection layers: separate bands for the minimum and the maximum of a bridge.

An ``IntersectionLayer`` on ``[s, t]`` certifies ``min in [min_lo, min_hi]``
and ``max in [max_lo, max_hi]``. This module simulates an initial layer,
draws intermediate points conditional on a layer, splits a layer at new
points (dissection) and narrows its bands (refinement). Every decision is
made exactly through alternating series.
"""
from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import log_ndtr

from .brownian import Bridge, bessel_bridge_point, bridge_moments, sample_min, sample_truncnorm
from .errors import ContractViolation, PreconditionError
from .layered_bridge import DEFAULT_LAYERS, _max_below_prob, simulate_layer
from .series import (
    ComposedSeries,
    ONE,
    ZERO,
    AlternatingSeries,
    MAX_ITER,
    WIDTH_FLOOR,
    gamma_series,
    inversion_select,
    ratio_series,
    rho_series,
    series_decide,
)


@dataclass
class IntersectionLayer:
    s: float
    t: float
    x: float
    y: float
    min_lo: float
    min_hi: float
    max_lo: float
    max_hi: float
    provenance: int | None = None

    def __post_init__(self):
        if not self.t > self.s:
            raise PreconditionError(f"layer needs t > s, got [{self.s}, {self.t}]")
        if not (self.min_lo <= self.min_hi <= min(self.x, self.y)):
            raise PreconditionError(f"minimum band {self.min_band} incompatible with endpoints {self.x}, {self.y}")
        if not (max(self.x, self.y) <= self.max_lo <= self.max_hi):
            raise PreconditionError(f"maximum band {self.max_band} incompatible with endpoints {self.x}, {self.y}")

    @property
    def min_band(self) -> tuple[float, float]:
        return self.min_lo, self.min_hi

    @property
    def max_band(self) -> tuple[float, float]:
        return self.max_lo, self.max_hi

    @property
    def bands(self) -> tuple[float, float, float, float]:
        return self.min_lo, self.min_hi, self.max_lo, self.max_hi

    @property
    def bridge(self) -> Bridge:
        return Bridge(self.s, self.t, self.x, self.y)

    @property
    def gap(self) -> float:
        """Width of the certified range ``max_hi - min_lo``."""
        return self.max_hi - self.min_lo

    def contains(self, other: "IntersectionLayer") -> bool:
        return self.min_lo <= other.min_lo and other.max_hi <= self.max_hi

    def reflect(self) -> "IntersectionLayer":
        return IntersectionLayer(self.s, self.t, -self.x, -self.y, -self.max_hi, -self.max_lo,
                                 -self.min_hi, -self.min_lo, self.provenance)

    def probability(self) -> AlternatingSeries:
        """Series for the probability of the layer event under the plain bridge."""
        return _band(_Gammas(self.s, self.t, self.x, self.y), *self.bands)


class _Gammas:
    """Cache of gamma series for one sub-interval, keyed by band."""

    __slots__ = ("s", "t", "x", "y", "cache")

    def __init__(self, s, t, x, y):
        self.s, self.t, self.x, self.y = s, t, x, y
        self.cache: dict = {}

    def __call__(self, ell, ups) -> AlternatingSeries:
        key = (ell, ups)
        g = self.cache.get(key)
        if g is None:
            g = gamma_series(self.s, self.t, self.x, self.y, ell, ups) if ell < ups else ZERO
            self.cache[key] = g
        return g


def _incl_excl(v):
    return v[0] - v[1] - v[2] + v[3]


def _prod(v):
    out = 1.0
    for a in v:
        out *= a
    return out


def _band(G: _Gammas, l_lo, l_hi, u_lo, u_hi) -> AlternatingSeries:
    """P(min in [l_lo, l_hi], max in [u_lo, u_hi]) from cached gamma series."""
    if not (l_lo < l_hi and u_lo < u_hi):
        return ZERO
    parts = (G(l_lo, u_hi), G(l_hi, u_hi), G(l_lo, u_lo), G(l_hi, u_lo))
    if parts[0] is ZERO:
        return ZERO
    if parts[1] is ZERO and parts[2] is ZERO and parts[3] is ZERO:
        return parts[0]
    return ComposedSeries(_incl_excl, parts, (1, -1, -1, 1), meta="band")


def _product(series: Sequence[AlternatingSeries]) -> AlternatingSeries:
    if any(s is ZERO for s in series):
        return ZERO
    series = [s for s in series if s is not ONE]
    if not series:
        return ONE
    if len(series) == 1:
        return series[0]
    return ComposedSeries(_prod, series, [1] * len(series), meta="product")


def _rho(gs: Sequence[_Gammas], l_lo, l_hi, u_lo, u_hi) -> AlternatingSeries:
    n = len(gs)
    parts = ([g(l_lo, u_hi) for g in gs] + [g(l_hi, u_hi) for g in gs]
             + [g(l_lo, u_lo) for g in gs] + [g(l_hi, u_lo) for g in gs])

    def f(v):
        return _prod(v[:n]) - _prod(v[n:2 * n]) - _prod(v[2 * n:3 * n]) + _prod(v[3 * n:])

    return ComposedSeries(f, parts, [1] * n + [-1] * (2 * n) + [1] * n, meta=f"rho(n={n - 1})")


# Initial layer ------------------------------------------------------------------

def _d_fraction(v):
    den = v[0] + v[1] + v[2]
    return v[0] / den if den > 0.0 else 0.0


def initial_layer(b: Bridge, a: Callable[[int, float], float] = DEFAULT_LAYERS,
                  rng: np.random.Generator | None = None) -> IntersectionLayer:
    """Radial layer index first, then which of its three intersection pieces holds."""
    if rng is None:
        raise PreconditionError("an RNG is required")
    rl = simulate_layer(b, a, rng)
    lo, hi = min(b.x, b.y), max(b.x, b.y)
    l_lo, l_hi = lo - rl.a_outer, lo - rl.a_inner
    u_lo, u_hi = hi + rl.a_inner, hi + rl.a_outer
    G = _Gammas(b.s, b.t, b.x, b.y)
    pieces = [(l_lo, l_hi, u_lo, u_hi), (l_lo, l_hi, hi, u_lo), (l_hi, lo, u_lo, u_hi)]
    betas = [_band(G, *p) for p in pieces]
    if betas[1] is ZERO and betas[2] is ZERO:
        k = 0
    else:
        frac = ComposedSeries(_d_fraction, betas, (1, -1, -1), meta="P(D1)")
        if series_decide(frac, rng.random())[0]:
            k = 0
        else:
            k = 1 if rng.random() < 0.5 else 2
    return IntersectionLayer(b.s, b.t, b.x, b.y, *pieces[k], provenance=k + 1)


# Intermediate point ----------------------------------------------------------------

def _side_terms(z, L, mu, ell, ups):
    """First-order (upper, lower) brackets of a one-sided gamma as exponential terms.

    Terms are ``(sign, a, b)`` meaning ``sign * exp(a + b (w - mu))`` where
    ``w`` is the free endpoint and ``z`` the fixed one.
    """
    if ell >= z or ups <= z:
        return [], []
    D = ups - ell
    lo = [(1, 0.0, 0.0),
          (-1, -2.0 * (z - ell) * (mu - ell) / L, -2.0 * (z - ell) / L),
          (-1, -2.0 * (ups - z) * (ups - mu) / L, 2.0 * (ups - z) / L)]
    up = lo + [(1, -2.0 * (D * D + D * (z - mu)) / L, 2.0 * D / L),
               (1, -2.0 * (D * D - D * (z - mu)) / L, -2.0 * D / L)]
    return up, lo


def _reduce(terms):
    groups: dict = {}
    for sg, a, b in terms:
        groups.setdefault(b, []).append((sg, a))
    out = []
    for b, lst in groups.items():
        if len(lst) == 1:
            out.append((lst[0][0], lst[0][1], b))
            continue
        m = max(a for _, a in lst)
        tot = 0.0
        for sg, a in lst:
            tot += sg * math.exp(a - m)
        if tot != 0.0:
            out.append((1 if tot > 0 else -1, m + math.log(abs(tot)), b))
    return out


def _neg(terms):
    return [(-sg, a, b) for sg, a, b in terms]


def _mul(t1, t2):
    return [(s1 * s2, a1 + a2, b1 + b2) for s1, a1, b1 in t1 for s2, a2, b2 in t2]


def _log_diff_ndtr_vec(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorised log(Phi(b) - Phi(a)) for a < b."""
    flip = a > 0.0
    a2 = np.where(flip, -b, a)
    b2 = np.where(flip, -a, b)
    out = np.empty_like(a2)
    neg = b2 <= 0.0
    if np.any(neg):
        la, lb = log_ndtr(a2[neg]), log_ndtr(b2[neg])
        with np.errstate(divide="ignore", invalid="ignore"):
            out[neg] = lb + np.log1p(-np.exp(la - lb))
    mid = ~neg
    if np.any(mid):
        out[mid] = np.log1p(-np.exp(log_ndtr(a2[mid])) - np.exp(log_ndtr(-b2[mid])))
    return out


class _Envelope:
    """Mixture of truncated Gaussians dominating ``rho(w) N(w; mu, var)``."""

    def __init__(self, layer: IntersectionLayer, q: float):
        s, t, x, y = layer.s, layer.t, layer.x, layer.y
        l_lo, l_hi, u_lo, u_hi = layer.bands
        mu, var = bridge_moments(layer.bridge, q)
        self.mu, self.sd = mu, math.sqrt(var)
        L1, L2 = q - s, t - q
        bands = {"A": (l_lo, u_hi), "B": (l_hi, u_hi), "C": (l_lo, u_lo), "D": (l_hi, u_lo)}
        regions = [(l_lo, l_hi, "AC"), (l_hi, u_lo, "ABCD"), (u_lo, u_hi, "AB")]
        self.regions = []
        comps_logw, comps_b, comps_lo, comps_hi, comps_r = [], [], [], [], []
        for r, (rlo, rhi, active) in enumerate(regions):
            if not rhi > rlo:
                continue
            sides = []
            for z, L in ((x, L1), (y, L2)):
                br = {}
                for key, (ell, ups) in bands.items():
                    br[key] = _side_terms(z, L, mu, ell, ups) if key in active else ([], [])
                up_lu = _reduce(br["A"][0] + _neg(br["B"][1]) + _neg(br["C"][1]) + br["D"][0])
                up_l = _reduce(br["C"][0] + _neg(br["D"][1]))
                up_u = _reduce(br["B"][0] + _neg(br["D"][1]))
                up_a = _reduce(br["A"][0])
                sides.append((up_lu, up_l, up_u, up_a))
            (lu1, l1, u1, a1), (lu2, l2, u2, a2) = sides
            env = _reduce(_mul(lu1, a2) + _mul(a1, lu2) + _mul(l1, u2) + _mul(u1, l2))
            pos = [(a, b) for sg, a, b in env if sg > 0]
            self.regions.append((rlo, rhi, pos))
            for a, b in pos:
                comps_logw.append(a + 0.5 * b * b * var)
                comps_b.append(b)
                comps_lo.append(rlo)
                comps_hi.append(rhi)
                comps_r.append(len(self.regions) - 1)
        self.degenerate = not comps_b
        if self.degenerate:
            return
        b = np.array(comps_b)
        means = mu + b * var
        lo = np.array(comps_lo)
        hi = np.array(comps_hi)
        logmass = np.array(comps_logw) + _log_diff_ndtr_vec((lo - means) / self.sd, (hi - means) / self.sd)
        if not np.any(np.isfinite(logmass)):
            self.degenerate = True
            return
        top = np.max(logmass)
        w = np.exp(logmass - top)
        w[~np.isfinite(w)] = 0.0
        self.cdf = np.cumsum(w / w.sum())
        self.means, self.lo, self.hi, self.region_of = means, lo, hi, comps_r

    def sample(self, rng: np.random.Generator) -> tuple[float, float]:
        """Draw ``w`` from the mixture; returns ``(w, envelope(w))``."""
        i = int(np.searchsorted(self.cdf, rng.random() * self.cdf[-1], side="right"))
        i = min(i, len(self.cdf) - 1)
        w = sample_truncnorm(float(self.means[i]), self.sd, float(self.lo[i]), float(self.hi[i]), rng)
        rlo, rhi, pos = self.regions[self.region_of[i]]
        d = w - self.mu
        exps = [a + b * d for a, b in pos]
        m = max(exps)
        return w, math.exp(m) * sum(math.exp(e - m) for e in exps)


def _tightened(layer: IntersectionLayer, values) -> tuple[float, float]:
    return min(layer.min_hi, min(values)), max(layer.max_lo, max(values))


def _split_gammas(layer: IntersectionLayer, times, values) -> list[_Gammas]:
    return [_Gammas(t0, t1, v0, v1) for t0, t1, v0, v1 in zip(times[:-1], times[1:], values[:-1], values[1:])]


def _midpoint_with_cache(layer: IntersectionLayer, q: float, rng: np.random.Generator,
                         max_attempts: int = 1_000_000):
    if not layer.s < q < layer.t:
        raise PreconditionError(f"q={q} outside ({layer.s}, {layer.t})")
    env = _Envelope(layer, q)
    if env.degenerate:
        return hybrid_midpoint(layer, q, rng), None
    for _ in range(max_attempts):
        w, e = env.sample(rng)
        if e == 0.0:
            # envelope underflow: the target density is at most as small
            continue
        gs = _split_gammas(layer, (layer.s, q, layer.t), (layer.x, w, layer.y))
        l_star, u_star = _tightened(layer, [w])
        rho = _rho(gs, layer.min_lo, l_star, u_star, layer.max_hi)
        if _accept_scaled(rho, 1.0 / e, rng.random()):
            return w, gs
    raise PreconditionError("midpoint sampler exceeded its attempt cap")


def _accept_scaled(seq: AlternatingSeries, scale: float, u: float) -> bool:
    """Decide ``u <= scale * p`` and check that ``scale * p <= 1`` holds."""
    k = seq.start_index
    for _ in range(MAX_ITER):
        lo, hi = seq.bounds(k)
        lo *= scale
        hi *= scale
        if lo > 1.0 + 1e-9:
            raise ContractViolation(f"midpoint envelope violated: ratio >= {lo:.12g}")
        if u <= lo:
            return True
        if u >= hi:
            return False
        if hi - lo < WIDTH_FLOOR:
            from .errors import NumericalPrecisionError
            raise NumericalPrecisionError("midpoint acceptance bracket collapsed around u")
        k += 1
    from .errors import NumericalPrecisionError
    raise NumericalPrecisionError("iteration cap reached in midpoint acceptance")


def sample_midpoint(layer: IntersectionLayer, q: float, rng: np.random.Generator) -> float:
    """Exact draw of the bridge value at ``q`` conditioned on the intersection layer."""
    return _midpoint_with_cache(layer, q, rng)[0]


def hybrid_midpoint(layer: IntersectionLayer, q: float, rng: np.random.Generator,
                    side: str | None = None, max_attempts: int = 1_000_000) -> float:
    """Value at ``q`` by proposing a bridge conditioned on one extreme band.

    The proposal conditions on the minimum band (or, by reflection, the
    maximum band) and is accepted iff the opposite extreme lands in its band.
    Layers from the initial construction pick the side from their provenance.
    """
    if not layer.s < q < layer.t:
        raise PreconditionError(f"q={q} outside ({layer.s}, {layer.t})")
    for _ in range(max_attempts):
        sd = side
        if sd is None:
            if layer.provenance == 2:
                sd = "min"
            elif layer.provenance == 3:
                sd = "max"
            else:
                sd = "min" if rng.random() < 0.5 else "max"
        lay = layer if sd == "min" else layer.reflect()
        b = lay.bridge
        ext = sample_min(b, lay.min_lo, lay.min_hi, rng) if lay.min_lo < lay.min_hi else None
        if ext is None:
            raise PreconditionError("degenerate minimum band")
        w = bessel_bridge_point(b, ext, q, rng)
        hi_p = _max_below_prob(b, ext, [q], [w], lay.max_hi)
        lo_p = _max_below_prob(b, ext, [q], [w], lay.max_lo)
        if lo_p is ZERO:
            ok = series_decide(hi_p, rng.random())[0]
        else:
            ok = series_decide(ComposedSeries(lambda v: v[0] - v[1], [hi_p, lo_p], (1, -1)), rng.random())[0]
        if ok:
            return w if sd == "min" else -w
    raise PreconditionError("hybrid sampler exceeded its attempt cap")


# Dissection ------------------------------------------------------------------------

def _subsets(n):
    """Nonempty subsets of range(n) as boolean tuples, in a fixed order."""
    return [c for c in itertools.product((True, False), repeat=n) if any(c)]


def _segment_states(G: _Gammas, l_lo, l_star, u_star, u_hi, vmin, vmax):
    """Band series for (min attained?, max attained?) on one sub-interval."""
    return {
        (True, True): _band(G, l_lo, l_star, u_star, u_hi),
        (True, False): _band(G, l_lo, l_star, vmax, u_star),
        (False, True): _band(G, l_star, vmin, u_star, u_hi),
        (False, False): _band(G, l_star, vmin, vmax, u_star),
    }


def _child_bands(attain_min, attain_max, l_lo, l_star, u_star, u_hi, vmin, vmax):
    mb = (l_lo, l_star) if attain_min else (l_star, vmin)
    xb = (u_star, u_hi) if attain_max else (vmax, u_star)
    return mb + xb


@dataclass
class Dissection:
    """Ordered child layers covering a parent interval."""

    children: list[IntersectionLayer]
    case: int = -1
    n_cases: int = 0


JOINT_MAX = 2


def _check_knots(layer: IntersectionLayer, knots):
    knots = sorted(knots)
    prev = layer.s
    for q, w in knots:
        if not prev < q < layer.t:
            raise PreconditionError(f"knot time {q} not strictly inside ({layer.s}, {layer.t}) or repeated")
        if not layer.min_lo <= w <= layer.max_hi:
            raise PreconditionError(f"knot value {w} outside [{layer.min_lo}, {layer.max_hi}]")
        prev = q
    return knots


def dissection_cases(layer: IntersectionLayer, knots, gammas: list[_Gammas] | None = None):
    """All candidate dissections with their probability series (joint enumeration)."""
    knots = _check_knots(layer, knots)
    times = [layer.s] + [q for q, _ in knots] + [layer.t]
    values = [layer.x] + [w for _, w in knots] + [layer.y]
    l_star, u_star = _tightened(layer, values[1:-1])
    gs = gammas if gammas is not None else _split_gammas(layer, times, values)
    n_seg = len(gs)
    states = []
    for i, G in enumerate(gs):
        vmin, vmax = min(values[i], values[i + 1]), max(values[i], values[i + 1])
        states.append(_segment_states(G, layer.min_lo, l_star, u_star, layer.max_hi, vmin, vmax))
    rho = _rho(gs, layer.min_lo, l_star, u_star, layer.max_hi)
    cases = []
    for smin in _subsets(n_seg):
        for smax in _subsets(n_seg):
            beta = _product([states[i][(smin[i], smax[i])] for i in range(n_seg)])
            bands = []
            for i in range(n_seg):
                vmin, vmax = min(values[i], values[i + 1]), max(values[i], values[i + 1])
                bands.append(_child_bands(smin[i], smax[i], layer.min_lo, l_star, u_star, layer.max_hi, vmin, vmax))
            cases.append(((smin, smax), bands, ratio_series(beta, rho)))
    return times, values, cases


def _children(times, values, bands):
    return [IntersectionLayer(times[i], times[i + 1], values[i], values[i + 1], *bands[i])
            for i in range(len(bands))]


def dissect(layer: IntersectionLayer, knots, rng: np.random.Generator,
            gammas: list[_Gammas] | None = None, method: str | None = None) -> list[IntersectionLayer]:
    """Split ``layer`` at ``knots`` (list of ``(time, value)``) into child layers."""
    knots = _check_knots(layer, knots)
    if not knots:
        return [layer]
    if method is None:
        method = "joint" if len(knots) <= JOINT_MAX else "chain"
    if method == "joint":
        times, values, cases = dissection_cases(layer, knots, gammas)
        j = inversion_select([c[2] for c in cases], rng.random())
        return _children(times, values, cases[j][1])
    if method != "chain":
        raise PreconditionError(f"unknown dissection method {method!r}")
    return _dissect_chain(layer, knots, rng)


def _dissect_chain(layer: IntersectionLayer, knots, rng) -> list[IntersectionLayer]:
    """Bisect at the first knot given all later knots, then recurse on the right part."""
    if len(knots) == 1:
        return dissect(layer, knots, rng, method="joint")
    times = [layer.s] + [q for q, _ in knots] + [layer.t]
    values = [layer.x] + [w for _, w in knots] + [layer.y]
    l_star, u_star = _tightened(layer, values[1:-1])
    l_lo, u_hi = layer.min_lo, layer.max_hi
    G = _Gammas(times[0], times[1], values[0], values[1])
    vmin_l, vmax_l = min(values[0], values[1]), max(values[0], values[1])
    left = _segment_states(G, l_lo, l_star, u_star, u_hi, vmin_l, vmax_l)
    rt, rv = times[1:], values[1:]
    vmin_r, vmax_r = min(rv), max(rv)

    def right_band(a, b, c, d):
        if not (a < b and c < d):
            return ZERO
        return rho_series(rt, rv, a, b, c, d)

    right = {
        (True, True): right_band(l_lo, l_star, u_star, u_hi),
        (True, False): right_band(l_lo, l_star, vmax_r, u_star),
        (False, True): right_band(l_star, vmin_r, u_star, u_hi),
        (False, False): right_band(l_star, vmin_r, vmax_r, u_star),
    }
    rho = rho_series(times, values, l_lo, l_star, u_star, u_hi)
    cases = []
    for smin in _subsets(2):
        for smax in _subsets(2):
            beta = _product([left[(smin[0], smax[0])], right[(smin[1], smax[1])]])
            cases.append((smin, smax, ratio_series(beta, rho)))
    j = inversion_select([c[2] for c in cases], rng.random())
    smin, smax, _ = cases[j]
    lb = _child_bands(smin[0], smax[0], l_lo, l_star, u_star, u_hi, vmin_l, vmax_l)
    rb = _child_bands(smin[1], smax[1], l_lo, l_star, u_star, u_hi, vmin_r, vmax_r)
    left_child = IntersectionLayer(times[0], times[1], values[0], values[1], *lb)
    right_parent = IntersectionLayer(times[1], times[-1], values[1], values[-1], *rb)
    return [left_child] + _dissect_chain(right_parent, knots[1:], rng)


# Refinement ------------------------------------------------------------------------

def refinement_cases(layer: IntersectionLayer, l_mid: float, u_mid: float):
    if not (layer.min_lo <= l_mid <= layer.min_hi and layer.max_lo <= u_mid <= layer.max_hi):
        raise PreconditionError("refinement split outside the bands")
    G = _Gammas(layer.s, layer.t, layer.x, layer.y)
    l_lo, l_hi, u_lo, u_hi = layer.bands
    kids = [(l_lo, l_mid, u_mid, u_hi), (l_mid, l_hi, u_mid, u_hi),
            (l_lo, l_mid, u_lo, u_mid), (l_mid, l_hi, u_lo, u_mid)]
    parent = _band(G, *layer.bands)
    return [(k, ratio_series(_band(G, *k), parent)) for k in kids]


def refine(layer: IntersectionLayer, l_mid: float | None = None, u_mid: float | None = None,
           rng: np.random.Generator | None = None) -> IntersectionLayer:
    """Narrow both bands of ``layer`` by splitting them at ``l_mid`` and ``u_mid``.

    Splits default to the band midpoints. Passing ``l_mid = min_hi`` (or
    ``u_mid = max_lo``) leaves that band unchanged.
    """
    if rng is None:
        raise PreconditionError("an RNG is required")
    if l_mid is None:
        l_mid = 0.5 * (layer.min_lo + layer.min_hi)
    if u_mid is None:
        u_mid = 0.5 * (layer.max_lo + layer.max_hi)
    cases = refinement_cases(layer, l_mid, u_mid)
    j = inversion_select([c[1] for c in cases], rng.random())
    return IntersectionLayer(layer.s, layer.t, layer.x, layer.y, *cases[j][0])


# Layered bridge over a sequence of cells ---------------------------------------------

def restore_in_layer(layer: IntersectionLayer, q: float, rng: np.random.Generator):
    """Sample the value at ``q`` and bisect the layer there; returns ``(w, [left, right])``."""
    w, gs = _midpoint_with_cache(layer, q, rng)
    return w, dissect(layer, [(q, w)], rng, gammas=gs)


class CellPath:
    """Abutting intersection layers covering an interval; the restoration state."""

    def __init__(self, cells: Sequence[IntersectionLayer]):
        cells = list(cells)
        for a, b in zip(cells[:-1], cells[1:]):
            if a.t != b.s or a.y != b.x:
                raise PreconditionError("cells must abut with matching values")
        self.cells = cells
        self._starts = [c.s for c in cells]

    @property
    def times(self) -> list[float]:
        return self._starts + [self.cells[-1].t]

    @property
    def values(self) -> list[float]:
        return [c.x for c in self.cells] + [self.cells[-1].y]

    def locate(self, q: float) -> int:
        i = bisect.bisect_right(self._starts, q) - 1
        if i < 0 or q > self.cells[-1].t:
            raise PreconditionError(f"time {q} outside [{self.cells[0].s}, {self.cells[-1].t}]")
        return min(i, len(self.cells) - 1)

    def value_at_knot(self, q: float) -> float | None:
        i = self.locate(q)
        c = self.cells[i]
        if q == c.s:
            return c.x
        if q == c.t:
            return c.y
        return None

    def replace(self, i: int, new: Sequence[IntersectionLayer]) -> None:
        self.cells[i:i + 1] = list(new)
        self._starts = [c.s for c in self.cells]

    def restore(self, q: float, rng: np.random.Generator) -> float:
        v = self.value_at_knot(q)
        if v is not None:
            return v
        i = self.locate(q)
        w, kids = restore_in_layer(self.cells[i], q, rng)
        self.replace(i, kids)
        return w


def layered_bridge_il(path: CellPath, q: float, rng: np.random.Generator) -> tuple[float, CellPath]:
    """Restore the path at ``q`` and update the cell state in place."""
    return path.restore(q, rng), path
