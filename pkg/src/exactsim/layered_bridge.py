"""Radial (Bessel) layers for Brownian bridges.

A bridge is first assigned a layer index ``iota`` certifying that its path
lies in ``[min(x,y) - a_iota, max(x,y) + a_iota]`` but not in the previous
layer. Skeletal points are then drawn conditionally on that layer by
proposing from bridges conditioned on an extreme in the outermost band.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .brownian import Bridge, ExtremeRecord, bessel_bridge_points, sample_max, sample_min
from .errors import PreconditionError
from .series import ComposedSeries, ZERO, delta_series, gamma_series, series_decide


@dataclass(frozen=True)
class LayerSequence:
    """Increments ``a_iota = iota * theta * sqrt(t - s)``."""

    theta: float = 0.5

    def __post_init__(self):
        if not self.theta > 0:
            raise PreconditionError("layer scale theta must be positive")

    def __call__(self, iota: int, dt: float) -> float:
        return iota * self.theta * math.sqrt(dt)


DEFAULT_LAYERS = LayerSequence()


@dataclass(frozen=True)
class RadialLayer:
    bridge: Bridge
    iota: int
    a_inner: float
    a_outer: float

    @property
    def lower(self) -> float:
        return min(self.bridge.x, self.bridge.y) - self.a_outer

    @property
    def upper(self) -> float:
        return max(self.bridge.x, self.bridge.y) + self.a_outer

    @property
    def inner_lower(self) -> float:
        return min(self.bridge.x, self.bridge.y) - self.a_inner

    @property
    def inner_upper(self) -> float:
        return max(self.bridge.x, self.bridge.y) + self.a_inner


def simulate_layer(b: Bridge, a: Callable[[int, float], float], rng: np.random.Generator,
                   max_layers: int = 10_000) -> RadialLayer:
    """Smallest ``iota`` whose layer contains the path, by inversion with one uniform."""
    u = rng.random()
    dt = b.t - b.s
    lo, hi = min(b.x, b.y), max(b.x, b.y)
    for iota in range(1, max_layers + 1):
        ai = a(iota, dt)
        inside, _ = series_decide(gamma_series(b.s, b.t, b.x, b.y, lo - ai, hi + ai), u)
        if inside:
            return RadialLayer(b, iota, a(iota - 1, dt), ai)
    raise PreconditionError("layer sequence did not capture the path")


@dataclass
class LayeredSkeletonFragment:
    """Points drawn under a radial layer plus the conditioning set that was realised.

    ``bands`` is ``(min_lo, min_hi, max_lo, max_hi)``: one of the four sets
    obtained once the auxiliary extreme is discarded. ``extreme`` is kept for
    diagnostics only.
    """

    layer: RadialLayer
    times: list[float]
    values: list[float]
    bands: tuple[float, float, float, float]
    anchor: str
    extreme: ExtremeRecord | None = field(default=None, repr=False)


def _max_below_prob(b: Bridge, ext: ExtremeRecord, times, values, ups: float):
    """Series for P(max <= ups) of a minimum-conditioned bridge given the points."""
    pts = sorted(list(zip(times, values)) + [(ext.tau, ext.value), (b.s, b.x), (b.t, b.y)])
    if max(v for _, v in pts) >= ups:
        return ZERO
    parts = []
    for (t0, v0), (t1, v1) in zip(pts[:-1], pts[1:]):
        parts.append(delta_series(t0, t1, v0, v1, ext.value, ups))
    if any(p is ZERO for p in parts):
        return ZERO
    if len(parts) == 1:
        return parts[0]

    def prod(v):
        out = 1.0
        for z in v:
            out *= z
        return out

    return ComposedSeries(prod, parts, [1] * len(parts), meta="delta product")


def _min_anchored(b: Bridge, band: tuple[float, float], times, rng):
    ext = sample_min(b, band[0], band[1], rng)
    vals = bessel_bridge_points(b, ext, times, rng) if times else []
    return ext, vals


def simulate_layered_bridge(b: Bridge, layer: RadialLayer, times: Sequence[float],
                            rng: np.random.Generator, max_attempts: int = 1_000_000) -> LayeredSkeletonFragment:
    """Points of the bridge at ``times`` conditioned on the radial layer."""
    times = sorted(times)
    for q in times:
        if not b.s < q < b.t:
            raise PreconditionError(f"time {q} outside ({b.s}, {b.t})")
    lo, hi = min(b.x, b.y), max(b.x, b.y)
    a0, a1 = layer.a_inner, layer.a_outer
    for _ in range(max_attempts):
        anchor = "min" if rng.random() < 0.5 else "max"
        if anchor == "min":
            bb = b
            ext, vals = _min_anchored(bb, (lo - a1, lo - a0), times, rng)
        else:
            bb = b.reflect()
            ext, vals = _min_anchored(bb, (-hi - a1, -hi - a0), times, rng)
        # opposite extreme (in the reflected frame: the maximum) against the two levels
        far = max(bb.x, bb.y)
        inner = _max_below_prob(bb, ext, times, vals, far + a0)
        outer = _max_below_prob(bb, ext, times, vals, far + a1)
        u = rng.random()
        if series_decide(inner, u)[0]:
            opp = (far, far + a0)
        elif series_decide(outer, u)[0]:
            if rng.random() >= 0.5:
                continue
            opp = (far + a0, far + a1)
        else:
            continue
        if anchor == "min":
            bands = (lo - a1, lo - a0, opp[0], opp[1])
            return LayeredSkeletonFragment(layer, list(times), list(vals), bands, anchor, ext)
        bands = (-opp[1], -opp[0], hi + a0, hi + a1)
        return LayeredSkeletonFragment(layer, list(times), [-v for v in vals], bands, anchor, ext.reflect())
    raise PreconditionError("layered bridge exceeded its attempt cap")


def augment_to_intersection(fragment: LayeredSkeletonFragment, rng: np.random.Generator):
    """Per-subinterval intersection layers for an accepted fragment."""
    from .intersection import IntersectionLayer, dissect

    b = fragment.layer.bridge
    l_lo, l_hi, u_lo, u_hi = fragment.bands
    parent = IntersectionLayer(b.s, b.t, b.x, b.y, l_lo, l_hi, u_lo, u_hi)
    if not fragment.times:
        return [parent]
    return dissect(parent, list(zip(fragment.times, fragment.values)), rng)
