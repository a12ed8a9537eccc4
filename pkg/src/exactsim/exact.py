"""Retrospective rejection samplers for diffusion skeletons.

``run_bea`` needs globally bounded ``phi``; ``run_uea`` simulates a layer
first and bounds ``phi`` conditionally on it; ``run_auea`` tightens the
bounds as points are revealed, working outwards from interval midpoints.
All return a ``Skeleton`` that can be restored at further times.
"""
from __future__ import annotations

import bisect
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .brownian import Bridge, bridge_point, sample_biased_endpoint
from .core_model import DiffusionModel
from .errors import AttemptCapExceeded, ContractViolation, PreconditionError
from .intersection import CellPath, IntersectionLayer, _midpoint_with_cache, dissect, initial_layer
from .layered_bridge import DEFAULT_LAYERS, augment_to_intersection, simulate_layer, simulate_layered_bridge

SKELETON_VERSION = 1


@dataclass
class Skeleton:
    """Exact finite representation of a path on ``[t0, t1]``.

    Cell-based skeletons (UEA, AUEA) hold abutting intersection layers; BEA
    skeletons hold bare points and restore through plain bridges.
    """

    t0: float
    t1: float
    provenance: str
    kappa: int
    attempts: int = 1
    cells: Optional[CellPath] = None
    points: Optional[list] = None
    proposed_points: int = 0

    @property
    def times(self) -> list[float]:
        if self.cells is not None:
            return self.cells.times
        return [t for t, _ in self.points]

    @property
    def values(self) -> list[float]:
        if self.cells is not None:
            return self.cells.values
        return [v for _, v in self.points]

    @property
    def start_value(self) -> float:
        return self.values[0]

    @property
    def end_value(self) -> float:
        return self.values[-1]

    def restore(self, q: float, rng: np.random.Generator) -> float:
        if not self.t0 <= q <= self.t1:
            raise PreconditionError(f"time {q} outside skeleton horizon [{self.t0}, {self.t1}]")
        if self.cells is not None:
            return self.cells.restore(q, rng)
        ts = [t for t, _ in self.points]
        i = bisect.bisect_left(ts, q)
        if i < len(ts) and ts[i] == q:
            return self.points[i][1]
        (ta, va), (tb, vb) = self.points[i - 1], self.points[i]
        w = bridge_point(Bridge(ta, tb, va, vb), q, rng)
        self.points.insert(i, (q, w))
        return w

    def to_record(self) -> dict:
        rec = {"version": SKELETON_VERSION, "provenance": self.provenance, "t0": self.t0, "t1": self.t1,
               "kappa": self.kappa, "attempts": self.attempts,
               "points": [[t, v] for t, v in zip(self.times, self.values)]}
        if self.cells is not None:
            rec["cells"] = [[c.s, c.t, c.x, c.y, c.min_lo, c.min_hi, c.max_lo, c.max_hi] for c in self.cells.cells]
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "Skeleton":
        if rec.get("version") != SKELETON_VERSION:
            raise PreconditionError(f"unsupported skeleton record version {rec.get('version')}")
        cells = None
        points = None
        if "cells" in rec:
            cells = CellPath([IntersectionLayer(*c) for c in rec["cells"]])
        else:
            points = [tuple(p) for p in rec["points"]]
        return cls(rec["t0"], rec["t1"], rec["provenance"], rec["kappa"], rec.get("attempts", 1), cells, points)


def restore(sk, times, rng: np.random.Generator) -> list[float]:
    """Values at ``times`` (processed in the given order); the skeleton keeps the new points."""
    return [sk.restore(float(q), rng) for q in times]


def dumps(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, indent=1)


def _horizon(m: DiffusionModel, x0, t0, t1):
    x = m.start if x0 is None else float(x0)
    t1 = m.horizon if t1 is None else float(t1)
    if not t1 > t0:
        raise PreconditionError(f"empty interval [{t0}, {t1}]")
    return x, float(t0), t1


def _attempt_guard(n: int, cap: Optional[int], what: str):
    if cap is not None and n > cap:
        raise AttemptCapExceeded(f"{what} exceeded {cap} proposals")


def _thin_ratio(U, L, phi_w):
    r = (U - phi_w) / (U - L)
    if not -1e-12 <= r <= 1.0 + 1e-12:
        raise ContractViolation(f"phi value {phi_w} outside the bounds [{L}, {U}]")
    return r


def _floor_accept(m: DiffusionModel, L: float, T: float, rng) -> bool:
    """Accept with probability exp(-(L - floor) T).

    The per-layer bound ``L`` varies with the path, so on its own it cannot
    serve as the rejection constant; this factor restores a path-independent
    one built from the global lower bound of phi.
    """
    if m.phi_floor is None:
        raise PreconditionError(f"model {m.name!r} needs a global lower bound phi_floor for layered algorithms")
    gap = L - m.phi_floor
    if gap < -1e-12:
        raise ContractViolation(f"layer lower bound {L} is below the global floor {m.phi_floor}")
    return gap <= 0.0 or rng.random() <= math.exp(-gap * T)


def _endpoint(m: DiffusionModel, x, T, rng):
    return sample_biased_endpoint(m.drift_integral, x, T, m.endpoint_proposal(x, T), rng)


def run_bea(m: DiffusionModel, rng: np.random.Generator, x0=None, t0: float = 0.0, t1=None,
            max_attempts: Optional[int] = None) -> Skeleton:
    """Bounded algorithm: Poisson thinning with the global bounds of phi."""
    if m.global_phi_bounds is None:
        raise PreconditionError(f"model {m.name!r} has no global phi bounds; use run_uea or run_auea")
    x, t0, t1 = _horizon(m, x0, t0, t1)
    T = t1 - t0
    L, U = m.global_phi_bounds
    D = U - L
    attempts = 0
    proposed = 0
    while True:
        attempts += 1
        _attempt_guard(attempts, max_attempts, "BEA")
        y = _endpoint(m, x, T, rng)
        kappa = int(rng.poisson(D * T)) if D > 0 else 0
        proposed += kappa
        xi = np.sort(rng.uniform(t0, t1, kappa))
        pts = [(t0, x)]
        ok = True
        for q in xi:
            q = float(q)
            if q <= pts[-1][0]:
                continue
            w = bridge_point(Bridge(pts[-1][0], t1, pts[-1][1], y), q, rng)
            pts.append((q, w))
            if rng.random() > _thin_ratio(U, L, m.phi(w)):
                ok = False
                break
        if ok:
            pts.append((t1, y))
            return Skeleton(t0, t1, "BEA", len(pts) - 2, attempts, points=pts, proposed_points=proposed)


def run_uea(m: DiffusionModel, rng: np.random.Generator, backend: str = "intersection", x0=None,
            t0: float = 0.0, t1=None, layers=DEFAULT_LAYERS, max_attempts: Optional[int] = None) -> Skeleton:
    """Layered algorithm with a single layer for the whole interval.

    ``backend="intersection"`` starts from an intersection layer and restores
    points through it; ``"bessel"`` uses radial layers and augments the
    accepted skeleton with per-interval intersection layers afterwards.
    """
    if backend not in ("intersection", "bessel"):
        raise PreconditionError(f"unknown bridge backend {backend!r}")
    x, t0, t1 = _horizon(m, x0, t0, t1)
    T = t1 - t0
    attempts = 0
    proposed = 0
    while True:
        attempts += 1
        _attempt_guard(attempts, max_attempts, "UEA")
        y = _endpoint(m, x, T, rng)
        b = Bridge(t0, t1, x, y)
        if backend == "intersection":
            layer = initial_layer(b, layers, rng)
            L, U = m.phi_bounds(layer.min_lo, layer.max_hi)
        else:
            rl = simulate_layer(b, layers, rng)
            L, U = m.phi_bounds(rl.lower, rl.upper)
        if not _floor_accept(m, L, T, rng):
            continue
        D = U - L
        kappa = int(rng.poisson(D * T)) if D > 0 else 0
        proposed += kappa
        xi = sorted(set(float(q) for q in rng.uniform(t0, t1, kappa) if t0 < q < t1))
        ok = True
        if backend == "intersection":
            path = CellPath([layer])
            for q in xi:
                w = path.restore(q, rng)
                if rng.random() > _thin_ratio(U, L, m.phi(w)):
                    ok = False
                    break
        else:
            frag = simulate_layered_bridge(b, rl, xi, rng)
            for w in frag.values:
                if rng.random() > _thin_ratio(U, L, m.phi(w)):
                    ok = False
                    break
            if ok:
                path = CellPath(augment_to_intersection(frag, rng))
        if ok:
            return Skeleton(t0, t1, "UEA", len(xi), attempts, cells=path, proposed_points=proposed)


def run_auea(m: DiffusionModel, rng: np.random.Generator, x0=None, t0: float = 0.0, t1=None,
             layers=DEFAULT_LAYERS, max_attempts: Optional[int] = None) -> Skeleton:
    """Adaptive algorithm: points revealed from interval midpoints outwards, bounds tightened per cell."""
    x, t0, t1 = _horizon(m, x0, t0, t1)
    T = t1 - t0
    attempts = 0
    proposed = 0
    while True:
        attempts += 1
        _attempt_guard(attempts, max_attempts, "AUEA")
        y = _endpoint(m, x, T, rng)
        layer = initial_layer(Bridge(t0, t1, x, y), layers, rng)
        if not _floor_accept(m, m.phi_bounds(layer.min_lo, layer.max_hi)[0], T, rng):
            continue
        path = CellPath([layer])
        # pending sub-intervals (s, t, start time of the owning cell)
        queue = deque([(t0, t1, t0)])
        ok = True
        kappa = 0
        while queue:
            s, t, key = queue.popleft()
            i = path.locate(key)
            cell = path.cells[i]
            L, U = m.phi_bounds(cell.min_lo, cell.max_hi)
            D = U - L
            d = (t - s) / 2.0
            if not D > 0:
                continue
            tau = rng.exponential(1.0 / (2.0 * D))
            if tau >= d:
                continue
            kappa += 1
            proposed += 1
            mid = (s + t) / 2.0
            xi = mid - tau if rng.random() < 0.5 else mid + tau
            w, gs = _midpoint_with_cache(cell, xi, rng)
            if rng.random() > _thin_ratio(U, L, m.phi(w)):
                ok = False
                break
            kids = dissect(cell, [(xi, w)], rng, gammas=gs)
            path.replace(i, kids)
            Ll = m.phi_bounds(kids[0].min_lo, kids[0].max_hi)[0]
            Lr = m.phi_bounds(kids[1].min_lo, kids[1].max_hi)[0]
            expo = (Ll + Lr - 2.0 * L) * (d - tau)
            if expo < -1e-12:
                raise ContractViolation("phi lower bound decreased on a nested layer")
            if rng.random() > math.exp(-expo):
                ok = False
                break
            queue.append((s, mid - tau, cell.s))
            queue.append((mid + tau, t, xi))
        if ok:
            return Skeleton(t0, t1, "AUEA", kappa, attempts, cells=path, proposed_points=proposed)


ALGORITHMS = {"bea": run_bea, "uea": run_uea, "auea": run_auea}


def run_algorithm(name: str, m: DiffusionModel, rng, **kw) -> Skeleton:
    try:
        fn = ALGORITHMS[name]
    except KeyError:
        raise PreconditionError(f"unknown exact algorithm {name!r}") from None
    return fn(m, rng, **kw)
