"""Exact skeletons of jump diffusions.

The diffusion between jumps is handled by one of the algorithms in
``exact``; jump times come from thinning a dominating Poisson process,
either with a global rate (``run_bjea``) or with a rate bounded
conditionally on the simulated layers (``run_ujea``, ``run_aujea``).
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .brownian import Bridge, sample_biased_endpoint
from .core_model import DiffusionModel, GlobalBound, JumpSpec
from .errors import AttemptCapExceeded, ContractViolation, PreconditionError
from .exact import SKELETON_VERSION, Skeleton, _floor_accept, _horizon, _thin_ratio, run_algorithm, run_auea
from .intersection import CellPath, initial_layer
from .layered_bridge import DEFAULT_LAYERS


@dataclass
class JumpSkeleton:
    segments: list[Skeleton]
    jumps: list[tuple[float, float, float]]
    provenance: str
    proposals: int = 0
    restorable: bool = True

    @property
    def t0(self) -> float:
        return self.segments[0].t0

    @property
    def t1(self) -> float:
        return self.segments[-1].t1

    @property
    def end_value(self) -> float:
        return self.segments[-1].end_value

    @property
    def n_jumps(self) -> int:
        return len(self.jumps)

    @property
    def kappa(self) -> int:
        return sum(s.kappa for s in self.segments)

    def _segment(self, q: float) -> Skeleton:
        starts = [s.t0 for s in self.segments]
        i = bisect.bisect_right(starts, q) - 1
        if i < 0 or q > self.t1:
            raise PreconditionError(f"time {q} outside [{self.t0}, {self.t1}]")
        return self.segments[i]

    def restore(self, q: float, rng: np.random.Generator) -> float:
        """Right-continuous value at ``q``."""
        if not self.restorable:
            raise PreconditionError(f"{self.provenance} skeletons do not support restoration")
        return self._segment(q).restore(q, rng)

    def to_record(self) -> dict:
        return {"version": SKELETON_VERSION, "provenance": self.provenance, "proposals": self.proposals,
                "jumps": [list(j) for j in self.jumps], "segments": [s.to_record() for s in self.segments]}


def _spec(m: DiffusionModel, jumps: Optional[JumpSpec]) -> JumpSpec:
    j = jumps if jumps is not None else m.jumps
    if j is None:
        raise PreconditionError(f"model {m.name!r} has no jump specification")
    return j


def _intensity_ratio(j: JumpSpec, x: float, bound: float) -> float:
    lam = float(j.intensity(x))
    if lam < 0.0 or lam > bound * (1.0 + 1e-12):
        raise ContractViolation(f"intensity {lam} at state {x} outside [0, {bound}]")
    return lam / bound if bound > 0 else 0.0


def _apply_jump(j: JumpSpec, pre: float, rng) -> float:
    return pre + float(j.jump_sampler(pre, rng))


def run_bjea(m: DiffusionModel, rng: np.random.Generator, inner: str = "auea", jumps: Optional[JumpSpec] = None,
             x0=None, t0: float = 0.0, t1=None) -> JumpSkeleton:
    """Globally bounded intensity: proposal jump times first, diffusion segments in between."""
    j = _spec(m, jumps)
    if not isinstance(j.intensity_bound, GlobalBound):
        raise PreconditionError("BJEA needs a global intensity bound")
    lam_max = j.intensity_bound.value
    x, s, t1 = _horizon(m, x0, t0, t1)
    segs: list[Skeleton] = []
    out = []
    n_prop = 0
    while s < t1:
        tau = rng.exponential(1.0 / lam_max) if lam_max > 0 else np.inf
        e = min(s + tau, t1)
        sk = run_algorithm(inner, m, rng, x0=x, t0=s, t1=e)
        segs.append(sk)
        if s + tau >= t1:
            break
        n_prop += 1
        pre = sk.end_value
        # the thinning ratio uses the state just before the proposal time
        if rng.random() < _intensity_ratio(j, pre, lam_max):
            x = _apply_jump(j, pre, rng)
            out.append((e, pre, x))
        else:
            x = pre
        s = e
    return JumpSkeleton(segs, out, "BJEA", n_prop)


def run_ujea(m: DiffusionModel, rng: np.random.Generator, jumps: Optional[JumpSpec] = None, x0=None,
             t0: float = 0.0, t1=None, layers=DEFAULT_LAYERS, max_attempts: Optional[int] = None) -> JumpSkeleton:
    """Layer-bounded intensity; whole remaining interval proposed, restarted after each accepted jump.

    The retained skeleton holds every proposed segment in full, including the
    part after each accepted jump, and cannot be restored further.
    """
    j = _spec(m, jumps)
    x, s, t1 = _horizon(m, x0, t0, t1)
    segs: list[Skeleton] = []
    out = []
    n_prop = 0
    while True:
        T = t1 - s
        attempts = 0
        while True:
            attempts += 1
            if max_attempts is not None and attempts > max_attempts:
                raise AttemptCapExceeded(f"UJEA exceeded {max_attempts} proposals")
            y = sample_biased_endpoint(m.drift_integral, x, T, m.endpoint_proposal(x, T), rng)
            layer = initial_layer(Bridge(s, t1, x, y), layers, rng)
            L, U = m.phi_bounds(layer.min_lo, layer.max_hi)
            if not _floor_accept(m, L, T, rng):
                continue
            lam_x = j.bound_on(layer.min_lo, layer.max_hi)
            n_j = int(rng.poisson(lam_x * T)) if lam_x > 0 else 0
            psis = np.sort(rng.uniform(s, t1, n_j))
            D = U - L
            kappa = int(rng.poisson(D * T)) if D > 0 else 0
            xi = np.sort(rng.uniform(s, t1, kappa))
            path = CellPath([layer])
            ok = True
            for q in xi:
                if not s < q < t1:
                    continue
                w = path.restore(float(q), rng)
                if rng.random() > _thin_ratio(U, L, m.phi(w)):
                    ok = False
                    break
            if ok:
                break
        jumped = None
        for q in psis:
            q = float(q)
            if not s < q < t1:
                continue
            n_prop += 1
            w = path.restore(q, rng)
            if rng.random() < _intensity_ratio(j, w, lam_x):
                jumped = (q, w)
                # later proposals of this sweep are discarded with the rest of the path
                break
        segs.append(Skeleton(s, t1, "UEA", kappa, attempts, cells=path))
        if jumped is None:
            return JumpSkeleton(segs, out, "UJEA", n_prop, restorable=False)
        q, pre = jumped
        x = _apply_jump(j, pre, rng)
        out.append((q, pre, x))
        s = q


def _truncate(sk: Skeleton, q: float) -> Skeleton:
    """Part of a cell skeleton on ``[t0, q]`` where ``q`` is an existing knot."""
    cells = [c for c in sk.cells.cells if c.t <= q]
    if not cells or cells[-1].t != q:
        raise PreconditionError(f"{q} is not a knot of the skeleton")
    return Skeleton(sk.t0, q, sk.provenance, len(cells) - 1, sk.attempts, cells=CellPath(cells))


def run_aujea(m: DiffusionModel, rng: np.random.Generator, jumps: Optional[JumpSpec] = None, x0=None,
              t0: float = 0.0, t1=None, layers=DEFAULT_LAYERS) -> JumpSkeleton:
    """Adaptive skeleton first, then one proposal jump time at a time with bounds from current cells."""
    j = _spec(m, jumps)
    x, s, t1 = _horizon(m, x0, t0, t1)
    segs: list[Skeleton] = []
    out = []
    n_prop = 0
    while True:
        sk = run_auea(m, rng, x0=x, t0=s, t1=t1, layers=layers)
        path = sk.cells
        p = s
        jumped = None
        while True:
            lam_x = max(j.bound_on(c.min_lo, c.max_hi) for c in path.cells if c.t > p)
            if not lam_x > 0:
                break
            p = p + rng.exponential(1.0 / lam_x)
            if p >= t1:
                break
            n_prop += 1
            w = path.restore(p, rng)
            if rng.random() < _intensity_ratio(j, w, lam_x):
                jumped = (p, w)
                break
        if jumped is None:
            segs.append(sk)
            return JumpSkeleton(segs, out, "AUJEA", n_prop)
        q, pre = jumped
        segs.append(_truncate(sk, q))
        x = _apply_jump(j, pre, rng)
        out.append((q, pre, x))
        s = q


JUMP_RUNNERS = {"ujea": run_ujea, "aujea": run_aujea}


def superposition_wrapper(m: DiffusionModel, rng: np.random.Generator, inner: str = "aujea",
                          jumps: Optional[JumpSpec] = None, x0=None, t0: float = 0.0, t1=None) -> JumpSkeleton:
    """Split the intensity into a homogeneous floor and an excess part.

    Floor jumps arrive at Exp(floor) times regardless of the state, so the
    inner algorithm only ever has to cover the stretch up to the next one,
    thinning with the excess intensity.
    """
    j = _spec(m, jumps)
    f = j.intensity_floor
    if not f or f <= 0:
        raise PreconditionError("superposition needs a positive intensity floor")
    if inner not in JUMP_RUNNERS:
        raise PreconditionError(f"inner algorithm must be one of {sorted(JUMP_RUNNERS)}")
    ex = j.excess()
    x, s, t1 = _horizon(m, x0, t0, t1)
    segs: list[Skeleton] = []
    out = []
    n_prop = 0
    restorable = True
    while s < t1:
        tau = rng.exponential(1.0 / f)
        e = min(s + tau, t1)
        js = JUMP_RUNNERS[inner](m, rng, jumps=ex, x0=x, t0=s, t1=e)
        segs.extend(js.segments)
        out.extend(js.jumps)
        n_prop += js.proposals
        restorable = restorable and js.restorable
        if s + tau >= t1:
            break
        pre = js.end_value
        if float(j.intensity(pre)) < f - 1e-12:
            raise ContractViolation(f"intensity at state {pre} is below the floor {f}")
        x = _apply_jump(j, pre, rng)
        out.append((e, pre, x))
        s = e
    return JumpSkeleton(segs, out, f"superposition[{inner.upper()}]", n_prop, restorable)
