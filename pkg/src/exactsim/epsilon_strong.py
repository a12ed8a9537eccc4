"""Almost-sure upper and lower staircases for Brownian and jump-diffusion paths.

A ``BoundingProcess`` keeps the cells of an exact skeleton (one ``CellPath``
per segment between jumps). Bisecting cells and refining their bands makes
the staircases ``X_down <= X <= X_up`` shrink monotonically.
"""
from __future__ import annotations

import csv
import heapq
import io
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .brownian import Bridge
from .core_model import DiffusionModel, JumpSpec
from .errors import ContractViolation, PreconditionError
from .intersection import CellPath, IntersectionLayer, initial_layer, refine, restore_in_layer
from .layered_bridge import DEFAULT_LAYERS


def default_trigger(parent_len: float) -> float:
    return math.sqrt(parent_len / 4.0)


@dataclass(frozen=True)
class RefinePolicy:
    """``rounds`` bisects every cell ``n`` times; ``tolerance`` bisects the worst cell until the gap is ``<= eps``."""

    mode: str = "rounds"
    n: int = 1
    eps: float = 0.0
    trigger: Callable[[float], float] = default_trigger
    max_cells: int = 1_000_000

    def __post_init__(self):
        if self.mode == "rounds":
            if self.n < 0:
                raise PreconditionError("number of rounds must be >= 0")
        elif self.mode == "tolerance":
            if not self.eps > 0:
                raise PreconditionError("tolerance must be positive")
        else:
            raise PreconditionError(f"unknown refinement mode {self.mode!r}")

    @classmethod
    def rounds(cls, n: int, **kw) -> "RefinePolicy":
        return cls("rounds", n=n, **kw)

    @classmethod
    def tolerance(cls, eps: float, **kw) -> "RefinePolicy":
        return cls("tolerance", eps=eps, **kw)


def _nested(child: IntersectionLayer, parent: IntersectionLayer):
    if child.min_lo < parent.min_lo or child.max_hi > parent.max_hi:
        raise ContractViolation("refinement produced a cell outside its parent staircase")


class BoundingProcess:
    def __init__(self, paths: list[CellPath], jumps=None):
        if not paths:
            raise PreconditionError("bounding process needs at least one segment")
        self.paths = paths
        self.jumps = list(jumps or [])
        self.round = 0
        self.bisections = 0

    # views -------------------------------------------------------------------
    @property
    def cells(self) -> list[IntersectionLayer]:
        return [c for p in self.paths for c in p.cells]

    def staircase(self) -> np.ndarray:
        """Array with rows ``(s, t, lower, upper)``."""
        return np.array([(c.s, c.t, c.min_lo, c.max_hi) for c in self.cells], dtype=float)

    def evaluate(self, u) -> tuple[np.ndarray, np.ndarray]:
        """Staircase values at times ``u`` (right-continuous; the final cell is closed)."""
        st = self.staircase()
        u = np.atleast_1d(np.asarray(u, dtype=float))
        i = np.searchsorted(st[:, 0], u, side="right") - 1
        i = np.clip(i, 0, len(st) - 1)
        return st[i, 2], st[i, 3]

    def gaps(self) -> np.ndarray:
        st = self.staircase()
        return st[:, 3] - st[:, 2]

    def sup_gap(self) -> float:
        return float(self.gaps().max())

    def l1_gap(self) -> float:
        st = self.staircase()
        return float(np.sum((st[:, 3] - st[:, 2]) * (st[:, 1] - st[:, 0])))

    # refinement --------------------------------------------------------------
    def _refine_cell(self, c: IntersectionLayer, parent_len: float, trigger, rng) -> IntersectionLayer:
        thr = trigger(parent_len)
        while (c.min_hi - c.min_lo) > thr or (c.max_hi - c.max_lo) > thr:
            new = refine(c, rng=rng)
            _nested(new, c)
            c = new
        return c

    def _bisect(self, p: CellPath, i: int, trigger, rng) -> None:
        c = p.cells[i]
        q = 0.5 * (c.s + c.t)
        if not c.s < q < c.t:
            raise PreconditionError("cell too short to bisect in floating point")
        _, kids = restore_in_layer(c, q, rng)
        kids = [self._refine_cell(k, c.t - c.s, trigger, rng) for k in kids]
        for k in kids:
            _nested(k, c)
        p.replace(i, kids)
        self.bisections += 1

    def bisect_round(self, rng: np.random.Generator, trigger=default_trigger) -> None:
        """Bisect every current cell once."""
        for p in self.paths:
            i = 0
            while i < len(p.cells):
                self._bisect(p, i, trigger, rng)
                i += 2
        self.round += 1

    def refine_to(self, policy: RefinePolicy, rng: np.random.Generator) -> "BoundingProcess":
        if policy.mode == "rounds":
            for _ in range(policy.n):
                self.bisect_round(rng, policy.trigger)
            return self
        heap = []
        for pi, p in enumerate(self.paths):
            for c in p.cells:
                heapq.heappush(heap, (-(c.max_hi - c.min_lo), c.s, pi, id(c)))
        while heap:
            neg, s, pi, cid = heap[0]
            if -neg <= policy.eps:
                break
            heapq.heappop(heap)
            p = self.paths[pi]
            i = p.locate(s)
            c = p.cells[i]
            if id(c) != cid:
                continue
            if len(self.cells) >= policy.max_cells:
                raise PreconditionError(f"tolerance {policy.eps} not reached within {policy.max_cells} cells")
            self._bisect(p, i, policy.trigger, rng)
            for k in p.cells[i:i + 2]:
                heapq.heappush(heap, (-(k.max_hi - k.min_lo), k.s, pi, id(k)))
        return self

    # restoration -------------------------------------------------------------
    def restore(self, q: float, rng: np.random.Generator) -> float:
        """Path value at ``q``; right-continuous at jump times. Refines the cell state."""
        for p in reversed(self.paths):
            if p.cells[0].s <= q <= p.cells[-1].t:
                return p.restore(q, rng)
        raise PreconditionError(f"time {q} outside the horizon")

    # export --------------------------------------------------------------------
    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "t", "lower", "upper", "round"])
        for c in self.cells:
            w.writerow([repr(c.s), repr(c.t), repr(c.min_lo), repr(c.max_hi), self.round])
        return buf.getvalue()


def eps_strong_bm(horizon: float, start: float, policy: RefinePolicy, rng: np.random.Generator,
                  layers=DEFAULT_LAYERS) -> BoundingProcess:
    """Staircases for Brownian motion on ``[0, horizon]`` started at ``start``."""
    if not horizon > 0:
        raise PreconditionError("horizon must be positive")
    y = start + math.sqrt(horizon) * rng.standard_normal()
    layer = initial_layer(Bridge(0.0, horizon, start, y), layers, rng)
    return BoundingProcess([CellPath([layer])]).refine_to(policy, rng)


def eps_strong_jump_diffusion(m: DiffusionModel, policy: RefinePolicy, rng: np.random.Generator,
                              algo: str = "aujea", jumps: Optional[JumpSpec] = None) -> BoundingProcess:
    """Staircases for a jump diffusion, starting from the cells of an adaptive skeleton.

    Cells never straddle a jump: each inter-jump segment is refined on its own.
    """
    from .jumps import run_aujea, run_bjea

    if algo == "aujea":
        js = run_aujea(m, rng, jumps=jumps)
    elif algo == "bjea":
        js = run_bjea(m, rng, inner="auea", jumps=jumps)
    else:
        raise PreconditionError(f"jump skeleton algorithm must be 'aujea' or 'bjea', got {algo!r}")
    paths = [CellPath(list(s.cells.cells)) for s in js.segments]
    bp = BoundingProcess(paths, js.jumps)
    bp.skeleton = js
    return bp.refine_to(policy, rng)


def certified_functionals(bp: BoundingProcess) -> dict:
    """Interval enclosures of the path minimum, maximum and time integral."""
    st = bp.staircase()
    cells = bp.cells
    dt = st[:, 1] - st[:, 0]
    return {
        "min": (min(c.min_lo for c in cells), min(c.min_hi for c in cells)),
        "max": (max(c.max_lo for c in cells), max(c.max_hi for c in cells)),
        "integral": (float(np.sum(st[:, 2] * dt)), float(np.sum(st[:, 3] * dt))),
    }


def convergence_table(rows: list[list[tuple[int, float, float]]]) -> list[tuple[int, float, float, float]]:
    """Average ``(n, sup gap, L1 gap)`` records over replications; adds ``2^(n/2) * L1``."""
    by_n: dict[int, list] = {}
    for rep in rows:
        for n, sup, l1 in rep:
            by_n.setdefault(n, []).append((sup, l1))
    out = []
    for n in sorted(by_n):
        arr = np.array(by_n[n])
        sup, l1 = arr.mean(axis=0)
        out.append((n, float(sup), float(l1), float(2 ** (n / 2) * l1)))
    return out
