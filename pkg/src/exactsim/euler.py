"""Fine-mesh Euler reference samples (approximate, for validation only)."""
from __future__ import annotations

import numpy as np

from .core_model import DiffusionModel, JumpSpec


def euler_paths(m: DiffusionModel, n: int, dt: float, rng: np.random.Generator,
                jumps: JumpSpec | None = None, horizon: float | None = None,
                record: np.ndarray | None = None):
    """Euler scheme with jumps thinned per step with probability ``1 - exp(-lambda dt)``.

    Returns ``(X_T, jump_counts, recorded)`` where ``recorded`` holds the
    state at the mesh times nearest to ``record`` (or ``None``). The drift,
    intensity and jump sampler must accept numpy arrays.
    """
    if not dt > 0:
        raise ValueError("mesh must be positive")
    T = m.horizon if horizon is None else horizon
    j = jumps if jumps is not None else m.jumps
    steps = int(round(T / dt))
    h = T / steps
    sq = np.sqrt(h)
    x = np.full(n, float(m.start))
    counts = np.zeros(n, dtype=np.int64)
    rec_idx = {}
    out = None
    if record is not None:
        out = np.empty((len(record), n))
        for r, t in enumerate(record):
            rec_idx.setdefault(int(round(t / h)), []).append(r)
    for k in range(steps):
        if k in rec_idx:
            for r in rec_idx[k]:
                out[r] = x
        drift = m.drift(x)
        if j is not None:
            lam = np.maximum(j.intensity(x), 0.0)
            hit = np.flatnonzero(rng.random(n) < -np.expm1(-lam * h))
            jump = j.jump_sampler(x[hit], rng) if hit.size else None
            counts[hit] += 1
        x = x + drift * h + sq * rng.standard_normal(n)
        if j is not None and hit.size:
            x[hit] += jump
    if steps in rec_idx:
        for r in rec_idx[steps]:
            out[r] = x
    return x, counts, out


def bridge_containment(s, t, x, y, ell, ups, n: int, dt: float, rng: np.random.Generator, chunk: int = 20000):
    """Monte Carlo estimate of P(bridge stays in [ell, ups]) on a mesh.

    Between mesh points the path is a Brownian bridge, so the probability of
    not crossing a barrier inside a step is known in closed form; each path
    contributes the product of these per-step probabilities. Returns the
    per-path values (mean is the estimate).
    """
    steps = int(round((t - s) / dt))
    h = (t - s) / steps
    grid = np.arange(1, steps) * h
    vals = np.empty(n)
    for c0 in range(0, n, chunk):
        m = min(chunk, n - c0)
        z = rng.standard_normal((m, steps)) * np.sqrt(h)
        w = np.cumsum(z, axis=1)
        # pin to the bridge: W_u - (u/L) W_L, then shift
        L = t - s
        w = w[:, :-1] - np.outer(w[:, -1], grid / L)
        path = x + (y - x) * grid / L + w
        full = np.concatenate([np.full((m, 1), x), path, np.full((m, 1), y)], axis=1)
        a, b = full[:, :-1], full[:, 1:]
        inside = np.all((full >= ell) & (full <= ups), axis=1)
        with np.errstate(over="ignore", invalid="ignore"):
            up = np.exp(-2.0 * np.clip(ups - a, 0, None) * np.clip(ups - b, 0, None) / h)
            lo = np.exp(-2.0 * np.clip(a - ell, 0, None) * np.clip(b - ell, 0, None) / h)
        p = np.clip(1.0 - up - lo, 0.0, 1.0)
        vals[c0:c0 + m] = np.where(inside, np.exp(np.sum(np.log(np.maximum(p, 1e-300)), axis=1)), 0.0)
    return vals
