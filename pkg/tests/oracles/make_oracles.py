"""Regenerate the frozen reference values used by the test suite.

Everything here is plain numpy and deliberately independent of ``exactsim``:
containment probabilities come from a method-of-images sum and from a
fine-mesh Euler bridge, path laws from Euler schemes. Run from the repository
root with ``python3 tests/oracles/make_oracles.py``; it takes several minutes.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

HERE = Path(__file__).parent


def images(L, x, y, ell, ups, J=60):
    """P(bridge x->y over time L stays in [ell, ups]) by reflection images."""
    if not (ell <= min(x, y) and max(x, y) <= ups):
        return 0.0
    D = ups - ell
    if D <= math.pi * math.sqrt(L / 1600.0):
        return 0.0  # below exp(-700) by the leading eigenvalue
    # images decay like exp(-2 (j D)^2 / L); narrow bands need more of them
    J = max(J, int(math.ceil(8.0 * math.sqrt(L) / D)) + 2)
    j = np.arange(-J, J + 1)
    d0 = (y - x) ** 2
    a = np.exp(-((y - x + 2 * j * D) ** 2 - d0) / (2 * L))
    b = np.exp(-((y + x - 2 * ell + 2 * j * D) ** 2 - d0) / (2 * L))
    return float(np.clip(np.sum(a - b), 0.0, 1.0))


def band(L, x, y, l_lo, l_hi, u_lo, u_hi):
    """P(min in [l_lo, l_hi], max in [u_lo, u_hi]) for the bridge."""
    g = lambda a, b: images(L, x, y, a, b) if a < b else 0.0
    return g(l_lo, u_hi) - g(l_hi, u_hi) - g(l_lo, u_lo) + g(l_hi, u_lo)


def euler_containment(L, x, y, ell, ups, n, h, rng, chunk=5000):
    """Euler bridge with the per-step closed-form crossing correction."""
    steps = int(round(L / h))
    h = L / steps
    grid = np.arange(1, steps) * h
    vals = np.empty(n)
    for c0 in range(0, n, chunk):
        m = min(chunk, n - c0)
        w = np.cumsum(rng.standard_normal((m, steps)) * math.sqrt(h), axis=1)
        path = x + (y - x) * grid / L + w[:, :-1] - np.outer(w[:, -1], grid / L)
        full = np.concatenate([np.full((m, 1), x), path, np.full((m, 1), y)], axis=1)
        a, b = full[:, :-1], full[:, 1:]
        inside = np.all((full >= ell) & (full <= ups), axis=1)
        with np.errstate(over="ignore", invalid="ignore"):
            up = np.exp(-2 * np.clip(ups - a, 0, None) * np.clip(ups - b, 0, None) / h)
            lo = np.exp(-2 * np.clip(a - ell, 0, None) * np.clip(b - ell, 0, None) / h)
        logp = np.log(np.clip(1 - up - lo, 1e-300, 1)).sum(axis=1)
        vals[c0:c0 + m] = np.where(inside, np.exp(logp), 0.0)
    return vals


def gamma_sets(k=20, seed=7):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(k):
        L = float(rng.uniform(0.3, 2.0))
        x = float(rng.normal(0, 0.5))
        y = float(x + rng.normal(0, math.sqrt(L)))
        ell = float(min(x, y) - rng.uniform(0.1, 1.2) * math.sqrt(L))
        ups = float(max(x, y) + rng.uniform(0.1, 1.2) * math.sqrt(L))
        out.append(dict(s=0.0, t=L, x=x, y=y, ell=ell, ups=ups))
    return out


def euler_jump(drift, intensity, jump, x0, T, n, h, rng):
    steps = int(round(T / h))
    h = T / steps
    x = np.full(n, float(x0))
    cnt = np.zeros(n, dtype=np.int64)
    sq = math.sqrt(h)
    for _ in range(steps):
        hit = rng.random(n) < -np.expm1(-np.maximum(intensity(x), 0.0) * h)
        jmp = jump(x[hit], rng)
        x = x + drift(x) * h + sq * rng.standard_normal(n)
        x[hit] += jmp
        cnt += hit
    return x, cnt


def dissection_probs(layer, q, w):
    """Nine case probabilities for one knot, keyed 'LR|LR' by which halves attain the extremes."""
    s, t, x, y, l_lo, l_hi, u_lo, u_hi = layer
    l_star, u_star = min(l_hi, w), max(u_lo, w)
    halves = [(q - s, x, w), (t - q, w, y)]
    out = {}
    for amin in [(1, 1), (1, 0), (0, 1)]:
        for amax in [(1, 1), (1, 0), (0, 1)]:
            p = 1.0
            for i, (L, a, b) in enumerate(halves):
                vmin, vmax = min(a, b), max(a, b)
                mb = (l_lo, l_star) if amin[i] else (l_star, vmin)
                xb = (u_star, u_hi) if amax[i] else (vmax, u_star)
                p *= band(L, a, b, *mb, *xb)
            out[f"{amin[0]}{amin[1]}|{amax[0]}{amax[1]}"] = p
    z = sum(out.values())
    return {k: v / z for k, v in out.items()}


def refinement_probs(layer, l_mid, u_mid):
    s, t, x, y, l_lo, l_hi, u_lo, u_hi = layer
    kids = [(l_lo, l_mid, u_mid, u_hi), (l_mid, l_hi, u_mid, u_hi),
            (l_lo, l_mid, u_lo, u_mid), (l_mid, l_hi, u_lo, u_mid)]
    p = [band(t - s, x, y, *k) for k in kids]
    z = band(t - s, x, y, l_lo, l_hi, u_lo, u_hi)
    return [v / z for v in p]


DISSECTION_LAYERS = [
    # (s, t, x, y, l_lo, l_hi, u_lo, u_hi), (q, w)
    ((0.0, 1.0, 0.0, 0.0, -1.0, -0.3, 0.3, 1.0), (0.5, 0.1)),
    ((0.0, 2.0, 0.2, -0.4, -1.6, -0.6, 0.5, 1.5), (0.7, -0.8)),
    ((0.0, 0.5, 1.0, 1.3, 0.2, 0.9, 1.4, 2.1), (0.3, 1.5)),
]


def main():
    rng = np.random.default_rng(20241017)
    frozen = {}

    sets = gamma_sets()
    rows = []
    for p in sets:
        v = euler_containment(p["t"] - p["s"], p["x"], p["y"], p["ell"], p["ups"], 100_000, 1e-3, rng)
        rows.append(dict(p, euler_mean=float(v.mean()), euler_se=float(v.std(ddof=1) / math.sqrt(len(v))),
                         images=images(p["t"] - p["s"], p["x"], p["y"], p["ell"], p["ups"])))
        print("gamma", rows[-1])
    frozen["gamma_containment"] = {"mesh": 1e-3, "n": 100_000, "sets": rows}

    frozen["dissection"] = [
        {"layer": list(lay), "knot": list(k), "probs": dissection_probs(lay, *k)} for lay, k in DISSECTION_LAYERS]
    frozen["refinement"] = [
        {"layer": list(lay), "l_mid": 0.5 * (lay[4] + lay[5]), "u_mid": 0.5 * (lay[6] + lay[7]),
         "probs": refinement_probs(lay, 0.5 * (lay[4] + lay[5]), 0.5 * (lay[6] + lay[7]))}
        for lay, _ in DISSECTION_LAYERS]

    app1 = euler_jump(lambda x: -x, lambda x: np.sin(x), lambda x, r: -x / 2 + r.standard_normal(x.shape),
                      2.0, 5.0, 10_000, 1e-4, rng)
    app2 = euler_jump(np.sin, lambda x: x * x, lambda x, r: -x * r.random(x.shape), 0.0, 2.0, 10_000, 1e-4, rng)
    sine = euler_jump(np.sin, lambda x: np.zeros_like(x), lambda x, r: np.zeros_like(x), 0.0, 2.0, 100_000,
                      1e-4, rng)
    np.savez_compressed(HERE / "euler_samples.npz", app1_x=app1[0], app1_n=app1[1], app2_x=app2[0],
                        app2_n=app2[1], sine_x=sine[0])
    frozen["euler_samples"] = {"mesh": 1e-4, "app1": "app1_x/app1_n (N=1e4)", "app2": "app2_x/app2_n (N=1e4)",
                               "sine": "sine_x (N=1e5)"}
    (HERE / "frozen.json").write_text(json.dumps(frozen, indent=1, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
