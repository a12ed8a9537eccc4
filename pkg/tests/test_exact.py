import json
import math

import numpy as np
import pytest
from scipy import stats

from exactsim.core_model import PRESETS
from exactsim.errors import AttemptCapExceeded, PreconditionError
from exactsim.exact import Skeleton, dumps, restore, run_algorithm, run_auea, run_bea, run_uea
from conftest import energy_pvalue, euler_samples, mean_se

OU_VAR = (1 - math.exp(-2.0)) / 2


def _ends(fn, m, n, rng, **kw):
    return np.array([fn(m, rng, **kw).end_value for _ in range(n)])


def test_bea_zero_drift_never_thins(rng):
    m = PRESETS["bm"].build()
    sks = [run_bea(m, rng) for _ in range(5000)]
    assert all(s.kappa == 0 and s.attempts == 1 for s in sks)
    assert stats.kstest([s.end_value for s in sks], "norm").pvalue > 0.01


def test_bea_constant_drift_mean(rng):
    m = PRESETS["const"].build()
    sks = [run_bea(m, rng) for _ in range(100_000)]
    assert all(s.kappa == 0 for s in sks)
    mu, se = mean_se(np.array([s.end_value for s in sks]))
    assert abs(mu - 0.5) < 4 * se


def test_bea_sine_matches_euler(rng):
    m = PRESETS["sine"].build()
    x = _ends(run_bea, m, 100_000, rng)
    assert stats.ks_2samp(x, euler_samples()["sine_x"]).pvalue > 0.01


def test_bea_needs_global_bounds(rng):
    with pytest.raises(PreconditionError):
        run_bea(PRESETS["ou"].build(), rng)


def test_unknown_backend_and_algorithm(rng):
    m = PRESETS["ou"].build()
    with pytest.raises(PreconditionError):
        run_uea(m, rng, backend="euler")
    with pytest.raises(PreconditionError):
        run_algorithm("ea3", m, rng)


def test_zero_drift_layered_accepts_first_try(rng):
    m = PRESETS["bm"].build()
    for fn in (run_uea, run_auea):
        for _ in range(300):
            sk = fn(m, rng)
            assert sk.attempts == 1 and sk.kappa == 0 and len(sk.times) == 2


@pytest.mark.parametrize("fn", [run_uea, run_auea])
def test_ou_endpoint_is_exact(fn, rng):
    x = _ends(fn, PRESETS["ou"].build(), 10_000, rng)
    assert stats.kstest(x, stats.norm(0, math.sqrt(OU_VAR)).cdf).pvalue > 0.01


def test_uea_backends_agree(rng):
    m = PRESETS["ou"].build()
    a = [run_uea(m, rng) for _ in range(10_000)]
    b = [run_uea(m, rng, backend="bessel") for _ in range(10_000)]
    assert stats.ks_2samp([s.end_value for s in a], [s.end_value for s in b]).pvalue > 0.01
    na, nb = sum(s.attempts for s in a), sum(s.attempts for s in b)
    pa, pb = len(a) / na, len(b) / nb
    se = math.sqrt(pa * pa * (1 - pa) / len(a) + pb * pb * (1 - pb) / len(b))
    assert abs(pa - pb) < 3 * se


def test_auea_matches_uea(rng):
    m = PRESETS["ou"].build()
    assert stats.ks_2samp(_ends(run_uea, m, 10_000, rng), _ends(run_auea, m, 10_000, rng)).pvalue > 0.01


def _bridge_functional(y, h, rng):
    """exp(-int_0^1 X^2/2) along Brownian bridges 0 -> y (trapezoid on mesh h)."""
    steps = int(round(1 / h))
    grid = np.arange(1, steps + 1) * h
    w = np.cumsum(rng.standard_normal((len(y), steps)) * math.sqrt(h), axis=1)
    path = w - np.outer(w[:, -1] - y, grid)
    sq = np.concatenate([np.zeros((len(y), 1)), path * path], axis=1)
    integral = h * (sq[:, 1:] + sq[:, :-1]).sum(axis=1) / 2
    return np.exp(-integral / 2)


def test_ou_acceptance_rate_matches_path_functional(rng):
    # phi - inf phi = x^2 / 2 and the biased endpoint is N(0, 1/2) for the OU drift at T = 1
    m = PRESETS["ou"].build()
    sks = [run_uea(m, rng) for _ in range(10_000)]
    p = len(sks) / sum(s.attempts for s in sks)
    se_p = p * math.sqrt((1 - p) / len(sks))
    r = np.random.default_rng(17)
    vals = np.concatenate([_bridge_functional(r.normal(0, math.sqrt(0.5), 10_000), 1e-3, r) for _ in range(10)])
    q, se_q = mean_se(vals)
    assert abs(p - q) < 3 * math.sqrt(se_p ** 2 + se_q ** 2)


def _joint(fn, m, n, rng):
    out = np.empty((n, 2))
    for i in range(n):
        sk = fn(m, rng)
        out[i] = sk.restore(m.horizon / 2, rng), sk.end_value
    return out


@pytest.mark.parametrize("name,fn", [("bm", run_bea), ("const", run_uea), ("ou", run_auea)])
def test_joint_half_and_end_law(name, fn, rng):
    m = PRESETS[name].build()
    sim = _joint(fn, m, 10_000, rng)
    r = np.random.default_rng(11)
    n = 10_000
    if name == "ou":
        v = (1 - math.exp(-1.0)) / 2
        h = r.normal(0, math.sqrt(v), n)
        ref = np.column_stack([h, math.exp(-0.5) * h + r.normal(0, math.sqrt(v), n)])
    else:
        c = 0.5 if name == "const" else 0.0
        h = c * 0.5 + r.normal(0, math.sqrt(0.5), n)
        ref = np.column_stack([h, h + c * 0.5 + r.normal(0, math.sqrt(0.5), n)])
    assert energy_pvalue(sim, ref) > 0.01


def test_dense_restoration_midpoint_law(rng):
    m = PRESETS["ou"].build()
    grid = np.arange(1, 8) / 8
    vals = []
    for _ in range(10_000):
        sk = run_auea(m, rng)
        order = rng.permutation(grid)
        got = dict(zip(order, restore(sk, order, rng)))
        vals.append(got[0.5])
    v = (1 - math.exp(-1.0)) / 2
    assert stats.kstest(vals, stats.norm(0, math.sqrt(v)).cdf).pvalue > 0.01


@pytest.mark.parametrize("algo", ["bea", "uea", "auea"])
def test_restore_existing_point_and_horizon(algo, rng):
    m = PRESETS["sine"].build()
    sk = run_algorithm(algo, m, rng)
    for t, v in list(zip(sk.times, sk.values)):
        assert sk.restore(t, rng) == v
    w = sk.restore(0.7, rng)
    assert sk.restore(0.7, rng) == w
    with pytest.raises(PreconditionError):
        sk.restore(m.horizon + 0.1, rng)


def test_restored_path_stays_in_cells(rng):
    m = PRESETS["ou"].build()
    for _ in range(50):
        sk = run_auea(m, rng)
        lo = min(c.min_lo for c in sk.cells.cells)
        hi = max(c.max_hi for c in sk.cells.cells)
        for q in rng.uniform(0, 1, 30):
            assert lo <= sk.restore(float(q), rng) <= hi
        ts = sk.times
        assert all(a < b for a, b in zip(ts, ts[1:]))
        cells = sk.cells.cells
        assert all(a.t == b.s and a.y == b.x for a, b in zip(cells, cells[1:]))
        for c in cells:
            assert c.min_lo <= min(c.x, c.y) and max(c.x, c.y) <= c.max_hi


def test_record_round_trip(rng):
    m = PRESETS["ou"].build()
    sk = run_auea(m, rng)
    sk.restore(0.3, rng)
    rec = json.loads(dumps(sk.to_record()))
    back = Skeleton.from_record(rec)
    assert back.times == sk.times and back.values == sk.values
    assert dumps(back.to_record()) == dumps(sk.to_record())
    a = sk.restore(0.61, np.random.default_rng(5))
    b = back.restore(0.61, np.random.default_rng(5))
    assert a == b
    with pytest.raises(PreconditionError):
        Skeleton.from_record({**rec, "version": 99})


def test_attempt_cap(rng):
    m = PRESETS["ou"].build().with_(start=2.5)
    outcomes = []
    for _ in range(200):
        try:
            outcomes.append(run_uea(m, rng, max_attempts=1).attempts)
        except AttemptCapExceeded:
            outcomes.append(None)
    assert None in outcomes and set(outcomes) - {None} == {1}
