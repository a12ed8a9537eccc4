import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from exactsim.core_model import PRESETS, JumpSpec, LayerBound, ModelConfig
from exactsim.errors import ContractViolation, PreconditionError
from exactsim.exact import run_auea, run_uea
from exactsim.jumps import run_aujea, run_bjea, run_ujea, superposition_wrapper
from conftest import energy_pvalue, euler_samples, jump_draws, jump_model, stream

N = 10_000


def _no_jumps(base):
    return replace(PRESETS[base], intensity="constant", intensity_rate=0.0).build()


def test_bjea_without_jumps_is_inner():
    m = _no_jumps("ou")
    for i in range(50):
        js = run_bjea(m, stream(3, i))
        sk = run_auea(m, stream(3, i))
        assert js.n_jumps == 0 and len(js.segments) == 1
        assert js.end_value == sk.end_value and js.segments[0].times == sk.times


def test_aujea_without_jumps_is_auea():
    m = replace(PRESETS["app2"], intensity_rate=0.0).build()
    for i in range(50):
        js = run_aujea(m, stream(4, i))
        sk = run_auea(m, stream(4, i))
        assert js.n_jumps == 0 and js.end_value == sk.end_value and js.segments[0].times == sk.times


def test_ujea_without_jumps_is_uea():
    m = replace(PRESETS["app2"], intensity_rate=0.0).build()
    for i in range(50):
        js = run_ujea(m, stream(5, i))
        sk = run_uea(m, stream(5, i))
        assert js.n_jumps == 0 and len(js.segments) == 1 and js.end_value == sk.end_value


def test_bjea_constant_intensity_counts_are_poisson():
    lam, T = 1.3, 2.0
    m = ModelConfig(name="cp", horizon=T, intensity="constant", intensity_rate=lam, jump="gauss").build()
    counts = np.array([run_bjea(m, stream(6, i)).n_jumps for i in range(N)])
    k = np.arange(0, 8)
    obs = np.array([np.sum(counts == v) for v in k[:-1]] + [np.sum(counts >= k[-1])])
    p = stats.poisson(lam * T).pmf(k[:-1])
    exp = N * np.append(p, 1 - p.sum())
    assert stats.chisquare(obs, exp).pvalue > 0.01


def test_bjea_app1_matches_euler():
    x = jump_draws("bjea", "app1", N, 1)[:, 0]
    assert stats.ks_2samp(x, euler_samples()["app1_x"]).pvalue > 0.01


@pytest.mark.parametrize("algo", ["ujea", "aujea"])
def test_layered_jump_algorithms_match_euler(algo):
    x = jump_draws(algo, "app2", N, 1)[:, 0]
    assert stats.ks_2samp(x, euler_samples()["app2_x"]).pvalue > 0.01


def test_ujea_and_aujea_jump_counts_agree():
    a = jump_draws("ujea", "app2", N, 1)[:, 1].astype(int)
    b = jump_draws("aujea", "app2", N, 1)[:, 1].astype(int)
    top = 5
    table = np.array([[np.sum(np.minimum(v, top) == k) for k in range(top + 1)] for v in (a, b)])
    table = table[:, table.sum(0) > 0]
    assert stats.chi2_contingency(table).pvalue > 0.01


def test_bjea_and_aujea_agree_on_bounded_model():
    a = jump_draws("bjea", "app1", N, 1)
    b = np.array([(js.end_value, js.n_jumps) for js in (run_aujea(jump_model("app1"), stream(2, i))
                                                       for i in range(3000))])
    assert energy_pvalue(a[:3000], b) > 0.01


@pytest.mark.parametrize("fn,name", [(run_bjea, "app1"), (run_ujea, "app2"), (run_aujea, "app2")])
def test_jump_bookkeeping(fn, name):
    m = jump_model(name)
    for i in range(200):
        js = fn(m, stream(7, i))
        times = [q for q, _, _ in js.jumps]
        assert all(a < b for a, b in zip(times, times[1:]))
        assert all(m.horizon > q > 0 for q in times)
        if name == "app2":
            # jumps move the state towards zero without crossing it
            assert all(min(0, pre) <= post <= max(0, pre) for _, pre, post in js.jumps)
        if fn is run_ujea:
            continue
        segs = js.segments
        assert segs[0].t0 == 0.0 and segs[-1].t1 == m.horizon
        assert all(a.t1 == b.t0 for a, b in zip(segs, segs[1:]))
        jumps = {q: (pre, post) for q, pre, post in js.jumps}
        for a, b in zip(segs, segs[1:]):
            if a.t1 in jumps:
                pre, post = jumps[a.t1]
                assert a.end_value == pre and b.start_value == post
            else:
                assert a.end_value == b.start_value


def test_ujea_refuses_restoration():
    js = run_ujea(jump_model("app2"), stream(8, 0))
    with pytest.raises(PreconditionError):
        js.restore(0.5, stream(8, 1))


class _Sealed:
    def __getattr__(self, name):
        raise AssertionError(f"pre-jump segment touched via {name}")


def test_aujea_post_jump_restoration_ignores_history():
    m = jump_model("app2")
    for i in range(200):
        js = run_aujea(m, stream(9, i))
        if js.n_jumps:
            break
    else:
        pytest.fail("no jump in 200 runs")
    psi = js.jumps[0][0]
    first = js.segments[0]
    assert first.t1 == psi and first.end_value == js.jumps[0][1]
    first.cells = _Sealed()
    r = stream(9, 10_000)
    for q in np.linspace(psi, m.horizon, 25)[1:-1]:
        js.restore(float(q), r)
    # the sealed segment is still the one serving the pre-jump stretch
    with pytest.raises(AssertionError):
        js.restore(psi / 2, r)


def test_superposition_needs_floor():
    with pytest.raises(PreconditionError):
        superposition_wrapper(jump_model("app2"), stream(10, 0))


def test_superposition_detects_floor_violation():
    j = JumpSpec(lambda x: x * x, LayerBound(lambda lo, hi: max(lo * lo, hi * hi)), lambda x, r: 0.0,
                 intensity_floor=0.5)
    m = PRESETS["bm"].build().with_(jumps=j, horizon=3.0)
    with pytest.raises(ContractViolation):
        for i in range(200):
            superposition_wrapper(m, stream(11, i))


def test_superposition_all_floor_jumps_are_exponential():
    lam = 1.5
    m = ModelConfig(name="flat", horizon=20.0, intensity="constant", intensity_rate=lam, intensity_floor=lam,
                    jump="gauss").build()
    first = []
    for i in range(3000):
        js = superposition_wrapper(m, stream(12, i))
        assert js.proposals == 0
        first.append(js.jumps[0][0])
    assert stats.kstest(first, stats.expon(scale=1 / lam).cdf).pvalue > 0.01


def test_superposition_matches_plain_aujea():
    a = jump_draws("super", "app2_floor", N, 1)
    b = jump_draws("aujea", "app2_floor", N, 2)
    assert stats.ks_2samp(a[:, 0], b[:, 0]).pvalue > 0.01
    assert energy_pvalue(a, b) > 0.01
