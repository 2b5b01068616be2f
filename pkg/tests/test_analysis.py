import json
import math

import pytest

from latsense.analysis import (CSV_HEADER, Analyzer, analyse, bandwidth_sensitivity,
                               critical_latencies, l_ratio, latency_sensitivity,
                               latency_tolerance, records_csv, records_json, sweep)
from latsense.costmodel import (CostMode, CostModel, HeterogeneousParams, TopologyKind,
                                TopologySpec)
from latsense.engine import build_lp, makespan
from latsense.errors import InfeasibleError, ModelError
from latsense.oracle import dp_breakpoints

from conftest import random_case, running_example


def test_running_example_record():
    g, m = running_example()
    r = analyse(g, m)
    assert (r.T, r.lambda_L, r.lambda_G) == pytest.approx((1615, 1, 3))
    assert r.feasibility_range == pytest.approx((385, math.inf))
    assert r.L_effective == pytest.approx(500)
    assert r.rho_L == pytest.approx(500 / 1615)
    assert r.rho_L_inverse == pytest.approx(1615 / 500)
    assert latency_sensitivity(g, m) == 1 and bandwidth_sensitivity(g, m) == 3


def test_latency_off_critical_path():
    g, m = running_example(L_us=0.2)
    r = analyse(g, m)
    assert r.lambda_L == 0 and r.rho_L == 0 and r.rho_L_inverse == math.inf


def test_l_ratio_clamped():
    assert l_ratio(100, 80, 2) == 1.0
    assert l_ratio(0, 10, 1) == 0.0
    assert l_ratio(100, 10, 0) == 0.0
    assert l_ratio(100, 10, 3) == pytest.approx(0.3)


def test_topology_message_count():
    g, _ = running_example()
    t = TopologySpec(TopologyKind.FAT_TREE, k=4, l_wire=274, d_switch=108)
    m = CostModel(mode=CostMode.TOPOLOGY, topology=t)
    r = Analyzer(g, m).record()
    # ranks 0 and 1 share an edge switch: 2 wires, 1 switch, one message
    assert r.lambda_L == 2
    assert r.L_effective == pytest.approx(2 * 274 + 108)
    assert r.rho_L == pytest.approx((2 * 274 + 108) / r.T)


def test_heterogeneous_record_sums_pairs():
    g, _ = running_example()
    h = HeterogeneousParams(((0, 500), (500, 0)), ((0, 5), (5, 0)))
    r = Analyzer(g, CostModel(mode=CostMode.HETEROGENEOUS, hetero=h)).record()
    assert r.T == pytest.approx(1615) and r.lambda_L == 1 and r.lambda_G == 3
    assert r.feasibility_range == (-math.inf, math.inf)


def test_unknown_symbol():
    g, m = running_example()
    with pytest.raises(ModelError):
        Analyzer(g, m, symbol="zz")


# -- sweeps ----------------------------------------------------------------------

def test_sweep_running_example():
    g, m = running_example(L_us=0.2)
    recs = sweep(g, m, [0, 100, 185, 300])
    assert [r.lambda_L for r in recs] == [0, 0, 1, 1]
    assert [r.reused_range for r in recs] == [False, True, False, True]
    assert [r.T for r in recs] == pytest.approx([1500, 1500, 1500, 1615])
    assert recs[2].feasibility_range == recs[3].feasibility_range


def test_sweep_rejects_negative_delta():
    g, m = running_example()
    with pytest.raises(ModelError):
        sweep(g, m, [-1])


@pytest.mark.parametrize("seed", range(10))
def test_sweep_affine_within_ranges(seed):
    g, m = random_case(seed, max_events=300)
    recs = sweep(g, m, [i * 250.0 for i in range(25)])
    lp = build_lp(g, m)
    for r in recs:
        assert r.T == pytest.approx(makespan(lp, {"l": r.L}), rel=1e-9, abs=1e-6)
        fl, fu = r.feasibility_range
        assert fl <= r.L + 1e-6 and (r.L < fu or fu == math.inf)
        for q in recs:
            if fl <= q.L < fu:
                assert q.lambda_L == r.lambda_L
                assert q.T == pytest.approx(r.T + r.lambda_L * (q.L - r.L), rel=1e-9, abs=1e-6)


def test_sweep_reuse_matches_fresh_solves():
    g, m = random_case(3, max_events=300)
    deltas = [i * 100.0 for i in range(30)]
    a = Analyzer(g, m).sweep(deltas, reuse=True)
    b = Analyzer(g, m).sweep(deltas, reuse=False)
    for x, y in zip(a, b):
        assert (x.T, x.lambda_L, x.lambda_G) == pytest.approx((y.T, y.lambda_L, y.lambda_G))
        assert x.feasibility_range == pytest.approx(y.feasibility_range)


def test_parallel_sweep_matches_sequential():
    g, m = random_case(11, max_events=300)
    deltas = [i * 100.0 for i in range(16)]
    par, seq = sweep(g, m, deltas, jobs=3), sweep(g, m, deltas, jobs=1)
    assert par == sweep(g, m, deltas, jobs=3)
    for x, y in zip(par, seq):
        assert (x.L, x.T, x.lambda_L, x.lambda_G, x.rho_L) == (y.L, y.T, y.lambda_L,
                                                               y.lambda_G, y.rho_L)
        assert x.feasibility_range == pytest.approx(y.feasibility_range, rel=1e-9)


def test_csv_and_json_output():
    g, m = running_example()
    recs = sweep(g, m, [0, 1000])
    text = records_csv(recs, {"command": "sweep"})
    lines = text.splitlines()
    assert lines[0] == '# command: "sweep"'
    assert lines[1] == ",".join(CSV_HEADER)
    row = lines[2].split(",")
    assert float(row[1]) == pytest.approx(1.615e-6) and row[-1] == "inf"
    assert float(row[5]) == pytest.approx(0.385)
    d = json.loads(records_json(recs))
    assert d["records"][1]["T"] == pytest.approx(2615)
    assert d["records"][0]["feasibility_range"][1] == "inf"


# -- critical latencies ----------------------------------------------------------

def test_critical_latencies_running_example():
    g, m = running_example()
    res = critical_latencies(g, m, 0, 2000)
    assert res.values == pytest.approx([385])
    assert res.iterations == 2
    assert critical_latencies(g, m, 400, 2000).values == []


def test_critical_latencies_validation():
    g, m = running_example()
    for args in ((10, 0), (0, 10, 0), (0, 10, 1, -1)):
        with pytest.raises(ModelError):
            critical_latencies(g, m, *args)


def _dp_points(env, lo, hi, eps):
    out = []
    for b in env.breakpoints_in(lo, hi):
        if not out or b - out[-1] > eps:
            out.append(b)
    return out


@pytest.mark.parametrize("seed", range(20))
def test_critical_latencies_are_dp_breakpoints(seed):
    g, m = random_case(seed, max_events=300)
    res = critical_latencies(g, m, 0, 20_000.0, step=1000, eps=1)
    bps = dp_breakpoints(g, m).breakpoints
    for x in res.values:
        assert min(abs(x - b) for b in bps) <= 1e-6 * max(1.0, x)


@pytest.mark.parametrize("seed", range(20))
def test_critical_latencies_match_dp_at_fine_step(seed):
    # the walk resolves every breakpoint once step is below the smallest gap
    g, m = random_case(seed, max_events=300)
    L_max, eps = 20_000.0, 1e-3
    expected = _dp_points(dp_breakpoints(g, m), 0, L_max, eps)
    gaps = [b - a for a, b in zip([0.0] + expected, expected)]
    step = max(min(gaps, default=L_max) / 2, 4 * eps)
    if step * 2 < 8 * eps:
        pytest.skip("breakpoints closer than the search resolution")
    res = critical_latencies(g, m, 0, L_max, step=step, eps=eps)
    # a breakpoint at the interval edge may round to either side of it
    found = [x for x in res.values if x > eps]
    expected = [x for x in expected if x > eps]
    assert len(found) == len(expected)
    for a, b in zip(found, expected):
        assert a == pytest.approx(b, rel=1e-7, abs=1e-4)


# -- tolerance -------------------------------------------------------------------

def test_tolerance_percent_and_threshold():
    g, m = running_example()
    t = latency_tolerance(g, m, percent=5)
    assert t.baseline_T == pytest.approx(1615)
    assert t.threshold == pytest.approx(1615 * 1.05)
    assert t.L_max == pytest.approx(1615 * 1.05 - 1115)
    assert latency_tolerance(g, m, threshold=2000).L_max == pytest.approx(885)
    with pytest.raises(InfeasibleError):
        latency_tolerance(g, m, threshold=100)
    with pytest.raises(ModelError):
        latency_tolerance(g, m)
    with pytest.raises(ModelError):
        latency_tolerance(g, m, percent=-1)


def test_tolerance_grows_with_percent():
    g, m = random_case(7, max_events=300)
    a = Analyzer(g, m)
    vals = [a.tolerance(p).L_max for p in (1, 5, 10, 50)]
    assert vals == sorted(vals)
