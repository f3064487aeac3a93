import numpy as np
import pytest

from conftest import boundary_handle, scripted_handle
from dpattack.errors import NotAdversarialAtMax
from dpattack.oracle import BuiltinModel, OracleHandle
from dpattack.search import (
    PdoOptions,
    ProbeFactory,
    adba_run,
    boundary_distance,
    build_run_partition,
    group_runs,
    hrays_run,
    lambda_compare,
    nrays_run,
    pdo_run,
    randomize_probe,
    split_runs,
)

X22 = np.full((1, 2, 2), 0.5)
D22 = np.ones((1, 2, 2), dtype=np.int8)


def test_boundary_distance_analytic_crossings():
    rng = np.random.default_rng(0)
    for _ in range(30):
        target = float(rng.uniform(0.05, 0.45))
        handle = boundary_handle(X22, lambda d, t=target: t)
        r, img = boundary_distance(handle, X22, D22, tol=1e-3)
        assert abs(r - target) <= 1e-3
        assert handle.ledger.total_queries <= 11
        assert img is not None


def test_boundary_distance_adversarial_everywhere():
    handle = boundary_handle(X22, lambda d: 0.0)
    r, _ = boundary_distance(handle, X22, D22, tol=1e-3)
    assert r <= 1e-3


def test_boundary_distance_never_adversarial():
    handle = boundary_handle(X22, lambda d: 2.0)
    with pytest.raises(NotAdversarialAtMax):
        boundary_distance(handle, X22, D22)


def d_with(flips):
    d = D22.copy()
    for idx in flips:
        d.flat[idx] = -1
    return d


def test_lambda_compare_deeper_survivor_wins():
    # d1 stays adversarial down to 0.2, d2 only down to 0.3; magnitudes
    # stay below 0.5 so probes from x=0.5 are never clipped
    d1 = d_with([0])
    d2 = d_with([1])

    def g(d):
        if np.array_equal(d, d1):
            return 0.2
        if np.array_equal(d, d2):
            return 0.3
        return 2.0

    handle = boundary_handle(X22, g)
    res = lambda_compare(handle, d1, d2, X22, 0.5)
    assert np.array_equal(res.winner, d1)
    assert res.winner_id == 1
    assert 0.2 <= res.r < 0.3
    assert handle.ledger.total_queries <= 2 * 8


def test_lambda_compare_identical_directions():
    handle = boundary_handle(X22, lambda d: 0.0)
    res = lambda_compare(handle, D22, D22.copy(), X22, 1.0)
    assert np.array_equal(res.winner, D22)
    assert res.r >= 0.9**8 - 1e-12


def test_lambda_compare_zero_steps():
    handle = boundary_handle(X22, lambda d: 0.0)
    res = lambda_compare(handle, D22, -D22, X22, 0.7, steps=0)
    assert np.array_equal(res.winner, D22)
    assert res.r == 0.7
    assert handle.ledger.total_queries == 0


def test_lambda_compare_joint_death_tie_breaks_first():
    d1 = d_with([0])
    d2 = d_with([1])
    handle = boundary_handle(X22, lambda d: 0.42)
    res = lambda_compare(handle, d1, d2, X22, 0.5)
    # both survive 0.45 then both die at 0.405: first argument keeps 0.45
    assert np.array_equal(res.winner, d1)
    assert res.r == pytest.approx(0.45)


def test_nrays_reaches_optimal_vertex_in_2d():
    x = np.full((1, 1, 2), 0.5)
    best = np.array([1, -1], dtype=np.int8).reshape(1, 1, 2)

    def g(d):
        # distances over the 4 vertices; unique optimum at (+1, -1)
        agree = (d == best).sum()
        return {2: 0.1, 1: 0.4, 0: 0.8}[int(agree)]

    handle = boundary_handle(x, g)
    state = nrays_run(handle, x, 0, np.ones_like(best), budget=200, eps=0.0)
    assert np.array_equal(state.d_best, best)
    assert state.r == pytest.approx(0.1, abs=1e-3)


def test_nrays_zero_budget_returns_initialization():
    handle = boundary_handle(X22, lambda d: 0.3)
    state = nrays_run(handle, X22, 0, D22, budget=0, eps=0.0)
    assert state.stop_reason == "budget"
    assert np.array_equal(state.d_best, D22)


def test_nrays_accepted_flips_never_increase_distance():
    rng = np.random.default_rng(1)
    x = np.full((1, 2, 4), 0.5)
    target = rng.choice([-1, 1], size=x.shape).astype(np.int8)

    def g(d):
        return 0.05 + 0.08 * int((d != target).sum())

    handle = boundary_handle(x, g)
    state = nrays_run(handle, x, 0, np.ones_like(target), budget=400, eps=0.0)
    rs = [e["r"] for e in handle.ledger.trace if e.get("adversarial")]
    accepted = [state.r]
    assert np.array_equal(state.d_best, target)
    assert all(b <= a + 1e-12 for a, b in zip(rs, rs[1:])) or state.r <= min(rs) + 1e-9


def test_hrays_no_flip_accepted_when_start_is_optimal():
    x = np.full((1, 2, 4), 0.5)
    all_one = np.ones(x.shape, dtype=np.int8)

    def g(d):
        return 0.2 if np.array_equal(d, all_one) else 0.9

    handle = boundary_handle(x, g)
    state = hrays_run(handle, x, 0, all_one, budget=500, eps=0.0)
    assert np.array_equal(state.d_best, all_one)
    assert state.r == pytest.approx(0.2, abs=1e-3)


def test_hrays_monotone_r_trace(victim, test_images):
    xs, ys = test_images
    handle = OracleHandle.from_model(victim, tracing=True)
    handle.bind_target(xs[0], int(ys[0]))
    accepted_rs = []
    hrays_run(
        handle, xs[0], int(ys[0]), np.ones(xs[0].shape, dtype=np.int8),
        budget=300, eps=0.0, on_accept=lambda st: accepted_rs.append(st.r),
    )
    assert all(b <= a + 1e-12 for a, b in zip(accepted_rs, accepted_rs[1:]))


def test_hrays_subset_lengths_are_dyadic():
    sizes = [len(b) for b in np.array_split(np.arange(16), 2**2)]
    assert sizes == [4, 4, 4, 4]


def test_adba_truth_table_all_four_cases():
    x = np.full((1, 1, 2), 0.5)
    d0 = np.ones(x.shape, dtype=np.int8)
    # level 1 on d=2 flips coordinate 0 then coordinate 1
    # case rows: (ok1, ok2) -> expected selection
    cases = [
        ([False, False], "both_fail", "none"),
        ([True, False], "solo_1", "d1"),
        ([False, True], "solo_2", "d2"),
    ]
    for flags, case, accepted in cases:
        handle, _ = scripted_handle(flags + [False] * 40, x)
        state = adba_run(handle, x, 0, d0.copy(), budget=2, eps=0.0)
        assert state.events[0]["case"] == case
        assert state.events[0]["accepted"] == accepted
    # both succeed routes through the comparator
    handle, _ = scripted_handle([True, True, True, False], x)
    state = adba_run(handle, x, 0, d0.copy(), budget=4, eps=0.0)
    assert state.events[0]["case"] == "both_succeed"
    assert state.events[0]["accepted"] == "d1"


def test_adba_both_fail_keeps_best_without_lambda_queries():
    x = np.full((1, 1, 2), 0.5)
    handle, oracle = scripted_handle([False, False], x)
    state = adba_run(handle, x, 0, np.ones(x.shape, dtype=np.int8), budget=2, eps=0.0)
    assert oracle.calls == 2  # no comparator queries spent
    assert np.all(state.d_best == 1)
    assert state.r == 1.0


def test_adba_both_succeed_matches_standalone_lambda():
    x = np.full((1, 1, 2), 0.5)
    d0 = np.ones(x.shape, dtype=np.int8)
    d1 = d0.copy(); d1.flat[0] = -1
    d2 = d0.copy(); d2.flat[1] = -1

    def g(d):
        if np.array_equal(d, d1):
            return 0.3
        if np.array_equal(d, d2):
            return 0.5
        return 0.9

    handle = boundary_handle(x, g)
    state = adba_run(handle, x, 0, d0, budget=30, eps=0.0)
    ref_handle = boundary_handle(x, g)
    ref = lambda_compare(ref_handle, d1, d2, x, 1.0)
    assert np.array_equal(state.events[0]["accepted"], f"d{ref.winner_id}")


def test_build_run_partition_hand_cases():
    part = build_run_partition(np.array([1, 1, -1, 1], dtype=np.int8))
    assert [(b - a) for a, b in part.runs] == [1, 3]
    assert part.m == 2
    # stable sort keeps original order inside each sign class
    assert list(part.gamma) == [2, 0, 1, 3]

    assert build_run_partition(np.ones(6, dtype=np.int8)).m == 1

    alt = np.array([1, -1] * 4, dtype=np.int8)
    part = build_run_partition(alt)
    assert part.m == 2
    assert [(b - a) for a, b in part.runs] == [4, 4]


def test_run_partition_invariants():
    rng = np.random.default_rng(2)
    d0 = rng.choice([-1, 1], size=64).astype(np.int8)
    part = build_run_partition(d0)
    svals = d0[part.gamma]
    # concatenating runs reconstructs gamma exactly; adjacent signs alternate
    spans = [part.indices(a, b) for a, b in part.runs]
    assert np.array_equal(np.concatenate(spans), part.gamma)
    for (a1, b1), (a2, b2) in zip(part.runs, part.runs[1:]):
        assert svals[a1] != svals[a2]
        assert np.all(svals[a1:b1] == svals[a1])


def test_single_run_splits_land_on_dyadic_midpoints():
    part = build_run_partition(np.ones(16, dtype=np.int8))
    runs = part.runs
    for _ in range(3):
        runs = split_runs(runs)
    bounds = sorted({a for a, _ in runs} | {b for _, b in runs})
    assert bounds == [0, 2, 4, 6, 8, 10, 12, 14, 16]
    groups = group_runs(runs, 4)
    assert groups == [(0, 4), (4, 8), (8, 12), (12, 16)]


def test_pdo_truth_table_with_injected_history():
    x = np.full((1, 1, 4), 0.5)
    d0 = np.array([1, 1, -1, -1], dtype=np.int8).reshape(x.shape)
    d_his = np.array([-1, 1, -1, 1], dtype=np.int8).reshape(x.shape)

    # solitary success arbitrates against a fresh history entry
    handle, oracle = scripted_handle([True, False, True, False], x)
    opts = PdoOptions(d_his=(d_his, 0.1))
    state = pdo_run(handle, x, 0, d0, 1.0, budget=4, eps=0.0, opts=opts)
    assert state.events[0]["case"] == "solo_1_vs_history"
    assert state.events[0]["accepted"] == "d1"

    # history wins when the candidate dies first in the comparator
    handle, _ = scripted_handle([True, False, False, True, False, False], x)
    opts = PdoOptions(d_his=(d_his, 0.1))
    state = pdo_run(handle, x, 0, d0.copy(), 1.0, budget=6, eps=0.0, opts=opts)
    assert state.events[0]["case"] == "solo_1_vs_history"
    assert state.events[0]["accepted"] == "his"
    # the rejected solitary success is cached at its observed magnitude
    assert state.d_his is not None

    # stale history (confirmed at >= current r) degenerates to adoption
    handle, oracle = scripted_handle([True, False], x)
    opts = PdoOptions(d_his=(d_his, 1.0))
    state = pdo_run(handle, x, 0, d0.copy(), 1.0, budget=2, eps=0.0, opts=opts)
    assert state.events[0]["case"] == "solo_1"
    assert oracle.calls == 2

    # both fail and both succeed rows
    handle, _ = scripted_handle([False, False], x)
    state = pdo_run(handle, x, 0, d0.copy(), 1.0, budget=2, eps=0.0)
    assert state.events[0]["case"] == "both_fail"

    handle, _ = scripted_handle([True, True, False, False], x)
    state = pdo_run(handle, x, 0, d0.copy(), 1.0, budget=4, eps=0.0)
    assert state.events[0]["case"] == "both_succeed"


def test_pdo_caches_both_succeed_loser():
    x = np.full((1, 1, 4), 0.5)
    d0 = np.array([1, 1, -1, -1], dtype=np.int8).reshape(x.shape)
    handle, _ = scripted_handle([True, True, True, False] + [False] * 20, x)
    state = pdo_run(handle, x, 0, d0, 1.0, budget=8, eps=0.0)
    assert state.d_his is not None
    loser, cached_r = state.d_his
    assert cached_r >= state.r  # stale by construction, never refires


def test_pdo_matches_adba_under_unstructured_init():
    class Scripted:
        def __init__(self, seed):
            self.rng = np.random.default_rng(seed)

        def predict(self, img):
            return 1 if self.rng.random() < 0.5 else 0

    x = np.full((1, 4, 4), 0.5)
    d0 = np.ones(x.shape, dtype=np.int8)
    for seed in range(50):
        ha = OracleHandle(Scripted(seed).predict, tracing=True)
        ha.bind_target(x, 0)
        sa = adba_run(ha, x, 0, d0.copy(), budget=None, eps=0.0)
        hp = OracleHandle(Scripted(seed).predict, tracing=True)
        hp.bind_target(x, 0)
        sp = pdo_run(hp, x, 0, d0.copy(), 1.0, budget=None, eps=0.0)
        assert [(e["q"], e["r"]) for e in ha.ledger.trace] == [
            (e["q"], e["r"]) for e in hp.ledger.trace
        ]
        assert np.array_equal(sa.d_best, sp.d_best)
        assert sa.r == sp.r
        assert [e["case"] for e in sa.events] == [e["case"] for e in sp.events]


def test_run_aligned_wrong_runs_fixed_in_single_evaluations():
    # runs of d0 nest inside the coherent sign blocks of u: the run-level
    # schedule repairs each wrong run with one node evaluation
    from dpattack.theory import _pattern_nodes, _simulate_descent, spatial_runs

    u = np.array([1, 1, 1, 1, -1, -1, -1, -1], dtype=np.int8)
    d0 = np.array([1, 1, -1, -1, 1, 1, -1, -1], dtype=np.int8)
    runs = spatial_runs(d0)
    assert len(runs) == 4
    curve = _simulate_descent(u, d0, _pattern_nodes(runs), budget=6)
    # two coarse groups carry zero net gain, then each wrong run flips
    assert curve[0] == 0.5
    assert curve[-1] == 1.0


def test_pdo_descends_on_boundary_oracle():
    x = np.full((1, 1, 8), 0.5)
    u = np.array([1, 1, 1, 1, -1, -1, -1, -1], dtype=np.int8)

    def g(d):
        wrong = int((d.ravel() != u).sum())
        return 0.02 + 0.05 * wrong

    d0 = np.ones(x.shape, dtype=np.int8)
    handle = boundary_handle(x, g)
    state = pdo_run(handle, x, 0, d0, 0.45, budget=80, eps=0.0)
    # d0 has four wrong entries (g = 0.22); refinement must go deeper
    assert state.r < 0.22
    assert state.confirmed


def test_randomize_probe_properties():
    d = np.ones((1, 16, 16), dtype=np.int8)
    out = randomize_probe(d.astype(float), 0.0, np.random.default_rng(0))
    assert np.array_equal(out, d.astype(float))
    rng = np.random.default_rng(1)
    a = randomize_probe(d.astype(float), 0.05, rng)
    b = randomize_probe(d.astype(float), 0.05, rng)
    # positive noise clips against the direction's own bound, so roughly
    # a quarter of the entries collide; the rest differ almost surely
    assert np.mean(a != b) >= 0.70
    assert not np.array_equal(a, b)
    assert a.min() >= -1.0 and a.max() <= 1.0


def test_probe_factory_l2_scaling():
    x = np.full((1, 4, 4), 0.5)
    probe = ProbeFactory(x, norm_kind="l2")
    d = np.ones(x.shape, dtype=np.int8)
    img = probe.image(d, 1.0)
    assert np.linalg.norm(img - x) == pytest.approx(1.0)
