import numpy as np
import pytest

from dpattack.oracle import BuiltinModel
from dpattack.theory import (
    SyntheticGradient,
    alignment_curves,
    curvature_lambda_max,
    grad_sign_cosine,
    hrays_alignment_growth,
    make_block_gradient,
    mc_arcsine,
    mc_hoeffding,
    power_iteration_lambda_max,
    recovery_complexity,
    sample_biased_d0,
    spatial_runs,
)


def test_hoeffding_bound_holds_at_reference_point():
    rep = mc_hoeffding(16, 0.5, trials=100_000, seed=0)
    assert rep.bound == pytest.approx(np.exp(-2.0))
    assert rep.passed
    assert rep.estimate <= rep.bound + 3 * rep.stderr


def test_hoeffding_vacuous_for_tiny_zeta():
    rep = mc_hoeffding(8, 1e-6, trials=2_000, seed=1)
    assert rep.bound == pytest.approx(1.0, abs=1e-6)
    assert rep.passed


def test_hoeffding_unreachable_unit_alignment():
    # u is not a hypercube vertex, so |u . d_hat| = 1 has probability zero
    rep = mc_hoeffding(8, 0.9999, trials=20_000, seed=2)
    assert rep.estimate == 0.0


def test_arcsine_reference_values():
    rep = mc_arcsine(0.0, n=200_000, seed=0)
    assert rep.bound == 0.0
    assert rep.passed
    rep = mc_arcsine(0.5, n=200_000, seed=1)
    assert rep.bound == pytest.approx(1.0 / 3.0)
    assert rep.passed
    rep = mc_arcsine(-0.5, n=200_000, seed=2)
    assert rep.bound == pytest.approx(-1.0 / 3.0)
    assert rep.passed


def test_block_gradient_structure():
    g = make_block_gradient(64, 4, signs=[1, -1, 1, -1])
    assert g.dim == 64
    assert len(g.blocks) == 4
    for a, b, s in g.blocks:
        assert np.all(g.u[a:b] == s)


def test_biased_d0_agreement_rate():
    g = make_block_gradient(4096, 8, seed=0)
    rng = np.random.default_rng(0)
    rates = []
    for _ in range(200):
        d0 = sample_biased_d0(g, 8, 0.1, rng)
        rates.append(np.mean(d0 == g.u))
    assert np.mean(rates) == pytest.approx(0.6, abs=0.02)


def test_alignment_identical_start_stays_flat():
    g = make_block_gradient(256, 4, signs=[1, 1, 1, 1])
    # d0 equal to u everywhere: both strategies stay at agreement 1
    curve_spec = {"kind": "single_run"}
    rep = alignment_curves(g, curve_spec, budget=50, trials=5, seed=0)
    assert np.allclose(rep.mean_pattern, 1.0)
    assert np.allclose(rep.mean_dyadic, 1.0)


def test_alignment_single_run_curves_identical():
    g = make_block_gradient(1024, 8, seed=3)
    rep = alignment_curves(g, {"kind": "single_run"}, budget=100, trials=10, seed=4)
    assert np.array_equal(rep.mean_pattern, rep.mean_dyadic)
    assert rep.passed


def test_alignment_dominance_with_biased_runs():
    g = make_block_gradient(1024, 8, seed=5)
    rep = alignment_curves(
        g, {"kind": "biased_runs", "runs_per_block": 8, "delta": 0.1},
        budget=200, trials=200, seed=6,
    )
    assert rep.passed
    assert rep.mean_pattern[-1] > rep.mean_dyadic[-1]


def test_alignment_dominance_collapses_without_structure():
    # i.i.d. random init carries no usable run structure: the mean gap
    # collapses by an order of magnitude relative to the structured start
    g = make_block_gradient(1024, 8, seed=7)
    iid = alignment_curves(g, {"kind": "iid"}, budget=200, trials=300, seed=8)
    gap_iid = (iid.mean_pattern - iid.mean_dyadic).max()
    assert gap_iid < 0.01
    biased = alignment_curves(
        g, {"kind": "biased_runs", "runs_per_block": 8, "delta": 0.1},
        budget=200, trials=300, seed=8,
    )
    gap_biased = (biased.mean_pattern - biased.mean_dyadic).max()
    assert gap_biased > 5 * gap_iid


def test_recovery_fully_coherent_single_expansion():
    g = make_block_gradient(64, 1, signs=[1])
    d0 = np.ones(64, dtype=np.int8)
    res = recovery_complexity(g, d0)
    assert res["T_pat"] == 1
    assert res["gamma"] == [1]
    d0_flip = -np.ones(64, dtype=np.int8)
    assert recovery_complexity(g, d0_flip)["T_pat"] == 1


def test_recovery_counts_are_deterministic():
    g = make_block_gradient(256, 8, seed=9)
    rng = np.random.default_rng(9)
    d0 = sample_biased_d0(g, 4, 0.2, rng)
    r1 = recovery_complexity(g, d0)
    r2 = recovery_complexity(g, d0)
    assert r1 == r2


def test_spatial_runs_partition():
    d0 = np.array([1, 1, -1, 1, 1, 1, -1, -1], dtype=np.int8)
    assert spatial_runs(d0) == [(0, 2), (2, 3), (3, 6), (6, 8)]


def test_grad_sign_cosine_extremes(victim, test_images):
    xs, ys = test_images
    x, y = xs[0], int(ys[0])
    _, grad = victim.loss_and_grad(x, y)
    from dpattack.tensor import sign_with_one

    u = sign_with_one(grad)
    assert grad_sign_cosine(victim, x, y, u) == pytest.approx(1.0)
    assert grad_sign_cosine(victim, x, y, -u) == pytest.approx(-1.0)


def test_random_direction_cosine_concentrates(victim, test_images):
    xs, ys = test_images
    x, y = xs[0], int(ys[0])
    rng = np.random.default_rng(10)
    hits = 0
    for _ in range(200):
        d = rng.choice([-1, 1], size=x.shape).astype(np.int8)
        if abs(grad_sign_cosine(victim, x, y, d)) <= 0.25:
            hits += 1
    assert hits / 200 >= 0.99


def test_power_iteration_recovers_known_hessian():
    h = np.diag([3.0, 1.0])
    lam, converged = power_iteration_lambda_max(lambda v: h @ v, np.zeros(2), iters=200, seed=0)
    assert converged
    assert lam == pytest.approx(3.0, abs=1e-3)


def test_power_iteration_zero_model():
    model = BuiltinModel("linear", {"W": np.zeros((3, 4)), "b": np.zeros(3)}, (1, 2, 2), 3)
    lam, converged = curvature_lambda_max(model, np.full((1, 2, 2), 0.5), 0)
    assert converged
    assert lam == 0.0


def test_curvature_linear_model_closed_form():
    # two classes at a symmetric logit point: lambda_max = 0.25 ||w1-w0||^2
    rng = np.random.default_rng(11)
    w = rng.normal(size=(2, 6))
    x = np.zeros((1, 2, 3))  # logits both zero at the origin
    model = BuiltinModel("linear", {"W": w, "b": np.zeros(2)}, (1, 2, 3), 2)
    lam, converged = curvature_lambda_max(model, x, 0, iters=300)
    expect = 0.25 * np.linalg.norm(w[1] - w[0]) ** 2
    assert lam == pytest.approx(expect, rel=1e-3)


def test_hrays_growth_budget_zero(victim, test_images):
    xs, ys = test_images
    trace = hrays_alignment_growth(victim, xs[0], int(ys[0]), budget=0)
    assert len(trace) == 1


def test_hrays_growth_flat_for_input_blind_oracle():
    model = BuiltinModel("linear", {"W": np.zeros((2, 16)), "b": np.array([1.0, 0.0])}, (1, 4, 4), 2)
    trace = hrays_alignment_growth(model, np.full((1, 4, 4), 0.5), 0, budget=100)
    assert len(trace) == 1  # never adversarial, no accepted updates


def test_hrays_growth_increases_on_trained_model(victim, test_images):
    xs, ys = test_images
    rng = np.random.default_rng(0)
    gains = []
    for i in rng.permutation(len(xs))[:20]:
        if victim.predict_label(xs[i]) != ys[i]:
            continue
        trace = hrays_alignment_growth(victim, xs[i], int(ys[i]), budget=400)
        gains.append(trace[-1] - trace[0])
    assert len(gains) >= 10
    assert np.mean(gains) > 0
