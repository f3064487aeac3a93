"""Command-line entry points.

Subcommands: `attack` runs the pipeline against a builtin or HTTP
oracle, `init-preview` dumps initialization directions and frequency
statistics, `bfs` emits a band-sensitivity CSV, and `validate-theory`
runs the Monte Carlo / deterministic validation checks.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bfs as bfs_mod
from . import ddm, driver, theory
from .errors import DPAttackError
from .oracle import BuiltinModel, OracleHandle, TrainSpec, train_builtin
from .tensor import load_image, to_tensor_json


def _oracle_factory(spec: str):
    """Parse builtin:<model-file> or http:<url> into a handle factory."""
    if spec.startswith("builtin:"):
        model = BuiltinModel.load(spec[len("builtin:"):])

        def factory(max_queries=None, tracing=False):
            return OracleHandle.from_model(model, max_queries=max_queries, tracing=tracing)

        return factory, model
    if spec.startswith("http:") or spec.startswith("https:"):
        url = spec[len("http:"):] if spec.startswith("http:") and not spec.startswith("http://") else spec
        if not url.startswith("http"):
            url = "http://" + url.lstrip("/")

        def factory(max_queries=None, tracing=False):
            return OracleHandle.from_http(url, max_queries=max_queries, tracing=tracing)

        return factory, None
    raise ValueError(f"oracle spec must be builtin:<path> or http:<url>, got {spec!r}")


def _load_dataset(args):
    """Single --image path or a --dataset directory with labels.json."""
    if args.image:
        label = args.label if args.label is not None else 0
        return [(load_image(args.image), int(label))]
    root = Path(args.dataset)
    with open(root / "labels.json") as fh:
        labels = json.load(fh)
    pairs = []
    for name in sorted(labels):
        pairs.append((load_image(root / name), int(labels[name])))
    return pairs


def cmd_attack(args):
    factory, _ = _oracle_factory(args.oracle)
    dataset = _load_dataset(args)
    cfg = driver.AttackConfig(
        norm=args.norm,
        eps=args.eps,
        max_queries=args.max_queries,
        mode=args.mode,
        block_sizes=tuple(int(w) for w in args.block_sizes.split(",")),
        seed=args.seed,
        evade_sigma=args.evade_sigma,
        tracing=args.trace,
    )
    report = driver.run_benchmark(cfg, dataset, factory)
    fmt = "csv" if args.out.endswith(".csv") else "json"
    payload = driver.emit_report(
        report, fmt=fmt, include_traces=args.trace, include_curve=fmt == "json"
    )
    Path(args.out).write_bytes(payload)
    print(
        f"images={len(dataset)} asr={report.asr:.3f} "
        f"avg_q={report.avg_q} med_q={report.med_q} -> {args.out}"
    )
    return 0


def cmd_init_preview(args):
    x = load_image(args.image)
    stats = ddm.compute_freq_stats(x, args.block_size)
    out = {
        "sigma": json.loads(to_tensor_json(stats.sigma)),
        "mu": json.loads(to_tensor_json(stats.mu)),
        "d_n": json.loads(to_tensor_json(ddm.sample_dn(x, stats, args.seed))),
        "d_b": json.loads(to_tensor_json(ddm.make_db(x.size, args.block_size).reshape(x.shape))),
        "d_r": json.loads(to_tensor_json(ddm.make_dr(x, args.block_size, args.seed))),
        "phi_d_r": json.loads(
            to_tensor_json(ddm.lowfreq_wrap(x, "dr", args.block_size, args.seed))
        ),
    }
    Path(args.out).write_text(json.dumps(out))
    print(f"wrote directions and stats to {args.out}")
    return 0


def cmd_bfs(args):
    model = BuiltinModel.load(args.model)
    dataset = _load_dataset(args)
    images = [x for x, _ in dataset]
    labels = [y for _, y in dataset]
    profile = bfs_mod.bfs_profile(
        model, images, labels, args.block_size, args.eps, samples=args.samples, seed=args.seed
    )
    Path(args.out).write_text(bfs_mod.profile_to_csv(profile))
    print(f"sigma_max={profile.sigma_max:.6g} -> {args.out}")
    return 0


def cmd_train_builtin(args):
    spec = TrainSpec(
        architecture=args.arch,
        input_shape=(args.channels, args.size, args.size),
        classes=args.classes,
    )
    model = train_builtin(spec, args.seed)
    model.save(args.out)
    print(f"trained {args.arch} victim ({args.classes} classes) -> {args.out}")
    return 0


def _check_hoeffding(seed):
    return [theory.mc_hoeffding(16, 0.5, trials=100_000, seed=seed)]


def _check_arcsine(seed):
    return [theory.mc_arcsine(rho, n=1_000_000, seed=seed) for rho in (-0.9, -0.5, 0.0, 0.5, 0.9)]


def _check_dominance(seed):
    g = theory.make_block_gradient(1024, 8, seed=seed)
    rep = theory.alignment_curves(
        g, {"kind": "biased_runs", "runs_per_block": 8, "delta": 0.1},
        budget=200, trials=1000, seed=seed,
    )
    gap = float(np.mean(rep.mean_pattern - rep.mean_dyadic))
    return [
        theory.McReport(
            "dominance", rep.trials, gap, float(rep.stderr_diff.max()), 0.0, rep.passed
        )
    ]


def _check_complexity(seed):
    g, d0 = _coherent_instance()
    res = theory.recovery_complexity(g, d0)
    ok = res["T_pat"] < res["T_dyad"] and res["T_pat"] <= 2 * res["sum_gamma"]
    return [
        theory.McReport(
            "complexity", 1, float(res["T_pat"]), 0.0, float(res["T_dyad"]), ok,
            {"sum_gamma": res["sum_gamma"], "sum_log": res["sum_log"]},
        )
    ]


def _coherent_instance(d=1024, k=16):
    """Blocks each holding exactly two runs of d0: one agreeing, one not."""
    signs = [1 if i % 2 == 0 else -1 for i in range(k)]
    g = theory.make_block_gradient(d, k, signs=signs)
    d0 = np.empty(d, dtype=np.int8)
    for idx, (a, b, sign) in enumerate(g.blocks):
        mid = a + (b - a) // 2 + (3 if idx % 2 else -3)
        if idx % 2 == 0:
            d0[a:mid] = sign
            d0[mid:b] = -sign
        else:
            d0[a:mid] = -sign
            d0[mid:b] = sign
    return g, d0


def _check_hrays_growth(seed):
    from .oracle import TrainSpec, make_synthetic_dataset, train_builtin

    spec = TrainSpec()
    model = train_builtin(spec, seed=7)
    xs, ys = make_synthetic_dataset(spec, seed=seed + 1000)
    rng = np.random.default_rng(seed)
    picks = rng.permutation(len(xs))[:50]
    initial, final = [], []
    for i in picks:
        if model.predict_label(xs[i]) != ys[i]:
            continue
        trace = theory.hrays_alignment_growth(model, xs[i], int(ys[i]), budget=500)
        initial.append(trace[0])
        final.append(trace[-1])
    gain = float(np.mean(final) - np.mean(initial))
    return [
        theory.McReport(
            "hrays-growth", len(initial), gain, 0.0, 0.0, gain > 0,
            {"mean_initial": float(np.mean(initial)), "mean_final": float(np.mean(final))},
        )
    ]


def _check_curvature(seed):
    h = np.diag([3.0, 1.0])
    lam, converged = theory.power_iteration_lambda_max(
        lambda v: h @ v, np.zeros(2), iters=200, seed=seed
    )
    ok = converged and abs(lam - 3.0) <= 1e-3
    return [theory.McReport("curvature", 1, float(lam), 0.0, 3.0, ok)]


CHECKS = {
    "hoeffding": _check_hoeffding,
    "arcsine": _check_arcsine,
    "dominance": _check_dominance,
    "complexity": _check_complexity,
    "hrays-growth": _check_hrays_growth,
    "curvature": _check_curvature,
}


def cmd_validate_theory(args):
    names = list(CHECKS) if args.check == "all" else [args.check]
    reports = []
    for name in names:
        reports.extend(CHECKS[name](args.seed))
    payload = [r.to_dict() for r in reports]
    Path(args.out).write_text(json.dumps(payload, indent=2))
    for r in reports:
        print(f"{r.name}: estimate={r.estimate:.6g} bound={r.bound:.6g} pass={r.passed}")
    return 0 if all(r.passed for r in reports) else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="dpattack")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attack", help="run attacks against an oracle")
    p.add_argument("--oracle", required=True, help="builtin:<model-file> or http:<url>")
    p.add_argument("--image", help="single PNG or tensor-JSON input")
    p.add_argument("--label", type=int, help="ground-truth label for --image")
    p.add_argument("--dataset", help="directory with images and labels.json")
    p.add_argument("--norm", choices=("linf", "l2"), default="linf")
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--max-queries", type=int, default=500)
    p.add_argument("--mode", choices=("opt", "dyn"), default="dyn")
    p.add_argument("--block-sizes", default="4,8,16,32")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", default="report.json")
    p.add_argument("--trace", action="store_true")
    p.add_argument("--evade-sigma", type=float, default=0.0)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("init-preview", help="dump directions and frequency stats")
    p.add_argument("--image", required=True)
    p.add_argument("--block-size", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="init_preview.json")
    p.set_defaults(func=cmd_init_preview)

    p = sub.add_parser("bfs", help="band sensitivity profile as CSV")
    p.add_argument("--model", required=True, help="builtin model .npz")
    p.add_argument("--image", help="single input")
    p.add_argument("--label", type=int)
    p.add_argument("--dataset")
    p.add_argument("--block-size", type=int, default=8)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--samples", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="bfs_profile.csv")
    p.set_defaults(func=cmd_bfs)

    p = sub.add_parser("train-builtin", help="train and save a desk-scale victim")
    p.add_argument("--arch", choices=("linear", "mlp"), default="mlp")
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="victim.npz")
    p.set_defaults(func=cmd_train_builtin)

    p = sub.add_parser("validate-theory", help="run theory validation checks")
    p.add_argument("--check", choices=tuple(CHECKS) + ("all",), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="mc_report.json")
    p.set_defaults(func=cmd_validate_theory)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DPAttackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
