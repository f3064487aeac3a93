"""End-to-end attack benchmark on the built-in victim.

Compares the full pipeline (dynamic block size + pattern-driven
refinement) against the pairwise-comparison baseline at a tight query
budget, then prints the budget/ASR curve of the pipeline run.
"""

import numpy as np

from dpattack.driver import AttackConfig, asr_curve, dpattack, run_benchmark
from dpattack.oracle import OracleHandle, TrainSpec, make_synthetic_dataset, train_builtin
from dpattack.search import adba_run

spec = TrainSpec()
model = train_builtin(spec, seed=7)
xs, ys = make_synthetic_dataset(spec, seed=999)
rng = np.random.default_rng(0)
dataset = [(xs[i], int(ys[i])) for i in rng.permutation(len(xs))[:60]]

EPS, BUDGET = 0.15, 50


def factory(max_queries=None, tracing=False):
    return OracleHandle.from_model(model, max_queries=max_queries, tracing=tracing)


print(f"l-inf budget eps = {EPS}, max queries = {BUDGET}, {len(dataset)} images")
print()

cfg = AttackConfig(norm="linf", eps=EPS, max_queries=BUDGET, mode="dyn",
                   block_sizes=(4, 8), seed=7)
bench = run_benchmark(cfg, dataset, factory)
print(f"pipeline (dyn) : ASR = {bench.asr:.2f}, "
      f"Avg.Q = {bench.avg_q:.1f}, Med.Q = {bench.med_q:.1f}")

baseline_wins = []
baseline_q = []
for x, y in dataset:
    handle = factory(max_queries=BUDGET)
    handle.bind_target(x, y)
    try:
        if handle.query_label(x, r=0.0) != y:
            baseline_wins.append(True)
            baseline_q.append(1)
            continue
        state = adba_run(handle, x, y, np.ones(x.shape, dtype=np.int8), budget=None, eps=EPS)
        ok = state.confirmed and state.r <= EPS
    except Exception:
        ok = False
    baseline_wins.append(ok)
    if ok:
        baseline_q.append(handle.ledger.total_queries)
asr_b = np.mean(baseline_wins)
print(f"pairwise base  : ASR = {asr_b:.2f}", end="")
print(f", Avg.Q = {np.mean(baseline_q):.1f}" if baseline_q else " (no successes)")

print()
print("budget -> ASR curve for the pipeline run:")
for budget, asr in asr_curve(bench, budgets=(5, 10, 20, 30, 40, 50)):
    print(f"  MaxQ {budget:3d}: ASR = {asr:.2f}")
