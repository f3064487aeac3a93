"""Attack orchestration and the benchmark harness.

Runs the full pipeline (dynamic block-size selection, hybrid starting
search, pattern-driven refinement), aggregates per-image results into
success-rate and query statistics, and serializes reports.
"""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import ddm, search
from .errors import (
    BudgetExhausted,
    EmptyDataset,
    InitFailed,
    NotAdversarialAtMax,
    OracleUnavailable,
    WriteError,
)
from .oracle import OracleHandle
from .tensor import norm as tensor_norm

DEFAULT_BLOCK_SIZES = (4, 8, 16, 32)
BUDGET_CURVE = (5, 10, 20, 50, 80, 100, 200, 300, 400, 500, 1000, 3000, 5000)


@dataclass
class AttackConfig:
    norm: str = "linf"  # {"linf", "l2"}
    eps: float = 0.05
    max_queries: int = 500
    mode: str = "dyn"  # {"opt", "dyn"}
    block_sizes: tuple = DEFAULT_BLOCK_SIZES
    seed: int = 0
    lambda_beta: float = search.LAMBDA_BETA
    lambda_steps: int = search.LAMBDA_STEPS
    dbs_k_max: int = 5
    evade_sigma: float = 0.0
    tracing: bool = False
    use_ycbcr: bool = True

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.max_queries < 1:
            raise ValueError("max_queries must be >= 1")
        if self.mode not in ("opt", "dyn"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "opt" and len(self.block_sizes) != 1:
            raise ValueError("opt mode requires exactly one block size")


@dataclass
class AttackResult:
    success: bool
    queries_used: int
    final_r: float
    adv_image: np.ndarray | None
    trace: list
    failure_kind: str  # {"budget", "init", "oracle-error", "none"}
    events: list = field(default_factory=list)


@dataclass
class BenchmarkReport:
    results: list
    asr: float
    avg_q: float | None
    med_q: float | None
    config: AttackConfig


def _feasible_blocks(shape, block_sizes):
    limit = min(shape[1], shape[2])
    sizes = [w for w in block_sizes if 0 < w <= limit]
    if not sizes:
        raise ValueError(f"no feasible block size among {block_sizes} for shape {shape}")
    return sizes


def _feasible_pattern(shape, w):
    """Largest power-of-two wrapper pattern <= w whose level divides H and W."""
    _, h, wd = shape
    p = 1 << max(0, int(np.floor(np.log2(max(1, w)))))
    while p > 1 and (h % p or wd % p):
        p >>= 1
    return p


def dpattack(handle: OracleHandle, x, y, cfg: AttackConfig) -> AttackResult:
    """Full attack pipeline against a bound oracle handle."""
    rng = np.random.default_rng(cfg.seed)
    handle.bind_target(x, y)
    probe = search.ProbeFactory(
        x, norm_kind=cfg.norm, evade_sigma=cfg.evade_sigma,
        rng=np.random.default_rng(cfg.seed + 77),
    )

    def result(success, final_r, adv, kind, events=()):
        return AttackResult(
            success=success,
            queries_used=handle.ledger.total_queries,
            final_r=final_r,
            adv_image=adv,
            trace=list(handle.ledger.trace),
            failure_kind=kind,
            events=list(events),
        )

    try:
        # Misclassified inputs are trivially adversarial at zero perturbation.
        if handle.query_label(x, r=0.0) != y:
            return result(True, 0.0, np.asarray(x, dtype=np.float64), "none")

        blocks = _feasible_blocks(x.shape, cfg.block_sizes)
        if cfg.mode == "dyn":
            candidates = []
            for w in blocks:
                stats = ddm.compute_freq_stats(x, w, use_ycbcr=cfg.use_ycbcr)
                candidates.append((w, ddm.sample_dn(x, stats, int(rng.integers(2**31)))))
            sel = ddm.dbs(
                handle, x, y, candidates,
                k_max=cfg.dbs_k_max, seed=int(rng.integers(2**31)), probe=probe,
            )
            w, d_n, r_start = sel.block_size, sel.direction, sel.r
        else:
            w = blocks[0]
            stats = ddm.compute_freq_stats(x, w, use_ycbcr=cfg.use_ycbcr)
            d_n = ddm.sample_dn(x, stats, int(rng.integers(2**31)))
            r_start = 1.0

        pattern = _feasible_pattern(x.shape, w)
        d_a = ddm.lowfreq_wrap(
            x, "dr", pattern, int(rng.integers(2**31)), use_ycbcr=cfg.use_ycbcr
        )

        try:
            d0, r0, img0 = ddm.bilisearch(handle, d_n, d_a, x, y, r_start, probe=probe)
        except InitFailed:
            if r_start < 1.0:
                d0, r0, img0 = ddm.bilisearch(handle, d_n, d_a, x, y, 1.0, probe=probe)
            else:
                raise

        opts = search.PdoOptions(steps=cfg.lambda_steps, beta=cfg.lambda_beta)
        state = search.pdo_run(
            handle, x, y, d0, r0, budget=None, eps=cfg.eps,
            opts=opts, probe=probe, init_image=img0,
        )
        ok = state.confirmed and state.r <= cfg.eps
        return result(
            ok, state.r, state.best_image if ok else None,
            "none" if ok else "budget", state.events,
        )
    except BudgetExhausted:
        return result(False, np.inf, None, "budget")
    except InitFailed:
        return result(False, np.inf, None, "init")
    except (OracleUnavailable, NotAdversarialAtMax) as exc:
        kind = "oracle-error" if isinstance(exc, OracleUnavailable) else "init"
        return result(False, np.inf, None, kind)


def run_benchmark(cfg: AttackConfig, dataset, oracle_factory) -> BenchmarkReport:
    """Independent per-image attacks with seeds derived from the master seed."""
    if not dataset:
        raise EmptyDataset("benchmark needs at least one (image, label) pair")
    results = []
    for i, (x, y) in enumerate(dataset):
        child = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(i,))
        img_cfg = AttackConfig(
            norm=cfg.norm, eps=cfg.eps, max_queries=cfg.max_queries,
            mode=cfg.mode, block_sizes=cfg.block_sizes,
            seed=int(child.generate_state(1)[0]),
            lambda_beta=cfg.lambda_beta, lambda_steps=cfg.lambda_steps,
            dbs_k_max=cfg.dbs_k_max, evade_sigma=cfg.evade_sigma,
            tracing=cfg.tracing, use_ycbcr=cfg.use_ycbcr,
        )
        handle = oracle_factory(max_queries=cfg.max_queries, tracing=cfg.tracing)
        results.append(dpattack(handle, x, y, img_cfg))
    succ_q = [r.queries_used for r in results if r.success]
    return BenchmarkReport(
        results=results,
        asr=float(np.mean([r.success for r in results])),
        avg_q=float(np.mean(succ_q)) if succ_q else None,
        med_q=float(np.median(succ_q)) if succ_q else None,
        config=cfg,
    )


def asr_curve(report: BenchmarkReport, budgets=BUDGET_CURVE):
    """(budget, ASR) samples: success counted when it fit within the budget."""
    n = len(report.results)
    points = []
    for b in budgets:
        if b > report.config.max_queries:
            break
        wins = sum(1 for r in report.results if r.success and r.queries_used <= b)
        points.append((b, wins / n))
    return points


def _config_dict(cfg: AttackConfig):
    return {
        "norm": cfg.norm, "eps": cfg.eps, "max_queries": cfg.max_queries,
        "mode": cfg.mode, "block_sizes": list(cfg.block_sizes), "seed": cfg.seed,
        "lambda_beta": cfg.lambda_beta, "lambda_steps": cfg.lambda_steps,
        "evade_sigma": cfg.evade_sigma,
    }


def emit_report(report: BenchmarkReport, fmt="json", include_traces=False, include_curve=False) -> bytes:
    """Serialize a benchmark report with stable field ordering."""
    try:
        if fmt == "csv":
            buf = io.StringIO()
            writer = csv.writer(buf)
            writer.writerow(["image_id", "success", "queries", "final_r", "failure_kind"])
            for i, r in enumerate(report.results):
                final_r = "" if not np.isfinite(r.final_r) else f"{r.final_r:.6g}"
                writer.writerow([i, str(r.success).lower(), r.queries_used, final_r, r.failure_kind])
            return buf.getvalue().encode()
        if fmt != "json":
            raise WriteError(f"unknown report format {fmt!r}")
        payload = {
            "config": _config_dict(report.config),
            "asr": report.asr,
            "avg_q": report.avg_q,
            "med_q": report.med_q,
            "results": [
                {
                    "image_id": i,
                    "success": r.success,
                    "queries": r.queries_used,
                    "final_r": r.final_r if np.isfinite(r.final_r) else None,
                    "failure_kind": r.failure_kind,
                    **({"trace": r.trace} if include_traces else {}),
                }
                for i, r in enumerate(report.results)
            ],
        }
        if include_curve:
            payload["asr_curve"] = [{"max_q": b, "asr": a} for b, a in asr_curve(report)]
        return json.dumps(payload, indent=2).encode()
    except (OSError, TypeError, ValueError) as exc:
        raise WriteError(f"report serialization failed: {exc}") from exc


def trace_jsonl(result: AttackResult) -> str:
    """One JSON record per query for decision-table audits."""
    lines = []
    for entry in result.trace:
        rec = {
            "q": entry.get("q"),
            "r": entry.get("r"),
            "case": entry.get("case"),
            "accepted": entry.get("accepted"),
            "level": entry.get("level"),
        }
        lines.append(json.dumps(rec))
    return "\n".join(lines) + ("\n" if lines else "")
