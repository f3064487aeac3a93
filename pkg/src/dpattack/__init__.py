"""Query-efficient hard-label black-box adversarial attack toolkit.

Frequency-prior initialization (block-DCT variance sampling, wavelet
low-pass wrapping, dynamic block-size selection) feeding a
pattern-driven discrete sign search, alongside the naive, hierarchical,
and pairwise-comparison baselines, a benchmark harness, and a Monte
Carlo validation suite for the underlying theory.
"""

from .driver import AttackConfig, AttackResult, BenchmarkReport, dpattack, run_benchmark
from .oracle import BuiltinModel, OracleHandle, QueryLedger, TrainSpec, train_builtin

__all__ = [
    "AttackConfig",
    "AttackResult",
    "BenchmarkReport",
    "BuiltinModel",
    "OracleHandle",
    "QueryLedger",
    "TrainSpec",
    "dpattack",
    "run_benchmark",
    "train_builtin",
]

__version__ = "0.1.0"
