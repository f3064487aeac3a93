"""Tour of the initialization directions and their selection machinery.

Builds the three zero-query directions (variance-sampled, segment,
random-square), wraps one in the wavelet low-pass filter, then shows
how Dynamic Block Size Selection and the hybrid bisection/line search
pick a starting point against a live victim.
"""

import numpy as np

from dpattack.ddm import bilisearch, compute_freq_stats, dbs, lowfreq_wrap, make_db, make_dr, sample_dn
from dpattack.oracle import OracleHandle, TrainSpec, make_synthetic_dataset, train_builtin

spec = TrainSpec()
model = train_builtin(spec, seed=7)
xs, ys = make_synthetic_dataset(spec, seed=123)
x, y = xs[70], int(ys[70])
print(f"victim: {spec.architecture}, input {spec.input_shape}, label = {y}")

print()
print("== Zero-query directions ==")
stats = compute_freq_stats(x, 4)
d_n = sample_dn(x, stats, seed=0)
d_b = make_db(x.size, 4).reshape(x.shape)
d_r = make_dr(x, 4, seed=0)
d_a = lowfreq_wrap(x, "dr", 4, seed=0)
for name, d in [("d_n", d_n), ("d_b", d_b), ("d_r", d_r), ("phi(d_r)", d_a)]:
    frac_pos = float(np.mean(d == 1))
    print(f"{name:9s}: {d.size} signs, {frac_pos:.2f} positive")

print()
print("== Dynamic block size selection ==")
handle = OracleHandle.from_model(model, tracing=True)
handle.bind_target(x, y)
candidates = [(w, sample_dn(x, compute_freq_stats(x, w), seed=w)) for w in (2, 4, 8)]
sel = dbs(handle, x, y, candidates, k_max=5, seed=0)
print(f"chosen block size w = {sel.block_size}, bracket r = {sel.r:.4f}, "
      f"queries = {sel.queries}, survivors = {sel.survivors}")

print()
print("== Hybrid bisection / line search ==")
d0, r0, _ = bilisearch(handle, sel.direction, d_a, x, y, sel.r)
print(f"selected starting magnitude r0 = {r0:.4f}")
print(f"total label queries so far: {handle.ledger.total_queries}")
