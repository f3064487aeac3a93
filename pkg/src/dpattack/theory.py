"""Desk-scale Monte Carlo and deterministic validation checks.

Covers the hypercube concentration tail bound, the arcsine law for
Gaussian signs, per-query alignment dominance of run-aligned search
over blind dyadic search, the node-expansion complexity comparison
under block sign-coherence, gradient/curvature numerics, and the
alignment growth of hierarchical sign search.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .oracle import BuiltinModel, OracleHandle
from .search import hrays_run, split_runs
from .tensor import sign_with_one


@dataclass
class McReport:
    name: str
    trials: int
    estimate: float
    stderr: float
    bound: float
    passed: bool
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "trials": self.trials,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "bound": self.bound,
            "pass": self.passed,
            **{k: v for k, v in self.extras.items()},
        }


def mc_hoeffding(d, zeta, m=None, trials=100_000, seed=0) -> McReport:
    """Empirical tail P(u . d_hat >= zeta) against exp(-zeta^2 d / 2)."""
    if not 0 < zeta < 1:
        raise ValueError("zeta must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    u = rng.normal(size=d)
    u /= np.linalg.norm(u)
    hits = 0
    chunk = 200_000
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        signs = rng.integers(0, 2, size=(n, d)) * 2 - 1
        x = signs @ u / math.sqrt(d)
        hits += int(np.sum(x >= zeta))
        done += n
    est = hits / trials
    stderr = math.sqrt(max(est * (1 - est), 1e-12) / trials)
    bound = math.exp(-zeta * zeta * d / 2.0)
    extras = {}
    if m is not None:
        extras["m"] = m
        extras["existence_prob"] = 1.0 - (1.0 - est) ** m
    return McReport("hoeffding", trials, est, stderr, bound, est <= bound + 3 * stderr, extras)


def mc_arcsine(rho, n=1_000_000, seed=0) -> McReport:
    """E[sgn(X) sgn(Y)] for correlated Gaussians vs (2/pi) arcsin(rho)."""
    if not -1 < rho < 1:
        raise ValueError("rho must lie in (-1, 1)")
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    y = rho * x + math.sqrt(1 - rho * rho) * rng.normal(size=n)
    prods = sign_with_one(x).astype(np.float64) * sign_with_one(y)
    est = float(prods.mean())
    target = (2.0 / math.pi) * math.asin(rho)
    stderr = float(prods.std(ddof=1) / math.sqrt(n))
    tol = 4.0 / math.sqrt(n)
    return McReport(
        "arcsine", n, est, stderr, target, abs(est - target) <= tol, {"rho": rho, "tol": tol}
    )


@dataclass
class SyntheticGradient:
    """Block sign-coherent gradient sign: u is constant on each block."""

    u: np.ndarray
    blocks: list  # list of (start, end, sign)

    @property
    def dim(self):
        return self.u.size


def make_block_gradient(d, k, signs=None, seed=0) -> SyntheticGradient:
    """K equal contiguous blocks with alternating (or given) signs."""
    rng = np.random.default_rng(seed)
    bounds = np.linspace(0, d, k + 1).astype(int)
    if signs is None:
        signs = [1 if rng.random() < 0.5 else -1 for _ in range(k)]
    u = np.empty(d, dtype=np.int8)
    blocks = []
    for i in range(k):
        a, b = bounds[i], bounds[i + 1]
        u[a:b] = signs[i]
        blocks.append((int(a), int(b), int(signs[i])))
    return SyntheticGradient(u=u, blocks=blocks)


def sample_biased_d0(g: SyntheticGradient, runs_per_block, delta, rng) -> np.ndarray:
    """Initialization with runs nested in u's blocks and per-run agreement
    probability 1/2 + delta."""
    d0 = np.empty(g.dim, dtype=np.int8)
    for a, b, sign in g.blocks:
        width = b - a
        n_runs = min(runs_per_block, width)
        cuts = [a, b]
        if n_runs > 1:
            inner = rng.choice(np.arange(a + 1, b), size=n_runs - 1, replace=False)
            cuts = [a] + sorted(int(c) for c in inner) + [b]
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            agree = rng.random() < 0.5 + delta
            d0[lo:hi] = sign if agree else -sign
    return d0


def sample_random_runs_d0(dim, n_runs, rng) -> np.ndarray:
    """Uninformative start: run boundaries and signs independent of u."""
    d0 = np.empty(dim, dtype=np.int8)
    inner = rng.choice(np.arange(1, dim), size=min(n_runs, dim) - 1, replace=False)
    cuts = [0] + sorted(int(c) for c in inner) + [dim]
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        d0[lo:hi] = 1 if rng.random() < 0.5 else -1
    return d0


def spatial_runs(d0):
    """Maximal constant-sign contiguous segments in index order."""
    d0 = np.asarray(d0).ravel()
    change = np.flatnonzero(np.diff(d0)) + 1
    bounds = np.concatenate(([0], change, [d0.size]))
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


def _dyadic_nodes(n):
    idx = np.arange(n)
    level = 1
    while True:
        cells = np.array_split(idx, min(2**level, n))
        for cell in cells:
            yield int(cell[0]), int(cell[-1]) + 1
        if 2**level >= n:
            return
        level += 1


def _pattern_nodes(runs):
    current = list(runs)
    s = 1
    while True:
        m = len(current)
        max_level = max(0, math.ceil(math.log2(m))) if m > 1 else 0
        if s > max_level:
            finer = split_runs(current)
            if finer == current:
                return
            current = finer
            continue
        chunks = np.array_split(np.arange(m), min(2**s, m))
        for chunk in chunks:
            yield current[chunk[0]][0], current[chunk[-1]][1]
        s += 1


def _simulate_descent(u, d0, nodes, budget):
    """Greedy improvement oracle: flip a node iff it raises u . d.

    One node evaluation costs one query; returns agreement A_t for
    t = 0..budget (flat once the schedule is exhausted).
    """
    n = u.size
    prod = (u.astype(np.int64) * d0.astype(np.int64)).copy()
    dot = int(prod.sum())
    curve = np.empty(budget + 1)
    curve[0] = 0.5 * (1.0 + dot / n)
    t = 0
    for a, b in nodes:
        if t >= budget:
            break
        c = int(prod[a:b].sum())
        t += 1
        if c < 0:
            prod[a:b] *= -1
            dot -= 2 * c
        curve[t] = 0.5 * (1.0 + dot / n)
    curve[t + 1 :] = curve[t]
    return curve


@dataclass
class AlignmentReport:
    budget: int
    trials: int
    mean_pattern: np.ndarray
    mean_dyadic: np.ndarray
    stderr_diff: np.ndarray
    passed: bool


def alignment_curves(g: SyntheticGradient, d0_spec, budget, trials, seed) -> AlignmentReport:
    """Expected agreement curves of the two partitioning strategies.

    d0_spec is {"kind": "biased_runs", "runs_per_block": R, "delta": D}
    or {"kind": "single_run"} for the degenerate unstructured start.
    """
    rng = np.random.default_rng(seed)
    pat = np.empty((trials, budget + 1))
    dya = np.empty((trials, budget + 1))
    for trial in range(trials):
        kind = d0_spec.get("kind")
        if kind == "single_run":
            d0 = np.ones(g.dim, dtype=np.int8)
        elif kind == "iid":
            d0 = rng.choice([-1, 1], size=g.dim).astype(np.int8)
        elif kind == "random_runs":
            d0 = sample_random_runs_d0(g.dim, d0_spec.get("n_runs", 64), rng)
        else:
            d0 = sample_biased_d0(
                g, d0_spec.get("runs_per_block", 8), d0_spec.get("delta", 0.1), rng
            )
        runs = spatial_runs(d0)
        pat[trial] = _simulate_descent(g.u, d0, _pattern_nodes(runs), budget)
        dya[trial] = _simulate_descent(g.u, d0, _dyadic_nodes(g.dim), budget)
    diff = pat - dya
    stderr = diff.std(axis=0, ddof=1) / math.sqrt(trials) if trials > 1 else np.zeros(budget + 1)
    passed = bool(np.all(diff.mean(axis=0) >= -2.0 * stderr - 1e-12))
    return AlignmentReport(
        budget=budget,
        trials=trials,
        mean_pattern=pat.mean(axis=0),
        mean_dyadic=dya.mean(axis=0),
        stderr_diff=stderr,
        passed=passed,
    )


def _count_span(flip, a, b):
    """Visits needed to resolve [a, b) by midpoint splits."""
    seg = flip[a:b]
    if not seg.any() or seg.all():
        return 1
    mid = (a + b) // 2
    return 1 + _count_span(flip, a, mid) + _count_span(flip, mid, b)


def _count_run_tree(flip, runs, lo, hi):
    """Visits over the run tree; impure single runs fall back to midpoint splits."""
    a, b = runs[lo][0], runs[hi - 1][1]
    seg = flip[a:b]
    if not seg.any() or seg.all():
        return 1
    if hi - lo == 1:
        mid = (a + b) // 2
        if mid == a or mid == b:
            return 1
        return 1 + _count_span(flip, a, mid) + _count_span(flip, mid, b)
    mid = (lo + hi) // 2
    return 1 + _count_run_tree(flip, runs, lo, mid) + _count_run_tree(flip, runs, mid, hi)


def recovery_complexity(g: SyntheticGradient, d0):
    """Deterministic node-expansion counts for full sign recovery.

    Returns per-block run-intersection counts gamma_k, the dyadic depth
    terms log2(d/|B_k|), and the counted expansions T_pat / T_dyad.
    """
    d0 = np.asarray(d0).ravel()
    flip = d0 != g.u
    runs = spatial_runs(d0)
    gamma = []
    log_terms = []
    for a, b, _ in g.blocks:
        gamma.append(sum(1 for ra, rb in runs if ra < b and rb > a))
        log_terms.append(math.log2(g.dim / (b - a)))
    t_pat = _count_run_tree(flip, runs, 0, len(runs))
    t_dyad = _count_span(flip, 0, g.dim)
    return {
        "T_pat": t_pat,
        "T_dyad": t_dyad,
        "gamma": gamma,
        "log_terms": log_terms,
        "sum_gamma": int(np.sum(gamma)),
        "sum_log": float(np.sum(log_terms)),
        "runs": len(runs),
    }


def grad_sign_cosine(model: BuiltinModel, x, y, d) -> float:
    """Cosine between a hypercube direction and the true gradient sign."""
    _, grad = model.loss_and_grad(x, y)
    u = sign_with_one(grad).ravel().astype(np.float64)
    return float(np.asarray(d).ravel() @ u) / u.size


def power_iteration_lambda_max(grad_fn, x0, iters=100, seed=0, fd_step=1e-3, rtol=1e-4):
    """Dominant Hessian eigenvalue via finite-difference Hessian-vector
    products; returns (estimate, converged)."""
    rng = np.random.default_rng(seed)
    x0 = np.asarray(x0, dtype=np.float64).ravel()
    v = rng.normal(size=x0.size)
    v /= np.linalg.norm(v)
    lam_prev = None
    lam = 0.0
    for _ in range(iters):
        hv = (grad_fn(x0 + fd_step * v) - grad_fn(x0 - fd_step * v)) / (2.0 * fd_step)
        hv = np.asarray(hv, dtype=np.float64).ravel()
        lam = float(v @ hv)
        nrm = np.linalg.norm(hv)
        if nrm < 1e-14:
            return 0.0, True
        v = hv / nrm
        if lam_prev is not None and abs(lam - lam_prev) < rtol * max(1.0, abs(lam)):
            return lam, True
        lam_prev = lam
    return lam, False


def curvature_lambda_max(model: BuiltinModel, x, y, iters=100, seed=0):
    """Input-space CE-loss curvature proxy: the dominant Hessian eigenvalue."""
    shape = np.asarray(x).shape

    def grad_fn(z):
        _, g = model.loss_and_grad(z.reshape(shape), y)
        return g.ravel()

    return power_iteration_lambda_max(grad_fn, np.asarray(x).ravel(), iters=iters, seed=seed)


def hrays_alignment_growth(model: BuiltinModel, x, y, budget, seed=0, d0=None):
    """Gradient-sign cosine of the hierarchical search direction at the
    start and after each accepted update."""
    if d0 is None:
        d0 = np.ones(np.asarray(x).shape, dtype=np.int8)
    trace = [grad_sign_cosine(model, x, y, d0)]
    if budget <= 0:
        return trace
    handle = OracleHandle.from_model(model)
    handle.bind_target(x, y)
    hrays_run(
        handle, x, y, d0, budget=budget, eps=0.0,
        on_accept=lambda st: trace.append(grad_sign_cosine(model, x, y, st.d_best)),
    )
    return trace
