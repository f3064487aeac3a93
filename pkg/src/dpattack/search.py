"""Discrete direction-search engines over the sign hypercube.

Implements boundary-distance bisection, the pairwise comparator that
decides which of two adversarial directions crosses the boundary at a
smaller magnitude, the naive / hierarchical sign-flip baselines, the
pairwise-comparison baseline, and pattern-driven optimization with its
run partition and history buffer. Everything here sees only top-1
labels through the oracle handle.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExhausted, NotAdversarialAtMax

LAMBDA_BETA = 0.9
LAMBDA_STEPS = 8
BISECT_TOL = 1e-3


class _LocalBudget(Exception):
    """Engine-local budget ran out (distinct from the global ledger)."""


class ProbeFactory:
    """Materializes query images from (direction, magnitude).

    For the l2 constraint the direction is normalized by sqrt(d) so that
    r is the l2 radius. With evade_sigma > 0 every probe adds a fresh
    clipped Gaussian to the direction (stateful-detector evasion); the
    accepted direction itself stays in {-1, +1}.
    """

    def __init__(self, x, norm_kind="linf", evade_sigma=0.0, rng=None):
        self.x = np.asarray(x, dtype=np.float64)
        if norm_kind not in ("linf", "l2"):
            raise ValueError(f"unknown norm {norm_kind!r}")
        self.scale = 1.0 if norm_kind == "linf" else 1.0 / math.sqrt(self.x.size)
        self.evade_sigma = float(evade_sigma)
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def image(self, direction, r):
        dd = direction.astype(np.float64)
        if self.evade_sigma > 0:
            dd = randomize_probe(dd, self.evade_sigma, self.rng)
        return np.clip(self.x + (r * self.scale) * dd, 0.0, 1.0)


def randomize_probe(d, sigma_xi, rng):
    """clip(d + xi, -1, 1) with xi ~ N(0, sigma_xi^2 I)."""
    if sigma_xi < 0:
        raise ValueError("sigma_xi must be non-negative")
    d = np.asarray(d, dtype=np.float64)
    if sigma_xi == 0:
        return d
    if not hasattr(rng, "normal"):
        rng = np.random.default_rng(rng)
    return np.clip(d + rng.normal(scale=sigma_xi, size=d.shape), -1.0, 1.0)


@dataclass
class SearchState:
    """Mutable engine state; r is only set by confirmed adversarial probes."""

    d_best: np.ndarray
    r: float
    confirmed: bool = False
    queries: int = 0
    budget: int | None = None
    events: list = field(default_factory=list)
    best_image: np.ndarray | None = None
    d_his: tuple | None = None  # (direction, confirmed_r)
    level: int = 0
    stop_reason: str = "done"


def _flip(direction, indices):
    out = direction.copy()
    out.flat[indices] = -out.flat[indices]
    return out


class _Engine:
    """Shared query plumbing: local budget, trace tagging, acceptance."""

    def __init__(self, handle, probe, state):
        self.handle = handle
        self.probe = probe
        self.state = state

    def query(self, direction, r, context=None):
        st = self.state
        if st.budget is not None and st.queries >= st.budget:
            raise _LocalBudget()
        img = self.probe.image(direction, r)
        self.handle.context = context
        try:
            ok = self.handle.is_adversarial(img, r=r)
        finally:
            self.handle.context = None
        st.queries += 1
        return ok, img

    def accept(self, direction, r, image):
        st = self.state
        st.d_best = direction
        if r < st.r or not st.confirmed:
            st.r = r
            st.best_image = image
        st.confirmed = True

    def mark(self):
        return len(self.handle.ledger.trace)

    def tag(self, start, **fields):
        for entry in self.handle.ledger.trace[start:]:
            entry.update(fields)


def boundary_distance(handle, x, d, lo=0.0, hi=1.0, tol=BISECT_TOL, probe=None, engine=None, context=None):
    """Bisect the crossing magnitude along d; returns the adversarial side.

    Probes hi first and raises NotAdversarialAtMax if the direction never
    crosses. Uses <= ceil(log2((hi-lo)/tol)) label queries plus that probe.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if probe is None:
        probe = ProbeFactory(x)
    if engine is None:
        engine = _Engine(handle, probe, SearchState(d_best=d, r=hi))
    ok, img = engine.query(d, hi, context)
    if not ok:
        raise NotAdversarialAtMax(f"direction not adversarial at r={hi}")
    best_img = img
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        ok, img = engine.query(d, mid, context)
        if ok:
            hi = mid
            best_img = img
        else:
            lo = mid
    return hi, best_img


@dataclass
class LambdaResult:
    winner: np.ndarray
    winner_id: int  # 1 or 2
    r: float
    image: np.ndarray | None
    rounds: int


def lambda_compare(handle, d1, d2, x, r, steps=LAMBDA_STEPS, beta=LAMBDA_BETA, probe=None, engine=None, img1=None, img2=None, context=None):
    """Decide which adversarial direction survives to a smaller magnitude.

    Both candidates are assumed adversarial at r. The magnitude shrinks
    geometrically; the first direction to fail eliminates itself. When
    both die in the same round (or the step limit hits) the first
    argument wins with the last jointly confirmed magnitude.
    """
    if probe is None:
        probe = ProbeFactory(x)
    if engine is None:
        engine = _Engine(handle, probe, SearchState(d_best=d1, r=r))
    r_star = r
    cur = r
    for step in range(steps):
        cur = beta * cur
        ok1, i1 = engine.query(d1, cur, context)
        ok2, i2 = engine.query(d2, cur, context)
        if ok1 and ok2:
            r_star = cur
            img1, img2 = i1, i2
            continue
        if ok1:
            return LambdaResult(d1, 1, cur, i1, step + 1)
        if ok2:
            return LambdaResult(d2, 2, cur, i2, step + 1)
        return LambdaResult(d1, 1, r_star, img1, step + 1)
    return LambdaResult(d1, 1, r_star, img1, steps)


def _finish(state, reason):
    state.stop_reason = reason
    return state


def _initial_distance(engine, d0, tol):
    """Establish g(d0) by bisection from the box corner; inf when infeasible."""
    try:
        r0, img = boundary_distance(
            engine.handle, None, d0, probe=engine.probe, engine=engine, tol=tol
        )
    except NotAdversarialAtMax:
        return False
    engine.accept(d0, r0, img)
    return True


def _rays_try(engine, candidate, tol, context=None):
    """RayS acceptance: reject unless strictly closer than the incumbent."""
    st = engine.state
    ok, img = engine.query(candidate, st.r, context)
    if not ok:
        return False
    lo, hi = 0.0, st.r
    best_img = img
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        ok, img = engine.query(candidate, mid, context)
        if ok:
            hi = mid
            best_img = img
        else:
            lo = mid
    if hi < st.r:
        engine.accept(candidate, hi, best_img)
        return True
    return False


def nrays_run(handle, x, y, d0, budget, eps, probe=None, tol=BISECT_TOL):
    """Naive sign search: sequential single-coordinate flips, accept on
    strict boundary-distance decrease."""
    if probe is None:
        probe = ProbeFactory(x)
    state = SearchState(d_best=d0.copy(), r=np.inf, budget=budget)
    engine = _Engine(handle, probe, state)
    d = d0.size
    try:
        if not _initial_distance(engine, d0.copy(), tol):
            return _finish(state, "init-failed")
        while state.r > eps:
            improved = False
            for i in range(d):
                if state.r <= eps:
                    break
                if _rays_try(engine, _flip(state.d_best, [i]), tol):
                    improved = True
            if not improved:
                return _finish(state, "converged")
    except (BudgetExhausted, _LocalBudget):
        return _finish(state, "budget")
    return _finish(state, "eps")


def hrays_run(handle, x, y, d0, budget, eps, probe=None, tol=BISECT_TOL, on_accept=None):
    """Hierarchical sign search over dyadic index subsets (levels 1..log2 d)."""
    if probe is None:
        probe = ProbeFactory(x)
    state = SearchState(d_best=d0.copy(), r=np.inf, budget=budget)
    engine = _Engine(handle, probe, state)
    d = d0.size
    max_level = max(1, math.ceil(math.log2(d)))
    try:
        if not _initial_distance(engine, d0.copy(), tol):
            return _finish(state, "init-failed")
        for level in range(1, max_level + 1):
            state.level = level
            for block in np.array_split(np.arange(d), 2**level):
                if state.r <= eps:
                    return _finish(state, "eps")
                ctx = {"level": level}
                if _rays_try(engine, _flip(state.d_best, block), tol, ctx) and on_accept:
                    on_accept(state)
    except (BudgetExhausted, _LocalBudget):
        return _finish(state, "budget")
    return _finish(state, "eps" if state.r <= eps else "levels-exhausted")


def adba_run(handle, x, y, d0, budget, eps, r0=1.0, probe=None, steps=LAMBDA_STEPS, beta=LAMBDA_BETA):
    """Pairwise-comparison search: flip adjacent dyadic subsets, arbitrate
    double successes with the magnitude comparator."""
    if probe is None:
        probe = ProbeFactory(x)
    state = SearchState(d_best=d0.copy(), r=float(r0), budget=budget)
    engine = _Engine(handle, probe, state)
    d = d0.size
    max_level = max(1, math.ceil(math.log2(d)))
    try:
        for level in range(1, max_level + 1):
            state.level = level
            subsets = np.array_split(np.arange(d), 2**level)
            for k in range(0, len(subsets) - 1, 2):
                if state.r <= eps and state.confirmed:
                    return _finish(state, "eps")
                ctx = {"level": level, "pair": k // 2}
                mark = engine.mark()
                cand1 = _flip(state.d_best, subsets[k])
                cand2 = _flip(state.d_best, subsets[k + 1])
                ok1, i1 = engine.query(cand1, state.r, ctx)
                ok2, i2 = engine.query(cand2, state.r, ctx)
                case, accepted = _eq5_update(engine, cand1, cand2, ok1, ok2, i1, i2, steps, beta, ctx)
                engine.tag(mark, case=case, accepted=accepted)
                state.events.append(
                    {"level": level, "pair": k // 2, "case": case, "accepted": accepted, "r": state.r}
                )
    except (BudgetExhausted, _LocalBudget):
        return _finish(state, "budget")
    return _finish(state, "eps" if state.r <= eps and state.confirmed else "levels-exhausted")


def _eq5_update(engine, cand1, cand2, ok1, ok2, i1, i2, steps, beta, ctx):
    """Four-case pairwise rule; returns (case label, accepted candidate)."""
    st = engine.state
    if not ok1 and not ok2:
        return "both_fail", "none"
    if ok1 and not ok2:
        engine.accept(cand1, st.r, i1)
        return "solo_1", "d1"
    if ok2 and not ok1:
        engine.accept(cand2, st.r, i2)
        return "solo_2", "d2"
    res = lambda_compare(
        engine.handle, cand1, cand2, None, st.r,
        steps=steps, beta=beta, probe=engine.probe, engine=engine,
        img1=i1, img2=i2, context=ctx,
    )
    engine.accept(res.winner, res.r, res.image)
    return "both_succeed", f"d{res.winner_id}"


@dataclass
class RunPartition:
    """Atomic sign-consistent runs of the stably sorted direction.

    gamma is the stable argsort permutation of the flat direction; runs
    are [start, end) spans of gamma positions over which the sorted
    values are constant, so adjacent runs alternate sign.
    """

    gamma: np.ndarray
    runs: list  # list of (start, end) over gamma positions

    @property
    def m(self):
        return len(self.runs)

    def indices(self, start, end):
        """Original (pre-sort) indices covered by gamma positions [start, end)."""
        return self.gamma[start:end]


def build_run_partition(d0) -> RunPartition:
    """Stable sort, then group maximal constant-sign spans."""
    flat = np.asarray(d0).ravel()
    gamma = np.argsort(flat, kind="stable")
    svals = flat[gamma]
    runs = []
    start = 0
    for i in range(1, len(svals)):
        if svals[i] != svals[i - 1]:
            runs.append((start, i))
            start = i
    runs.append((start, len(svals)))
    return RunPartition(gamma=gamma, runs=runs)


def split_runs(runs):
    """Halve every splittable run at its midpoint (size-1 runs persist)."""
    out = []
    for a, b in runs:
        if b - a >= 2:
            mid = (a + b) // 2
            out.append((a, mid))
            out.append((mid, b))
        else:
            out.append((a, b))
    return out


def group_runs(runs, n_groups):
    """Distribute runs into contiguous groups balanced by run count."""
    chunks = np.array_split(np.arange(len(runs)), n_groups)
    return [(runs[c[0]][0], runs[c[-1]][1]) for c in chunks if len(c)]


@dataclass
class PdoOptions:
    steps: int = LAMBDA_STEPS
    beta: float = LAMBDA_BETA
    d_his: tuple | None = None  # (direction, confirmed_r); injected history


def pdo_run(handle, x, y, d0, r0, budget, eps, opts=None, probe=None, init_image=None):
    """Pattern-driven optimization with history-buffer arbitration.

    Levels pair adjacent run groups of the pattern tree; once the tree
    is exhausted every run splits at its midpoint and the next (finer)
    level continues, so an unstructured start reproduces the dyadic
    pairing of the pairwise baseline exactly. A solitary success is
    arbitrated against the history buffer only when the buffer holds a
    direction confirmed strictly below the current magnitude; otherwise
    it is adopted directly. Rejected-but-adversarial candidates are
    cached into the buffer with the magnitude at which they were seen.
    """
    if opts is None:
        opts = PdoOptions()
    if probe is None:
        probe = ProbeFactory(x)
    state = SearchState(d_best=d0.copy(), r=float(r0), budget=budget, confirmed=True)
    state.best_image = init_image if init_image is not None else probe.image(d0, r0)
    state.d_his = opts.d_his
    engine = _Engine(handle, probe, state)
    part = build_run_partition(d0)
    runs = part.runs
    s = 1
    try:
        while state.r > eps:
            max_level = max(0, math.ceil(math.log2(len(runs)))) if len(runs) > 1 else 0
            if s > max_level:
                finer = split_runs(runs)
                if finer == runs:
                    return _finish(state, "pattern-exhausted")
                runs = finer
                continue
            state.level = s
            groups = group_runs(runs, min(2**s, len(runs)))
            for k in range(0, len(groups), 2):
                if state.r <= eps:
                    return _finish(state, "eps")
                ctx = {"level": s, "pair": k // 2}
                mark = engine.mark()
                g1 = groups[k]
                g2 = groups[k + 1] if k + 1 < len(groups) else None
                cand1 = _flip(state.d_best, part.indices(*g1))
                ok1, i1 = engine.query(cand1, state.r, ctx)
                if g2 is not None:
                    cand2 = _flip(state.d_best, part.indices(*g2))
                    ok2, i2 = engine.query(cand2, state.r, ctx)
                else:
                    cand2, ok2, i2 = None, False, None
                case, accepted = _eq16_update(
                    engine, cand1, cand2, ok1, ok2, i1, i2, opts, ctx
                )
                engine.tag(mark, case=case, accepted=accepted)
                state.events.append(
                    {"level": s, "pair": k // 2, "case": case, "accepted": accepted, "r": state.r}
                )
            s += 1
    except (BudgetExhausted, _LocalBudget):
        return _finish(state, "budget")
    return _finish(state, "eps")


def _history_fresh(state):
    return state.d_his is not None and state.d_his[1] < state.r


def _eq16_update(engine, cand1, cand2, ok1, ok2, i1, i2, opts, ctx):
    """History-aware four-case rule; returns (case label, accepted)."""
    st = engine.state
    if not ok1 and not ok2:
        return "both_fail", "none"
    if ok1 != ok2:
        cand, img = (cand1, i1) if ok1 else (cand2, i2)
        label = "solo_1" if ok1 else "solo_2"
        if _history_fresh(st):
            his_dir, his_r = st.d_his
            res = lambda_compare(
                engine.handle, cand, his_dir, None, st.r,
                steps=opts.steps, beta=opts.beta, probe=engine.probe,
                engine=engine, img1=img, context=ctx,
            )
            if res.winner_id == 2:
                # The cached direction won; the solitary success becomes
                # the new buffered candidate at its observed magnitude.
                st.d_his = (cand, st.r)
            engine.accept(res.winner, res.r, res.image if res.image is not None else img)
            return f"{label}_vs_history", "d1" if res.winner_id == 1 else "his"
        engine.accept(cand, st.r, img)
        return label, "d1" if ok1 else "d2"
    res = lambda_compare(
        engine.handle, cand1, cand2, None, st.r,
        steps=opts.steps, beta=opts.beta, probe=engine.probe,
        engine=engine, img1=i1, img2=i2, context=ctx,
    )
    loser = cand2 if res.winner_id == 1 else cand1
    prev_r = st.r
    engine.accept(res.winner, res.r, res.image)
    st.d_his = (loser, prev_r)
    return "both_succeed", f"d{res.winner_id}"
