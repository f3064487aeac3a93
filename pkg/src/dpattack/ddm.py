"""Dynamic Decision-Making initialization.

Covers the clean-image frequency statistics, the three zero-query
direction constructors (variance-sampled, segment-block, random-square),
the wavelet low-frequency wrapper, Dynamic Block Size Selection, and the
hybrid bisection/line search that picks the starting direction. None of
these observe anything beyond top-1 labels.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import BlockSizeError, InitFailed, LevelError
from .tensor import apply_direction, rgb_to_ycbcr, sign_with_one, ycbcr_delta_to_rgb
from .transforms import bdct, dwt, ibdct, idwt

BILI_QUERY_BUDGET = 16
BILI_LINE_STEPS = 5


@dataclass
class FrequencyStats:
    """Per-(channel, i, j) mean and population std of BDCT coefficients."""

    sigma: np.ndarray  # (C, w, w)
    mu: np.ndarray  # (C, w, w)
    block_size: int
    ycbcr: bool


def _to_transform_domain(x, use_ycbcr):
    if use_ycbcr and x.shape[0] == 3:
        return rgb_to_ycbcr(x), True
    return np.asarray(x, dtype=np.float64), False


def _delta_to_pixel_domain(delta, converted):
    if converted:
        return ycbcr_delta_to_rgb(delta)
    return delta


def compute_freq_stats(x: np.ndarray, w: int, use_ycbcr: bool = True) -> FrequencyStats:
    """Population statistics of per-band coefficients across the Z blocks."""
    dom, converted = _to_transform_domain(x, use_ycbcr)
    coef = bdct(dom, w)  # (C, Z, w, w)
    mu = coef.mean(axis=1)
    sigma = np.sqrt(np.mean(np.abs(coef - mu[:, None]) ** 2, axis=1))
    return FrequencyStats(sigma=sigma, mu=mu, block_size=w, ycbcr=converted)


def sample_dn(x: np.ndarray, stats: FrequencyStats, seed) -> np.ndarray:
    """Variance-prior direction: sign of the inverse-BDCT of band-sampled noise.

    Works on the perturbation alone (the transform is linear), so zero
    sampled noise yields exactly the all +1 direction.
    """
    rng = np.random.default_rng(seed)
    c, h, wd = x.shape
    w = stats.block_size
    z = ((h + w - 1) // w) * ((wd + w - 1) // w)
    noise = rng.normal(size=(c, z, w, w)) * stats.sigma[:, None, :, :]
    delta = ibdct(noise, w, out_shape=(c, h, wd))
    delta = _delta_to_pixel_domain(delta, stats.ycbcr)
    return sign_with_one(delta)


def make_db(d: int, n_hat: int) -> np.ndarray:
    """Segment direction: entry i (1-based) is (-1) ** floor((i-1)/n_hat)."""
    if n_hat < 1:
        raise ValueError("segment length must be >= 1")
    idx = np.arange(d)
    return np.where((idx // n_hat) % 2 == 0, 1, -1).astype(np.int8)


def random_square_image(shape, h: int, rng) -> np.ndarray:
    """Image tiled with h x h squares of i.i.d. colors from the 256-level grid."""
    if h < 1:
        raise ValueError("square side must be >= 1")
    c, hh, ww = shape
    k = (hh + h - 1) // h
    l = (ww + h - 1) // h
    colors = rng.integers(0, 256, size=(c, k, l)).astype(np.float64) / 255.0
    tiled = np.repeat(np.repeat(colors, h, axis=1), h, axis=2)
    return tiled[:, :hh, :ww]


def make_dr(x: np.ndarray, h: int, seed) -> np.ndarray:
    """Square-color direction: sign of (random square image - x)."""
    rng = np.random.default_rng(seed)
    xr = random_square_image(x.shape, h, rng)
    return sign_with_one(xr - x)


def _base_direction(x_base, kind, pattern, seed, use_ycbcr):
    if kind == "dn":
        w = max(1, pattern)
        stats = compute_freq_stats(x_base, w, use_ycbcr=use_ycbcr)
        return sample_dn(x_base, stats, seed)
    if kind == "db":
        flat = make_db(int(np.prod(x_base.shape)), max(1, pattern))
        return flat.reshape(x_base.shape)
    if kind == "dr":
        return make_dr(x_base, max(1, pattern), seed)
    raise ValueError(f"unknown base direction kind {kind!r}")


def lowfreq_wrap(x: np.ndarray, base: str, pattern_size: int, seed, use_ycbcr: bool = True) -> np.ndarray:
    """Confine a base direction to the Haar low-pass subspace before signing.

    The base direction is generated at the decimated resolution with its
    pattern size scaled by 2**-dl, added to the low-pass image, lifted
    back with zeroed detail bands, and re-signed against x.
    """
    if pattern_size < 1:
        raise ValueError("pattern size must be >= 1")
    dl = int(math.floor(math.log2(pattern_size))) if pattern_size > 1 else 0
    _, h, wd = x.shape
    if dl > 0 and (h % (1 << dl) or wd % (1 << dl)):
        raise LevelError(f"level {dl} infeasible for dims ({h}, {wd})")
    if dl == 0:
        return _base_direction(x, base, pattern_size, seed, use_ycbcr)
    low, _ = dwt(x, dl)
    scale = float(1 << dl)
    scaled_pattern = max(1, pattern_size >> dl)
    base_dir = _base_direction(low / scale, base, scaled_pattern, seed, use_ycbcr)
    lifted = idwt(low + base_dir.astype(np.float64), None, dl)
    return sign_with_one(lifted - x)


@dataclass
class DbsResult:
    block_size: int
    direction: np.ndarray
    r: float
    confirmed: bool
    queries: int
    survivors: list
    partial: bool = False


def dbs(handle, x, y, candidates, q_max=None, k_max=5, seed=0, probe=None) -> DbsResult:
    """Dynamic Block Size Selection via shared bisection with pruning.

    All surviving candidates are probed once per midpoint; successes prune
    the pool and lower the bracket, a joint failure raises it. Ties after
    k_max rounds break uniformly at random (seeded).
    """
    if not candidates:
        raise ValueError("dbs needs at least one candidate")
    if q_max is None:
        q_max = len(candidates) * k_max + 4
    make_image = probe.image if probe is not None else (lambda d, r: apply_direction(x, d, r))
    rng = np.random.default_rng(seed)
    current = list(candidates)
    lo, hi = 0.0, 1.0
    confirmed = False
    queries = 0
    k = 0
    while queries < q_max and k < k_max:
        r = (lo + hi) / 2.0
        successes = []
        for w, direction in current:
            if queries >= q_max:
                break
            ok = handle.is_adversarial(make_image(direction, r), r=r)
            queries += 1
            if ok:
                successes.append((w, direction))
        if successes:
            hi = r
            current = successes
            confirmed = True
        else:
            lo = r
        k += 1
    pick = int(rng.integers(0, len(current)))
    w, direction = current[pick]
    return DbsResult(
        block_size=w,
        direction=direction,
        r=hi,
        confirmed=confirmed,
        queries=queries,
        survivors=[c[0] for c in current],
        partial=queries >= q_max and k < k_max,
    )


def bilisearch(handle, d_n, d_a, x, y, r: float, probe=None):
    """Hybrid bisection/line search between two starting directions.

    Each direction halves its magnitude while adversarial (bisect mode),
    then backs off in (h-l)/t steps from its confirmed bound (line mode).
    The joint loop stops on a line-mode failure or when the 16-query
    budget runs out; the direction with the smaller confirmed magnitude
    wins. Raises InitFailed when neither direction ever succeeds.

    Returns (direction, magnitude, confirming image).
    """
    if not 0.0 < r <= 1.0:
        raise ValueError("start magnitude must lie in (0, 1]")
    make_image = probe.image if probe is not None else (lambda d, rr: apply_direction(x, d, rr))
    state = [
        {"d": d_n, "h": r, "l": 0.0, "r": r / 2.0, "mode": "bisect", "hit": False, "img": None},
        {"d": d_a, "h": r, "l": 0.0, "r": r / 2.0, "mode": "bisect", "hit": False, "img": None},
    ]
    budget = BILI_QUERY_BUDGET
    t = BILI_LINE_STEPS
    while budget > 0:
        results = []
        for s in state:
            img = make_image(s["d"], s["r"])
            ok = handle.is_adversarial(img, r=s["r"])
            results.append((ok, img))
        stop = False
        for s, (ok, img) in zip(state, results):
            if ok:
                s["hit"] = True
                s["h"] = s["r"]
                s["img"] = img
            if ok and s["mode"] == "bisect":
                s["r"] = (s["h"] + s["l"]) / 2.0
            else:
                if not ok:
                    if s["mode"] == "line":
                        stop = True
                    s["mode"] = "line"
                    s["l"] = max(s["l"], s["r"])
                s["r"] = s["h"] - (s["h"] - s["l"]) / t
        budget -= 2
        if stop:
            break
    best = [s["h"] if s["hit"] else np.inf for s in state]
    if not np.isfinite(min(best)):
        raise InitFailed("neither initial direction was adversarial")
    winner = int(np.argmin(best))
    return state[winner]["d"], float(best[winner]), state[winner]["img"]
