"""Frequency-band sensitivity profiling of a loss-exposing model.

This is offline analysis: each band of the block-DCT grid is perturbed
with Gaussian noise across all blocks, the perturbed image is projected
back into the pixel-domain budget, and the mean CE loss is recorded.
It requires white-box loss access and therefore lives outside the
attack-path modules, which are hard-label-only.
"""

from dataclasses import dataclass

import numpy as np
from scipy import stats as scipy_stats

from .errors import CapabilityError, DegenerateInput
from .oracle import BuiltinModel
from .tensor import rgb_to_ycbcr, ycbcr_delta_to_rgb
from .transforms import bdct, ibdct


@dataclass
class BfsProfile:
    """Mean CE loss per (channel, i, j) band under calibrated band noise."""

    sensitivity: np.ndarray  # (C, w, w)
    samples: int
    epsilon: float
    sigma_max: float
    block_size: int


def _band_delta(shape, w, c, i, j, noise_z, ycbcr):
    """Pixel-domain perturbation from noise on one band across all blocks."""
    ch, h, wd = shape
    z = ((h + w - 1) // w) * ((wd + w - 1) // w)
    coef = np.zeros((ch, z, w, w))
    coef[c, :, i, j] = noise_z
    delta = ibdct(coef, w, out_shape=shape)
    if ycbcr and ch == 3:
        delta = ycbcr_delta_to_rgb(delta)
    return delta


def calibrate_sigma_max(shape, w, eps, seed, draws=32, tol=0.05):
    """Bisection on the band-noise std so that the median pixel-domain
    l-inf magnitude of the lifted noise lands within tol of eps."""
    ch = shape[0]
    rng = np.random.default_rng(seed)
    z = ((shape[1] + w - 1) // w) * ((shape[2] + w - 1) // w)
    bands = [
        (int(rng.integers(0, ch)), int(rng.integers(0, w)), int(rng.integers(0, w)))
        for _ in range(draws)
    ]
    noises = [rng.normal(size=z) for _ in range(draws)]

    def median_linf(sigma):
        mags = []
        for (c, i, j), nz in zip(bands, noises):
            delta = _band_delta(shape, w, c, i, j, sigma * nz, ycbcr=ch == 3)
            mags.append(np.max(np.abs(delta)))
        return float(np.median(mags))

    lo, hi = 0.0, 1.0
    while median_linf(hi) < eps and hi < 1e6:
        hi *= 2.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        m = median_linf(mid)
        if abs(m - eps) <= tol * eps:
            return mid
        if m < eps:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def project_budget(x, delta, eps, norm_kind="linf"):
    """Project x + delta onto the eps-ball around x (clamp or rescale)."""
    if norm_kind == "linf":
        delta = np.clip(delta, -eps, eps)
    else:
        n = np.linalg.norm(delta)
        if n > eps and n > 0:
            delta = delta * (eps / n)
    return np.clip(x + delta, 0.0, 1.0)


def bfs_profile(model, images, labels, w, eps, samples=4, seed=0, norm_kind="linf"):
    """Band-wise mean CE loss under calibrated noise, averaged over images.

    Raises CapabilityError when the model does not expose the loss.
    """
    if not isinstance(model, BuiltinModel):
        raise CapabilityError("bfs_profile needs a loss-exposing builtin model")
    images = [np.asarray(im, dtype=np.float64) for im in images]
    shape = images[0].shape
    ch = shape[0]
    sigma_max = calibrate_sigma_max(shape, w, eps, seed)
    rng = np.random.default_rng(seed + 1)
    z = ((shape[1] + w - 1) // w) * ((shape[2] + w - 1) // w)
    sens = np.zeros((ch, w, w))
    for c in range(ch):
        for i in range(w):
            for j in range(w):
                total = 0.0
                count = 0
                for x, y in zip(images, labels):
                    for _ in range(samples):
                        nz = rng.normal(scale=sigma_max, size=z)
                        delta = _band_delta(shape, w, c, i, j, nz, ycbcr=ch == 3)
                        xp = project_budget(x, delta, eps, norm_kind)
                        loss, _ = model.loss_and_grad(xp, int(y))
                        total += loss
                        count += 1
                sens[c, i, j] = total / count
    return BfsProfile(
        sensitivity=sens, samples=samples, epsilon=eps, sigma_max=sigma_max, block_size=w
    )


def pearson(a, b):
    """Pearson r with a two-sided t-distribution p-value."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size or a.size < 3:
        raise DegenerateInput("pearson needs equal-length inputs of size >= 3")
    if np.std(a) == 0 or np.std(b) == 0:
        raise DegenerateInput("pearson inputs must have nonzero variance")
    res = scipy_stats.pearsonr(a, b)
    return float(res.statistic), float(res.pvalue)


def profile_to_csv(profile: BfsProfile) -> str:
    """Render a BfsProfile as CSV rows (channel, i, j, mean_loss)."""
    lines = ["channel,i,j,mean_loss"]
    ch, w, _ = profile.sensitivity.shape
    for c in range(ch):
        for i in range(w):
            for j in range(w):
                lines.append(f"{c},{i},{j},{profile.sensitivity[c, i, j]:.10g}")
    return "\n".join(lines) + "\n"
