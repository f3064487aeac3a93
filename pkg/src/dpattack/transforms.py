"""Block-wise DCT and multilevel Haar wavelet transforms.

Both transforms are orthonormal, so they preserve l2 energy and invert
exactly (up to float64 round-off). Images whose extent is not divisible
by the block size / dyadic factor are replicate-padded on the right and
bottom; the inverse crops back to the original extent.
"""

import numpy as np
from scipy.fft import dctn, idctn

from .errors import BlockSizeError, LevelError, ShapeError


def _check_chw(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"expected (C, H, W) array, got shape {x.shape}")
    return x


def pad_to_multiple(x: np.ndarray, m: int) -> np.ndarray:
    """Replicate-pad H and W on the right/bottom up to the next multiple of m."""
    x = _check_chw(x)
    _, h, w = x.shape
    ph = (-h) % m
    pw = (-w) % m
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, ph), (0, pw)), mode="edge")


def split_blocks(x: np.ndarray, w: int) -> np.ndarray:
    """Rearrange (C, H, W) into (C, Z, w, w) with Z = (H/w)*(W/w) blocks."""
    x = _check_chw(x)
    c, h, wd = x.shape
    if h % w or wd % w:
        raise ShapeError(f"dims ({h}, {wd}) not divisible by block size {w}")
    nb_h, nb_w = h // w, wd // w
    out = x.reshape(c, nb_h, w, nb_w, w).transpose(0, 1, 3, 2, 4)
    return out.reshape(c, nb_h * nb_w, w, w)


def merge_blocks(blocks: np.ndarray, h: int, wd: int) -> np.ndarray:
    """Inverse of :func:`split_blocks` back to (C, H, W)."""
    blocks = np.asarray(blocks, dtype=np.float64)
    c, z, w, w2 = blocks.shape
    if w != w2 or z * w * w != h * wd:
        raise ShapeError("block array inconsistent with target dims")
    nb_h, nb_w = h // w, wd // w
    out = blocks.reshape(c, nb_h, nb_w, w, w).transpose(0, 1, 3, 2, 4)
    return out.reshape(c, h, wd)


def _check_block_size(x, w):
    if w <= 0:
        raise BlockSizeError(f"block size must be positive, got {w}")
    _, h, wd = x.shape
    if w > min(h, wd):
        raise BlockSizeError(f"block size {w} exceeds image extent {(h, wd)}")


def bdct(x: np.ndarray, w: int) -> np.ndarray:
    """Per-block orthonormal 2-D DCT-II; returns coefficients (C, Z, w, w)."""
    x = _check_chw(x)
    _check_block_size(x, w)
    blocks = split_blocks(pad_to_multiple(x, w), w)
    return dctn(blocks, type=2, axes=(-2, -1), norm="ortho")


def ibdct(coef: np.ndarray, w: int, out_shape=None) -> np.ndarray:
    """Exact inverse of :func:`bdct`; crops to out_shape=(C, H, W) when given."""
    coef = np.asarray(coef, dtype=np.float64)
    if coef.ndim != 4 or coef.shape[-1] != w or coef.shape[-2] != w:
        raise ShapeError(f"coefficient shape {coef.shape} inconsistent with w={w}")
    blocks = idctn(coef, type=2, axes=(-2, -1), norm="ortho")
    if out_shape is None:
        c, z = coef.shape[:2]
        side = int(round(np.sqrt(z)))
        if side * side != z:
            raise ShapeError("out_shape required for non-square block grids")
        return merge_blocks(blocks, side * w, side * w)
    c, h, wd = out_shape
    hp = ((h + w - 1) // w) * w
    wp = ((wd + w - 1) // w) * w
    return merge_blocks(blocks, hp, wp)[:, :h, :wd]


def _haar_level(x):
    """One orthonormal Haar analysis level; returns (ll, (lh, hl, hh))."""
    a = x[:, 0::2, 0::2]
    b = x[:, 0::2, 1::2]
    c = x[:, 1::2, 0::2]
    d = x[:, 1::2, 1::2]
    ll = 0.5 * (a + b + c + d)
    lh = 0.5 * (a - b + c - d)
    hl = 0.5 * (a + b - c - d)
    hh = 0.5 * (a - b - c + d)
    return ll, (lh, hl, hh)


def _haar_level_inv(ll, details):
    lh, hl, hh = details
    a = 0.5 * (ll + lh + hl + hh)
    b = 0.5 * (ll - lh + hl - hh)
    c = 0.5 * (ll + lh - hl - hh)
    d = 0.5 * (ll - lh - hl + hh)
    ch, h2, w2 = ll.shape
    out = np.empty((ch, 2 * h2, 2 * w2))
    out[:, 0::2, 0::2] = a
    out[:, 0::2, 1::2] = b
    out[:, 1::2, 0::2] = c
    out[:, 1::2, 1::2] = d
    return out


def dwt(x: np.ndarray, dl: int):
    """Multilevel orthonormal Haar decomposition.

    Returns (low, others) where low has shape (C, H/2**dl, W/2**dl) and
    others is a list of (lh, hl, hh) tuples ordered finest-first.
    """
    x = _check_chw(x)
    if dl < 0:
        raise LevelError("level count must be non-negative")
    _, h, w = x.shape
    if dl and (h % (1 << dl) or w % (1 << dl)):
        raise LevelError(f"dims ({h}, {w}) not divisible by 2**{dl}")
    others = []
    low = x
    for _ in range(dl):
        low, details = _haar_level(low)
        others.append(details)
    return low, others


def idwt(low: np.ndarray, others, dl: int) -> np.ndarray:
    """Reconstruct from a Haar decomposition; others=None means zero details."""
    low = _check_chw(low)
    if others is not None and len(others) != dl:
        raise ShapeError(f"expected {dl} detail levels, got {len(others)}")
    out = low
    for lvl in range(dl - 1, -1, -1):
        if others is None:
            z = np.zeros_like(out)
            details = (z, z, z)
        else:
            details = others[lvl]
            if details[0].shape != out.shape:
                raise ShapeError("detail subband shape mismatch during idwt")
        out = _haar_level_inv(out, details)
    return out


def lowpass_project(x: np.ndarray, dl: int) -> np.ndarray:
    """Orthogonal projection of x onto the level-dl Haar low-pass subspace."""
    low, _ = dwt(x, dl)
    return idwt(low, None, dl)
