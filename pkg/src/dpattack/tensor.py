"""Pixel-domain image and direction primitives.

Images are float64 arrays of shape (C, H, W) with values in [0, 1].
Directions are int8 arrays of the same shape with entries in {-1, +1};
they act as the sign pattern of an l-inf perturbation.
"""

import json

import numpy as np

from .errors import ChannelMismatch, ShapeError, UnsupportedNorm

# ITU-R BT.601 full-range luma/chroma coefficients (JPEG convention).
_RGB_TO_YCBCR = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168735892, -0.331264108, 0.5],
        [0.5, -0.418687589, -0.081312411],
    ]
)
_YCBCR_TO_RGB = np.linalg.inv(_RGB_TO_YCBCR)
_CHROMA_OFFSET = np.array([0.0, 0.5, 0.5])


def validate_image(x: np.ndarray) -> np.ndarray:
    """Check the (C, H, W) layout and [0, 1] range, returning x as float64."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"expected (C, H, W) image, got shape {x.shape}")
    if x.min() < -1e-12 or x.max() > 1 + 1e-12:
        raise ShapeError("image values must lie in [0, 1]")
    return x


def validate_direction(d: np.ndarray) -> np.ndarray:
    """Check that every entry of d is exactly -1 or +1."""
    d = np.asarray(d)
    vals = np.unique(d)
    if not np.all(np.isin(vals, (-1, 1))):
        raise ShapeError("direction entries must be exactly -1 or +1")
    return d.astype(np.int8)


def rgb_to_ycbcr(img: np.ndarray) -> np.ndarray:
    """Convert an RGB image in [0, 1] to full-range YCbCr (chroma offset 0.5)."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ChannelMismatch(f"rgb_to_ycbcr needs 3 channels, got shape {img.shape}")
    out = np.einsum("kc,chw->khw", _RGB_TO_YCBCR, img)
    return out + _CHROMA_OFFSET[:, None, None]


def ycbcr_to_rgb(img: np.ndarray) -> np.ndarray:
    """Inverse of :func:`rgb_to_ycbcr`."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ChannelMismatch(f"ycbcr_to_rgb needs 3 channels, got shape {img.shape}")
    shifted = img - _CHROMA_OFFSET[:, None, None]
    return np.einsum("kc,chw->khw", _YCBCR_TO_RGB, shifted)


def ycbcr_delta_to_rgb(delta: np.ndarray) -> np.ndarray:
    """Map a YCbCr *difference* to RGB (linear part only, offsets cancel)."""
    if delta.ndim != 3 or delta.shape[0] != 3:
        raise ChannelMismatch(f"expected 3-channel delta, got shape {delta.shape}")
    return np.einsum("kc,chw->khw", _YCBCR_TO_RGB, delta)


def sign_with_one(v: np.ndarray) -> np.ndarray:
    """Entrywise sign with sgn(0) := +1; never emits zero."""
    v = np.asarray(v)
    return np.where(v < 0, -1, 1).astype(np.int8)


def apply_direction(x: np.ndarray, d: np.ndarray, r: float) -> np.ndarray:
    """Return clip(x + r * d, [0, 1]) without modifying x."""
    x = np.asarray(x, dtype=np.float64)
    d = np.asarray(d)
    if x.shape != d.shape:
        raise ShapeError(f"image shape {x.shape} != direction shape {d.shape}")
    if r < 0:
        raise ValueError("magnitude r must be non-negative")
    if r == 0:
        return x.copy()
    return np.clip(x + r * d.astype(np.float64), 0.0, 1.0)


def norm(v: np.ndarray, p) -> float:
    """l-inf or l2 norm of a flattened array."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if p in (np.inf, "inf", "linf"):
        return float(np.max(np.abs(v))) if v.size else 0.0
    if p in (2, "2", "l2"):
        return float(np.linalg.norm(v))
    raise UnsupportedNorm(f"unsupported norm {p!r}")


def load_png(path) -> np.ndarray:
    """Decode a PNG to a (C, H, W) float image in [0, 1] (8-bit values / 255)."""
    from PIL import Image

    with Image.open(path) as im:
        if im.mode in ("L", "I;16", "I"):
            arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
            return arr[None, :, :]
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return arr.transpose(2, 0, 1)


def to_tensor_json(x: np.ndarray) -> str:
    """Serialize an array to the raw tensor JSON format."""
    x = np.asarray(x, dtype=np.float64)
    return json.dumps({"shape": list(x.shape), "data": x.ravel().tolist()})


def from_tensor_json(text: str) -> np.ndarray:
    """Parse the raw tensor JSON format {"shape": [...], "data": [...]}."""
    obj = json.loads(text)
    shape = tuple(int(s) for s in obj["shape"])
    data = np.asarray(obj["data"], dtype=np.float64)
    if data.size != int(np.prod(shape)):
        raise ShapeError("tensor JSON data length does not match shape")
    return data.reshape(shape)


def load_image(path) -> np.ndarray:
    """Load a PNG or a raw tensor JSON file as a (C, H, W) image."""
    path = str(path)
    if path.endswith(".json"):
        with open(path) as fh:
            return validate_image(from_tensor_json(fh.read()))
    return load_png(path)
