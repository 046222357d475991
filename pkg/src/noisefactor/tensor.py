"""Pixel tensors, resampling, and PNG I/O.

Images and noise share one representation: a float64 array of shape
(channels, height, width) with 1 or 3 channels. Model space is [-1, 1];
PNG files hold 8-bit values in [0, 255]. Arrays are treated as immutable
once returned; every public function returns a fresh array.
"""

from __future__ import annotations

import numpy as np
from PIL import Image, UnidentifiedImageError

__all__ = ["check_image", "load_image", "save_image", "resample"]

_UNSUPPORTED_DEPTH_MODES = ("I", "I;16", "I;16B", "I;16L", "I;16N", "F")


def check_image(x, name: str = "tensor") -> np.ndarray:
    """Validate the (C, H, W) layout and finiteness; returns x as float64."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] not in (1, 3):
        raise ValueError(f"{name} must have shape (1|3, H, W), got {x.shape}")
    if x.shape[1] < 1 or x.shape[2] < 1:
        raise ValueError(f"{name} has an empty spatial axis: {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError(f"{name} contains NaN or Inf values")
    return x


def load_image(path) -> np.ndarray:
    """Read an 8-bit grayscale or RGB PNG into model space [-1, 1].

    Values map via v / 127.5 - 1; an alpha channel is discarded.
    """
    try:
        img = Image.open(path)
        img.load()
    except (FileNotFoundError, PermissionError, IsADirectoryError):
        raise
    except (UnidentifiedImageError, SyntaxError, ValueError, OSError) as exc:
        raise ValueError(f"cannot decode image {path}: {exc}") from exc
    if img.mode in _UNSUPPORTED_DEPTH_MODES:
        raise ValueError(
            f"unsupported bit depth in {path} (mode {img.mode}); only 8-bit images are readable"
        )
    if img.mode in ("LA", "La", "1"):
        img = img.convert("L")
    elif img.mode != "L" and img.mode != "RGB":
        img = img.convert("RGB")
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    else:
        arr = np.moveaxis(arr, -1, 0)
    return arr / 127.5 - 1.0


def save_image(x, path) -> None:
    """Write a model-space tensor as an 8-bit PNG, clamping to [-1, 1]."""
    x = check_image(x, "image")
    quant = np.rint((np.clip(x, -1.0, 1.0) + 1.0) * 127.5).astype(np.uint8)
    if quant.shape[0] == 1:
        img = Image.fromarray(quant[0], mode="L")
    else:
        img = Image.fromarray(np.moveaxis(quant, 0, -1), mode="RGB")
    img.save(path, format="PNG")


def _interp_axis(x: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    """Bilinear resampling of one axis with half-pixel centers, edges clamped."""
    n_in = x.shape[axis]
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    w = src - lo
    shape = [1, 1, 1]
    shape[axis] = n_out
    w = w.reshape(shape)
    x_lo = np.take(x, lo, axis=axis)
    x_hi = np.take(x, hi, axis=axis)
    # lerp written as lo + w*(hi-lo) so constants survive bit-exactly
    return x_lo + w * (x_hi - x_lo)


def resample(x, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize to (out_h, out_w); identity when sizes are unchanged."""
    x = check_image(x)
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target size must be at least 1x1, got {out_h}x{out_w}")
    if (out_h, out_w) == x.shape[1:]:
        return x.copy()
    y = _interp_axis(x, out_h, axis=1)
    y = _interp_axis(y, out_w, axis=2)
    return y
