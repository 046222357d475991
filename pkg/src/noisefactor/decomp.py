"""Linear image decompositions: ordered operator lists that sum to the identity.

Each decomposition splits a (C, H, W) tensor x into components f_i(x) with
sum_i f_i(x) = x. The built-in kinds cover frequency subbands (two- and
three-band), grayscale/color, kernel blur plus residual, disjoint spatial
masks, and plain scalar weights.
"""

from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import check_image, load_image

__all__ = [
    "DEFAULT_KERNEL_SIZE",
    "Component",
    "Decomposition",
    "gaussian_kernel",
    "gaussian_blur",
    "convolve2d",
    "diagonal_kernel",
    "scaled_sigma",
    "make_hybrid",
    "make_triple",
    "make_gray_color",
    "make_motion",
    "make_spatial",
    "make_scaling",
    "decomposition_from_config",
]

# Large default kernel keeps blur edge effects negligible at 64- and 256-wide runs.
DEFAULT_KERNEL_SIZE = 33

# Sigma values in run configs are interpreted at this image width and scaled
# linearly with the actual run width (64 -> 256 quadruples sigma).
SIGMA_BASE_WIDTH = 64

_PROBE_SEED = 20271


def gaussian_kernel(sigma: float, ksize: int = DEFAULT_KERNEL_SIZE) -> np.ndarray:
    """1-D Gaussian sampled at integer offsets, normalized to sum 1."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if ksize < 3 or ksize % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 3, got {ksize}")
    offsets = np.arange(ksize, dtype=np.float64) - ksize // 2
    k = np.exp(-0.5 * (offsets / sigma) ** 2)
    return k / k.sum()


def reflect_indices(n: int, pad: int) -> np.ndarray:
    """Symmetric border index map (edge pixel repeated), valid for any pad size."""
    i = np.arange(-pad, n + pad)
    m = np.mod(i, 2 * n)
    return np.where(m < n, m, 2 * n - 1 - m)


def _correlate1d(x: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
    pad = len(k) // 2
    idx = reflect_indices(x.shape[axis], pad)
    ext = np.take(x, idx, axis=axis)
    win = sliding_window_view(ext, len(k), axis=axis)
    return np.einsum("...k,k->...", win, k)


def gaussian_blur(x, sigma: float, ksize: int = DEFAULT_KERNEL_SIZE) -> np.ndarray:
    """Separable Gaussian blur per channel, horizontal then vertical, reflect padding."""
    x = check_image(x)
    k = gaussian_kernel(sigma, ksize)
    out = _correlate1d(x, k, axis=2)
    return _correlate1d(out, k, axis=1)


def _sep_blur(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    out = _correlate1d(x, k, axis=2)
    return _correlate1d(out, k, axis=1)


def convolve2d(x, kernel: np.ndarray) -> np.ndarray:
    """True 2-D convolution per channel with reflect padding."""
    x = check_image(x)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
        raise ValueError(f"kernel must be 2-D with odd side lengths, got {kernel.shape}")
    kh, kw = kernel.shape
    flipped = kernel[::-1, ::-1]
    rows = reflect_indices(x.shape[1], kh // 2)
    cols = reflect_indices(x.shape[2], kw // 2)
    ext = x[:, rows][:, :, cols]
    win = sliding_window_view(ext, (kh, kw), axis=(1, 2))
    return np.einsum("chwij,ij->chw", win, flipped)


def diagonal_kernel(k: int = 29) -> np.ndarray:
    """Normalized k x k diagonal line kernel (upper-left to lower-right motion)."""
    if k < 1:
        raise ValueError(f"kernel size must be >= 1, got {k}")
    return np.eye(k, dtype=np.float64) / k


def scaled_sigma(sigma: float, width: int, base_width: int = SIGMA_BASE_WIDTH) -> float:
    """Scale a base-resolution sigma to the actual run width."""
    if base_width < 1:
        raise ValueError(f"base width must be >= 1, got {base_width}")
    return sigma * (width / base_width)


class Component:
    """One linear operator of a decomposition.

    display controls how the component of a final sample is rendered:
    "direct" saves the values as-is, "minmax" rescales to full range first
    (for residual-style components centered on zero).
    """

    def __init__(self, label: str, fn, display: str = "direct"):
        self.label = label
        self.display = display
        self._fn = fn

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self._fn(x)

    def __repr__(self):
        return f"Component({self.label!r})"


class Decomposition:
    """Ordered linear components f_i with sum_i f_i = identity.

    Completeness is enforced at construction by applying all components to
    three random probe tensors and checking the recomposition error.
    """

    def __init__(self, components, check_shape=(3, 16, 16)):
        self.components = list(components)
        if not self.components:
            raise ValueError("a decomposition needs at least one component")
        labels = [c.label for c in self.components]
        if len(set(labels)) != len(labels):
            raise ValueError(f"component labels must be unique, got {labels}")
        self._check_completeness(tuple(check_shape))

    @property
    def n(self) -> int:
        return len(self.components)

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self.components]

    def index_of(self, label: str) -> int:
        for i, c in enumerate(self.components):
            if c.label == label:
                return i
        raise ValueError(f"unknown component {label!r}; valid labels: {self.labels}")

    def apply(self, x) -> list[np.ndarray]:
        """Return [f_1(x), ..., f_N(x)] in declared order."""
        x = check_image(x)
        return [c(x) for c in self.components]

    def recompose(self, parts) -> np.ndarray:
        if len(parts) != self.n:
            raise ValueError(f"expected {self.n} parts, got {len(parts)}")
        out = np.array(parts[0], dtype=np.float64, copy=True)
        for p in parts[1:]:
            out += p
        return out

    def _check_completeness(self, shape):
        rng = np.random.default_rng(_PROBE_SEED)
        for _ in range(3):
            x = rng.standard_normal(shape)
            err = np.max(np.abs(self.recompose(self.apply(x)) - x))
            if err > 1e-5:
                raise ValueError(
                    f"components do not sum to the identity (max error {err:.3e})"
                )

    def __repr__(self):
        return f"Decomposition({self.labels})"


def make_hybrid(sigma: float, ksize: int = DEFAULT_KERNEL_SIZE) -> Decomposition:
    """Two-band split: high = x - blur(x), low = blur(x)."""
    k = gaussian_kernel(sigma, ksize)
    high = Component("high", lambda x: x - _sep_blur(x, k), display="minmax")
    low = Component("low", lambda x: _sep_blur(x, k))
    return Decomposition([high, low])


def make_triple(sigma1: float, sigma2: float, ksize: int = DEFAULT_KERNEL_SIZE) -> Decomposition:
    """Three-band split via two cascaded blurs (a short two-level pyramid).

    high = x - B1(x); med = B1(x) - B2(B1(x)); low = B2(B1(x)).
    """
    k1 = gaussian_kernel(sigma1, ksize)
    k2 = gaussian_kernel(sigma2, ksize)
    high = Component("high", lambda x: x - _sep_blur(x, k1), display="minmax")
    med = Component(
        "med", lambda x: _sep_blur(x, k1) - _sep_blur(_sep_blur(x, k1), k2), display="minmax"
    )
    low = Component("low", lambda x: _sep_blur(_sep_blur(x, k1), k2))
    return Decomposition([high, med, low])


def _channel_mean(x: np.ndarray) -> np.ndarray:
    if x.shape[0] != 3:
        raise ValueError(f"gray/color decomposition needs 3 channels, got {x.shape[0]}")
    return np.broadcast_to(x.mean(axis=0, keepdims=True), x.shape).copy()


def make_gray_color() -> Decomposition:
    """Grayscale/color split: gray replicates the channel mean, color is the residual."""
    gray = Component("gray", _channel_mean)
    color = Component("color", lambda x: x - _channel_mean(x), display="minmax")
    return Decomposition([gray, color])


def make_motion(kernel=None, k: int = 29) -> Decomposition:
    """Blur-kernel split: motion = kernel * x, residual = x - motion.

    Defaults to the normalized k x k diagonal-line kernel (k = 29).
    """
    kernel = diagonal_kernel(k) if kernel is None else np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
        raise ValueError(f"kernel must be 2-D with odd side lengths, got {kernel.shape}")
    if np.any(kernel < 0):
        raise ValueError("kernel entries must be non-negative")
    total = kernel.sum()
    if abs(total - 1.0) > 1e-8:
        raise ValueError(f"kernel must be normalized to sum 1, got sum {total}")
    motion = Component("motion", lambda x: convolve2d(x, kernel))
    residual = Component("residual", lambda x: x - convolve2d(x, kernel), display="minmax")
    return Decomposition([motion, residual])


def make_spatial(masks, labels=None) -> Decomposition:
    """Disjoint binary masks: component i is m_i * x, broadcast over channels."""
    masks = [np.asarray(m, dtype=np.float64) for m in masks]
    if not masks:
        raise ValueError("at least one mask is required")
    shape = masks[0].shape
    for i, m in enumerate(masks):
        if m.ndim != 2 or m.shape != shape:
            raise ValueError(f"mask {i} has shape {m.shape}, expected {shape}")
        if not np.all((m == 0.0) | (m == 1.0)):
            raise ValueError(f"mask {i} is not binary")
    total = sum(masks)
    bad = np.argwhere(total != 1.0)
    if len(bad):
        r, c = (int(v) for v in bad[0])
        problem = "overlap" if total[r, c] > 1.0 else "uncovered pixel"
        raise ValueError(f"masks must tile the image exactly: {problem} at (row {r}, col {c})")
    if labels is None:
        labels = [f"region{i}" for i in range(len(masks))]
    if len(labels) != len(masks):
        raise ValueError(f"got {len(labels)} labels for {len(masks)} masks")

    def masked(m):
        return lambda x: m[None, :, :] * x

    comps = [Component(lab, masked(m)) for lab, m in zip(labels, masks)]
    return Decomposition(comps, check_shape=(3, *shape))


def make_scaling(weights, labels=None) -> Decomposition:
    """Scalar-weight split: component i is a_i * x, with the weights summing to 1.

    Weights are normalized by their sum; negative entries are allowed (the
    pair (1 - g, g) reproduces guidance-style extrapolation).
    """
    w = np.asarray(list(weights), dtype=np.float64)
    if w.size == 0:
        raise ValueError("at least one weight is required")
    total = w.sum()
    if abs(total) < 1e-12:
        raise ValueError("weights sum to zero and cannot be normalized")
    w = w / total
    if labels is None:
        labels = [f"term{i}" for i in range(w.size)]
    if len(labels) != w.size:
        raise ValueError(f"got {len(labels)} labels for {w.size} weights")

    def scaled(a):
        return lambda x: a * x

    comps = [Component(lab, scaled(float(a))) for lab, a in zip(labels, w)]
    return Decomposition(comps)


def _load_mask(path) -> np.ndarray:
    img = load_image(path)
    return (img.mean(axis=0) > 0.0).astype(np.float64)


def decomposition_from_config(config: dict, *, sigma_scale: float = 1.0, base_dir=None) -> Decomposition:
    """Build a decomposition from its JSON description.

    sigma_scale converts base-resolution sigmas to the run resolution; mask
    paths are resolved relative to base_dir.
    """
    if not isinstance(config, dict) or "kind" not in config:
        raise ValueError(f"decomposition config must be an object with a 'kind', got {config!r}")
    kind = config["kind"]
    ksize = int(config.get("ksize", DEFAULT_KERNEL_SIZE))
    if kind == "hybrid":
        return make_hybrid(float(config.get("sigma", 2.0)) * sigma_scale, ksize)
    if kind == "triple":
        return make_triple(
            float(config.get("sigma1", 0.8)) * sigma_scale,
            float(config.get("sigma2", 1.6)) * sigma_scale,
            ksize,
        )
    if kind == "gray_color":
        return make_gray_color()
    if kind == "motion":
        if "kernel" in config and config["kernel"] != "diag":
            return make_motion(np.asarray(config["kernel"], dtype=np.float64))
        return make_motion(k=int(config.get("k", 29)))
    if kind == "spatial":
        paths = config.get("masks")
        if not isinstance(paths, list) or not paths:
            raise ValueError("spatial decomposition needs a non-empty 'masks' list of PNG paths")
        resolved = [os.path.join(base_dir, p) if base_dir else p for p in paths]
        return make_spatial([_load_mask(p) for p in resolved])
    if kind == "scaling":
        return make_scaling(config.get("weights", []))
    raise ValueError(
        f"unknown decomposition kind {kind!r}; expected one of "
        "hybrid, triple, gray_color, motion, spatial, scaling"
    )
