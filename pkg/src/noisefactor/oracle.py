"""Closed-form noise prediction for Gaussian-mixture data.

With an isotropic Gaussian mixture as the data distribution, the minimum
mean-square-error noise estimate has a closed form, so the whole sampling
stack can be verified end to end without any learned model. Mixture weights
are handled in the log domain to stay stable at high noise levels.
"""

from __future__ import annotations

import os
from typing import Sequence

import numpy as np

from .sampler import Condition
from .schedule import Schedule
from .tensor import check_image, load_image, resample

__all__ = [
    "Mixture",
    "posterior_x0",
    "predict_noise",
    "sample_data",
    "OraclePredictor",
    "mixtures_from_config",
]


class Mixture:
    """Isotropic Gaussian mixture over image tensors.

    weights: (K,) non-negative, summing to 1 (normalized on construction).
    means: (K, C, H, W). variances: (K,) positive per-component variances.
    """

    def __init__(self, weights, means, variances):
        w = np.asarray(weights, dtype=np.float64)
        mu = np.asarray(means, dtype=np.float64)
        var = np.asarray(variances, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-D array")
        if np.any(w < 0) or not np.isfinite(w).all():
            raise ValueError("weights must be finite and non-negative")
        total = w.sum()
        if total <= 0:
            raise ValueError("weights must have a positive sum")
        if mu.ndim != 4 or mu.shape[0] != w.size:
            raise ValueError(f"means must have shape (K, C, H, W) with K={w.size}, got {mu.shape}")
        if var.shape != w.shape or np.any(var <= 0):
            raise ValueError("variances must be positive, one per component")
        self.weights = w / total
        self.means = mu
        self.variances = var

    @classmethod
    def single(cls, mean, variance: float = 1.0) -> "Mixture":
        mean = check_image(mean, "mean")
        return cls([1.0], mean[None], [variance])

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.means.shape[1:]

    def mean(self) -> np.ndarray:
        return np.einsum("k,kchw->chw", self.weights, self.means)


def posterior_x0(mixture: Mixture, x_t, abar: float) -> np.ndarray:
    """Posterior mean E[x_0 | x_t] at signal level alpha_bar = abar."""
    x_t = check_image(x_t, "x_t")
    if not 0.0 < abar <= 1.0:
        raise ValueError(f"alpha_bar must lie in (0, 1], got {abar}")
    if x_t.shape != mixture.shape:
        raise ValueError(f"x_t shape {x_t.shape} does not match mixture shape {mixture.shape}")
    s2 = mixture.variances
    denom = abar * s2 + (1.0 - abar)  # (K,)
    sqrt_abar = np.sqrt(abar)
    # per-component posterior means, (K, C, H, W)
    mu_hat = (
        (1.0 - abar) * mixture.means + (sqrt_abar * s2)[:, None, None, None] * x_t[None]
    ) / denom[:, None, None, None]
    # log responsibilities via the marginal likelihood of x_t
    diff = x_t[None] - sqrt_abar * mixture.means
    sq = np.sum(diff * diff, axis=(1, 2, 3))  # (K,)
    dim = x_t.size
    with np.errstate(divide="ignore"):
        log_w = np.log(mixture.weights)
    log_post = log_w - 0.5 * sq / denom - 0.5 * dim * np.log(denom)
    log_post -= log_post.max()
    post = np.exp(log_post)
    post /= post.sum()
    return np.einsum("k,kchw->chw", post, mu_hat)


def predict_noise(mixture: Mixture, x_t, t: int, schedule: Schedule) -> np.ndarray:
    """Exact noise estimate (x_t - sqrt(abar) E[x_0|x_t]) / sqrt(1 - abar)."""
    x_t = check_image(x_t, "x_t")
    abar = schedule.alpha_bar(t)
    if abar >= 1.0:
        return np.zeros_like(x_t)
    x0 = posterior_x0(mixture, x_t, abar)
    return (x_t - np.sqrt(abar) * x0) / np.sqrt(1.0 - abar)


def sample_data(mixture: Mixture, n: int, seed: int = 0) -> list[np.ndarray]:
    """Draw n i.i.d. samples from the mixture."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    picks = rng.choice(mixture.weights.size, size=n, p=mixture.weights)
    out = []
    for k in picks:
        noise = rng.standard_normal(mixture.shape)
        out.append(mixture.means[k] + np.sqrt(mixture.variances[k]) * noise)
    return out


class OraclePredictor:
    """Noise predictor backed by named mixtures; condition payloads select by name.

    The estimate is the exact conditional one, so guidance weights are not
    applied here (guidance reshapes learned predictors; the oracle has
    nothing to extrapolate).
    """

    def __init__(self, mixtures: dict[str, Mixture]):
        if not mixtures:
            raise ValueError("at least one named mixture is required")
        self.mixtures = dict(mixtures)

    def predict(self, x_t, t, schedule, conds: Sequence[Condition]):
        out = []
        for cond in conds:
            if cond.payload not in self.mixtures:
                raise ValueError(
                    f"unknown mixture {cond.payload!r}; known: {sorted(self.mixtures)}"
                )
            out.append(predict_noise(self.mixtures[cond.payload], x_t, t, schedule))
        return out


def _parse_mean(value, shape, base_dir) -> np.ndarray:
    c, h, w = shape
    if isinstance(value, (int, float)):
        return np.full(shape, float(value))
    if isinstance(value, str):
        path = os.path.join(base_dir, value) if base_dir else value
        img = load_image(path)
        if img.shape != tuple(shape):
            if img.shape[0] != c:
                if c == 3 and img.shape[0] == 1:
                    img = np.repeat(img, 3, axis=0)
                elif c == 1 and img.shape[0] == 3:
                    img = img.mean(axis=0, keepdims=True)
            img = resample(img, h, w)
        return img
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != tuple(shape):
        raise ValueError(f"inline mean has shape {arr.shape}, expected {tuple(shape)}")
    return arr


def mixtures_from_config(config, *, shape, base_dir=None) -> dict[str, Mixture]:
    """Parse named mixtures from config JSON.

    Accepts {"conditions": {name: [{"w", "mean", "var"}, ...]}} or the bare
    name -> components mapping. A mean may be a number (constant image), a
    PNG path, or an inline nested array.
    """
    if isinstance(config, dict) and "conditions" in config:
        config = config["conditions"]
    if not isinstance(config, dict) or not config:
        raise ValueError("mixture config must map names to component lists")
    out = {}
    for name, comps in config.items():
        if not isinstance(comps, list) or not comps:
            raise ValueError(f"mixture {name!r} must be a non-empty list of components")
        weights, means, variances = [], [], []
        for comp in comps:
            weights.append(float(comp.get("w", 1.0)))
            variances.append(float(comp.get("var", 1.0)))
            means.append(_parse_mean(comp.get("mean", 0.0), shape, base_dir))
        out[name] = Mixture(weights, np.stack(means), variances)
    return out
