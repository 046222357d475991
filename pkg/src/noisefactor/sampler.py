"""Reverse-process updates and the component-conditioned sampling loops.

The sampler denoises with a composite noise estimate: at each step the
predictor is queried once per condition, the decomposition picks component i
from estimate i, and their sum drives an ordinary DDIM or DDPM update. An
inverse mode additionally pins one component to a reference image by
projecting the state after every update.

Random streams are drawn from numpy's default generator seeded with the run
seed, in a fixed order: the initial noise image first, then per update step
the DDPM noise z (ddpm runs only) followed by the projection noise (inverse
runs only). Given the same seed, predictor, and config, ddim runs are
bit-reproducible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .decomp import Decomposition
from .schedule import Schedule
from .tensor import check_image

__all__ = [
    "Condition",
    "SamplerConfig",
    "NoisePredictor",
    "PredictorError",
    "ddim_coefficients",
    "ddim_update",
    "ddpm_update",
    "composite_noise",
    "sample_factorized",
    "project_component",
    "sample_inverse",
]


class PredictorError(RuntimeError):
    """A noise predictor failed mid-run; the message carries the step index."""


@dataclass(frozen=True)
class Condition:
    """Conditioning for one component: a prompt or mixture id, plus guidance weight."""

    payload: str
    guidance: float = 1.0
    label: str = ""

    def __post_init__(self):
        if self.guidance < 0:
            raise ValueError(f"guidance must be >= 0, got {self.guidance}")


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = 100
    kind: str = "ddim"
    seed: int = 0
    resolution: tuple[int, int] = (64, 64)
    channels: int = 3

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.kind not in ("ddim", "ddpm"):
            raise ValueError(f"sampler kind must be 'ddim' or 'ddpm', got {self.kind!r}")
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        if len(self.resolution) != 2 or min(self.resolution) < 1:
            raise ValueError(f"resolution must be (H, W) with positive sizes, got {self.resolution}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.channels, *self.resolution)


class NoisePredictor(Protocol):
    """Produces one noise estimate per condition for the state x_t at step t."""

    def predict(
        self, x_t: np.ndarray, t: int, schedule: Schedule, conds: Sequence[Condition]
    ) -> list[np.ndarray]: ...


def ddim_coefficients(t: int, schedule: Schedule) -> tuple[float, float]:
    """Coefficients (x_coef, eps_coef) of the deterministic update at step t."""
    abar_t = schedule.alpha_bar(t)
    abar_prev = schedule.alpha_bar(t - 1)
    if abar_t <= 0.0:
        raise ValueError(f"schedule has alpha_bar <= 0 at step {t}")
    x_coef = np.sqrt(abar_prev / abar_t)
    eps_coef = np.sqrt(1.0 - abar_prev) - np.sqrt(1.0 - abar_t) * x_coef
    return float(x_coef), float(eps_coef)


def _check_pair(x_t: np.ndarray, eps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x_t = check_image(x_t, "x_t")
    eps = check_image(eps, "eps")
    if x_t.shape != eps.shape:
        raise ValueError(f"x_t and eps shapes differ: {x_t.shape} vs {eps.shape}")
    return x_t, eps


def ddim_update(x_t, eps, t: int, schedule: Schedule) -> np.ndarray:
    """Deterministic reverse step x_coef * x_t + eps_coef * eps."""
    x_t, eps = _check_pair(x_t, eps)
    if t < 1:
        raise ValueError(f"updates run from t >= 1, got {t}")
    x_coef, eps_coef = ddim_coefficients(t, schedule)
    return x_coef * x_t + eps_coef * eps


def ddpm_update(x_t, eps, t: int, schedule: Schedule, z) -> np.ndarray:
    """Ancestral reverse step: deterministic mean plus sigma_z * z.

    z is the caller's standard normal draw (zeros at the final step).
    """
    x_t, eps = _check_pair(x_t, eps)
    if t < 1:
        raise ValueError(f"updates run from t >= 1, got {t}")
    z = check_image(z, "z")
    abar_t = schedule.alpha_bar(t)
    abar_prev = schedule.alpha_bar(t - 1)
    if abar_t <= 0.0:
        raise ValueError(f"schedule has alpha_bar <= 0 at step {t}")
    alpha_t = abar_t / abar_prev
    beta_t = 1.0 - alpha_t
    mean = (x_t - beta_t / np.sqrt(1.0 - abar_t) * eps) / np.sqrt(alpha_t)
    return mean + schedule.sigma_z(t) * z


def composite_noise(decomp: Decomposition, eps_list: Sequence[np.ndarray]) -> np.ndarray:
    """Assemble the composite estimate: component i taken from estimate i."""
    if len(eps_list) != decomp.n:
        raise ValueError(f"got {len(eps_list)} noise estimates for {decomp.n} components")
    out = decomp.components[0](eps_list[0])
    for comp, eps in zip(decomp.components[1:], eps_list[1:]):
        out = out + comp(eps)
    return out


def _predict(predictor, x, t, schedule, conds, n):
    try:
        eps_list = predictor.predict(x, t, schedule, conds)
    except Exception as exc:
        raise PredictorError(
            f"noise prediction failed at step {t} (model t={int(schedule.timesteps[t])}): {exc}"
        ) from exc
    if len(eps_list) != n:
        raise PredictorError(f"predictor returned {len(eps_list)} estimates for {n} conditions")
    for eps in eps_list:
        if np.shape(eps) != x.shape:
            raise PredictorError(
                f"predictor returned shape {np.shape(eps)} for state shape {x.shape}"
            )
    return eps_list


def sample_factorized(
    predictor: NoisePredictor,
    decomp: Decomposition,
    conds: Sequence[Condition],
    config: SamplerConfig,
    schedule: Schedule,
    on_step=None,
) -> np.ndarray:
    """Run the reverse process with one condition driving each component.

    Returns the final sample x_0. on_step(step, seconds) is called after each
    update (steps count down to 1).
    """
    if len(conds) != decomp.n:
        raise ValueError(
            f"need exactly one condition per component: got {len(conds)} conditions "
            f"for components {decomp.labels}"
        )
    sub = schedule.subsample(config.steps)
    rng = np.random.default_rng(config.seed)
    x = rng.standard_normal(config.shape)
    for t in range(sub.T, 0, -1):
        started = time.perf_counter()
        eps_list = _predict(predictor, x, t, sub, conds, decomp.n)
        eps = composite_noise(decomp, eps_list)
        if config.kind == "ddim":
            x = ddim_update(x, eps, t, sub)
        else:
            z = rng.standard_normal(x.shape) if t > 1 else np.zeros_like(x)
            x = ddpm_update(x, eps, t, sub, z)
        if on_step is not None:
            on_step(t, time.perf_counter() - started)
    return x


def project_component(
    x_t, x_ref, decomp: Decomposition, fixed: int, t: int, schedule: Schedule, eps
) -> np.ndarray:
    """Replace component `fixed` of x_t with that of a forward-noised reference.

    The reference is noised to the level of timestep t; eps is the caller's
    standard normal draw (zeros at t = 0, where the noise level vanishes).
    """
    x_t = check_image(x_t, "x_t")
    x_ref = check_image(x_ref, "x_ref")
    eps = check_image(eps, "eps")
    if x_t.shape != x_ref.shape or x_t.shape != eps.shape:
        raise ValueError(
            f"shape mismatch: x_t {x_t.shape}, x_ref {x_ref.shape}, eps {eps.shape}"
        )
    if not 0 <= fixed < decomp.n:
        raise ValueError(f"fixed component {fixed} out of range for {decomp.labels}")
    abar = schedule.alpha_bar(t)
    noised_ref = np.sqrt(abar) * x_ref + np.sqrt(1.0 - abar) * eps
    out = decomp.components[fixed](noised_ref)
    for i, comp in enumerate(decomp.components):
        if i != fixed:
            out = out + comp(x_t)
    return out


def sample_inverse(
    predictor: NoisePredictor,
    decomp: Decomposition,
    conds: Sequence[Condition],
    x_ref,
    fixed: int,
    config: SamplerConfig,
    schedule: Schedule,
    on_step=None,
) -> np.ndarray:
    """Factorized sampling with component `fixed` pinned to the reference image.

    The state is projected after every update; the final projection at t = 0
    uses zero noise so the fixed slot carries the clean reference component.
    """
    if len(conds) != decomp.n:
        raise ValueError(
            f"need exactly one condition per component: got {len(conds)} conditions "
            f"for components {decomp.labels}"
        )
    x_ref = check_image(x_ref, "x_ref")
    if x_ref.shape != config.shape:
        raise ValueError(f"x_ref shape {x_ref.shape} does not match run shape {config.shape}")
    if not 0 <= fixed < decomp.n:
        raise ValueError(f"fixed component {fixed} out of range for {decomp.labels}")
    sub = schedule.subsample(config.steps)
    rng = np.random.default_rng(config.seed)
    x = rng.standard_normal(config.shape)
    for t in range(sub.T, 0, -1):
        started = time.perf_counter()
        eps_list = _predict(predictor, x, t, sub, conds, decomp.n)
        eps = composite_noise(decomp, eps_list)
        if config.kind == "ddim":
            x = ddim_update(x, eps, t, sub)
        else:
            z = rng.standard_normal(x.shape) if t > 1 else np.zeros_like(x)
            x = ddpm_update(x, eps, t, sub, z)
        proj_eps = rng.standard_normal(x.shape) if t > 1 else np.zeros_like(x)
        x = project_component(x, x_ref, decomp, fixed, t - 1, sub, proj_eps)
        if on_step is not None:
            on_step(t, time.perf_counter() - started)
    return x
