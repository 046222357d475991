"""Variance schedules for the forward noising process and reverse updates."""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["Schedule"]


class Schedule:
    """Cumulative signal-retention coefficients alpha_bar, indexed t = 0..T.

    alpha_bar[0] is exactly 1 (clean data); values decrease strictly in t.
    timesteps maps each index to the timestep of the model the schedule was
    derived from, so subsampled schedules still address the original range.
    """

    def __init__(self, alpha_bar, timesteps=None):
        a = np.asarray(alpha_bar, dtype=np.float64)
        if a.ndim != 1 or a.size < 2:
            raise ValueError("alpha_bar must be a 1-D array with at least 2 entries")
        if not np.isfinite(a).all():
            raise ValueError("alpha_bar contains non-finite values")
        if abs(a[0] - 1.0) > 1e-12:
            raise ValueError(f"alpha_bar[0] must be 1.0, got {a[0]}")
        a = a.copy()
        a[0] = 1.0
        if np.any(a <= 0.0) or np.any(a > 1.0):
            raise ValueError("alpha_bar values must lie in (0, 1]")
        diffs = np.diff(a)
        if np.any(diffs >= 0.0):
            idx = int(np.argmax(diffs >= 0.0)) + 1
            raise ValueError(f"alpha_bar must be strictly decreasing; violation at index {idx}")
        self._abar = a
        if timesteps is None:
            timesteps = np.arange(a.size)
        ts = np.asarray(timesteps, dtype=np.int64)
        if ts.shape != a.shape or ts[0] != 0 or np.any(np.diff(ts) <= 0):
            raise ValueError("timesteps must be strictly increasing, start at 0, match alpha_bar")
        self._timesteps = ts
        self._abar.setflags(write=False)
        self._timesteps.setflags(write=False)

    @classmethod
    def linear_beta(cls, T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> "Schedule":
        """Linear per-step noise rates; the usual pixel-diffusion default."""
        if T < 1:
            raise ValueError(f"T must be >= 1, got {T}")
        betas = np.linspace(beta_start, beta_end, T)
        abar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        return cls(abar)

    @classmethod
    def from_alphas(cls, alphas_cumprod) -> "Schedule":
        """Build from served alpha_bar values for t = 1..T (index 0 is prepended)."""
        a = np.asarray(alphas_cumprod, dtype=np.float64)
        if a.ndim != 1 or a.size < 1:
            raise ValueError("alphas_cumprod must be a non-empty 1-D array")
        return cls(np.concatenate([[1.0], a]))

    @property
    def T(self) -> int:
        return self._abar.size - 1

    @property
    def alphas(self) -> np.ndarray:
        """alpha_bar for t = 0..T (read-only view)."""
        return self._abar

    @property
    def timesteps(self) -> np.ndarray:
        return self._timesteps

    def alpha_bar(self, t: int) -> float:
        if not 0 <= t <= self.T:
            raise ValueError(f"timestep {t} outside schedule range 0..{self.T}")
        return float(self._abar[t])

    def sigma_z(self, t: int) -> float:
        """Posterior noise scale for the stochastic t -> t-1 update (0 at t = 1)."""
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside update range 1..{self.T}")
        abar_t = self._abar[t]
        abar_prev = self._abar[t - 1]
        beta_t = 1.0 - abar_t / abar_prev
        var = (1.0 - abar_prev) / (1.0 - abar_t) * beta_t
        return float(np.sqrt(max(var, 0.0)))

    def subsample(self, steps: int) -> "Schedule":
        """Uniform-stride subschedule with the given number of update steps."""
        if not 1 <= steps <= self.T:
            raise ValueError(f"steps must be in 1..{self.T}, got {steps}")
        if steps == self.T:
            return self
        idx = np.round(np.linspace(0, self.T, steps + 1)).astype(np.int64)
        return Schedule(self._abar[idx], self._timesteps[idx])

    def digest(self) -> str:
        """Stable hex digest of the schedule contents (for run manifests)."""
        h = hashlib.sha256()
        h.update(self._abar.tobytes())
        h.update(self._timesteps.tobytes())
        return h.hexdigest()

    def __repr__(self):
        return f"Schedule(T={self.T}, alpha_bar_T={self._abar[-1]:.3e})"
