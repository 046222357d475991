"""Prompt-alignment sweep across blur strengths.

An image is scored against a prompt after being downsampled and restored at
a range of factors; the report keeps every score and the maximum, since the
best viewing scale differs from image to image. The scorer is any object
with embed_image / embed_text returning unit vectors.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .tensor import check_image, resample

__all__ = ["SCORE_RESOLUTION", "ScorerError", "SweepReport", "sweep_factors", "blur_sweep"]

SCORE_RESOLUTION = 224  # scorer-side input size


class ScorerError(RuntimeError):
    """Scoring failed; the message carries the blur factor being evaluated."""


def sweep_factors(count: int = 20, lo: float = 1.0, hi: float = 8.0) -> np.ndarray:
    """Default factor grid: a linear sweep of `count` values from lo to hi."""
    return np.linspace(lo, hi, count)


@dataclass(frozen=True)
class SweepReport:
    prompt: str
    factors: tuple[float, ...]
    scores: tuple[float, ...]

    def __post_init__(self):
        if len(self.factors) != len(self.scores):
            raise ValueError("factors and scores must have equal length")
        if not self.factors:
            raise ValueError("a report needs at least one factor")

    @property
    def max_score(self) -> float:
        return max(self.scores)

    @property
    def argmax_factor(self) -> float:
        # ties break toward the smallest factor
        best = self.max_score
        for f, s in zip(self.factors, self.scores):
            if s == best:
                return f
        raise AssertionError("unreachable")

    def to_json(self) -> str:
        return json.dumps(
            {
                "prompt": self.prompt,
                "factors": list(self.factors),
                "scores": list(self.scores),
                "max_score": self.max_score,
                "argmax_factor": self.argmax_factor,
            },
            indent=2,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["factor", "score"])
        for f, s in zip(self.factors, self.scores):
            writer.writerow([repr(f), repr(s)])
        return buf.getvalue()


def blur_sweep(x, prompt: str, scorer, factors=None) -> SweepReport:
    """Score the image against the prompt at each downsampling factor.

    Per factor f: downsample by f (rounded sizes, floor 1 px), upsample back,
    resize to the scorer resolution, then take the dot product of the image
    and text embeddings.
    """
    x = check_image(x)
    factors = sweep_factors() if factors is None else np.asarray(factors, dtype=np.float64)
    if factors.size == 0 or np.any(factors < 1.0):
        raise ValueError("factors must be a non-empty list of values >= 1")
    h, w = x.shape[1:]
    try:
        text_vec = scorer.embed_text(prompt)
    except Exception as exc:
        raise ScorerError(f"text embedding failed for prompt {prompt!r}: {exc}") from exc
    scores = []
    for f in factors:
        try:
            th = max(1, int(round(h / f)))
            tw = max(1, int(round(w / f)))
            restored = resample(resample(x, th, tw), h, w)
            scaled = resample(restored, SCORE_RESOLUTION, SCORE_RESOLUTION)
            img_vec = scorer.embed_image(scaled)
            scores.append(float(np.dot(img_vec, text_vec)))
        except ScorerError:
            raise
        except Exception as exc:
            raise ScorerError(f"scoring failed at factor {f:g}: {exc}") from exc
    return SweepReport(prompt=prompt, factors=tuple(float(f) for f in factors), scores=tuple(scores))
