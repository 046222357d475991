"""HTTP client for networked denoisers and embedding scorers.

Wire format: tensors travel as base64 of little-endian 32-bit floats in
row-major order. Request bodies are canonical JSON (sorted keys, compact
separators) so byte-level fixtures stay stable. Endpoints:

    GET  /v1/info           -> {"T", "alphas_cumprod", "resolution", "model"}
    POST /v1/predict_noise  -> {"epsilons": [b64, ...]} in request order
    POST /v1/embed_image    -> {"dim", "embedding"}
    POST /v1/embed_text     -> {"dim", "embedding"}

The endpoint URL can come from the FD_ENDPOINT environment variable and an
optional bearer token from FD_TOKEN.
"""

from __future__ import annotations

import base64
import binascii
import json
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import requests

from .sampler import Condition
from .schedule import Schedule
from .tensor import check_image

__all__ = [
    "RemoteError",
    "ProtocolError",
    "ServerError",
    "RemoteEndpoint",
    "RemoteClient",
    "canonical_json",
    "encode_f32",
    "decode_f32",
    "build_predict_request",
    "parse_predict_response",
    "build_embed_image_request",
    "build_embed_text_request",
    "parse_embed_response",
    "parse_info",
]

ENDPOINT_ENV = "FD_ENDPOINT"
TOKEN_ENV = "FD_TOKEN"


class RemoteError(RuntimeError):
    """Base class for remote-backend failures (network, server, protocol)."""


class ServerError(RemoteError):
    """The server answered with an HTTP error status; the body is echoed."""


class ProtocolError(RemoteError):
    """The server's reply does not follow the wire format."""


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def encode_f32(arr) -> str:
    """Encode an array as base64 of little-endian float32, row-major."""
    data = np.ascontiguousarray(arr, dtype="<f4")
    return base64.b64encode(data.tobytes()).decode("ascii")


def decode_f32(payload: str, shape) -> np.ndarray:
    """Decode a base64 float32 payload into a float64 array of the given shape."""
    try:
        raw = base64.b64decode(payload, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ProtocolError(f"invalid base64 tensor payload: {exc}") from exc
    expected = 4 * int(np.prod(shape))
    if len(raw) != expected:
        raise ProtocolError(
            f"tensor payload holds {len(raw)} bytes, expected {expected} for shape {tuple(shape)}"
        )
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)


def build_predict_request(x_t, t_model: int, conds: Sequence[Condition]) -> bytes:
    x_t = check_image(x_t, "x_t")
    body = {
        "shape": [int(s) for s in x_t.shape],
        "dtype": "f32le",
        "x_t": encode_f32(x_t),
        "t": int(t_model),
        "conditions": [
            {"prompt": c.payload, "guidance": float(c.guidance)} for c in conds
        ],
    }
    return canonical_json(body)


def parse_predict_response(data, shape, n_conds: int) -> list[np.ndarray]:
    if not isinstance(data, dict) or "epsilons" not in data:
        raise ProtocolError("predict_noise reply is missing 'epsilons'")
    eps = data["epsilons"]
    if not isinstance(eps, list) or len(eps) != n_conds:
        got = len(eps) if isinstance(eps, list) else type(eps).__name__
        raise ProtocolError(f"expected {n_conds} epsilons, got {got}")
    return [decode_f32(e, shape) for e in eps]


def build_embed_image_request(x) -> bytes:
    x = check_image(x, "image")
    body = {
        "shape": [int(s) for s in x.shape],
        "dtype": "f32le",
        "image": encode_f32(x),
    }
    return canonical_json(body)


def build_embed_text_request(text: str) -> bytes:
    return canonical_json({"text": str(text)})


def parse_embed_response(data) -> np.ndarray:
    if not isinstance(data, dict) or "embedding" not in data or "dim" not in data:
        raise ProtocolError("embedding reply must carry 'dim' and 'embedding'")
    vec = np.asarray(data["embedding"], dtype=np.float64)
    if vec.ndim != 1 or vec.size != int(data["dim"]):
        raise ProtocolError(
            f"embedding length {vec.size} does not match declared dim {data['dim']}"
        )
    if not np.isfinite(vec).all():
        raise ProtocolError("embedding contains non-finite values")
    return vec


def parse_info(data) -> tuple[Schedule, dict]:
    if not isinstance(data, dict):
        raise ProtocolError("info reply must be a JSON object")
    missing = [k for k in ("T", "alphas_cumprod", "resolution", "model") if k not in data]
    if missing:
        raise ProtocolError(f"info reply is missing {missing}")
    alphas = data["alphas_cumprod"]
    if not isinstance(alphas, list) or len(alphas) != int(data["T"]):
        got = len(alphas) if isinstance(alphas, list) else type(alphas).__name__
        raise ProtocolError(f"alphas_cumprod length {got} does not match T={data['T']}")
    schedule = Schedule.from_alphas(alphas)
    res = data["resolution"]
    if not isinstance(res, list) or len(res) != 3:
        raise ProtocolError(f"resolution must be [C, H, W], got {res!r}")
    meta = {"model": str(data["model"]), "resolution": tuple(int(v) for v in res)}
    return schedule, meta


@dataclass(frozen=True)
class RemoteEndpoint:
    base_url: str
    timeout: float = 60.0
    retries: int = 2
    token: str | None = None

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError(f"timeout must be positive, got {self.timeout}")
        if self.retries < 0:
            raise ValueError(f"retries must be >= 0, got {self.retries}")

    @classmethod
    def from_env(cls, url: str | None = None, **kwargs) -> "RemoteEndpoint":
        url = url or os.environ.get(ENDPOINT_ENV)
        if not url:
            raise ValueError(f"no endpoint URL given and {ENDPOINT_ENV} is not set")
        token = kwargs.pop("token", None) or os.environ.get(TOKEN_ENV)
        return cls(base_url=url, token=token, **kwargs)


class RemoteClient:
    """Client for the denoiser/scorer protocol; doubles as a NoisePredictor.

    Prediction requests are pure functions of their body, so retries after
    connection failures or 5xx replies are safe.
    """

    def __init__(self, endpoint: RemoteEndpoint):
        self.endpoint = endpoint
        self._session = requests.Session()
        self._embed_dim: int | None = None

    def _request(self, method: str, path: str, body: bytes | None = None):
        url = self.endpoint.base_url.rstrip("/") + path
        headers = {"Content-Type": "application/json"}
        if self.endpoint.token:
            headers["Authorization"] = f"Bearer {self.endpoint.token}"
        attempts = self.endpoint.retries + 1
        last_exc = None
        for attempt in range(attempts):
            try:
                resp = self._session.request(
                    method, url, data=body, headers=headers, timeout=self.endpoint.timeout
                )
            except requests.RequestException as exc:
                last_exc = exc
                continue
            if resp.status_code >= 500 and attempt + 1 < attempts:
                last_exc = ServerError(f"{path} returned {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise ServerError(
                    f"{path} returned {resp.status_code}: {resp.text[:500]}"
                )
            return resp
        raise RemoteError(f"cannot reach {url} after {attempts} attempt(s): {last_exc}")

    def _json(self, resp, path: str):
        try:
            return resp.json()
        except ValueError as exc:
            raise ProtocolError(f"{path} reply is not valid JSON: {exc}") from exc

    def fetch_info(self) -> tuple[Schedule, dict]:
        """Fetch the served schedule and model metadata from /v1/info."""
        resp = self._request("GET", "/v1/info")
        return parse_info(self._json(resp, "/v1/info"))

    def predict(self, x_t, t: int, schedule: Schedule, conds: Sequence[Condition]):
        """One batched round trip: all conditions together, replies in order."""
        x_t = check_image(x_t, "x_t")
        t_model = int(schedule.timesteps[t])
        body = build_predict_request(x_t, t_model, conds)
        resp = self._request("POST", "/v1/predict_noise", body)
        data = self._json(resp, "/v1/predict_noise")
        return parse_predict_response(data, x_t.shape, len(conds))

    def _embed(self, path: str, body: bytes) -> np.ndarray:
        resp = self._request("POST", path, body)
        vec = parse_embed_response(self._json(resp, path))
        if self._embed_dim is None:
            self._embed_dim = vec.size
        elif vec.size != self._embed_dim:
            raise ProtocolError(
                f"embedding dimension changed between calls: {self._embed_dim} -> {vec.size}"
            )
        return vec

    def embed_image(self, x) -> np.ndarray:
        return self._embed("/v1/embed_image", build_embed_image_request(x))

    def embed_text(self, text: str) -> np.ndarray:
        return self._embed("/v1/embed_text", build_embed_text_request(text))
