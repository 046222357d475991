import json
from pathlib import Path

import numpy as np
import pytest

from noisefactor.remote import (
    ProtocolError,
    RemoteClient,
    RemoteEndpoint,
    RemoteError,
    ServerError,
    build_embed_text_request,
    build_predict_request,
    decode_f32,
    encode_f32,
    parse_embed_response,
    parse_info,
    parse_predict_response,
)
from noisefactor.sampler import Condition
from noisefactor.schedule import Schedule

from wire_server import WireServer, sign_embedding

FIXTURES = Path(__file__).resolve().parent.parent / "protocol" / "fixtures"


def client_for(url, retries=0, timeout=5.0):
    return RemoteClient(RemoteEndpoint(base_url=url, retries=retries, timeout=timeout))


class TestCodec:
    def test_round_trip_bit_exact(self, rng):
        x = rng.standard_normal((3, 5, 7)).astype("<f4").astype(np.float64)
        payload = encode_f32(x)
        back = decode_f32(payload, (3, 5, 7))
        assert np.array_equal(back, x)
        assert encode_f32(back) == payload

    def test_length_mismatch_rejected(self, rng):
        payload = encode_f32(rng.standard_normal((1, 2, 2)))
        with pytest.raises(ProtocolError, match="bytes"):
            decode_f32(payload, (1, 2, 3))

    def test_invalid_base64_rejected(self):
        with pytest.raises(ProtocolError, match="base64"):
            decode_f32("!!!not-base64!!!", (1, 1, 1))


class TestGoldenFixtures:
    def test_predict_request_bytes(self):
        x = np.array([[[0.5, -0.25], [1.0, -1.0]]])
        body = build_predict_request(x, 5, [Condition("an oil painting of a cat", 7.5)])
        assert body == (FIXTURES / "predict_noise_request.json").read_bytes()

    def test_predict_response_parses_to_request_tensor(self):
        data = json.loads((FIXTURES / "predict_noise_response.json").read_bytes())
        (eps,) = parse_predict_response(data, (1, 2, 2), 1)
        assert np.array_equal(eps, np.array([[[0.5, -0.25], [1.0, -1.0]]]))

    def test_info_response_parses(self):
        data = json.loads((FIXTURES / "info_response.json").read_bytes())
        schedule, meta = parse_info(data)
        assert schedule.T == 8
        assert schedule.alpha_bar(8) == 0.01
        assert meta == {"model": "reference-shim/echo", "resolution": (1, 2, 2)}

    def test_embed_text_request_bytes(self):
        body = build_embed_text_request("a photo of a dog")
        assert body == (FIXTURES / "embed_text_request.json").read_bytes()

    def test_embed_text_response_parses(self):
        data = json.loads((FIXTURES / "embed_text_response.json").read_bytes())
        vec = parse_embed_response(data)
        assert np.array_equal(vec, [0.5, 0.5, 0.5, -0.5])
        assert vec @ vec == 1.0

    def test_reference_embedding_of_scoring_input(self):
        # shared frozen value: constant 0.5 image at the scorer resolution
        img = np.full((3, 224, 224), 0.5, dtype="<f4")
        assert sign_embedding(img.tobytes()) == [-0.5, -0.5, -0.5, 0.5]


class TestFetchInfo:
    def test_valid_info_becomes_schedule(self):
        with WireServer() as server:
            schedule, meta = client_for(server.url).fetch_info()
        assert isinstance(schedule, Schedule)
        assert schedule.T == 8
        assert meta["resolution"] == (1, 8, 8)

    def test_length_mismatch_is_protocol_error(self):
        info = {"T": 9, "alphas_cumprod": [0.9, 0.5], "resolution": [1, 8, 8], "model": "x"}
        with WireServer(info=info) as server:
            with pytest.raises(ProtocolError, match="does not match T"):
                client_for(server.url).fetch_info()

    def test_non_monotone_alphas_name_the_index(self):
        info = {
            "T": 4,
            "alphas_cumprod": [0.9, 0.5, 0.6, 0.1],
            "resolution": [1, 8, 8],
            "model": "x",
        }
        with WireServer(info=info) as server:
            with pytest.raises(ValueError, match="index 3"):
                client_for(server.url).fetch_info()

    def test_missing_fields_is_protocol_error(self):
        with WireServer(info={"T": 4}) as server:
            with pytest.raises(ProtocolError, match="missing"):
                client_for(server.url).fetch_info()


class TestPredictNoise:
    def test_echo_round_trip_bit_exact(self, rng):
        x = rng.standard_normal((1, 8, 8))
        with WireServer() as server:
            client = client_for(server.url)
            schedule, _ = client.fetch_info()
            (eps,) = client.predict(x, 3, schedule, [Condition("anything")])
        assert np.array_equal(eps, x.astype("<f4").astype(np.float64))

    def test_three_conditions_in_declared_order(self, rng):
        x = rng.standard_normal((1, 8, 8))
        with WireServer(shift=1.0) as server:
            client = client_for(server.url)
            schedule, _ = client.fetch_info()
            eps = client.predict(
                x, 2, schedule, [Condition("a"), Condition("b"), Condition("c")]
            )
        assert len(eps) == 3
        x32 = x.astype("<f4")
        for i in range(3):
            expected = (x32 + np.float32(i)).astype(np.float64)
            assert np.array_equal(eps[i], expected)

    def test_truncated_payload_is_protocol_error(self, rng):
        with WireServer(truncate_payload=True) as server:
            client = client_for(server.url)
            schedule, _ = client.fetch_info()
            with pytest.raises(ProtocolError, match="bytes"):
                client.predict(rng.standard_normal((1, 8, 8)), 1, schedule, [Condition("a")])

    def test_sends_model_timestep_from_subsampled_schedule(self, rng):
        # the wire carries the original model timestep, not the loop index
        info = dict(
            T=8,
            alphas_cumprod=[0.99, 0.9, 0.75, 0.5, 0.3, 0.15, 0.05, 0.01],
            resolution=[1, 4, 4],
            model="echo",
        )
        seen = {}

        class Spy(RemoteClient):
            def _request(self, method, path, body=None):
                if body is not None:
                    seen["t"] = json.loads(body)["t"]
                return super()._request(method, path, body)

        with WireServer(info=info) as server:
            client = Spy(RemoteEndpoint(server.url, retries=0, timeout=5.0))
            schedule, _ = client.fetch_info()
            sub = schedule.subsample(2)
            client.predict(rng.standard_normal((1, 4, 4)), 1, sub, [Condition("a")])
        assert seen["t"] == int(sub.timesteps[1])


class TestFailures:
    def test_unreachable_host_raises_remote_error(self):
        client = client_for("http://127.0.0.1:9", retries=1, timeout=0.5)
        with pytest.raises(RemoteError, match="cannot reach"):
            client.fetch_info()

    def test_http_error_body_is_echoed(self, rng):
        with WireServer() as server:
            client = client_for(server.url)
            with pytest.raises(ServerError, match="no such path"):
                client._request("POST", "/v1/unknown", b"{}")

    def test_5xx_retried_then_succeeds(self, rng):
        x = rng.standard_normal((1, 8, 8))
        with WireServer(fail_first=1) as server:
            client = client_for(server.url, retries=2)
            schedule, _ = client.fetch_info()
            (eps,) = client.predict(x, 1, schedule, [Condition("a")])
        assert np.array_equal(eps, x.astype("<f4").astype(np.float64))

    def test_5xx_exhausts_retries(self, rng):
        with WireServer(fail_first=10) as server:
            client = client_for(server.url, retries=1)
            schedule, _ = client.fetch_info()
            with pytest.raises(RemoteError):
                client.predict(rng.standard_normal((1, 8, 8)), 1, schedule, [Condition("a")])


class TestEmbeddings:
    def test_unit_norm_and_determinism(self, rng):
        x = rng.standard_normal((3, 224, 224))
        with WireServer() as server:
            client = client_for(server.url)
            a = client.embed_image(x)
            b = client.embed_image(x)
            t1 = client.embed_text("hello")
            t2 = client.embed_text("hello")
        assert abs(np.linalg.norm(a) - 1.0) <= 1e-4
        assert np.array_equal(a, b)
        assert np.array_equal(t1, t2)

    def test_dimension_change_is_protocol_error(self):
        with WireServer(embed_dims=(4, 8)) as server:
            client = client_for(server.url)
            client.embed_text("first")
            with pytest.raises(ProtocolError, match="dimension changed"):
                client.embed_text("second")

    def test_endpoint_from_env(self, monkeypatch):
        monkeypatch.setenv("FD_ENDPOINT", "http://example.test:9000")
        monkeypatch.setenv("FD_TOKEN", "sekret")
        ep = RemoteEndpoint.from_env()
        assert ep.base_url == "http://example.test:9000"
        assert ep.token == "sekret"

    def test_missing_env_endpoint_rejected(self, monkeypatch):
        monkeypatch.delenv("FD_ENDPOINT", raising=False)
        with pytest.raises(ValueError, match="FD_ENDPOINT"):
            RemoteEndpoint.from_env()
