import base64
import json
import math

import pytest
import requests

from textgrasp.client import (
    MAX_IMAGE_BYTES,
    ApiError,
    ConfigError,
    EndpointConfig,
    ImageTooLargeError,
    ModelClient,
    RefinementSession,
    TransportError,
    Turn,
    export_training_config,
    load_session,
    new_session,
    refine,
    save_session,
    write_training_config,
)
from textgrasp.geometry import GraspPose


class FakeResponse:
    def __init__(self, status_code=200, content="ok", body=None, text=""):
        self.status_code = status_code
        self._body = body if body is not None else {
            "choices": [{"message": {"content": content}}]}
        self.text = text

    def json(self):
        return self._body


class FakeHttp:
    """Stands in for requests.Session; replays a scripted outcome list."""

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.requests = []

    def post(self, url, headers=None, json=None, timeout=None):
        self.requests.append({"url": url, "headers": headers, "json": json,
                              "timeout": timeout})
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


def make_client(outcomes, **cfg_kwargs):
    cfg = EndpointConfig(base_url="http://model.example/v1", api_key="sk-secret",
                         model_name="vlm-7b", **cfg_kwargs)
    http = FakeHttp(outcomes)
    return ModelClient(cfg, backoff_base=0.0, session=http), http


class TestPredict:
    def test_payload_shape_and_reply(self):
        client, http = make_client([FakeResponse(content="The grasp pose is {0.5, 0.5, 0.0}.")])
        reply = client.predict(b"\x89PNGimage", "Grasp the cup.")
        assert reply == "The grasp pose is {0.5, 0.5, 0.0}."
        req = http.requests[0]
        assert req["url"] == "http://model.example/v1/chat/completions"
        assert req["headers"]["Authorization"] == "Bearer sk-secret"
        payload = req["json"]
        assert payload["model"] == "vlm-7b"
        assert payload["temperature"] == 0.0
        content = payload["messages"][0]["content"]
        assert content[0] == {"type": "text", "text": "Grasp the cup."}
        b64 = base64.b64encode(b"\x89PNGimage").decode()
        assert content[1]["image_url"]["url"] == f"data:image/png;base64,{b64}"

    def test_retry_then_success(self):
        client, http = make_client([
            requests.ConnectionError("down"),
            FakeResponse(status_code=503, text="busy"),
            FakeResponse(content="hello"),
        ])
        assert client.predict(b"img", "x") == "hello"
        assert len(http.requests) == 3

    def test_transport_error_after_retries(self):
        client, http = make_client([requests.ConnectionError("down")] * 3)
        with pytest.raises(TransportError) as err:
            client.predict(b"img", "x")
        assert err.value.attempts == 3
        assert len(http.requests) == 3

    def test_client_error_not_retried(self):
        client, http = make_client([FakeResponse(status_code=401, text="no key")])
        with pytest.raises(ApiError) as err:
            client.predict(b"img", "x")
        assert err.value.status_code == 401
        assert len(http.requests) == 1

    def test_oversized_image_rejected_client_side(self):
        client, http = make_client([])
        with pytest.raises(ImageTooLargeError, match=str(MAX_IMAGE_BYTES)):
            client.predict(b"x" * (MAX_IMAGE_BYTES + 1), "grasp")
        assert http.requests == []

    def test_content_parts_joined(self):
        body = {"choices": [{"message": {"content": [
            {"type": "text", "text": "part one "},
            {"type": "text", "text": "part two"},
        ]}}]}
        client, _ = make_client([FakeResponse(body=body)])
        assert client.complete("hi") == "part one part two"

    def test_malformed_body(self):
        client, _ = make_client([FakeResponse(body={"nope": 1})])
        with pytest.raises(ApiError):
            client.complete("hi")


class TestEndpointConfig:
    def test_from_env(self):
        env = {"RTG_ENDPOINT_URL": "http://h", "RTG_MODEL_NAME": "m", "RTG_API_KEY": "k"}
        cfg = EndpointConfig.from_env(env)
        assert (cfg.base_url, cfg.model_name, cfg.api_key) == ("http://h", "m", "k")

    def test_from_env_missing_names_variables(self):
        with pytest.raises(ConfigError, match="RTG_ENDPOINT_URL"):
            EndpointConfig.from_env({"RTG_MODEL_NAME": "m"})
        with pytest.raises(ConfigError, match="RTG_MODEL_NAME"):
            EndpointConfig.from_env({"RTG_ENDPOINT_URL": "http://h"})

    def test_api_key_hidden_from_repr(self):
        cfg = EndpointConfig(base_url="http://h", api_key="sk-secret", model_name="m")
        assert "sk-secret" not in repr(cfg)

    def test_validation(self):
        with pytest.raises(ConfigError):
            EndpointConfig(base_url="")
        with pytest.raises(ConfigError):
            EndpointConfig(base_url="http://h", timeout=0)


class TestRefinementSession:
    def test_new_session_first_turn_is_instruction(self, tmp_path):
        s = new_session("abc", tmp_path / "img.png", "Grasp the mug.")
        assert s.turns[0] == Turn("user", "Grasp the mug.")

    def test_refine_appends_user_and_assistant(self, tmp_path):
        img = tmp_path / "img.png"
        img.write_bytes(b"png")
        client, http = make_client([
            FakeResponse(content="initial {0.60, 0.40, 0.000}"),
            FakeResponse(content="ok, the handle: {0.30, 0.40, 1.000}"),
        ])
        session = new_session("s1", img, "Grasp the cup.")
        raw0 = client.predict(img.read_bytes(), "Grasp the cup.")
        from textgrasp.client import record_reply
        parsed0, session = record_reply(session, raw0)
        assert parsed0.pose == GraspPose(0.60, 0.40, 0.0)

        raw1, session2 = refine(client, session, "grasp the handle instead")
        assert "handle" in raw1
        assert len(session2.turns) == 4
        assert session2.turns[-1].pose == GraspPose(0.30, 0.40, 1.000)
        assert [t.role for t in session2.turns] == ["user", "assistant", "user", "assistant"]
        # history replayed with the image on the first user turn only
        replay = http.requests[-1]["json"]["messages"]
        assert isinstance(replay[0]["content"], list)
        assert all(isinstance(m["content"], str) for m in replay[1:])
        assert replay[-1] == {"role": "user", "content": "grasp the handle instead"}

    def test_refine_empty_session_rejected(self, tmp_path):
        client, _ = make_client([])
        empty = RefinementSession(session_id="x", image_path=str(tmp_path / "i.png"))
        with pytest.raises(ValueError):
            refine(client, empty, "hi")

    def test_refine_failure_leaves_session_unchanged(self, tmp_path):
        img = tmp_path / "img.png"
        img.write_bytes(b"png")
        client, _ = make_client([requests.ConnectionError("down")] * 3)
        session = new_session("s1", img, "Grasp it.")
        before = session.to_dict()
        with pytest.raises(TransportError):
            refine(client, session, "again")
        assert session.to_dict() == before

    def test_turn_count_monotone(self, tmp_path):
        img = tmp_path / "img.png"
        img.write_bytes(b"png")
        client, _ = make_client([FakeResponse(content=f"{{0.1, 0.1, 0.{i}}}") for i in range(3)])
        session = new_session("s", img, "go")
        counts = [len(session.turns)]
        for _ in range(3):
            _, session = refine(client, session, "adjust")
            counts.append(len(session.turns))
        assert counts == [1, 3, 5, 7]
        assert len(session.assistant_turns) == 3

    def test_save_load_round_trip(self, tmp_path):
        session = new_session("abc-1", tmp_path / "img.png", "Grasp.", created_at=123.0)
        session = session.extended(Turn("assistant", "{0.5, 0.5, 0.0}", GraspPose(0.5, 0.5, 0)))
        save_session(session, tmp_path / "sessions")
        loaded = load_session(tmp_path / "sessions", "abc-1")
        assert loaded == session

    def test_session_file_has_no_api_key(self, tmp_path):
        session = new_session("abc-2", tmp_path / "img.png", "Grasp.")
        path = save_session(session, tmp_path / "sessions")
        assert "sk-" not in path.read_text()


class TestTrainingConfig:
    def test_pretraining_values(self):
        cfg = export_training_config("pretraining")
        assert cfg.batch_size == 32
        assert cfg.learning_rate == 2e-3
        assert cfg.lora_rank is None
        assert cfg.lora_alpha is None
        assert cfg.base_model == "LLaVA-7B-v0"
        assert cfg.vision_encoder == "CLIP ViT-L/14"

    def test_lora_values(self):
        cfg = export_training_config("lora")
        assert cfg.batch_size == 32
        assert cfg.learning_rate == 5e-4
        assert cfg.lora_rank == 64
        assert cfg.lora_alpha == 32

    def test_lora_fields_only_for_lora(self, tmp_path):
        p1 = tmp_path / "pre.json"
        p2 = tmp_path / "lora.json"
        write_training_config("pretraining", p1)
        write_training_config("lora", p2)
        pre = json.loads(p1.read_text())
        lora = json.loads(p2.read_text())
        assert "lora_rank" not in pre
        assert lora["lora_rank"] == 64 and lora["lora_alpha"] == 32

    def test_unknown_strategy(self):
        with pytest.raises(ValueError):
            export_training_config("frozen")
