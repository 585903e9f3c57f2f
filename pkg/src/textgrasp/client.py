"""Networked client for chat-style multimodal endpoints.

Speaks the de facto chat-completions wire shape (a messages array whose
user turns may carry a base64 data-URL image part), which keeps the
toolkit agnostic about which hosted model sits behind the URL. Decoding
is requested at temperature 0 by default: numerical evaluation should
not depend on sampling luck.

Also exports the training hyperparameter presets consumed by external
trainers, and the multi-turn refinement session structure shared by the
CLI and the HTTP service.
"""

from __future__ import annotations

import base64
import json
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import requests

from .geometry import GraspPose
from .parsing import ParsedOutput, parse_pose

ENV_ENDPOINT_URL = "RTG_ENDPOINT_URL"
ENV_API_KEY = "RTG_API_KEY"
ENV_MODEL_NAME = "RTG_MODEL_NAME"
ENV_IMAGE_ROOT = "RTG_IMAGE_ROOT"

MAX_IMAGE_BYTES = 20 * 1024 * 1024


class ConfigError(ValueError):
    """Missing or invalid endpoint configuration."""


class TransportError(RuntimeError):
    """Endpoint unreachable (or 5xx) after all retry attempts."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class ApiError(RuntimeError):
    """Endpoint rejected the request (4xx); retrying would not help."""

    def __init__(self, message: str, status_code: int):
        super().__init__(message)
        self.status_code = status_code


class ImageTooLargeError(ValueError):
    pass


@dataclass
class EndpointConfig:
    base_url: str
    api_key: str = field(default="", repr=False)
    model_name: str = "default"
    timeout: float = 120.0
    max_retries: int = 3

    def __post_init__(self) -> None:
        if not self.base_url:
            raise ConfigError("endpoint base_url must be non-empty")
        if self.timeout <= 0:
            raise ConfigError("timeout must be positive")

    @classmethod
    def from_env(cls, env=None) -> "EndpointConfig":
        env = os.environ if env is None else env
        missing = [name for name in (ENV_ENDPOINT_URL, ENV_MODEL_NAME) if not env.get(name)]
        if missing:
            raise ConfigError(f"missing environment variable(s): {', '.join(missing)}")
        return cls(
            base_url=env[ENV_ENDPOINT_URL],
            api_key=env.get(ENV_API_KEY, ""),
            model_name=env[ENV_MODEL_NAME],
        )


class ModelClient:
    """Chat-completions client; safe for concurrent ``predict`` calls."""

    concurrency_safe = True

    def __init__(self, cfg: EndpointConfig, temperature: float = 0.0,
                 backoff_base: float = 1.0, session: requests.Session | None = None):
        self.cfg = cfg
        self.temperature = temperature
        self.backoff_base = backoff_base
        self._http = session or requests.Session()

    def predict(self, image: bytes, instruction: str) -> str:
        """Single-turn completion with the image attached to the user turn."""
        messages = [self._user_turn(instruction, image)]
        return self.chat(messages)

    def complete(self, prompt: str) -> str:
        """Text-only completion (template authoring, refinement prompts)."""
        return self.chat([{"role": "user", "content": prompt}])

    def chat(self, messages: list[dict]) -> str:
        payload = {
            "model": self.cfg.model_name,
            "temperature": self.temperature,
            "messages": messages,
        }
        return self._post(payload)

    def _user_turn(self, text: str, image: bytes | None) -> dict:
        if image is None:
            return {"role": "user", "content": text}
        if len(image) > MAX_IMAGE_BYTES:
            raise ImageTooLargeError(
                f"image is {len(image)} bytes; the client limit is {MAX_IMAGE_BYTES}")
        b64 = base64.b64encode(image).decode("ascii")
        return {
            "role": "user",
            "content": [
                {"type": "text", "text": text},
                {"type": "image_url",
                 "image_url": {"url": f"data:image/png;base64,{b64}"}},
            ],
        }

    def _post(self, payload: dict) -> str:
        url = self.cfg.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.cfg.api_key:
            headers["Authorization"] = f"Bearer {self.cfg.api_key}"
        last_error: Exception | None = None
        attempts = max(1, self.cfg.max_retries)
        for attempt in range(1, attempts + 1):
            try:
                resp = self._http.post(url, headers=headers, json=payload,
                                       timeout=self.cfg.timeout)
            except requests.RequestException as exc:
                last_error = exc
            else:
                if resp.status_code >= 500:
                    last_error = RuntimeError(f"server error {resp.status_code}")
                elif resp.status_code >= 400:
                    raise ApiError(f"endpoint returned {resp.status_code}: {resp.text[:200]}",
                                   status_code=resp.status_code)
                else:
                    return _extract_content(resp.json())
            if attempt < attempts:
                time.sleep(self.backoff_base * (2 ** (attempt - 1)))
        raise TransportError(f"request failed after {attempts} attempt(s): {last_error}",
                             attempts=attempts)


def _extract_content(body: dict) -> str:
    try:
        content = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ApiError(f"malformed completion body: {exc}", status_code=200) from exc
    if isinstance(content, list):  # some servers return content parts
        return "".join(part.get("text", "") for part in content if isinstance(part, dict))
    return str(content)


# ---------------------------------------------------------------------------
# refinement sessions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Turn:
    role: str
    text: str
    pose: GraspPose | None = None


@dataclass(frozen=True)
class RefinementSession:
    """Append-only conversation: turn k never changes once recorded."""

    session_id: str
    image_path: str
    image_id: str = ""
    turns: tuple[Turn, ...] = ()
    created_at: float = 0.0

    def extended(self, *new_turns: Turn) -> "RefinementSession":
        return replace(self, turns=self.turns + new_turns)

    @property
    def assistant_turns(self) -> list[Turn]:
        return [t for t in self.turns if t.role == "assistant"]

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "image_path": self.image_path,
            "image_id": self.image_id,
            "created_at": self.created_at,
            "turns": [
                {"role": t.role, "text": t.text,
                 "pose": None if t.pose is None else
                     {"x": t.pose.x, "y": t.pose.y, "theta": t.pose.theta}}
                for t in self.turns
            ],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RefinementSession":
        turns = []
        for t in raw.get("turns", []):
            pose = t.get("pose")
            turns.append(Turn(
                role=t["role"], text=t["text"],
                pose=None if pose is None else GraspPose(pose["x"], pose["y"], pose["theta"]),
            ))
        return cls(session_id=raw["session_id"], image_path=raw["image_path"],
                   image_id=raw.get("image_id", ""), turns=tuple(turns),
                   created_at=float(raw.get("created_at", 0.0)))


def new_session(session_id: str, image_path: str | Path, instruction: str,
                image_id: str = "", created_at: float | None = None) -> RefinementSession:
    """Fresh session whose first turn is the initial user instruction."""
    return RefinementSession(
        session_id=session_id,
        image_path=str(image_path),
        image_id=image_id,
        turns=(Turn("user", instruction),),
        created_at=time.time() if created_at is None else created_at,
    )


def record_reply(session: RefinementSession, raw_text: str) -> tuple[ParsedOutput, RefinementSession]:
    """Append an assistant turn (with its parsed pose) to the session."""
    parsed = parse_pose(raw_text)
    return parsed, session.extended(Turn("assistant", raw_text, parsed.pose))


def refine(client, session: RefinementSession, user_message: str) -> tuple[str, RefinementSession]:
    """One refinement round: replay history plus the new user turn.

    The image travels on the first user message only, mirroring how the
    session was opened. On endpoint failure the exception propagates and
    the caller's session object is untouched (sessions are immutable).
    """
    if not session.turns:
        raise ValueError("cannot refine an empty session; open it with an instruction first")
    image_bytes = Path(session.image_path).read_bytes()
    messages = []
    first_user_seen = False
    for t in session.turns:
        if t.role == "user" and not first_user_seen:
            messages.append(client._user_turn(t.text, image_bytes))
            first_user_seen = True
        else:
            messages.append({"role": t.role, "content": t.text})
    messages.append({"role": "user", "content": user_message})
    raw = client.chat(messages)
    parsed, extended = record_reply(session.extended(Turn("user", user_message)), raw)
    return raw, extended


def save_session(session: RefinementSession, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{session.session_id}.json"
    path.write_text(json.dumps(session.to_dict(), indent=2) + "\n", encoding="utf-8")
    return path


def load_session(directory: str | Path, session_id: str) -> RefinementSession:
    path = Path(directory) / f"{session_id}.json"
    return RefinementSession.from_dict(json.loads(path.read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# training configuration export
# ---------------------------------------------------------------------------

STRATEGY_PRETRAINING = "pretraining"
STRATEGY_LORA = "lora"

BASE_MODEL_TAG = "LLaVA-7B-v0"
VISION_ENCODER_TAG = "CLIP ViT-L/14"


@dataclass(frozen=True)
class TrainingConfig:
    strategy: str
    batch_size: int
    learning_rate: float
    base_model: str
    vision_encoder: str
    lora_rank: int | None = None
    lora_alpha: int | None = None

    def to_dict(self) -> dict:
        payload = {
            "strategy": self.strategy,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "base_model": self.base_model,
            "vision_encoder": self.vision_encoder,
        }
        if self.strategy == STRATEGY_LORA:
            payload["lora_rank"] = self.lora_rank
            payload["lora_alpha"] = self.lora_alpha
        return payload


def export_training_config(strategy: str) -> TrainingConfig:
    """Hyperparameter presets for the two supported training strategies."""
    if strategy == STRATEGY_PRETRAINING:
        return TrainingConfig(
            strategy=STRATEGY_PRETRAINING,
            batch_size=32,
            learning_rate=2e-3,
            base_model=BASE_MODEL_TAG,
            vision_encoder=VISION_ENCODER_TAG,
        )
    if strategy == STRATEGY_LORA:
        return TrainingConfig(
            strategy=STRATEGY_LORA,
            batch_size=32,
            learning_rate=5e-4,
            base_model=BASE_MODEL_TAG,
            vision_encoder=VISION_ENCODER_TAG,
            lora_rank=64,
            lora_alpha=32,
        )
    raise ValueError(f"unknown strategy {strategy!r}; "
                     f"expected {STRATEGY_PRETRAINING!r} or {STRATEGY_LORA!r}")


def write_training_config(strategy: str, path: str | Path) -> TrainingConfig:
    cfg = export_training_config(strategy)
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
    return cfg
