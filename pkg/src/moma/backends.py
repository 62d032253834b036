"""Response providers: scripted oracles, transcript replay and a live HTTP client."""

from __future__ import annotations

import base64
import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import httpx

from .policy import Action, oracle_action
from .prompt import BackendRequest, BackendResponse

# lesson text the lesson-sensitive oracle looks for, per skill
LESSON_PHRASES = {
    "open_door": "push on the side opposite the hinge",
    "push_object_on_ground": "push toward the side with free floor space",
}
GENERIC_LESSON = "read the failure reason of the previous step before repeating the same action"


class BackendError(RuntimeError):
    pass


class BackendTransportError(BackendError):
    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class ReplayExhausted(BackendError):
    pass


class ReplayMismatch(BackendError):
    pass


class Backend:
    name = "base"

    def complete(self, request: BackendRequest) -> BackendResponse:  # pragma: no cover - interface
        raise NotImplementedError


def complete(backend: Backend, request: BackendRequest) -> BackendResponse:
    return backend.complete(request)


# ------------------------------------------------------------ answer format


def format_stage1(subtask: str, skill: str, reasoning: str | None) -> str:
    head = f"Reasoning: {reasoning}\n\n" if reasoning else ""
    return f"{head}```answer\nsubtask: {subtask}\nskill: {skill}\n```"


def format_stage2(field_name: str, value: Any, reasoning: str | None) -> str:
    head = f"Reasoning: {reasoning}\n\n" if reasoning else ""
    return f"{head}```answer\n{field_name}: {value}\n```"


def lesson_text(key: str, predicted, truth) -> str:
    return (f"The prediction '{predicted}' was wrong; the correct answer was '{truth}'. "
            f"Lesson: {LESSON_PHRASES.get(key, GENERIC_LESSON)}.")


# ------------------------------------------------------------------ oracle


@dataclass
class OracleErrorProfile:
    # keys: "skill@split", "skill" or "default"
    wrong_param: dict[str, float] = field(default_factory=dict)
    wrong_skill: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for k, p in list(self.wrong_param.items()) + [("wrong_skill", self.wrong_skill)]:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"error probability {k}={p} outside [0, 1]")

    def param_rate(self, skill: str, split: str | None = None) -> float:
        for key in (f"{skill}@{split}" if split else None, skill, "default"):
            if key and key in self.wrong_param:
                return self.wrong_param[key]
        return 0.0


class OracleBackend(Backend):
    """Ground-truth responder with seeded, request-keyed error injection.

    The answer depends only on (seed, request contents), so the backend is
    pure and can be shared between concurrent trials.
    """

    name = "oracle"

    def __init__(self, profile: OracleErrorProfile | None = None):
        self.profile = profile or OracleErrorProfile()

    def _rng(self, request: BackendRequest) -> random.Random:
        return random.Random(f"{self.profile.seed}:{request.request_hash}")

    def complete(self, request: BackendRequest) -> BackendResponse:
        t0 = time.perf_counter()
        if request.stage == "stage1":
            text = self._stage1(request)
        elif request.stage == "stage2":
            text = self._stage2(request)
        elif request.stage == "analysis":
            m = request.metadata
            text = lesson_text(m.get("key", ""), m.get("predicted"), m.get("truth"))
        else:
            raise BackendError(f"unknown stage {request.stage!r}")
        return BackendResponse(text, time.perf_counter() - t0, self.name)

    # ---------------------------------------------------------- decisions

    def action(self, request: BackendRequest) -> Action | None:
        m = request.metadata
        if "action" in m:
            return m["action"]
        return oracle_action(m["ws"], m["task"], m.get("stm") or [], m["observation"])

    def _stage1(self, request: BackendRequest) -> str:
        m = request.metadata
        act = self.action(request)
        skills = list(m.get("skills") or [])
        if act is None:
            subtask, skill = "Look around for the goal.", "goto_landmark"
        else:
            subtask, skill = act.subtask, act.skill
        rng = self._rng(request)
        if self.profile.wrong_skill > 0 and rng.random() < self.profile.wrong_skill:
            others = [s for s in skills if s != skill]
            if others:
                skill = rng.choice(others)
        reasoning = f"The next useful step is: {subtask}" if m.get("cot", True) else None
        return format_stage1(subtask, skill, reasoning)

    def intended_value(self, request: BackendRequest):
        m = request.metadata
        if "truth_value" in m:
            return m["truth_value"]
        act = self.action(request)
        idx = m.get("stage_index", 0)
        if act is None or act.skill != m.get("skill") or idx >= len(act.params):
            return None
        return act.params[idx]

    def _stage2(self, request: BackendRequest) -> str:
        m = request.metadata
        value = self.intended_value(request)
        values = [c.value for c in m["candidates"]]
        rng = self._rng(request)
        if value not in values:
            value = rng.choice(values) if values else None
        rate = self.profile.param_rate(m.get("skill", ""), m.get("split"))
        if rate > 0 and rng.random() < rate:
            others = [v for v in values if v != value]
            if others:
                value = rng.choice(others)
        return self._render_choice(request, value)

    def _render_choice(self, request: BackendRequest, value) -> str:
        m = request.metadata
        reasoning = "Picking the candidate that serves the current subtask." if m.get("cot", True) else None
        markers = m.get("markers")
        if markers is not None:
            mid = markers.id_for(value)
            return format_stage2("marker", mid if mid is not None else 1, reasoning)
        cand = next((c for c in m["candidates"] if c.value == value), None)
        if cand is None:
            return format_stage2("choice", "none", reasoning)
        if cand.kind in ("object", "false_positive", "button", "door"):
            return format_stage2("description", cand.label, reasoning)
        return format_stage2("choice", cand.value, reasoning)


class LessonSensitiveOracle(OracleBackend):
    """Oracle that repeats a designated mistake until the matching lesson is in the prompt.

    Signature table (skill, parameter stage) -> wrong answer:
      open_door, side               -> the hinge side of the nearest closed door
      push_object_on_ground, dir    -> the first other direction in (left, right, forward)
    """

    name = "lesson-oracle"

    def intended_value(self, request: BackendRequest):
        value = super().intended_value(request)
        m = request.metadata
        skill = m.get("skill")
        phrase = LESSON_PHRASES.get(skill)
        if phrase is None or value is None or phrase in request.prompt.text():
            return value
        if skill == "open_door":
            return "left" if value == "right" else "right"
        if skill == "push_object_on_ground" and m.get("stage_index") == 1:
            return next(d for d in ("left", "right", "forward") if d != value)
        return value


# ------------------------------------------------------------------ replay


class ReplayBackend(Backend):
    """Replays logged responses in order, checking each request hash."""

    name = "replay"

    def __init__(self, entries: list[Mapping] | str | Path, check_hash: bool = True):
        if isinstance(entries, (str, Path)):
            with open(entries) as fh:
                entries = [json.loads(line) for line in fh if line.strip()]
        self.entries = [e for e in entries if "response" in e]
        self.check_hash = check_hash
        self._pos = 0
        self._lock = threading.Lock()

    def complete(self, request: BackendRequest) -> BackendResponse:
        with self._lock:
            if self._pos >= len(self.entries):
                raise ReplayExhausted(f"replay exhausted after {self._pos} responses")
            entry = self.entries[self._pos]
            if self.check_hash and entry.get("request_hash") not in (None, request.request_hash):
                raise ReplayMismatch(f"request hash mismatch at replay entry {self._pos}")
            self._pos += 1
        return BackendResponse(entry["response"], 0.0, self.name)

    @property
    def remaining(self) -> int:
        return len(self.entries) - self._pos


# -------------------------------------------------------------------- http


@dataclass
class HttpConfig:
    url: str
    model: str
    provider: str = "generic"  # generic | openai | anthropic
    api_key_env: str = "MOMA_API_KEY"
    temperature: float = 0.0
    max_tokens: int = 1024
    timeout: float = 60.0


def _b64(image) -> str:
    return base64.b64encode(image.png()).decode()


def build_payload(config: HttpConfig, request: BackendRequest) -> dict:
    parts = request.prompt.parts
    if config.provider == "openai":
        content = [{"type": "text", "text": p.text} if p.kind == "text" else
                   {"type": "image_url", "image_url": {"url": "data:image/png;base64," + _b64(p.image)}}
                   for p in parts]
        return {"model": config.model, "temperature": config.temperature, "max_tokens": config.max_tokens,
                "messages": [{"role": "user", "content": content}]}
    if config.provider == "anthropic":
        content = [{"type": "text", "text": p.text} if p.kind == "text" else
                   {"type": "image", "source": {"type": "base64", "media_type": "image/png", "data": _b64(p.image)}}
                   for p in parts]
        return {"model": config.model, "temperature": config.temperature, "max_tokens": config.max_tokens,
                "messages": [{"role": "user", "content": content}]}
    if config.provider == "generic":
        content = [{"type": "text", "text": p.text} if p.kind == "text" else
                   {"type": "image", "media_type": "image/png", "data": _b64(p.image)} for p in parts]
        return {"model": config.model, "temperature": config.temperature, "max_tokens": config.max_tokens,
                "stage": request.stage, "messages": [{"role": "user", "content": content}]}
    raise BackendError(f"unknown provider {config.provider!r}")


def parse_completion(provider: str, body: Mapping) -> str:
    try:
        if provider == "openai":
            return body["choices"][0]["message"]["content"]
        if provider == "anthropic":
            return "".join(b.get("text", "") for b in body["content"] if b.get("type") == "text")
        return body["text"]
    except (KeyError, IndexError, TypeError) as exc:
        raise BackendError(f"malformed completion body: {exc}") from None


class HttpBackend(Backend):
    name = "http"

    def __init__(self, config: HttpConfig, client: httpx.Client | None = None):
        self.config = config
        self.client = client or httpx.Client(timeout=config.timeout)

    def _headers(self) -> dict:
        key = os.environ.get(self.config.api_key_env, "")
        headers = {"content-type": "application/json"}
        if self.config.provider == "anthropic":
            headers.update({"x-api-key": key, "anthropic-version": "2023-06-01"})
        elif key:
            headers["authorization"] = f"Bearer {key}"
        return headers

    def complete(self, request: BackendRequest) -> BackendResponse:
        payload = build_payload(self.config, request)
        t0 = time.perf_counter()
        try:
            resp = self.client.post(self.config.url, json=payload, headers=self._headers())
        except httpx.TimeoutException as exc:
            raise BackendTransportError(f"timeout: {exc}") from None
        except httpx.TransportError as exc:
            raise BackendTransportError(f"transport error: {exc}") from None
        if resp.status_code == 429 or resp.status_code >= 500:
            retry = resp.headers.get("retry-after")
            try:
                retry_after = float(retry) if retry is not None else None
            except ValueError:
                retry_after = None
            raise BackendTransportError(f"HTTP {resp.status_code}", retry_after)
        if resp.status_code >= 400:
            raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        text = parse_completion(self.config.provider, resp.json())
        return BackendResponse(text, time.perf_counter() - t0, f"{self.config.provider}:{self.config.model}")


def make_backend(name: str, **kwargs) -> Backend:
    if name == "oracle":
        return OracleBackend(kwargs.get("profile"))
    if name in ("lesson-oracle", "lesson_oracle"):
        return LessonSensitiveOracle(kwargs.get("profile"))
    if name == "replay":
        return ReplayBackend(kwargs["transcript"])
    if name == "http":
        return HttpBackend(kwargs["config"])
    raise BackendError(f"unknown backend {name!r}")
