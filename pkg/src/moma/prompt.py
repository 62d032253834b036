"""Multimodal prompt containers shared by the engine, memory and backends."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any

from .percept import SceneImage


@dataclass
class PromptPart:
    kind: str  # text | image
    text: str = ""
    image: SceneImage | None = None

    @classmethod
    def of_text(cls, text: str) -> "PromptPart":
        return cls("text", text)

    @classmethod
    def of_image(cls, image: SceneImage) -> "PromptPart":
        return cls("image", image=image)


@dataclass
class Prompt:
    stage: str  # stage1 | stage2 | analysis
    parts: list[PromptPart] = field(default_factory=list)
    budget: dict[str, Any] = field(default_factory=dict)

    def add_text(self, text: str) -> None:
        if text:
            self.parts.append(PromptPart.of_text(text))

    def add_image(self, image: SceneImage) -> None:
        self.parts.append(PromptPart.of_image(image))

    def text(self) -> str:
        return "\n\n".join(p.text for p in self.parts if p.kind == "text")

    def images(self) -> list[SceneImage]:
        return [p.image for p in self.parts if p.kind == "image"]

    @property
    def n_images(self) -> int:
        return len(self.images())

    def to_bytes(self) -> bytes:
        """Canonical byte form: texts verbatim, images by render digest."""
        chunks = [f"<stage:{self.stage}>"]
        for p in self.parts:
            chunks.append(f"<text>{p.text}</text>" if p.kind == "text" else f"<image:{p.image.digest}>")
        return "\n".join(chunks).encode()

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


@dataclass
class BackendRequest:
    prompt: Prompt
    stage: str
    # world handles for oracle backends; never part of the request hash
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def request_hash(self) -> str:
        return self.prompt.digest


@dataclass
class BackendResponse:
    text: str
    latency: float = 0.0
    provider: str = ""
