"""Service configuration: tool manifests, default strategy, LLM backend settings."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .coordinator import LLM_COORDINATED, CoordinationStrategy
from .registry import ToolManifest


@dataclass
class GatewayConfig:
    manifests: list[ToolManifest] = field(default_factory=list)
    strategy: CoordinationStrategy = LLM_COORDINATED
    llm: dict | None = None
    data_dir: str = "neuroagent-data"

    @classmethod
    def from_dict(cls, data: dict) -> "GatewayConfig":
        return cls(
            manifests=[ToolManifest.from_dict(t) for t in data.get("tools", [])],
            strategy=CoordinationStrategy.from_config(data.get("strategy")),
            llm=data.get("llm"),
            data_dir=data.get("data_dir", "neuroagent-data"),
        )

    @classmethod
    def load(cls, path: str | Path) -> "GatewayConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))
