"""Server configuration.

Config files are plain key-value text (`key = value`, `#` comments). The keys
mirror the field names below; `core_segment` and `schema` may repeat. The
`EPIMEM_MNS` environment variable overrides the configured MNS endpoint.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


def parse_endpoint(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"endpoint must be host:port, got {text!r}")
    return host, int(port)


@dataclass
class ServerConfig:
    memory_name: str
    host: str = "127.0.0.1"
    port: int = 0
    core_segments: list[tuple[str, str | None]] = field(default_factory=list)
    schema_files: list[str] = field(default_factory=list)
    wm_max_bytes: int = 64 * 1024 * 1024
    wm_max_snapshots_per_entity: int = 4096
    hot_query_threshold: int = 3
    hot_window_seconds: float = 30.0
    ltm_root: str = "ltm-data"
    mns: tuple[str, int] | None = None
    k_basis: int = 5
    ltm_max_hz: float | None = None
    ltm_similarity_epsilon: float = 0.0
    subscription_queue: int = 1024
    heartbeat_seconds: float = 5.0
    capacity_check_seconds: float = 1.0

    def __post_init__(self):
        if self.wm_max_bytes <= 0:
            raise ConfigError("wm_max_bytes must be > 0")
        if self.wm_max_snapshots_per_entity < 1:
            raise ConfigError("wm_max_snapshots_per_entity must be >= 1")

    @property
    def hot_window_us(self) -> int:
        return int(self.hot_window_seconds * 1_000_000)

    @classmethod
    def parse(cls, text: str, env: dict | None = None) -> "ServerConfig":
        env = os.environ if env is None else env
        values: dict = {"core_segments": [], "schema_files": []}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key == "core_segment":
                name, _, type_name = value.partition(":")
                values["core_segments"].append((name.strip(), type_name.strip() or None))
            elif key == "schema":
                values["schema_files"].append(value)
            elif key == "mns":
                values["mns"] = parse_endpoint(value)
            elif key in ("memory_name", "host", "ltm_root"):
                values[key] = value
            elif key in (
                "port",
                "wm_max_bytes",
                "wm_max_snapshots_per_entity",
                "hot_query_threshold",
                "k_basis",
                "subscription_queue",
            ):
                values[key] = int(value)
            elif key in (
                "hot_window_seconds",
                "heartbeat_seconds",
                "capacity_check_seconds",
                "ltm_similarity_epsilon",
            ):
                values[key] = float(value)
            elif key == "ltm_max_hz":
                values[key] = math.inf if value == "inf" else float(value)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if "memory_name" not in values:
            raise ConfigError("memory_name is required")
        override = env.get("EPIMEM_MNS")
        if override:
            values["mns"] = parse_endpoint(override)
        return cls(**values)

    @classmethod
    def load(cls, path: str | Path) -> "ServerConfig":
        return cls.parse(Path(path).read_text())
