"""Service and explainer configuration.

Sources are merged with the precedence: config file over command-line
flags over environment variables over built-in defaults.  Environment
variables: XBO_SCENARIOS, XBO_LOG_DIR, XBO_LLM_ENDPOINT, XBO_LLM_KEY.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .tntrules import ExplainerConfig

ENV_SCENARIOS = "XBO_SCENARIOS"
ENV_LOG_DIR = "XBO_LOG_DIR"
ENV_LLM_ENDPOINT = "XBO_LLM_ENDPOINT"
ENV_LLM_KEY = "XBO_LLM_KEY"

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 8331


@dataclass(frozen=True)
class ServiceConfig:
    host: str = DEFAULT_HOST
    port: int = DEFAULT_PORT
    scenario_path: str | None = None    # None: packaged table2.json
    log_dir: str = "session-logs"
    llm_endpoint: str | None = None
    llm_key: str | None = None
    explainer: ExplainerConfig = field(default_factory=ExplainerConfig)


_EXPLAINER_KEYS = ("n_e", "t_s", "t_alpha", "weights", "seed")


def _from_env() -> dict:
    out: dict = {}
    if os.environ.get(ENV_SCENARIOS):
        out["scenario_path"] = os.environ[ENV_SCENARIOS]
    if os.environ.get(ENV_LOG_DIR):
        out["log_dir"] = os.environ[ENV_LOG_DIR]
    if os.environ.get(ENV_LLM_ENDPOINT):
        out["llm_endpoint"] = os.environ[ENV_LLM_ENDPOINT]
    if os.environ.get(ENV_LLM_KEY):
        out["llm_key"] = os.environ[ENV_LLM_KEY]
    return out


def _from_file(path: str | Path) -> dict:
    raw = json.loads(Path(path).read_text())
    allowed = {
        "host", "port", "scenario_path", "log_dir", "llm_endpoint", "llm_key", "explainer",
    }
    unknown = set(raw) - allowed
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return raw


def load_config(
    config_file: str | Path | None = None, flags: dict | None = None
) -> ServiceConfig:
    """Merge defaults, environment, flags and the config file, in that order."""
    merged: dict = {}
    explainer: dict = {}
    for layer in (_from_env(), flags or {}, _from_file(config_file) if config_file else {}):
        layer = dict(layer)
        for key, value in layer.pop("explainer", {}).items():
            if key not in _EXPLAINER_KEYS:
                raise ValueError(f"unknown explainer config key: {key}")
            explainer[key] = value
        merged.update({k: v for k, v in layer.items() if v is not None})
    if "weights" in explainer:
        explainer["weights"] = tuple(explainer["weights"])
    merged["explainer"] = ExplainerConfig(**explainer)
    return ServiceConfig(**merged)
