"""Application configuration: one TOML file plus per-command flag overrides."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .llm import BackendConfig
from .phonetics import PhoneticPolicy
from .prompt import ContextBudget

__all__ = ["AppConfig", "ConfigError", "load_config"]


class ConfigError(ValueError):
    """Raised for unreadable or malformed configuration."""


@dataclass
class AppConfig:
    relation_table: Path | None = None
    table_format: str = "tsv"
    cmu_dict: Path | None = None
    graph_file: Path | None = None
    dataset: Path | None = None
    out_dir: Path = field(default_factory=lambda: Path("."))
    policy: PhoneticPolicy = field(default_factory=PhoneticPolicy)
    budget: ContextBudget = field(default_factory=ContextBudget)
    backend: BackendConfig = field(default_factory=BackendConfig)
    seed: int = 0
    hops: int = 1


_PATH_KEYS = ("relation_table", "cmu_dict", "graph_file", "dataset", "out_dir")


def _section(data: dict, name: str, allowed: set[str]) -> dict:
    section = data.get(name, {})
    if not isinstance(section, dict):
        raise ConfigError(f"[{name}] must be a table")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    return section


def load_config(path: str | Path | None = None) -> AppConfig:
    """Parse the TOML config file; every key is optional."""

    config = AppConfig()
    if path is None:
        return config
    try:
        with open(path, "rb") as handle:
            data = tomllib.load(handle)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid config file {path}: {exc}") from exc

    unknown = set(data) - {"paths", "phonetics", "budget", "backend", "run"}
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")

    paths = _section(data, "paths", {*_PATH_KEYS, "table_format"})
    for key in _PATH_KEYS:
        if key in paths:
            setattr(config, key, Path(paths[key]))
    if "table_format" in paths:
        config.table_format = str(paths["table_format"])

    phonetics = _section(
        data,
        "phonetics",
        {"code_distance_max", "phoneme_ratio_max", "shared_suffix_min", "max_candidates"},
    )
    if phonetics:
        try:
            config.policy = PhoneticPolicy(
                code_distance_max=int(
                    phonetics.get("code_distance_max", config.policy.code_distance_max)
                ),
                phoneme_ratio_max=float(
                    phonetics.get("phoneme_ratio_max", config.policy.phoneme_ratio_max)
                ),
                shared_suffix_min=int(
                    phonetics.get("shared_suffix_min", config.policy.shared_suffix_min)
                ),
                max_candidates=int(
                    phonetics.get("max_candidates", config.policy.max_candidates)
                ),
            )
        except ValueError as exc:
            raise ConfigError(f"invalid [phonetics]: {exc}") from exc

    budget = _section(
        data, "budget", {"semantic_tokens", "phonetic_tokens", "max_sequence_tokens"}
    )
    if budget:
        try:
            config.budget = ContextBudget(
                semantic_tokens=int(
                    budget.get("semantic_tokens", config.budget.semantic_tokens)
                ),
                phonetic_tokens=int(
                    budget.get("phonetic_tokens", config.budget.phonetic_tokens)
                ),
                max_sequence_tokens=int(
                    budget.get("max_sequence_tokens", config.budget.max_sequence_tokens)
                ),
            )
        except ValueError as exc:
            raise ConfigError(f"invalid [budget]: {exc}") from exc

    backend = _section(
        data,
        "backend",
        {"endpoint", "model", "auth_env", "timeout", "max_retries", "max_in_flight"},
    )
    if backend:
        try:
            config.backend = BackendConfig(
                endpoint=str(backend.get("endpoint", "")),
                model=str(backend.get("model", "")),
                auth_env=str(backend.get("auth_env", config.backend.auth_env)),
                timeout=float(backend.get("timeout", config.backend.timeout)),
                max_retries=int(backend.get("max_retries", config.backend.max_retries)),
                max_in_flight=int(
                    backend.get("max_in_flight", config.backend.max_in_flight)
                ),
            )
        except ValueError as exc:
            raise ConfigError(f"invalid [backend]: {exc}") from exc

    run = _section(data, "run", {"seed", "hops"})
    if "seed" in run:
        config.seed = int(run["seed"])
    if "hops" in run:
        config.hops = int(run["hops"])
        if config.hops < 1:
            raise ConfigError("run.hops must be >= 1")
    return config
