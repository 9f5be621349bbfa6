"""Configuration management for lexseq.

Priority: explicit arguments > environment variables > config file.
"""

import os
from pathlib import Path
from typing import Any

import yaml
from dotenv import load_dotenv

from .errors import ConfigError
from .types import LebertConfig, RunConfig

# Load environment variables
load_dotenv()

ENV_PREFIX = "LEXSEQ_"
MODEL_KEYS = frozenset(LebertConfig.model_fields)
RUN_KEYS = frozenset(RunConfig.model_fields) - {"model"}


def _get_env_with_prefix(key: str, prefix: str = ENV_PREFIX, default: Any = None) -> Any:
    """Get environment variable with prefix.

    Args:
        key: Variable key without prefix.
        prefix: Environment variable prefix.
        default: Default value if not found.

    Returns:
        Environment variable value or default.
    """
    return os.getenv(f"{prefix}{key}", default)


def parse_scalar(text: str) -> Any:
    """Parse a config or CLI value as a YAML scalar (``3`` -> 3, ``true`` -> True, ``1,2`` -> "1,2")."""
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def _read_key_values(config_file: Path) -> dict[str, Any]:
    config: dict[str, Any] = {}
    with open(config_file, encoding="utf-8") as f:
        for line_number, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{config_file}:{line_number}: expected key=value, got {raw.strip()!r}")
            key, value = line.split("=", 1)
            config[key.strip()] = parse_scalar(value.strip())
    return config


def load_config_from_file(config_path: str | None = None) -> dict[str, Any]:
    """Load configuration from a YAML file or a flat ``key=value`` file.

    Args:
        config_path: Path to config file. A missing file gives an empty config.

    Returns:
        Configuration dictionary.
    """
    if config_path is None:
        return {}

    config_file = Path(config_path)
    if not config_file.exists():
        return {}

    if config_file.suffix in (".yml", ".yaml"):
        try:
            with open(config_file, encoding="utf-8") as f:
                loaded = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"{config_file}: invalid YAML: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError(f"{config_file}: expected a mapping at top level")
        return loaded
    return _read_key_values(config_file)


def load_config_from_env() -> dict[str, Any]:
    """Load configuration from environment variables.

    Returns:
        Configuration dictionary from environment.
    """
    config: dict[str, Any] = {}

    if output_dir := _get_env_with_prefix("OUTPUT_DIR"):
        config["output_dir"] = output_dir
    if seed := _get_env_with_prefix("SEED"):
        try:
            config["seed"] = int(seed)
        except ValueError as e:
            raise ConfigError(f"{ENV_PREFIX}SEED must be an integer, got {seed!r}") from e
    if log_dir := _get_env_with_prefix("LOG_DIR"):
        config["log_dir"] = log_dir
    if log_level := _get_env_with_prefix("LOG_LEVEL"):
        config["log_level"] = log_level.upper()
    if log_format := _get_env_with_prefix("LOG_FORMAT"):
        config["log_format"] = log_format

    return config


def nest_model_keys(config: dict[str, Any]) -> dict[str, Any]:
    """Move flat model keys (``hidden_size``, ``adapter_layers``...) under ``model``.

    Raises:
        ConfigError: On a key that names no configuration field.
    """
    result: dict[str, Any] = {}
    model: dict[str, Any] = dict(config.get("model") or {})
    for key, value in config.items():
        if key == "model":
            continue
        if key in MODEL_KEYS:
            model[key] = value
        elif key in RUN_KEYS:
            result[key] = value
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
    if model:
        result["model"] = model
    return result


def merge_configs(*configs: dict[str, Any]) -> dict[str, Any]:
    """Merge multiple configuration dictionaries.

    Later configs override earlier ones.

    Args:
        *configs: Configuration dictionaries to merge.

    Returns:
        Merged configuration dictionary.
    """
    result: dict[str, Any] = {}

    for config in configs:
        for key, value in config.items():
            if isinstance(value, dict) and key in result and isinstance(result[key], dict):
                # Recursively merge nested dicts
                result[key] = {**result[key], **value}
            else:
                result[key] = value

    return result


def build_run_config(config_file: str | None = None, **overrides: Any) -> RunConfig:
    """Build the complete run configuration.

    Priority: overrides > env vars > config file

    Args:
        config_file: Path to config file.
        **overrides: Flat ``RunConfig`` or ``LebertConfig`` fields; None values are ignored.

    Returns:
        Validated RunConfig.

    Raises:
        ConfigError: On an unknown key or an unreadable file.
        ValidationError: On invalid values.
    """
    file_config = nest_model_keys(load_config_from_file(config_file))
    env_config = nest_model_keys(load_config_from_env())
    args_config = nest_model_keys({k: v for k, v in overrides.items() if v is not None})

    merged = merge_configs(file_config, env_config, args_config)
    return RunConfig(**merged)

