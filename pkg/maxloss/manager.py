import os
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, Optional

from .core import MaxLossError

DEFAULT_CONFIG_PATH = Path.home() / ".maxloss" / "config.json"

DEFAULTS: Dict[str, Any] = {
    "stability_c": 1.0,
    "sgd_first_epoch": 450,
    "sgd_budget_multiplier": 4.0,
    "sgd_domain_constant": 1.0,
    "katyusha_epoch_factor": 2,
    "katyusha_stage_slack": 1.0,
    "exact_tol": 1e-12,
    "exact_max_iter": 200000,
    "broo_budget_cap": 5000,
    "max_outer": None,
    "d_cap": 64,
    "threads": None,
}

# keys whose default is None still need a type for `config set`
NULLABLE_TYPES = {"broo_budget_cap": int, "max_outer": int, "threads": int}


class ConfigError(MaxLossError):
    pass


def config_path() -> Path:
    """Config file location; MAXLOSS_CONFIG overrides the home directory default"""
    override = os.getenv("MAXLOSS_CONFIG")
    return Path(override) if override else DEFAULT_CONFIG_PATH


def load_config() -> Dict[str, Any]:
    """Load maxloss config file merged over the defaults"""
    cfg = dict(DEFAULTS)
    path = config_path()
    if not path.exists():
        return cfg
    try:
        with open(path, "r", encoding="utf-8") as f:
            stored = json.load(f)
    except (OSError, ValueError):
        return cfg
    if isinstance(stored, dict):
        cfg.update({k: v for k, v in stored.items() if k in DEFAULTS})
    return cfg


def save_config(cfg: Dict[str, Any]):
    """Save config file"""
    path = config_path()
    os.makedirs(path.parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(cfg, f, indent=2)


def _coerce(key: str, value: str) -> Any:
    if key not in DEFAULTS:
        raise ConfigError(f"unknown config key: {key}")
    if value.lower() in ("none", "null", ""):
        return None
    kind = NULLABLE_TYPES.get(key) or type(DEFAULTS[key])
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"{key} expects a {kind.__name__}, got {value!r}")


def get_config_value(key: str, default: Any = None) -> Any:
    """Get a specific config value"""
    return load_config().get(key, default)


def set_config_value(key: str, value: str):
    """Set a config value, converting it to the key's type"""
    cfg = load_config()
    cfg[key] = _coerce(key, value)
    save_config(cfg)


def show_config() -> str:
    """Current config as pretty JSON"""
    return json.dumps(load_config(), indent=2)


def thread_limit() -> Optional[int]:
    """Worker pool cap: MAXMIN_THREADS wins over the config file"""
    env = os.getenv("MAXMIN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"MAXMIN_THREADS must be an integer, got {env!r}")
    threads = load_config().get("threads")
    return int(threads) if threads else None


@dataclass(frozen=True)
class SolverSettings:
    """Typed view of the solver knobs"""

    stability_c: float = 1.0
    sgd_first_epoch: int = 450
    sgd_budget_multiplier: float = 4.0
    sgd_domain_constant: float = 1.0
    katyusha_epoch_factor: int = 2
    katyusha_stage_slack: float = 1.0
    exact_tol: float = 1e-12
    exact_max_iter: int = 200000
    broo_budget_cap: Optional[int] = 5000
    max_outer: Optional[int] = None

    @classmethod
    def from_config(cls, cfg: Optional[Dict[str, Any]] = None, **overrides) -> "SolverSettings":
        cfg = load_config() if cfg is None else cfg
        known = {f.name for f in fields(cls)}
        values = {k: v for k, v in cfg.items() if k in known}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)
