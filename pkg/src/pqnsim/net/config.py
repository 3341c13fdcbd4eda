"""INI-style configuration with sections [source], [channel], [nodes], [kiosk].

Every default is overridable from a file; the PQN_CONFIG environment
variable selects the path when the CLI is not given one explicitly.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field


class ConfigError(ValueError):
    pass


ENV_VAR = "PQN_CONFIG"


@dataclass
class SourceSection:
    pair_rate_cps: float = 3000.0
    heralding_efficiency: float = 0.05
    visibility: float = 0.884


@dataclass
class ChannelSection:
    loss_db: float = 12.0
    station_loss_db: float = 4.5
    wavelengths_nm: tuple[int, ...] = (1555, 1560, 1565)
    drift_rate_bound_deg_per_hr: float = 2.0
    seed: int = 0
    drift_enabled: bool = True


@dataclass
class NodesSection:
    source_host: str = "127.0.0.1"
    source_port: int = 9701
    closet_host: str = "127.0.0.1"
    closet_port: int = 9702
    token: str = "public-node"
    step_timeout_s: float = 30.0
    motor_speed_deg_s: float = 25.0
    settle_s: float = 0.3
    integration_default_s: float = 10.0
    realtime: bool = True  # sleep through motion and counting durations
    log_path: str = "results.jsonl"


@dataclass
class KioskSection:
    http_host: str = "127.0.0.1"
    http_port: int = 9800
    frame_rate_hz: float = 20.0
    fallback_visibility: float = 0.884
    fallback_sigma: float = 0.06


@dataclass
class AppConfig:
    source: SourceSection = field(default_factory=SourceSection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    nodes: NodesSection = field(default_factory=NodesSection)
    kiosk: KioskSection = field(default_factory=KioskSection)


def _coerce(current, text: str, key: str):
    try:
        if isinstance(current, bool):
            lowered = text.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float):
            return float(text)
        if isinstance(current, tuple):
            return tuple(int(p.strip()) for p in text.split(",") if p.strip())
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc


def load_config(path: str | None = None) -> AppConfig:
    """Defaults overlaid with an INI file, if one is given or in PQN_CONFIG."""
    cfg = AppConfig()
    if path is None:
        path = os.environ.get(ENV_VAR)
    if not path:
        return cfg
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    for section_name, target in (
        ("source", cfg.source),
        ("channel", cfg.channel),
        ("nodes", cfg.nodes),
        ("kiosk", cfg.kiosk),
    ):
        if not parser.has_section(section_name):
            continue
        for key, text in parser.items(section_name):
            if not hasattr(target, key):
                raise ConfigError(f"unknown option [{section_name}] {key}")
            setattr(target, key, _coerce(getattr(target, key), text, key))
    return cfg
