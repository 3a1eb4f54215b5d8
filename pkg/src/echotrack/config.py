"""Flat ``key = value`` configuration files for the CLI.

Blank lines and ``#`` comments are ignored; unknown keys are rejected
with the offending key named.  Keys map onto the three config
dataclasses (motion, tracker, EMMA).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .emma import EmmaConfig
from .errors import ConfigError
from .motion import MotionConfig
from .tracker import TrackerConfig


def _parse_bool(v: str) -> bool:
    low = v.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


# key -> (section, field name, parser)
_KEYS = {
    "lambda_reg": ("motion", "lambda_reg", float),
    "pyramid_levels": ("motion", "pyramid_levels", int),
    "iters_per_level": ("motion", "iters_per_level", int),
    "step_size": ("motion", "step_size", float),
    "squaring_steps": ("motion", "squaring_steps", int),
    "delta_t_max": ("motion", "delta_t_max", int),
    "delta_t_mode": ("motion", "delta_t_mode", str),
    "coupling": ("motion", "coupling", str),
    "exemplar_size": ("tracker", "exemplar_size", int),
    "search_size": ("tracker", "search_size", int),
    "label_sigma": ("tracker", "label_sigma", float),
    "prior_sigma": ("tracker", "prior_sigma", float),
    "prior_weight": ("tracker", "prior_weight", float),
    "dpn_levels": ("tracker", "dpn_levels", int),
    "feature_bank": ("tracker", "feature_bank", str),
    "template_update": ("tracker", "template_update", float),
    "use_dpn": ("tracker", "use_dpn", _parse_bool),
    "emma_k": ("emma", "k", int),
    "emma_iters": ("emma", "iterations", int),
    "descriptor_patch": ("emma", "descriptor_patch", int),
    "kernel": ("emma", "kernel", str),
}


@dataclass
class ConfigBundle:
    motion: MotionConfig
    tracker: TrackerConfig
    emma: EmmaConfig


def parse_config_text(text: str, source: str = "<config>") -> ConfigBundle:
    sections: dict[str, dict] = {"motion": {}, "tracker": {}, "emma": {}}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown config key: {key}")
        section, field_name, parser = _KEYS[key]
        try:
            sections[section][field_name] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    try:
        return ConfigBundle(
            motion=MotionConfig(**sections["motion"]),
            tracker=TrackerConfig(**sections["tracker"]),
            emma=EmmaConfig(**sections["emma"]),
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path: str | Path | None) -> ConfigBundle:
    """Parse a config file; ``None`` yields all defaults."""
    if path is None:
        return ConfigBundle(MotionConfig(), TrackerConfig(), EmmaConfig())
    path = Path(path)
    return parse_config_text(path.read_text(encoding="utf-8"), source=path.name)
