"""Plain-text ``key = value`` experiment configuration.

Keys are dotted (``train.iterations``, ``trajectory.test.view_count``);
lists are comma-separated. ``#`` starts a comment. The resolved config can be
written back in the same format, and that text re-parses to an equal config.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Iterable

from .pipeline import ExperimentConfig


class ConfigError(ValueError):
    pass


# public key prefix -> attribute path inside ExperimentConfig
_SECTIONS = {
    "scene": ("scene",),
    "trajectory.train": ("train_trajectory",),
    "trajectory.test": ("test_trajectory",),
    "train": ("train",),
    "render": ("render",),
    "model": ("model",),
}
# single keys that do not follow the section layout
_ALIASES = {
    "image.width": ("width",),
    "image.height": ("height",),
    "strategy.strategies": ("strategies",),
    "strategy.codec_modes": ("codec_modes",),
    "strategy.quantizer": ("quantizer",),
    "strategy.noise_amplitude": ("noise_amplitude",),
    "qp_ladder.param": ("param_qp_ladder",),
    "qp_ladder.pixel": ("pixel_qp_ladder",),
    "eval.gt_samples": ("gt_samples",),
}


# the render background always follows scene.background
_HIDDEN = {"render.background"}


def known_keys(cfg: ExperimentConfig | None = None) -> dict[str, tuple[str, ...]]:
    cfg = cfg or ExperimentConfig()
    keys = dict(_ALIASES)
    for prefix, path in _SECTIONS.items():
        sub = _get(cfg, path)
        for f in dataclasses.fields(sub):
            key = f"{prefix}.{f.name}"
            if key not in _HIDDEN:
                keys[key] = path + (f.name,)
    return keys


def _get(obj, path):
    for name in path:
        obj = getattr(obj, name)
    return obj


def _set(obj, path, value):
    if len(path) == 1:
        return dataclasses.replace(obj, **{path[0]: value})
    return dataclasses.replace(obj, **{path[0]: _set(getattr(obj, path[0]), path[1:], value)})


def _coerce(text: str, like, key: str):
    text = text.strip()
    try:
        if isinstance(like, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(like, int):
            return int(text)
        if isinstance(like, float):
            return float(text)
        if isinstance(like, tuple):
            elem = like[0] if like else ""
            return tuple(_coerce(t, elem, key) for t in text.split(",") if t.strip())
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {type(like).__name__}") from None


def apply_overrides(cfg: ExperimentConfig, pairs: Iterable[tuple[str, str]]) -> ExperimentConfig:
    keys = known_keys(cfg)
    for key, text in pairs:
        if key not in keys:
            raise ConfigError(f"unknown config key {key!r}")
        path = keys[key]
        try:
            cfg = _set(cfg, path, _coerce(text, _get(cfg, path), key))
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"{key}: {e}") from None
    return cfg


def parse_pairs(text: str, source: str = "<config>") -> list[tuple[str, str]]:
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def parse_override(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def load_config(path=None, overrides: Iterable[str] = ()) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path is not None:
        p = Path(path)
        cfg = apply_overrides(cfg, parse_pairs(p.read_text(), str(p)))
    return apply_overrides(cfg, [parse_override(o) for o in overrides])


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def dump_config(cfg: ExperimentConfig) -> str:
    """Every key with its resolved value, one per line, in a stable order."""
    lines = [f"{key} = {_format(_get(cfg, path))}" for key, path in sorted(known_keys(cfg).items())]
    return "\n".join(lines) + "\n"
