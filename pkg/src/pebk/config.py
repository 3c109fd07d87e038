"""Experiment configuration files.

A config file is INI-style text with one section per experiment id::

    [ade-efficiency]
    P = 2, 4, 8
    tol = 1e-4

Values are typed by the experiment's schema; lists are comma-separated and
pairs use ``a:b``.  ``--set key=value`` overrides are parsed the same way.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _split(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


PARSERS = {
    "int": int,
    "float": float,
    "str": str.strip,
    "bool": _parse_bool,
    "ints": lambda s: [int(p) for p in _split(s)],
    "floats": lambda s: [float(p) for p in _split(s)],
    "strs": _split,
    "pairs": lambda s: [tuple(float(q) for q in p.split(":")) for p in _split(s)],
}


def _fmt_scalar(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def format_value(kind: str, value) -> str:
    if kind == "bool":
        return "true" if value else "false"
    if kind in ("ints", "floats", "strs"):
        return ", ".join(_fmt_scalar(v) for v in value)
    if kind == "pairs":
        return ", ".join(":".join(_fmt_scalar(q) for q in p) for p in value)
    return _fmt_scalar(value)


def parse_value(kind: str, text: str):
    try:
        value = PARSERS[kind](text)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"cannot read {text!r} as {kind}: {exc}") from None
    if kind == "pairs" and any(len(p) != 2 for p in value):
        raise ConfigError(f"expected a:b pairs, got {text!r}")
    return value


@dataclass
class ExperimentConfig:
    """Validated parameters for one experiment run."""

    experiment: str
    params: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.params[key]

    def get(self, key, default=None):
        return self.params.get(key, default)

    def to_text(self, schema: dict) -> str:
        lines = [f"[{self.experiment}]"]
        for key, (kind, _) in schema.items():
            lines.append(f"{key} = {format_value(kind, self.params[key])}")
        return "\n".join(lines) + "\n"


def load_config(experiment: str, schema: dict, path=None, overrides=(), text: str | None = None) -> ExperimentConfig:
    """Schema defaults, then the ``[experiment]`` section, then ``key=value`` overrides.

    ``schema`` maps key to ``(kind, default)``.  Unknown keys raise
    :class:`ConfigError`.
    """
    params = {k: v for k, (_, v) in schema.items()}
    raw = {}
    if path is not None or text is not None:
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        try:
            if text is None:
                p = Path(path)
                if not p.is_file():
                    raise ConfigError(f"config file {p} not found")
                text = p.read_text()
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        if parser.has_section(experiment):
            raw.update(parser.items(experiment))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        k, v = item.split("=", 1)
        raw[k.strip()] = v
    for k, v in raw.items():
        if k not in schema:
            known = ", ".join(sorted(schema))
            raise ConfigError(f"unknown parameter {k!r} for {experiment}; known: {known}")
        params[k] = parse_value(schema[k][0], v)
    return ExperimentConfig(experiment, params)
