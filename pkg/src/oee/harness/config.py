"""Experiment configuration files.

Grammar (one setting per line, ``#`` or ``;`` starts a comment)::

    [experiment]
    kind = gridworld          # gridworld | gaussian | archery | cartpole | bounds
    seeds = 0, 1, 2           # comma-separated integers
    out = results/grid

    [gridworld]               # one section per experiment kind
    size = 10
    deltas = 0.1, 0.5, 0.9

    [train]                   # ratio-model training (see oee.ratio.TrainConfig)
    iterations = 100

Values are plain strings; lists are comma-separated. Unknown keys in a
section owned by an experiment are rejected so typos do not pass silently.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

KINDS = ("gridworld", "gaussian", "archery", "cartpole", "bounds")


class ConfigError(ValueError):
    pass


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str  # keep key case
    return cp


@dataclass
class ExperimentConfig:
    kind: str
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    out: str = "results"
    sections: dict[str, dict[str, str]] = field(default_factory=dict)
    text: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")

    # ----- typed lookups against a defaults table

    def section(self, name: str, defaults: dict) -> dict:
        """Merge ``[name]`` over ``defaults``, converting each value to the default's type."""
        raw = self.sections.get(name, {})
        unknown = set(raw) - set(defaults)
        if unknown:
            raise ConfigError(f"[{name}] has unknown keys: {', '.join(sorted(unknown))}")
        out = dict(defaults)
        for key, text in raw.items():
            out[key] = _convert(text, defaults[key], f"[{name}] {key}")
        return out

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def canonical(self) -> str:
        """Normalised text: sorted sections and keys, used for the manifest hash."""
        lines = [f"kind={self.kind}", f"seeds={','.join(map(str, self.seeds))}"]
        for name in sorted(self.sections):
            for key in sorted(self.sections[name]):
                lines.append(f"{name}.{key}={self.sections[name][key]}")
        return "\n".join(lines) + "\n"


def _convert(text: str, like, where: str):
    try:
        if isinstance(like, bool):
            low = text.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(like, int):
            return int(float(text)) if float(text).is_integer() else int(text)
        if isinstance(like, float):
            return float(text)
        if isinstance(like, tuple):
            items = [t.strip() for t in text.split(",") if t.strip()]
            elem = like[0] if like else 0.0
            return tuple(_convert(t, elem, where) for t in items)
        return text.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot read {text!r} as {type(like).__name__}") from None


def parse_config(text: str, kind: str | None = None) -> ExperimentConfig:
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0]) from None
    sections = {name: dict(cp[name]) for name in cp.sections()}
    head = sections.pop("experiment", {})
    kind = kind or head.get("kind")
    if kind is None:
        raise ConfigError("no experiment kind given ([experiment] kind = ...)")
    if head.get("kind", kind) != kind:
        raise ConfigError(f"config is for {head['kind']!r}, not {kind!r}")
    seeds = list(range(10))
    if "seeds" in head:
        seeds = list(_convert(head["seeds"], (0,), "[experiment] seeds"))
    extra = set(head) - {"kind", "seeds", "out"}
    if extra:
        raise ConfigError(f"[experiment] has unknown keys: {', '.join(sorted(extra))}")
    return ExperimentConfig(kind, seeds, head.get("out", f"results/{kind}"), sections, text)


def load_config(path: str | Path, kind: str | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, kind)
