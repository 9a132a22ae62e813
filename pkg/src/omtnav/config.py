"""Run configuration: flat ``key = value`` text with dotted namespaces.

Namespaces are ``env.*`` (layout generation and sensing), ``model.*``,
``train.*``, ``eval.*`` and ``run.*``.  ``#`` starts a comment.  Tuples are
comma separated.  Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .env.gridworld import EnvConfig
from .env.layout import GenConfig
from .policy import VARIANTS, ModelDims
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    episodes: int = 100
    cap: int = 300
    mode: str = "greedy"
    test_layouts: tuple[int, int] = (80, 100)  # half-open seed range
    seed: int = 0
    render_scale: int = 8

    def validate(self) -> None:
        if self.episodes < 1:
            raise ConfigError("eval.episodes must be positive")
        if self.cap < 1:
            raise ConfigError("eval.cap must be positive")
        if self.mode not in ("greedy", "sample"):
            raise ConfigError("eval.mode must be greedy or sample")
        if self.test_layouts[1] <= self.test_layouts[0]:
            raise ConfigError("eval.test_layouts must be a non-empty range")


@dataclass(frozen=True)
class RunSection:
    out_dir: str = "runs/default"
    seeds: tuple[int, ...] = (0,)
    precision: int = 32


# train.seed / train.precision are driven by run.seeds / run.precision
_TRAIN_SKIP = ("seed", "precision")


@dataclass(frozen=True)
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    model: ModelDims = field(default_factory=ModelDims)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    run: RunSection = field(default_factory=RunSection)

    def validate(self) -> "RunConfig":
        try:
            self.env.gen.validate()
            self.model.validate()
            self.train_config(self.run.seeds[0] if self.run.seeds else 0).validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        self.eval.validate()
        if self.train.variant not in VARIANTS:
            raise ConfigError(f"train.variant must be one of {', '.join(VARIANTS)}")
        if not self.run.seeds:
            raise ConfigError("run.seeds must list at least one seed")
        if self.run.precision not in (32, 64):
            raise ConfigError("run.precision must be 32 or 64")
        if self.env.raster_size < 3 or self.env.raster_size % 2 == 0:
            raise ConfigError("env.raster_size must be odd and at least 3")
        return self

    def train_config(self, seed: int, variant: str | None = None) -> TrainConfig:
        return replace(self.train, seed=int(seed), precision=self.run.precision, variant=variant or self.train.variant)

    def dumps(self) -> str:
        return serialize(self)

    def digest(self) -> str:
        return hashlib.sha256(serialize(self).encode("utf-8")).hexdigest()


def _sections(cfg: RunConfig):
    """``(namespace, object, field names)`` in serialization order."""
    env_own = [f.name for f in fields(EnvConfig) if f.name != "gen"]
    return [
        ("env", cfg.env.gen, [f.name for f in fields(GenConfig)]),
        ("env", cfg.env, env_own),
        ("model", cfg.model, [f.name for f in fields(ModelDims)]),
        ("train", cfg.train, [f.name for f in fields(TrainConfig) if f.name not in _TRAIN_SKIP]),
        ("eval", cfg.eval, [f.name for f in fields(EvalConfig)]),
        ("run", cfg.run, [f.name for f in fields(RunSection)]),
    ]


def known_keys() -> list[str]:
    return [f"{ns}.{name}" for ns, _, names in _sections(RunConfig()) for name in names]


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _parse_scalar(text: str, like):
    if isinstance(like, bool):
        if text.lower() in ("true", "yes", "1"):
            return True
        if text.lower() in ("false", "no", "0"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if isinstance(like, int):
        try:
            return int(text)
        except ValueError:
            f = float(text)
            if not f.is_integer():
                raise ValueError(f"expected an integer, got {text!r}") from None
            return int(f)
    if isinstance(like, float):
        return float(text)
    return text


def _parse(text: str, default):
    if isinstance(default, tuple):
        if not text.strip():
            return ()
        like = default[0] if default else 0
        return tuple(_parse_scalar(t.strip(), like) for t in text.split(","))
    return _parse_scalar(text.strip(), default)


def serialize(cfg: RunConfig) -> str:
    lines = []
    prev = None
    for ns, obj, names in _sections(cfg):
        if ns != prev:
            if prev is not None:
                lines.append("")
            prev = ns
        for name in names:
            lines.append(f"{ns}.{name} = {_format(getattr(obj, name))}")
    return "\n".join(lines) + "\n"


def parse(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse config text on top of ``base`` (defaults when omitted) and validate it."""
    cfg = base or RunConfig()
    updates: dict[str, dict[str, object]] = {}
    keys = {}
    for ns, obj, names in _sections(cfg):
        for name in names:
            keys[f"{ns}.{name}"] = (ns if obj is not cfg.env.gen else "gen", name, getattr(obj, name))
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in keys:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        section, name, default = keys[key]
        try:
            updates.setdefault(section, {})[name] = _parse(value, default)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {key}: {exc}") from None
    gen = replace(cfg.env.gen, **updates.get("gen", {}))
    env = replace(cfg.env, gen=gen, **updates.get("env", {}))
    out = RunConfig(
        env=env,
        model=replace(cfg.model, **updates.get("model", {})),
        train=replace(cfg.train, **updates.get("train", {})),
        eval=replace(cfg.eval, **updates.get("eval", {})),
        run=replace(cfg.run, **updates.get("run", {})),
    )
    return out.validate()


def load(path) -> RunConfig:
    return parse(Path(path).read_text(encoding="utf-8"))


def save(cfg: RunConfig, path) -> None:
    Path(path).write_text(serialize(cfg), encoding="utf-8")
