"""
Run configuration files.

A run file is a list of `key = value` lines; `#` starts a comment, blank
lines are skipped and tuples are written comma-separated (`window = 2, 3, 3`).
Keys are the fields of ModelConfig and TrainConfig plus `data_dir` and
`out_dir`. The first entry may be `preset = <name>` to start from a named
preset; later lines override it. Errors name the file and line.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from sitswin.errors import ConfigError
from sitswin.swin.config import ModelConfig

PathLike = Union[str, Path]

PATH_KEYS = ("data_dir", "out_dir")


@dataclass(frozen=True)
class TrainConfig:
    """SGD with momentum under a per-step cosine schedule; defaults follow the 200-epoch, batch-2 protocol."""

    lr_max: float = 0.01
    lr_min: float = 0.0
    momentum: float = 0.9
    epochs: int = 200
    batch_size: int = 2
    seed: int = 0
    ignore_id: int = 255

    def __post_init__(self) -> None:
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"TrainConfig: momentum must be in [0, 1), got {self.momentum}", key="momentum")
        if not isinstance(self.epochs, int) or self.epochs < 1:
            raise ConfigError(f"TrainConfig: epochs must be >= 1, got {self.epochs!r}", key="epochs")
        if not isinstance(self.batch_size, int) or self.batch_size < 1:
            raise ConfigError(f"TrainConfig: batch_size must be >= 1, got {self.batch_size!r}", key="batch_size")
        if self.lr_min < 0:
            raise ConfigError(f"TrainConfig: lr_min must be >= 0, got {self.lr_min}", key="lr_min")
        if self.lr_min > self.lr_max:
            raise ConfigError(f"TrainConfig: lr_min {self.lr_min} exceeds lr_max {self.lr_max}", key="lr_min")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"TrainConfig: seed must be an unsigned 64-bit int, got {self.seed!r}", key="seed")
        if not 0 <= self.ignore_id <= 255:
            raise ConfigError(f"TrainConfig: ignore_id must be a byte value, got {self.ignore_id}", key="ignore_id")

    @classmethod
    def field_names(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data_dir: Optional[str] = None
    out_dir: Optional[str] = None

    def to_text(self) -> str:
        """Canonical text form; parse_config(cfg.to_text()) == cfg."""
        lines = ["# model"]
        lines += [f"{name} = {_format(getattr(self.model, name))}" for name in ModelConfig.field_names()]
        lines.append("# training")
        lines += [f"{name} = {_format(getattr(self.train, name))}" for name in TrainConfig.field_names()]
        paths = [f"{key} = {getattr(self, key)}" for key in PATH_KEYS if getattr(self, key) is not None]
        if paths:
            lines.append("# paths")
            lines += paths
        return "\n".join(lines) + "\n"


PRESETS: Dict[str, RunConfig] = {
    "munich-like": RunConfig(),
    "lombardia-like": RunConfig(ModelConfig(in_channels=7, num_classes=7)),
    "tiny": RunConfig(
        ModelConfig(in_channels=4, num_classes=5, time_steps=16, embed_dim=12, num_heads=(2, 2, 4)),
        TrainConfig(lr_max=0.05, epochs=75),
    ),
    "gradcheck": RunConfig(
        ModelConfig(
            in_channels=3,
            num_classes=3,
            time_steps=16,
            height=16,
            width=16,
            embed_dim=12,
            num_heads=(2, 2, 4),
            window=(2, 2, 2),
        ),
    ),
}


def preset(name: str) -> RunConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset '{name}', choose from {', '.join(PRESETS)}", key="preset") from None


def _format(value: Any) -> str:
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _convert(raw: str, default: Any) -> Any:
    if isinstance(default, tuple):
        return tuple(int(part) for part in raw.split(","))
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, int):
        return int(raw)
    return raw


def _defaults() -> Dict[str, Tuple[str, Any]]:
    table: Dict[str, Tuple[str, Any]] = {}
    for section, cls in (("model", ModelConfig), ("train", TrainConfig)):
        instance = cls()
        for name in cls.field_names():
            table[name] = (section, getattr(instance, name))
    for key in PATH_KEYS:
        table[key] = ("path", "")
    return table


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    base = RunConfig()
    table = _defaults()
    values: Dict[str, Any] = {}
    lines: Dict[str, int] = {}
    first = True
    for number, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        key, sep, raw = content.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{number}: expected 'key = value', got {content!r}", line=number)
        if key == "preset":
            if not first:
                raise ConfigError(f"{source}:{number}: 'preset' must be the first entry", key=key, line=number)
            try:
                base = preset(raw)
            except ConfigError as exc:
                raise ConfigError(f"{source}:{number}: {exc}", key=key, line=number) from None
            first = False
            continue
        first = False
        if key not in table:
            raise ConfigError(f"{source}:{number}: unknown key '{key}'", key=key, line=number)
        if key in lines:
            raise ConfigError(f"{source}:{number}: duplicate key '{key}' (first set on line {lines[key]})", key=key, line=number)
        try:
            values[key] = _convert(raw, table[key][1])
        except ValueError:
            raise ConfigError(f"{source}:{number}: invalid value {raw!r} for '{key}'", key=key, line=number) from None
        lines[key] = number

    def located(exc: ConfigError) -> ConfigError:
        number = lines.get(exc.key) if exc.key else None
        where = f"{source}:{number}" if number else source
        return ConfigError(f"{where}: {exc}", key=exc.key, line=number)

    model_values = {k: v for k, v in values.items() if table[k][0] == "model"}
    train_values = {k: v for k, v in values.items() if table[k][0] == "train"}
    try:
        model = replace(base.model, **model_values)
        train = replace(base.train, **train_values)
    except ConfigError as exc:
        raise located(exc) from None
    return RunConfig(
        model,
        train,
        values.get("data_dir", base.data_dir),
        values.get("out_dir", base.out_dir),
    )


def load_config(path: PathLike) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}", key="config") from None
    return parse_config(text, str(path))

