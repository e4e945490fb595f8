"""INI configuration files.

Three optional sections, ``[model]``, ``[train]`` and ``[augment]``.  Every
value is a JSON literal (``64``, ``0.1``, ``"adam"``, ``[1, 1, 2, 1]``) and
keys are the field names of :class:`ModelConfig`, :class:`TrainConfig` and
:class:`AugmentConfig`.  Unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
from pathlib import Path

from .data import AugmentConfig
from .model import ConfigError, ModelConfig
from .train import TrainConfig

_SECTIONS = {"model": ModelConfig, "train": TrainConfig, "augment": AugmentConfig}


def _fields(cls) -> set:
    return {f.name for f in dataclasses.fields(cls)} - {"augment"}


def parse_config(text: str, source: str = "<config>"):
    """Returns ``(ModelConfig, TrainConfig)``."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__unused__")
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    values = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"{source}: unknown section [{section}]; expected one of {sorted(_SECTIONS)}")
        allowed = _fields(_SECTIONS[section])
        vals = {}
        for key, raw in cp.items(section):
            if key not in allowed:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            try:
                vals[key] = json.loads(raw)
            except json.JSONDecodeError:
                raise ConfigError(f"{source}: [{section}] {key} = {raw!r} is not a JSON literal") from None
        values[section] = vals
    try:
        model = ModelConfig(**values.get("model", {}))
        aug = AugmentConfig(**values.get("augment", {}))
        train = TrainConfig(**values.get("train", {}), augment=aug)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return model, train


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def format_config(model: ModelConfig, train: TrainConfig) -> str:
    lines = ["[model]"]
    lines += [f"{k} = {json.dumps(v)}" for k, v in model.to_dict().items()]
    lines.append("")
    lines.append("[train]")
    for f in dataclasses.fields(train):
        if f.name != "augment":
            v = getattr(train, f.name)
            lines.append(f"{f.name} = {json.dumps(list(v) if isinstance(v, tuple) else v)}")
    lines.append("")
    lines.append("[augment]")
    for f in dataclasses.fields(train.augment):
        v = getattr(train.augment, f.name)
        lines.append(f"{f.name} = {json.dumps(list(v) if isinstance(v, tuple) else v)}")
    return "\n".join(lines) + "\n"
