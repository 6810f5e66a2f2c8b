"""Training run configuration files.

A run config is a TOML document. Top-level keys are the ``TrainConfig``
fields plus ``task_mode``, ``data_a``, ``data_b``, ``out_dir``, ``metrics``
and ``embedder``; loss weights live in a ``[weights]`` table with keys
``adv``, ``idt``, ``rec``, ``cls`` and ``dom``. Unknown keys are rejected.
Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from pairgan.io import read_meta
from pairgan.losses import TASK_MODES, TRANSFIGURATION, LossWeights
from pairgan.trainer import TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

_WEIGHT_KEYS = {"adv", "idt", "rec", "cls", "dom"}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"weights"}
_RUN_KEYS = {"task_mode", "data_a", "data_b", "out_dir", "metrics", "embedder", "weights"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    task_mode: str
    data_a: Path
    data_b: Path
    out_dir: Path
    train: TrainConfig
    metrics: list = field(default_factory=lambda: ["l1", "ssim", "fid"])
    embedder: str | None = None

    def to_dict(self) -> dict:
        return {
            "task_mode": self.task_mode,
            "data_a": str(self.data_a),
            "data_b": str(self.data_b),
            "out_dir": str(self.out_dir),
            "metrics": list(self.metrics),
            "embedder": self.embedder,
            "train": self.train.to_dict(),
        }


def parse_run_config(raw: dict, base_dir=".", check_paths: bool = True) -> RunConfig:
    unknown = sorted(set(raw) - _TRAIN_KEYS - _RUN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for key in ("data_a", "data_b", "out_dir"):
        if key not in raw:
            raise ConfigError(f"missing required config key: {key}")
    task_mode = raw.get("task_mode", TRANSFIGURATION)
    if task_mode not in TASK_MODES:
        raise ConfigError(f"task_mode: must be one of {TASK_MODES}, got {task_mode!r}")

    w = dict(raw.get("weights", {}))
    bad = sorted(set(w) - _WEIGHT_KEYS)
    if bad:
        raise ConfigError(f"unknown keys in [weights]: {', '.join(bad)}")
    inactive = "dom" if task_mode == TRANSFIGURATION else "cls"
    if w.get(inactive, 0):
        log.warning("weights.%s forced to 0 in %s mode", inactive, task_mode)
    weights = LossWeights.for_mode(
        task_mode,
        adv=w.get("adv", 1.0),
        idt=w.get("idt", 10.0),
        rec=w.get("rec", 10.0),
        cls_w=w.get("cls", 10.0),
        dom=w.get("dom", 1.0),
    )

    base = Path(base_dir)
    paths = {k: (base / raw[k]).resolve() for k in ("data_a", "data_b", "out_dir")}
    if check_paths:
        for k in ("data_a", "data_b"):
            if not (paths[k] / "images").is_dir():
                raise ConfigError(f"{k}: dataset directory {paths[k]} has no images/ subdirectory")

    train_kwargs = {k: raw[k] for k in _TRAIN_KEYS if k in raw}
    meta = (read_meta(paths["data_a"]) if check_paths else None) or {}
    if "num_classes" not in train_kwargs:
        if "num_classes" not in meta:
            raise ConfigError("num_classes: not set and no meta.json found next to data_a")
        train_kwargs["num_classes"] = int(meta["num_classes"])
    if "image_size" not in train_kwargs and "H" in meta:
        train_kwargs["image_size"] = int(meta["H"])
    try:
        train = TrainConfig(weights=weights, **train_kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid training settings: {exc}") from exc
    return RunConfig(
        task_mode, paths["data_a"], paths["data_b"], paths["out_dir"], train,
        list(raw.get("metrics", ["l1", "ssim", "fid"])), raw.get("embedder"),
    )


def load_run_config(path, check_paths: bool = True) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return parse_run_config(raw, path.parent, check_paths)
