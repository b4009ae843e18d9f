"""Run configuration and dataset indexing.

The config file is YAML with these keys (all optional)::

    seed: 0
    dataset:
      root: data            # directory holding the two subdirectories below
      images: images
      masks: masks
    rbd:
      k_regions: 200
      compactness: 20.0
      sigma_clr: 10.0
      delta_bndcon: 1.0
      sigma_spa: 0.25
    model:
      widths: [8, 16, 16, 16]
      fusion_width: 16
    train:
      base_lr: 0.001
      momentum: 0.9
      power: 0.9
      max_iter: 1000
      normalize_loss: true
    synth:
      count: 200
      size: 64
    output: out

Precedence, lowest first: built-in defaults, the config file, ``--set key=value``
overrides, then dedicated flags such as ``--seed`` or ``--out``.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .io import IMAGE_SUFFIXES, DataError
from .net.optim import TrainConfig
from .rbd import RBDParams

DEFAULTS = {
    "seed": 0,
    "dataset": {"root": None, "images": "images", "masks": "masks"},
    "rbd": {"k_regions": 200, "compactness": 20.0, "sigma_clr": 10.0, "delta_bndcon": 1.0, "sigma_spa": 0.25},
    "model": {"widths": [8, 16, 16, 16], "fusion_width": 16},
    "train": {"base_lr": 1e-3, "momentum": 0.9, "power": 0.9, "max_iter": 1000, "normalize_loss": True},
    "synth": {"count": 200, "size": 64},
    "output": "out",
}
# path-valued keys do not change results, so they stay out of the config hash
PATH_KEYS = {("dataset", "root"), ("output",)}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict, prefix=()):
    for key, value in over.items():
        if key not in base:
            raise ConfigError(f"unknown config key '{'.'.join(prefix + (key,))}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key '{'.'.join(prefix + (key,))}' must be a mapping")
            _merge(base[key], value, prefix + (key,))
        else:
            base[key] = value


def _set(tree: dict, dotted: str, raw: str):
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            raise ConfigError(f"unknown config key '{dotted}'")
        node = node[k]
    if keys[-1] not in node or isinstance(node[keys[-1]], dict):
        raise ConfigError(f"unknown config key '{dotted}'")
    node[keys[-1]] = yaml.safe_load(raw)


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def load(cls, path=None, overrides=(), **flags) -> "RunConfig":
        values = copy.deepcopy(DEFAULTS)
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"config file {path} does not exist")
            loaded = yaml.safe_load(path.read_text()) or {}
            if not isinstance(loaded, dict):
                raise ConfigError(f"{path}: top level must be a mapping")
            _merge(values, loaded)
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override '{item}' is not of the form key=value")
            key, raw = item.split("=", 1)
            _set(values, key.strip(), raw)
        for dotted, value in flags.items():
            if value is not None:
                _set(values, dotted.replace("__", "."), json.dumps(value))
        cfg = cls(values)
        cfg.validate()
        return cfg

    def validate(self):
        try:
            self.rbd_params()
            self.train_config()
            widths = [int(w) for w in self.values["model"]["widths"]]
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if len(widths) != 4 or min(widths) < 1:
            raise ConfigError(f"model.widths must list 4 positive integers, got {widths}")
        if int(self.values["synth"]["count"]) < 0 or int(self.values["synth"]["size"]) < 16:
            raise ConfigError("synth.count must be >= 0 and synth.size >= 16")

    @property
    def seed(self) -> int:
        return int(self.values["seed"])

    @property
    def output(self) -> Path:
        return Path(self.values["output"])

    def rbd_params(self) -> RBDParams:
        r = self.values["rbd"]
        return RBDParams(
            k_regions=int(r["k_regions"]),
            compactness=float(r["compactness"]),
            sigma_clr=float(r["sigma_clr"]),
            delta_bndcon=float(r["delta_bndcon"]),
            sigma_spa=float(r["sigma_spa"]),
        )

    def train_config(self) -> TrainConfig:
        t = self.values["train"]
        return TrainConfig(
            base_lr=float(t["base_lr"]),
            momentum=float(t["momentum"]),
            power=float(t["power"]),
            max_iter=int(t["max_iter"]),
            seed=self.seed,
            image_size=int(self.values["synth"]["size"]),
            normalize_loss=bool(t["normalize_loss"]),
        )

    def model_plan(self) -> tuple[tuple[int, ...], int]:
        m = self.values["model"]
        return tuple(int(w) for w in m["widths"]), int(m["fusion_width"])

    def config_hash(self) -> str:
        v = copy.deepcopy(self.values)
        for keys in PATH_KEYS:
            node = v
            for k in keys[:-1]:
                node = node[k]
            node.pop(keys[-1], None)
        blob = json.dumps(v, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def dump(self) -> str:
        return yaml.safe_dump(self.values, sort_keys=True)

    def dataset_dirs(self) -> tuple[Path, Path]:
        d = self.values["dataset"]
        if d["root"] is None:
            raise ConfigError("dataset.root is not set (use --data or the config file)")
        root = Path(d["root"])
        if not root.is_dir():
            raise DataError(f"dataset root {root} does not exist")
        return root / d["images"], root / d["masks"]


def _stems(directory: Path) -> dict[str, Path]:
    if not directory.is_dir():
        return {}
    out = {}
    for p in sorted(directory.iterdir()):
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES:
            if p.stem in out:
                raise DataError(f"two files share the stem '{p.stem}' in {directory}")
            out[p.stem] = p
    return out


@dataclass
class DatasetIndex:
    pairs: list[tuple[Path, Path]]
    unmatched_images: list[Path]
    unmatched_masks: list[Path]

    @classmethod
    def build(cls, image_dir, mask_dir) -> "DatasetIndex":
        images, masks = _stems(Path(image_dir)), _stems(Path(mask_dir))
        common = sorted(images.keys() & masks.keys())
        return cls(
            pairs=[(images[s], masks[s]) for s in common],
            unmatched_images=[images[s] for s in sorted(images.keys() - masks.keys())],
            unmatched_masks=[masks[s] for s in sorted(masks.keys() - images.keys())],
        )

    @property
    def n_matched(self) -> int:
        return len(self.pairs)

    @property
    def n_unmatched(self) -> int:
        return len(self.unmatched_images) + len(self.unmatched_masks)


def list_images(directory) -> list[Path]:
    return list(_stems(Path(directory)).values())
