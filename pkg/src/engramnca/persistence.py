"""Deterministic serialization: model checkpoints, run configs, metrics.

Checkpoint container: a ZIP holding manifest.json plus one little-endian
float32 .bin per tensor. Fixed timestamps keep the archive byte-stable for
identical contents. Round-trips are bit-exact on parameters.

RunConfig: one flat key-value document covering every tunable. Unknown keys
are rejected; missing keys are filled from defaults and echoed back, so an
emitted config.json always shows the full effective configuration.

Metrics: append-only CSV with repr-formatted floats, so a replayed run
reproduces the file byte for byte.
"""
from __future__ import annotations

import hashlib
import io
import json
import zipfile
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .autodiff import parameter
from .errors import (ConfigError, CorruptionError, LayoutError, PersistenceError,
                     UnsupportedVersionError)
from .grid import ChannelLayout
from .models import (ROLES, STENCIL_ORDER, STENCILS, ModelParams, out_channels_for,
                     perception_config_for)

FORMAT_VERSION = 1
CHECKPOINT_SUFFIX = ".nca"
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def save_checkpoint(params: ModelParams, path, rng_seed: int | None = None,
                    config_digest: str = "") -> None:
    path = Path(path)
    tensors = {}
    blobs = {}
    for name, tensor in params.named().items():
        arr = np.ascontiguousarray(tensor.data, dtype="<f4")
        tensors[name] = {"shape": list(arr.shape), "file": f"{name}.bin"}
        blobs[f"{name}.bin"] = arr.tobytes()
    manifest = {
        "format_version": FORMAT_VERSION,
        "model_role": params.role,
        "layout": params.layout.to_dict(),
        "hidden_units": params.hidden_units,
        "stencils": [{"name": n, "kernel": np.asarray(STENCILS[n], dtype=np.float64).tolist()}
                     for n in STENCIL_ORDER],
        "fire_rate": params.fire_rate,
        "padding": params.padding,
        "rng_seed": rng_seed,
        "config_digest": config_digest,
        "tensors": tensors,
    }
    try:
        with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
            _write_member(zf, "manifest.json",
                          json.dumps(manifest, indent=2, sort_keys=True).encode())
            for fname, blob in blobs.items():
                _write_member(zf, fname, blob)
    except OSError as exc:
        raise PersistenceError(f"cannot write checkpoint {path}: {exc}") from exc


def _write_member(zf: zipfile.ZipFile, name: str, payload: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, payload)


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    """Rebuild ModelParams bit-exactly; returns (params, manifest)."""
    path = Path(path)
    if not path.exists():
        raise PersistenceError(f"checkpoint not found: {path}")
    try:
        zf = zipfile.ZipFile(path)
    except (zipfile.BadZipFile, OSError) as exc:
        raise CorruptionError(f"unreadable checkpoint container {path}: {exc}") from exc
    with zf:
        try:
            manifest = json.loads(zf.read("manifest.json"))
        except KeyError as exc:
            raise CorruptionError(f"checkpoint {path} has no manifest.json") from exc
        except json.JSONDecodeError as exc:
            raise CorruptionError(f"checkpoint {path} manifest is not valid JSON") from exc

        version = manifest.get("format_version")
        if version != FORMAT_VERSION:
            raise UnsupportedVersionError(
                f"checkpoint format_version {version!r} unsupported (expected {FORMAT_VERSION})")
        role = manifest.get("model_role")
        if role not in ROLES:
            raise CorruptionError(f"unknown model_role {role!r} in {path}")
        layout = ChannelLayout.from_dict(manifest["layout"])
        _check_stencils(manifest.get("stencils", []), path)

        arrays = {}
        for name in ("w1", "b1", "w2"):
            spec = manifest["tensors"].get(name)
            if spec is None:
                raise CorruptionError(f"checkpoint {path} manifest lists no tensor {name!r}")
            shape = tuple(spec["shape"])
            try:
                blob = zf.read(spec["file"])
            except KeyError as exc:
                raise CorruptionError(f"checkpoint {path} missing blob {spec['file']}") from exc
            expected = int(np.prod(shape)) * 4
            if len(blob) != expected:
                raise CorruptionError(
                    f"blob {spec['file']} holds {len(blob)} bytes, expected {expected}")
            arrays[name] = np.frombuffer(blob, dtype="<f4").reshape(shape).copy()

    hidden_units = int(manifest["hidden_units"])
    pdim = perception_config_for(role, layout).dim()
    out = out_channels_for(role, layout)
    if arrays["w1"].shape != (hidden_units, pdim) or arrays["b1"].shape != (hidden_units,) \
            or arrays["w2"].shape != (out, hidden_units):
        raise LayoutError(
            f"checkpoint {path} tensor shapes {[a.shape for a in arrays.values()]} do not "
            f"match role {role} with layout {layout.to_dict()} and {hidden_units} hidden units")

    params = ModelParams(
        role=role, layout=layout, hidden_units=hidden_units,
        w1=parameter(arrays["w1"], "w1"), b1=parameter(arrays["b1"], "b1"),
        w2=parameter(arrays["w2"], "w2"),
        fire_rate=float(manifest["fire_rate"]), padding=manifest["padding"])
    return params, manifest


def _check_stencils(entries: list, path) -> None:
    recorded = {e["name"]: np.asarray(e["kernel"], dtype=np.float32) for e in entries}
    for name in STENCIL_ORDER:
        if name not in recorded:
            raise CorruptionError(f"checkpoint {path} manifest lacks stencil {name!r}")
        if not np.array_equal(recorded[name], STENCILS[name]):
            raise CorruptionError(
                f"checkpoint {path} records stencil {name!r} with unexpected kernel values")


def load_checkpoint_as(path, expected_role: str) -> tuple[ModelParams, dict]:
    params, manifest = load_checkpoint(path)
    if params.role != expected_role:
        raise ConfigError(
            f"checkpoint {path} holds a {params.role!r} model, not {expected_role!r}")
    return params, manifest


# ---------------------------------------------------------------------------
# Run configuration.

CONFIG_DEFAULTS: dict[str, object] = {
    # grid
    "grid_h": 30,
    "grid_w": 30,
    "n_hidden": 4,
    "n_gene": 8,
    "n_meta": 0,
    "padding": "zero",
    "alive_threshold": 0.1,
    "fire_rate": 0.5,
    # model widths
    "hidden_units_gene": 128,
    "hidden_units_prop": 64,
    "hidden_units_baseline": 0,       # 0 = size to match gene+prop parameter sum
    "hidden_units_variant": 96,
    # training
    "iterations": 2000,
    "pool_size": 256,
    "batch_per_primitive": 8,
    "batch_cap": 24,
    "t_min": 64,
    "t_max": 96,
    "lr": 2e-3,
    "lr_decay_iteration": 0,          # 0 = no decay
    "lr_decay_factor": 0.1,
    "adam_beta1": 0.9,
    "adam_beta2": 0.999,
    "adam_eps": 1e-8,
    "grad_norm_eps": 1e-8,
    "rng_seed": 0,
    "checkpoint_every": 0,            # 0 = final only
    # ensemble
    "gene_every": 1,
    "prop_every": 1,
    # assets / experiment selection
    "assets_dir": "assets",
    "bundle": "polygons",
    "target_bundle": "full",
    "target_name": "lizard",
    "target_name_b": "",
    "seed_primitive": "torso",
    "meta_a": "",
    "meta_b": "",
    "gene_checkpoint": "",
    "prop_checkpoint": "",
    # moving-target curriculum
    "frames_dir": "assets/lenia",
    "max_frames": 500,
    "prefix_steps": 64,
    "steps_per_frame": 1,
    "curriculum_initial_frames": 50,
    "curriculum_unlock_frames": 50,
    "curriculum_unlock_every": 2000,
    "bptt_segment": 96,
    "rollout_batch": 4,
    # privatization sweep / regrowth
    "sweep_levels": "0,4,8,12",
    "sweep_variants": "dummy_vca,masked_ca,reduced_ca",
    "regrowth_trials": 100,
    "damage_radius": 6,
    "damage_centers": "8,8;15,22;22,10",
    "regrow_steps": 150,
    "grow_steps": 150,
}

_CONFIG_TYPES = {k: type(v) for k, v in CONFIG_DEFAULTS.items()}


class RunConfig:
    """Flat, fully-echoed key-value configuration with strict key checking."""

    def __init__(self, values: Mapping[str, object] | None = None):
        merged = dict(CONFIG_DEFAULTS)
        for key, value in (values or {}).items():
            if key not in CONFIG_DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = _coerce(key, value)
        self._values = merged

    def __getitem__(self, key: str):
        if key not in self._values:
            raise ConfigError(f"unknown config key {key!r}")
        return self._values[key]

    def get(self, key: str):
        return self[key]

    def with_overrides(self, overrides: Mapping[str, object]) -> "RunConfig":
        merged = dict(self._values)
        for key, value in overrides.items():
            if key not in CONFIG_DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = _coerce(key, value)
        return RunConfig(merged)

    def to_dict(self) -> dict:
        return dict(self._values)

    def digest(self) -> str:
        canon = json.dumps(self._values, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def layout(self) -> ChannelLayout:
        return ChannelLayout.standard(self["n_hidden"], self["n_gene"], self["n_meta"])

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return cls(data)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self._values, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _coerce(key: str, value):
    expected = _CONFIG_TYPES[key]
    if expected is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {key!r} expects an integer, got {value!r}")
        if isinstance(value, float):
            if not value.is_integer():
                raise ConfigError(f"config key {key!r} expects an integer, got {value!r}")
            return int(value)
        return value
    if not isinstance(value, expected):
        raise ConfigError(
            f"config key {key!r} expects {expected.__name__}, got {type(value).__name__}")
    return value


def parse_override(text: str) -> tuple[str, object]:
    """KEY=VALUE override; VALUE parsed as JSON when possible, else string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not KEY=VALUE")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


# ---------------------------------------------------------------------------
# Metrics.

class MetricsWriter:
    """Append-only CSV; floats written via repr so replays are byte-identical."""

    def __init__(self, path, fieldnames: Iterable[str]):
        self.path = Path(path)
        self.fieldnames = list(fieldnames)
        if not self.path.exists() or self.path.stat().st_size == 0:
            with open(self.path, "w") as fh:
                fh.write(",".join(self.fieldnames) + "\n")

    def append(self, row: Mapping[str, object]) -> None:
        cells = []
        for name in self.fieldnames:
            value = row[name]
            if isinstance(value, float):
                cells.append(repr(value))
            else:
                cells.append(str(value))
        with open(self.path, "a") as fh:
            fh.write(",".join(cells) + "\n")
