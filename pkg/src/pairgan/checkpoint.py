"""Checkpoint archives.

An archive is an uncompressed zip holding ``manifest.json`` and one
``blobs/<name>.f32`` entry per tensor (raw little-endian float32). The manifest
carries the format version, the training config, counters, RNG states, Adam
step counts, history-buffer sizes and a SHA-256 digest per blob. Entries are
written in a fixed order with fixed timestamps so identical states produce
identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import zipfile
from pathlib import Path

import numpy as np
import torch

from pairgan.datamodel import LabeledPair
from pairgan.trainer import TrainConfig, TrainState, create_state

FORMAT = "pairgan-checkpoint"
VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


class CheckpointError(ValueError):
    pass


def _to_blob(t: torch.Tensor) -> bytes:
    return np.ascontiguousarray(t.detach().cpu().numpy(), dtype="<f4").tobytes()


def _from_blob(raw: bytes, shape) -> torch.Tensor:
    arr = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
    return torch.from_numpy(arr)


def _modules(state: TrainState):
    return {"G_s2t": state.G_s2t, "G_t2s": state.G_t2s, "D_s": state.D_s, "D_t": state.D_t}


def _optim_params(state: TrainState):
    """(optimizer name, optimizer, [(param name, param)]) in optimizer order."""
    g = [(f"G_s2t.{n}", p) for n, p in state.G_s2t.named_parameters()]
    g += [(f"G_t2s.{n}", p) for n, p in state.G_t2s.named_parameters()]
    d = [(f"D_s.{n}", p) for n, p in state.D_s.named_parameters()]
    d += [(f"D_t.{n}", p) for n, p in state.D_t.named_parameters()]
    return [("opt_G", state.opt_G, g), ("opt_D", state.opt_D, d)]


def _collect(state: TrainState):
    tensors = {}
    for mname, module in _modules(state).items():
        for pname, t in module.state_dict().items():
            tensors[f"{mname}/{pname}"] = t
    steps = {}
    for oname, opt, named in _optim_params(state):
        for pname, p in named:
            st = opt.state.get(p)
            if not st:
                continue
            steps[f"{oname}/{pname}"] = float(st["step"])
            tensors[f"{oname}/{pname}/exp_avg"] = st["exp_avg"]
            tensors[f"{oname}/{pname}/exp_avg_sq"] = st["exp_avg_sq"]
    buffers = {}
    for bname, buf in (("history_S", state.history_S), ("history_T", state.history_T)):
        for i, item in enumerate(buf.items):
            tensors[f"{bname}/{i:04d}/image"] = item.image
            tensors[f"{bname}/{i:04d}/classes"] = item.classes
        buffers[bname] = {
            "capacity": buf.capacity,
            "size": len(buf.items),
            "rng": buf.rng.bit_generator.state,
        }
    return tensors, steps, buffers


def save_checkpoint(state: TrainState, path) -> Path:
    path = Path(path)
    tensors, steps, buffers = _collect(state)
    blobs, entries = {}, []
    for name in tensors:
        raw = _to_blob(tensors[name])
        blobs[name] = raw
        entries.append({
            "name": name,
            "shape": list(tensors[name].shape),
            "sha256": hashlib.sha256(raw).hexdigest(),
        })
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "config": state.config.to_dict(),
        "epoch": state.epoch,
        "step": state.step,
        "rng": state.rng.bit_generator.state,
        "adam_steps": steps,
        "buffers": buffers,
        "blobs": entries,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with zipfile.ZipFile(tmp, "w", zipfile.ZIP_STORED) as zf:
        _write(zf, "manifest.json", json.dumps(manifest, indent=1, sort_keys=True).encode())
        for name in tensors:
            _write(zf, f"blobs/{name}.f32", blobs[name])
    tmp.replace(path)
    return path


def _write(zf, name, data):
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def read_manifest(path) -> dict:
    try:
        with zipfile.ZipFile(path) as zf:
            manifest = json.loads(zf.read("manifest.json"))
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path} is not a readable checkpoint: {exc}") from exc
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a {FORMAT} archive")
    if manifest.get("version") != VERSION:
        raise CheckpointError(
            f"{path} has format version {manifest.get('version')}, this build reads {VERSION}"
        )
    return manifest


def load_checkpoint(path, num_classes: int | None = None) -> TrainState:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint {path} not found")
    manifest = read_manifest(path)
    cfg = TrainConfig.from_dict(manifest["config"])
    if num_classes is not None and cfg.num_classes != num_classes:
        raise CheckpointError(
            f"checkpoint {path} was trained with {cfg.num_classes} classes, "
            f"but {num_classes} were requested"
        )
    tensors = {}
    with zipfile.ZipFile(path) as zf:
        for entry in manifest["blobs"]:
            name = entry["name"]
            try:
                raw = zf.read(f"blobs/{name}.f32")
            except KeyError:
                raise CheckpointError(f"blob {name!r} missing from {path}") from None
            if hashlib.sha256(raw).hexdigest() != entry["sha256"]:
                raise CheckpointError(f"blob {name!r} in {path} failed its checksum")
            tensors[name] = _from_blob(raw, entry["shape"])

    state = create_state(cfg)
    for mname, module in _modules(state).items():
        prefix = mname + "/"
        sd = {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}
        try:
            module.load_state_dict(sd, strict=True)
        except RuntimeError as exc:
            raise CheckpointError(f"weights for {mname} do not fit the configured model: {exc}") from exc

    for oname, opt, named in _optim_params(state):
        for pname, p in named:
            key = f"{oname}/{pname}"
            if key not in manifest["adam_steps"]:
                continue
            opt.state[p] = {
                "step": torch.tensor(manifest["adam_steps"][key], dtype=torch.float32),
                "exp_avg": tensors[key + "/exp_avg"].to(p.dtype),
                "exp_avg_sq": tensors[key + "/exp_avg_sq"].to(p.dtype),
            }

    for bname, buf in (("history_S", state.history_S), ("history_T", state.history_T)):
        info = manifest["buffers"][bname]
        buf.rng.bit_generator.state = info["rng"]
        buf.items = [
            LabeledPair(tensors[f"{bname}/{i:04d}/image"], tensors[f"{bname}/{i:04d}/classes"])
            for i in range(info["size"])
        ]

    state.rng.bit_generator.state = manifest["rng"]
    state.epoch = manifest["epoch"]
    state.step = manifest["step"]
    return state
