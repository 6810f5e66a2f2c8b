"""PNG and dataset-directory I/O.

A domain directory holds ``images/NNNNNN.png`` (8-bit RGB) and optionally
``labels/NNNNNN.png`` (8-bit single channel, value = class id) with matching
filenames.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from pairgan.datamodel import LabeledPair


def write_image(path, image: np.ndarray):
    arr = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def write_labels(path, labels: np.ndarray):
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > 255:
        raise ValueError("label PNGs hold class ids in [0, 255]")
    Image.fromarray(labels.astype(np.uint8)).save(path)


def read_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def read_labels(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode not in ("L", "P", "I", "I;16"):
            raise ValueError(f"{path}: label images must be single-channel, got mode {im.mode}")
        return np.asarray(im, dtype=np.int64)


def list_pngs(directory) -> list[Path]:
    return sorted(Path(directory).glob("*.png"))


def read_meta(root):
    meta = Path(root) / "meta.json"
    if meta.is_file():
        return json.loads(meta.read_text())
    for parent in Path(root).resolve().parents:
        if (parent / "meta.json").is_file():
            return json.loads((parent / "meta.json").read_text())
    return None


def load_domain(root, num_classes: int, require_labels: bool = True):
    """Load every image/label pair under ``root`` as one stacked LabeledPair.

    Returns ``(pair, names)``.
    """
    root = Path(root)
    img_dir = root / "images"
    if not img_dir.is_dir():
        raise FileNotFoundError(f"{root} has no images/ directory")
    files = list_pngs(img_dir)
    if not files:
        raise FileNotFoundError(f"no PNG images found in {img_dir}")
    images, vols = [], []
    for f in files:
        img = read_image(f)
        lab_path = root / "labels" / f.name
        if lab_path.is_file():
            labels = read_labels(lab_path)
        elif require_labels:
            raise FileNotFoundError(f"missing label file {lab_path}")
        else:
            labels = np.zeros(img.shape[:2], dtype=np.int64)
        p = LabeledPair.from_arrays(img, labels, num_classes)
        images.append(p.image)
        vols.append(p.classes)
    return LabeledPair(torch.cat(images), torch.cat(vols)), [f.name for f in files]


def load_images(directory):
    """Stack every PNG in ``directory`` into an N x H x W x 3 array; returns ``(array, names)``."""
    files = list_pngs(directory)
    if not files:
        raise FileNotFoundError(f"no PNG images found in {directory}")
    return np.stack([read_image(f) for f in files]), [f.name for f in files]


def load_label_maps(directory):
    files = list_pngs(directory)
    if not files:
        raise FileNotFoundError(f"no label PNGs found in {directory}")
    return [read_labels(f) for f in files], [f.name for f in files]
