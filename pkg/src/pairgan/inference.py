"""Applying trained generators to label-annotated image directories."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from pairgan.checkpoint import load_checkpoint
from pairgan.datamodel import LabeledPair
from pairgan.io import load_domain, read_meta, write_image, write_labels

DIRECTIONS = ("s2t", "t2s")


def translate(G, pair: LabeledPair, batch_size: int = 16) -> LabeledPair:
    G.eval()
    outs = []
    with torch.no_grad():
        for i in range(0, len(pair), batch_size):
            outs.append(G(pair[i : i + batch_size]))
    return LabeledPair.cat(outs)


def to_arrays(pair: LabeledPair):
    """Raw [0, 1] H x W x 3 images and argmax label maps as numpy arrays."""
    images = ((pair.image.detach().double() + 1) / 2).clamp(0, 1).permute(0, 2, 3, 1).numpy()
    labels = pair.classes.detach().argmax(dim=1).numpy()
    return images, labels


def palette(num_classes: int) -> np.ndarray:
    rng = np.random.default_rng(1234)
    pal = rng.integers(64, 256, size=(max(num_classes, 2), 3)).astype(np.float64) / 255
    pal[0] = 0.0
    if num_classes == 2:
        pal[1] = 1.0
    return pal


def comparison_grid(src_img, src_lab, out_img, out_lab, num_classes: int) -> np.ndarray:
    pal = palette(num_classes)
    return np.concatenate([src_img, pal[src_lab], out_img, pal[out_lab]], axis=1)


def translate_directory(checkpoint, direction: str, in_dir, out_dir, grids: bool = True):
    """Translate every image/label pair under ``in_dir``; returns the written names."""
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    state = load_checkpoint(checkpoint)
    num_classes = state.config.num_classes
    meta = read_meta(in_dir)
    if meta is not None and meta.get("num_classes", num_classes) != num_classes:
        raise ValueError(
            f"checkpoint has {num_classes} classes but dataset {in_dir} declares "
            f"{meta['num_classes']}"
        )
    pair, names = load_domain(in_dir, num_classes)
    G = state.G_s2t if direction == "s2t" else state.G_t2s
    out_pair = translate(G, pair)
    src_imgs, src_labs = to_arrays(pair)
    imgs, labs = to_arrays(out_pair)

    out = Path(out_dir)
    for sub in ("images", "labels") + (("grids",) if grids else ()):
        (out / sub).mkdir(parents=True, exist_ok=True)
    for k, name in enumerate(names):
        write_image(out / "images" / name, imgs[k])
        write_labels(out / "labels" / name, labs[k])
        if grids:
            grid = comparison_grid(src_imgs[k], src_labs[k], imgs[k], labs[k], num_classes)
            write_image(out / "grids" / name, grid)
    return names

