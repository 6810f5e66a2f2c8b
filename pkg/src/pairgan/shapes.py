"""Procedural shapes dataset for controlled object transfiguration.

Each sample is a single flat-colored circle, square or triangle pasted onto a
background, with a two-class label map (0 background, 1 shape) that equals the
rasterized shape mask exactly.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from pairgan.io import write_image, write_labels

SHAPES = ("circle", "square", "triangle")
BACKGROUNDS = ("uniform-noise", "smooth-noise", "image-file")
MARGIN = 2
SIZE_RANGE = (0.15, 0.3)
SPLITS = ("trainA", "trainB", "testA", "testB")


class PlacementError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    source: str
    target: str

    def __post_init__(self):
        if self.source not in SHAPES or self.target not in SHAPES:
            raise ValueError(f"shapes must be among {SHAPES}")
        if self.source == self.target:
            raise ValueError("source and target shapes must differ")

    @property
    def name(self) -> str:
        return f"{self.source}2{self.target}"

    @classmethod
    def parse(cls, name: str) -> Scenario:
        if name not in SCENARIO_NAMES:
            raise ValueError(
                f"unknown scenario {name!r}; valid scenarios: {', '.join(SCENARIO_NAMES)}"
            )
        src, dst = name.split("2")
        return cls(src, dst)


def all_scenarios():
    return [Scenario(a, b) for a in SHAPES for b in SHAPES if a != b]


SCENARIO_NAMES = tuple(s.name for s in all_scenarios())


@dataclass(frozen=True)
class ShapeSpec:
    kind: str
    center: tuple  # (row, col) in pixel-corner coordinates
    size: float  # radius or half-side
    fill_color: tuple

    def bbox(self):
        (r, c), s = self.center, self.size
        return r - s, c - s, r + s, c + s


@dataclass(frozen=True)
class BackgroundSpec:
    kind: str = "smooth-noise"
    path: str | None = None
    grid: int = 8  # control-point grid for smooth noise

    def __post_init__(self):
        if self.kind not in BACKGROUNDS:
            raise ValueError(f"background kind must be one of {BACKGROUNDS}, got {self.kind!r}")
        if self.kind == "image-file" and not self.path:
            raise ValueError("image-file backgrounds need a path")


def rasterize_shape(spec: ShapeSpec, H: int, W: int) -> np.ndarray:
    """Binary mask of pixels whose centers fall inside the shape."""
    r0, c0, r1, c1 = spec.bbox()
    if r0 < MARGIN or c0 < MARGIN or r1 > H - MARGIN or c1 > W - MARGIN:
        raise PlacementError(
            f"{spec.kind} with bbox ({r0:.1f}, {c0:.1f}, {r1:.1f}, {c1:.1f}) does not fit "
            f"a {H}x{W} canvas with a {MARGIN}px margin"
        )
    rows = np.arange(H)[:, None] + 0.5
    cols = np.arange(W)[None, :] + 0.5
    (rc, cc), s = spec.center, spec.size
    dr, dc = rows - rc, cols - cc
    if spec.kind == "circle":
        inside = dr**2 + dc**2 <= s**2
    elif spec.kind == "square":
        inside = (np.abs(dr) <= s) & (np.abs(dc) <= s)
    elif spec.kind == "triangle":
        # apex at the top of the 2s box, base along its bottom edge
        t = (dr + s) / (2 * s)
        inside = (t >= 0) & (t <= 1) & (np.abs(dc) <= s * t)
    else:
        raise ValueError(f"unknown shape kind {spec.kind!r}")
    return inside.astype(np.uint8)


def synth_background(spec: BackgroundSpec, H: int, W: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    if spec.kind == "uniform-noise":
        return rng.random((H, W, 3))
    if spec.kind == "smooth-noise":
        g = spec.grid
        ctrl = rng.random((g, g, 3))
        # bilinear interpolation of the control grid
        ys = np.linspace(0, g - 1, H)
        xs = np.linspace(0, g - 1, W)
        y0 = np.minimum(np.floor(ys).astype(int), g - 2)
        x0 = np.minimum(np.floor(xs).astype(int), g - 2)
        fy = (ys - y0)[:, None, None]
        fx = (xs - x0)[None, :, None]
        a = ctrl[y0][:, x0]
        b = ctrl[y0][:, x0 + 1]
        c = ctrl[y0 + 1][:, x0]
        d = ctrl[y0 + 1][:, x0 + 1]
        out = (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * d)
        return np.clip(out, 0.0, 1.0)
    path = Path(spec.path)
    if not path.is_file():
        raise FileNotFoundError(f"background image {path} not found")
    img = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
    h, w = img.shape[:2]
    if h < H or w < W:
        raise ValueError(
            f"background image {path} is {h}x{w}, smaller than the requested {H}x{W}; "
            f"resize it to at least {H}x{W} first"
        )
    top = int(rng.integers(0, h - H + 1))
    left = int(rng.integers(0, w - W + 1))
    return img[top : top + H, left : left + W]


def random_shape(kind: str, H: int, W: int, rng, size_range=SIZE_RANGE) -> ShapeSpec:
    side = min(H, W)
    size = float(rng.uniform(size_range[0] * side, size_range[1] * side))
    r = float(rng.uniform(MARGIN + size, H - MARGIN - size))
    c = float(rng.uniform(MARGIN + size, W - MARGIN - size))
    color = tuple(float(x) for x in rng.random(3))
    return ShapeSpec(kind, (r, c), size, color)


def generate_sample(shape_kind, bg: BackgroundSpec, H=128, W=128, seed=0, size_range=SIZE_RANGE):
    """Return ``(image, labels, spec)`` with image in [0, 1] and labels in {0, 1}."""
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    bg_seed, shape_seed = ss.spawn(2)
    background = synth_background(bg, H, W, bg_seed)
    spec = random_shape(shape_kind, H, W, np.random.default_rng(shape_seed), size_range)
    mask = rasterize_shape(spec, H, W)
    image = background.copy()
    image[mask.astype(bool)] = spec.fill_color
    return image, mask.astype(np.int64), spec


def _sample_seed(seed: int, split: str, index: int):
    return np.random.SeedSequence([seed, SPLITS.index(split), index])


def generate_dataset(
    scenario,
    count_per_side: int,
    H: int = 128,
    W: int | None = None,
    seed: int = 0,
    out_dir=".",
    test_count: int | None = None,
    background: BackgroundSpec | None = None,
):
    """Write a two-domain shapes dataset and return the path of its ``meta.json``."""
    if isinstance(scenario, str):
        scenario = Scenario.parse(scenario)
    W = H if W is None else W
    if count_per_side < 1:
        raise ValueError("count_per_side must be positive")
    test_count = max(1, count_per_side // 5) if test_count is None else test_count
    background = background or BackgroundSpec()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")

    counts = {"trainA": count_per_side, "trainB": count_per_side, "testA": test_count, "testB": test_count}
    kinds = {"trainA": scenario.source, "testA": scenario.source,
             "trainB": scenario.target, "testB": scenario.target}
    samples = {}
    for split in SPLITS:
        (out / split / "images").mkdir(parents=True, exist_ok=True)
        (out / split / "labels").mkdir(parents=True, exist_ok=True)
        records = []
        for i in range(counts[split]):
            image, labels, spec = generate_sample(
                kinds[split], background, H, W, _sample_seed(seed, split, i)
            )
            name = f"{i:06d}.png"
            write_image(out / split / "images" / name, image)
            write_labels(out / split / "labels" / name, labels)
            records.append({"file": name, "shape": asdict(spec)})
        samples[split] = records

    meta = {
        "num_classes": 2,
        "scenario": scenario.name,
        "seed": seed,
        "H": H,
        "W": W,
        "counts": counts,
        "background": asdict(background),
        "samples": samples,
    }
    meta_path = out / "meta.json"
    meta_path.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return meta_path
