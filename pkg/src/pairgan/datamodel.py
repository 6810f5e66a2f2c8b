"""Value types and encoding conventions shared across the package.

Images live in two spaces: raw ``[0, 1]`` arrays (H, W, 3) on disk and in
metrics, and zero-centered ``[-1, 1]`` tensors (N, 3, H, W) inside the
networks. Class maps are integer label arrays; inside the networks they
travel as per-pixel probability volumes which are re-centered with the same
``2v - 1`` map right before concatenation with the image planes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

SIMPLEX = "simplex"
ENCODED = "encoded"

_SIMPLEX_ATOL = 1e-5


class ShapeError(ValueError):
    pass


class InvalidLabelError(ValueError):
    pass


class ModeError(ValueError):
    pass


class RangeError(ValueError):
    pass


def _check_unit_range(v, what="input"):
    lo, hi = float(v.min()), float(v.max())
    if lo < 0.0 or hi > 1.0:
        raise RangeError(f"{what} must lie in [0, 1], got [{lo:.4g}, {hi:.4g}]")


@dataclass(frozen=True)
class RawImage:
    """H x W x 3 float image with values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ShapeError(f"expected H x W x 3 pixels, got shape {px.shape}")
        if px.shape[0] < 8 or px.shape[1] < 8:
            raise ShapeError(f"images must be at least 8 x 8, got {px.shape[:2]}")
        _check_unit_range(px, "image pixels")

    @property
    def shape(self):
        return self.pixels.shape[:2]


@dataclass(frozen=True)
class ClassMap:
    """H x W integer labels in [0, num_classes)."""

    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise ShapeError(f"class map must be 2-D, got shape {lab.shape}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        _check_labels(lab, self.num_classes)

    @property
    def shape(self):
        return self.labels.shape


@dataclass(frozen=True)
class ClassVolume:
    """H x W x M class planes.

    ``simplex`` volumes hold per-pixel probabilities; ``encoded`` volumes hold
    the zero-centered one-hot planes fed to the networks.
    """

    probs: np.ndarray
    mode: str = SIMPLEX

    def __post_init__(self):
        p = np.asarray(self.probs)
        if p.ndim != 3:
            raise ShapeError(f"class volume must be H x W x M, got shape {p.shape}")
        if self.mode == SIMPLEX:
            if p.min() < 0 or not np.allclose(p.sum(axis=-1), 1.0, atol=_SIMPLEX_ATOL, rtol=0):
                raise ValueError("simplex volume must be nonnegative and sum to 1 per pixel")
        elif self.mode == ENCODED:
            if not np.all(np.isin(p, (-1.0, 1.0))):
                raise ValueError("encoded volume entries must be -1 or +1")
        else:
            raise ModeError(f"unknown class volume mode {self.mode!r}")

    @property
    def num_classes(self):
        return self.probs.shape[-1]


def _check_labels(labels, num_classes):
    bad = np.argwhere((labels < 0) | (labels >= num_classes))
    if bad.size:
        r, c = (int(x) for x in bad[0])
        raise InvalidLabelError(
            f"label {int(labels[r, c])} at pixel ({r}, {c}) is outside [0, {num_classes})"
        )


def one_hot_encode(cmap, num_classes: int) -> ClassVolume:
    labels = cmap.labels if isinstance(cmap, ClassMap) else np.asarray(cmap)
    _check_labels(labels, num_classes)
    probs = np.eye(num_classes, dtype=np.float32)[labels]
    return ClassVolume(probs, SIMPLEX)


def zero_center(v):
    _check_unit_range(v)
    return 2 * v - 1


def de_center(v):
    lo, hi = float(v.min()), float(v.max())
    if lo < -1.0 or hi > 1.0:
        raise RangeError(f"input must lie in [-1, 1], got [{lo:.4g}, {hi:.4g}]")
    return (v + 1) / 2


def argmax_decode(cv: ClassVolume) -> ClassMap:
    """Per-pixel argmax; ties resolve to the lowest class index."""
    if cv.mode != SIMPLEX:
        raise ModeError(f"argmax_decode needs a simplex volume, got {cv.mode!r}")
    # np.argmax returns the first maximal index
    return ClassMap(np.argmax(cv.probs, axis=-1).astype(np.int64), cv.num_classes)


def encode_volume(cv: ClassVolume) -> ClassVolume:
    if cv.mode != SIMPLEX:
        raise ModeError("only simplex volumes can be encoded")
    probs = zero_center(cv.probs)
    if not np.all(np.isin(probs, (-1.0, 1.0))):
        raise ValueError("only exact one-hot volumes have an encoded form")
    return ClassVolume(probs, ENCODED)


@dataclass(frozen=True)
class LabeledPair:
    """Batch of zero-centered images with aligned class probability volumes.

    ``image`` is (N, 3, H, W) in [-1, 1] and ``classes`` is (N, M, H, W) with
    per-pixel probabilities (exact one-hot for real data, softmax output for
    translated data).
    """

    image: torch.Tensor
    classes: torch.Tensor

    def __post_init__(self):
        if self.image.dim() != 4 or self.image.shape[1] != 3:
            raise ShapeError(f"image must be N x 3 x H x W, got {tuple(self.image.shape)}")
        if self.classes.dim() != 4:
            raise ShapeError(f"classes must be N x M x H x W, got {tuple(self.classes.shape)}")
        i, c = self.image.shape, self.classes.shape
        if i[0] != c[0] or i[2:] != c[2:]:
            raise ShapeError(f"image {tuple(i)} and classes {tuple(c)} disagree on N, H or W")

    @property
    def num_classes(self) -> int:
        return self.classes.shape[1]

    @property
    def spatial(self):
        return tuple(self.image.shape[2:])

    def __len__(self):
        return self.image.shape[0]

    def labels(self) -> torch.Tensor:
        return self.classes.argmax(dim=1)

    def detach(self) -> LabeledPair:
        return LabeledPair(self.image.detach(), self.classes.detach())

    def to(self, *args, **kwargs) -> LabeledPair:
        return LabeledPair(self.image.to(*args, **kwargs), self.classes.to(*args, **kwargs))

    def __getitem__(self, idx) -> LabeledPair:
        if isinstance(idx, int):
            idx = slice(idx, idx + 1)
        return LabeledPair(self.image[idx], self.classes[idx])

    @staticmethod
    def cat(pairs) -> LabeledPair:
        pairs = list(pairs)
        return LabeledPair(
            torch.cat([p.image for p in pairs]), torch.cat([p.classes for p in pairs])
        )

    @classmethod
    def from_arrays(cls, image, cmap, num_classes: int, dtype=torch.float32) -> LabeledPair:
        """Build a single-sample pair from a raw [0, 1] image and a label map."""
        px = image.pixels if isinstance(image, RawImage) else np.asarray(image)
        labels = cmap.labels if isinstance(cmap, ClassMap) else np.asarray(cmap)
        if px.shape[:2] != labels.shape:
            raise ShapeError(f"image {px.shape[:2]} and class map {labels.shape} differ in size")
        vol = one_hot_encode(labels, num_classes).probs
        img = torch.as_tensor(zero_center(px.astype(np.float64)), dtype=dtype)
        return cls(
            img.permute(2, 0, 1).unsqueeze(0).contiguous(),
            torch.as_tensor(vol, dtype=dtype).permute(2, 0, 1).unsqueeze(0).contiguous(),
        )


def concat_pair(pair: LabeledPair) -> torch.Tensor:
    """Stack image planes then zero-centered class planes: (N, 3 + M, H, W)."""
    return torch.cat([pair.image, 2 * pair.classes - 1], dim=1)


def split_stack(stack: torch.Tensor) -> LabeledPair:
    if stack.dim() != 4 or stack.shape[1] < 5:
        raise ShapeError(f"expected N x (3+M) x H x W with M >= 2, got {tuple(stack.shape)}")
    return LabeledPair(stack[:, :3], (stack[:, 3:] + 1) / 2)
