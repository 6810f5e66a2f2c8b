"""Evaluation metrics: segmentation agreement, image similarity, Frechet distance.

Images here are raw ``H x W x 3`` arrays in [0, 1]. FID values are only
comparable between runs that used the same embedder: the built-in random
projection embedder keeps tests hermetic, while canonical Inception features
require a user-supplied TorchScript asset.
"""

from __future__ import annotations

import csv
import io
import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from scipy.ndimage import correlate1d

EMBEDDER_ENV = "PAIRGAN_EMBEDDER"


class MetricInputError(ValueError):
    pass


def _same_shape(a, b):
    if a.shape != b.shape:
        raise MetricInputError(f"shape mismatch: {a.shape} vs {b.shape}")


class ConfusionMatrix:
    """Accumulated M x M counts; rows are ground truth, columns predictions."""

    def __init__(self, num_classes: int):
        self.num_classes = num_classes
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)

    def update(self, pred, gt):
        pred, gt = np.asarray(pred), np.asarray(gt)
        _same_shape(pred, gt)
        m = self.num_classes
        for arr, what in ((pred, "prediction"), (gt, "ground truth")):
            if arr.size and (arr.min() < 0 or arr.max() >= m):
                raise MetricInputError(f"{what} labels must lie in [0, {m})")
        idx = gt.astype(np.int64).ravel() * m + pred.astype(np.int64).ravel()
        self.counts += np.bincount(idx, minlength=m * m).reshape(m, m)
        return self

    def merge(self, other: ConfusionMatrix) -> ConfusionMatrix:
        out = ConfusionMatrix(self.num_classes)
        out.counts = self.counts + other.counts
        return out

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def iou(self) -> np.ndarray:
        """Per-class IoU; NaN for classes absent from both predictions and ground truth."""
        tp = np.diag(self.counts).astype(np.float64)
        union = self.counts.sum(0) + self.counts.sum(1) - tp
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(union > 0, tp / np.maximum(union, 1), np.nan)

    def pixel_accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total)


@dataclass
class SegmentationReport:
    per_class_iou: np.ndarray
    mean_iou: float
    pixel_accuracy: float
    confusion: ConfusionMatrix


def segmentation_report(preds, gts, num_classes: int, ignore_classes=()) -> SegmentationReport:
    preds, gts = list(preds), list(gts)
    if not preds or len(preds) != len(gts):
        raise MetricInputError("need equally many, and at least one, predictions and references")
    cm = ConfusionMatrix(num_classes)
    for p, g in zip(preds, gts):
        cm.update(getattr(p, "labels", p), getattr(g, "labels", g))
    iou, miou, acc = summarize_confusion(cm, ignore_classes)
    return SegmentationReport(iou, miou, acc, cm)


def summarize_confusion(cm: ConfusionMatrix, ignore_classes=()):
    """``(per-class IoU, mIoU, pixel accuracy)``; mIoU skips NaN and ignored classes."""
    iou = cm.iou()
    keep = np.ones(cm.num_classes, dtype=bool)
    keep[list(ignore_classes)] = False
    scored = iou[keep & ~np.isnan(iou)]
    miou = float(scored.mean()) if scored.size else float("nan")
    return iou, miou, cm.pixel_accuracy()


def l1_distance(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    _same_shape(a, b)
    return float(np.abs(a - b).mean())


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(x, win):
    # separable correlation, then crop to positions where the window fits
    y = correlate1d(correlate1d(x, win, axis=0, mode="constant"), win, axis=1, mode="constant")
    r = len(win) // 2
    return y[r : x.shape[0] - r, r : x.shape[1] - r]


def ssim(a, b, win_size=11, sigma=1.5, k1=0.01, k2=0.03, data_range=1.0) -> float:
    """Mean SSIM over channels and all window positions fully inside the image."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    _same_shape(a, b)
    if min(a.shape[:2]) < win_size:
        raise MetricInputError(f"SSIM needs images of at least {win_size}x{win_size}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    win = gaussian_window(win_size, sigma)
    vals = []
    for ch in range(a.shape[2]):
        x, y = a[..., ch], b[..., ch]
        mx, my = _filter_valid(x, win), _filter_valid(y, win)
        sxx = _filter_valid(x * x, win) - mx**2
        syy = _filter_valid(y * y, win) - my**2
        sxy = _filter_valid(x * y, win) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx**2 + my**2 + c1) * (sxx + syy + c2)
        vals.append((num / den).mean())
    return float(np.mean(vals))


@dataclass
class EmbeddingSet:
    features: np.ndarray
    embedder: str = "unknown"

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim != 2 or f.shape[1] < 1:
            raise MetricInputError(f"embeddings must be N x d, got shape {f.shape}")
        if f.shape[0] < 2:
            raise MetricInputError("need at least two embeddings to estimate a covariance")
        self.features = f


def _sqrtm_psd(m):
    vals, vecs = np.linalg.eigh((m + m.T) / 2)
    return (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.T


def frechet_distance(A, B, jitter: float = 1e-6) -> float:
    """Frechet distance between Gaussian fits of two embedding sets.

    The trace of sqrt(S_a S_b) is taken as the trace of the square root of
    the symmetric PSD matrix sqrt(S_a) S_b sqrt(S_a), which has the same
    eigenvalues.
    """
    fa = A.features if isinstance(A, EmbeddingSet) else EmbeddingSet(A).features
    fb = B.features if isinstance(B, EmbeddingSet) else EmbeddingSet(B).features
    if fa.shape[1] != fb.shape[1]:
        raise MetricInputError(f"embedding dims differ: {fa.shape[1]} vs {fb.shape[1]}")
    mu_a, mu_b = fa.mean(0), fb.mean(0)
    cov_a = np.atleast_2d(np.cov(fa, rowvar=False))
    cov_b = np.atleast_2d(np.cov(fb, rowvar=False))
    root_a = _sqrtm_psd(cov_a)
    inner = root_a @ cov_b @ root_a
    if np.linalg.cond(inner) > 1 / np.finfo(np.float64).eps:
        eye = np.eye(len(cov_a)) * jitter
        cov_a, cov_b = cov_a + eye, cov_b + eye
        root_a = _sqrtm_psd(cov_a)
        inner = root_a @ cov_b @ root_a
    eig = np.linalg.eigvalsh((inner + inner.T) / 2)
    tr_covmean = np.sqrt(np.clip(eig, 0, None)).sum()
    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2 * tr_covmean)


class RandomProjectionEmbedder:
    """Area-downsample to ``grid x grid`` then project with a fixed Gaussian matrix."""

    def __init__(self, dim: int = 64, grid: int = 16, seed: int = 0):
        self.dim, self.grid, self.seed = dim, grid, seed
        rng = np.random.default_rng(seed)
        self.proj = rng.standard_normal((3 * grid * grid, dim)) / np.sqrt(3 * grid * grid)

    @property
    def name(self):
        return f"random-projection(d={self.dim},grid={self.grid},seed={self.seed})"

    def __call__(self, images: np.ndarray) -> np.ndarray:
        x = torch.as_tensor(np.asarray(images, dtype=np.float64)).permute(0, 3, 1, 2)
        pooled = F.adaptive_avg_pool2d(x, self.grid).reshape(len(x), -1).numpy()
        return pooled @ self.proj


class TorchScriptEmbedder:
    """Features from a scripted module mapping (N, 3, H, W) in [0, 1] to (N, d)."""

    def __init__(self, path):
        if not path or not os.path.isfile(path):
            raise FileNotFoundError(f"embedder asset {path!r} not found")
        self.path = str(path)
        with warnings.catch_warnings():
            # TorchScript is deprecated upstream but remains the portable asset format here
            warnings.simplefilter("ignore", DeprecationWarning)
            self.module = torch.jit.load(self.path, map_location="cpu").eval()

    @property
    def name(self):
        return f"torchscript({os.path.basename(self.path)})"

    def __call__(self, images: np.ndarray) -> np.ndarray:
        x = torch.as_tensor(np.asarray(images, dtype=np.float32)).permute(0, 3, 1, 2)
        with torch.no_grad():
            out = self.module(x)
        return out.reshape(len(x), -1).double().numpy()


def load_embedder(asset_path=None):
    """The TorchScript embedder at ``asset_path`` (or $PAIRGAN_EMBEDDER), else the fallback."""
    path = asset_path or os.environ.get(EMBEDDER_ENV)
    if path:
        return TorchScriptEmbedder(path)
    return RandomProjectionEmbedder()


def embed_images(images, embedder=None, batch_size: int = 64) -> EmbeddingSet:
    embedder = embedder or RandomProjectionEmbedder()
    images = np.asarray(images)
    feats = [embedder(images[i : i + batch_size]) for i in range(0, len(images), batch_size)]
    return EmbeddingSet(np.concatenate(feats), getattr(embedder, "name", type(embedder).__name__))


def mask_images(pred, gt, mask):
    """Zero every pixel where ``mask`` is 0 in both images."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    _same_shape(pred, gt)
    m = np.asarray(mask)
    if m.shape != pred.shape[:2]:
        raise MetricInputError(f"mask {m.shape} does not match images {pred.shape[:2]}")
    keep = (m != 0)[..., None]
    return pred * keep, gt * keep


@dataclass
class MetricReport:
    """Metric name -> {"full": value, "masked": value or None}, plus per-class IoU."""

    rows: dict = field(default_factory=dict)
    per_class_iou: list | None = None
    embedder: str | None = None

    def add(self, name, full, masked=None):
        self.rows[name] = {"full": full, "masked": masked}

    def to_json(self) -> str:
        return json.dumps(
            {"metrics": self.rows, "per_class_iou": self.per_class_iou, "embedder": self.embedder},
            indent=2,
            allow_nan=True,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "full", "masked"])
        for name, v in self.rows.items():
            w.writerow([name, _fmt(v["full"]), _fmt(v["masked"])])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"{'metric':<16}{'full':>12}{'masked':>12}"]
        for name, v in self.rows.items():
            lines.append(f"{name:<16}{_fmt(v['full']):>12}{_fmt(v['masked']):>12}")
        if self.per_class_iou is not None:
            lines.append("per-class IoU: " + ", ".join(_fmt(x) for x in self.per_class_iou))
        if self.embedder:
            lines.append(f"FID embedder: {self.embedder}")
        return "\n".join(lines) + "\n"


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float) and np.isnan(v):
        return "nan"
    return f"{v:.6g}"
