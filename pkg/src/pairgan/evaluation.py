"""Directory-level evaluation of translated images against references."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from pairgan.io import load_images, load_label_maps, read_meta
from pairgan.metrics import (
    ConfusionMatrix,
    MetricReport,
    embed_images,
    frechet_distance,
    l1_distance,
    load_embedder,
    mask_images,
    ssim,
    summarize_confusion,
)

METRICS = ("l1", "ssim", "fid", "miou", "pixel_accuracy")
SEGMENTATION = ("miou", "pixel_accuracy")


class MissingLabelsError(FileNotFoundError):
    pass


def _image_dir(root: Path) -> Path:
    return root / "images" if (root / "images").is_dir() else root


def _label_dir(root: Path) -> Path:
    return root / "labels" if (root / "labels").is_dir() else root


def _pairwise_mean(fn):
    return lambda a, b: float(np.mean([fn(x, y) for x, y in zip(a, b)]))


def _aligned(names_a, names_b, what):
    if names_a != names_b:
        missing = sorted(set(names_a) ^ set(names_b))[:5]
        raise ValueError(f"{what} file sets differ, e.g. {missing}")


def evaluate_directories(
    pred_dir,
    ref_dir,
    metrics=("l1", "ssim", "fid"),
    mask_dir=None,
    embedder=None,
    num_classes=None,
    ignore_classes=(),
) -> MetricReport:
    metrics = list(metrics)
    unknown = [m for m in metrics if m not in METRICS]
    if unknown:
        raise ValueError(f"unknown metrics {unknown}; choose from {METRICS}")
    pred_dir, ref_dir = Path(pred_dir), Path(ref_dir)
    report = MetricReport()

    masks = None
    if mask_dir is not None:
        mask_maps, mask_names = load_label_maps(_label_dir(Path(mask_dir)))
        masks = [m != 0 for m in mask_maps]

    image_metrics = [m for m in metrics if m not in SEGMENTATION]
    if image_metrics:
        pred, names = load_images(_image_dir(pred_dir))
        ref, ref_names = load_images(_image_dir(ref_dir))
        _aligned(names, ref_names, "prediction/reference image")
        if masks is not None:
            _aligned(names, mask_names, "image/mask")
            masked = [mask_images(p, r, m) for p, r, m in zip(pred, ref, masks)]
            pred_m = np.stack([a for a, _ in masked])
            ref_m = np.stack([b for _, b in masked])
        if "fid" in image_metrics:
            embedder = embedder if embedder is not None else load_embedder()
            report.embedder = getattr(embedder, "name", None)

        scorers = {
            "l1": _pairwise_mean(l1_distance),
            "ssim": _pairwise_mean(ssim),
            "fid": lambda a, b: frechet_distance(embed_images(a, embedder), embed_images(b, embedder)),
        }
        for name in image_metrics:
            score = scorers[name]
            report.add(name, score(pred, ref), score(pred_m, ref_m) if masks is not None else None)

    seg = [m for m in metrics if m in SEGMENTATION]
    if seg:
        pred_lab_dir, ref_lab_dir = pred_dir / "labels", ref_dir / "labels"
        for d in (pred_lab_dir, ref_lab_dir):
            if not d.is_dir() or not any(d.glob("*.png")):
                raise MissingLabelsError(f"segmentation metrics need label PNGs in {d}")
        pred_l, names = load_label_maps(pred_lab_dir)
        ref_l, ref_names = load_label_maps(ref_lab_dir)
        _aligned(names, ref_names, "prediction/reference label")
        if num_classes is None:
            meta = read_meta(ref_dir) or {}
            seen = max(max(p.max(), r.max()) for p, r in zip(pred_l, ref_l))
            num_classes = meta.get("num_classes") or int(seen) + 1
        full = ConfusionMatrix(num_classes)
        part = ConfusionMatrix(num_classes)
        for k, (p, r) in enumerate(zip(pred_l, ref_l)):
            full.update(p, r)
            if masks is not None:
                part.update(p[masks[k]], r[masks[k]])

        iou, miou, acc = summarize_confusion(full, ignore_classes)
        report.per_class_iou = [None if np.isnan(x) else float(x) for x in iou]
        m_miou = m_acc = None
        if masks is not None and part.total:
            _, m_miou, m_acc = summarize_confusion(part, ignore_classes)
        for name in seg:
            if name == "miou":
                report.add("miou", miou, m_miou)
            else:
                report.add("pixel_accuracy", acc, m_acc)
    # keep the requested order
    report.rows = {m: report.rows[m] for m in metrics}
    return report


def write_report(report: MetricReport, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"json": out / "report.json", "csv": out / "report.csv", "text": out / "report.txt"}
    paths["json"].write_text(report.to_json() + "\n")
    paths["csv"].write_text(report.to_csv())
    paths["text"].write_text(report.to_text())
    return paths
