"""Objective terms for joint image/class translation.

Pixel-wise terms reduce by the mean over every entry (pixels, channels, batch).
Cross-entropy clamps predicted probabilities at ``PROB_FLOOR`` before the log.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import torch
import torch.nn.functional as F

from pairgan.datamodel import LabeledPair, ShapeError

PROB_FLOOR = 1e-7

TRANSFIGURATION = "transfiguration"
DOMAIN_TRANSFER = "domain_transfer"
TASK_MODES = (TRANSFIGURATION, DOMAIN_TRANSFER)

LEAST_SQUARES = "least_squares"
LOG = "log"
GAN_MODES = (LEAST_SQUARES, LOG)


class LossModeError(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    adv: float = 1.0
    idt: float = 10.0
    rec: float = 10.0
    cls: float = 10.0
    dom: float = 0.0
    task_mode: str = TRANSFIGURATION

    def __post_init__(self):
        if self.task_mode not in TASK_MODES:
            raise LossModeError(f"task_mode must be one of {TASK_MODES}, got {self.task_mode!r}")
        for name in ("adv", "idt", "rec", "cls", "dom"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be nonnegative")
        if self.task_mode == TRANSFIGURATION and self.dom != 0:
            raise LossModeError("transfiguration mode requires dom weight 0")
        if self.task_mode == DOMAIN_TRANSFER and self.cls != 0:
            raise LossModeError("domain_transfer mode requires cls weight 0")

    @classmethod
    def for_mode(cls, task_mode: str, adv=1.0, idt=10.0, rec=10.0, cls_w=10.0, dom=1.0):
        """Weights with the term that is inactive in ``task_mode`` forced to zero."""
        if task_mode == TRANSFIGURATION:
            dom = 0.0
        elif task_mode == DOMAIN_TRANSFER:
            cls_w = 0.0
        return cls(adv=adv, idt=idt, rec=rec, cls=cls_w, dom=dom, task_mode=task_mode)


@dataclass
class LossReport:
    adv_G: float = 0.0
    adv_D: float = 0.0
    idt: float = 0.0
    rec: float = 0.0
    cls: float = 0.0
    dom: float = 0.0
    total: float = 0.0

    COLUMNS = ("adv_G", "adv_D", "idt", "rec", "cls", "dom", "total")

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def pixel_indicator(src_labels, trans_labels, foreground_classes=None) -> torch.Tensor:
    """1 where a pixel is background in both label maps, else 0.

    ``foreground_classes`` defaults to every class except 0.
    """
    src = torch.as_tensor(src_labels)
    trans = torch.as_tensor(trans_labels)
    if src.shape != trans.shape:
        raise ShapeError(f"label maps differ in shape: {tuple(src.shape)} vs {tuple(trans.shape)}")
    if foreground_classes is None:
        fg_src, fg_trans = src != 0, trans != 0
    else:
        fg = torch.as_tensor(sorted(foreground_classes), dtype=src.dtype)
        fg_src, fg_trans = torch.isin(src, fg), torch.isin(trans, fg)
    return (~(fg_src | fg_trans)).to(torch.uint8)


def masked_l1(a: torch.Tensor, b: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean of ``mask * |a - b|`` with an (N, H, W) or (H, W) mask broadcast over channels."""
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    m = mask.to(a.dtype)
    if a.dim() == 4:
        m = m.reshape(a.shape[0], 1, *a.shape[2:]) if m.dim() == 3 else m.reshape(1, 1, *m.shape)
    elif a.dim() == 3:
        m = m.unsqueeze(0)
    if m.shape[-2:] != a.shape[-2:]:
        raise ShapeError(f"mask {tuple(mask.shape)} does not match images {tuple(a.shape)}")
    return (m * (a - b).abs()).expand_as(a).mean()


def transfiguration_loss(src_image, trans_image, indicator) -> torch.Tensor:
    return masked_l1(src_image, trans_image, indicator)


def class_cross_entropy(target: torch.Tensor, predicted: torch.Tensor) -> torch.Tensor:
    """Mean per-pixel ``-log p[target]``; ``predicted`` is (N, M, H, W) probabilities."""
    target = torch.as_tensor(target)
    if predicted.dim() == 3:
        predicted = predicted.unsqueeze(0)
    if target.dim() == 2:
        target = target.unsqueeze(0)
    if target.shape != (predicted.shape[0], *predicted.shape[2:]):
        raise ShapeError(
            f"target {tuple(target.shape)} does not match prediction {tuple(predicted.shape)}"
        )
    if target.numel() and int(target.max()) >= predicted.shape[1]:
        raise ShapeError(f"target label {int(target.max())} >= class count {predicted.shape[1]}")
    p = predicted.gather(1, target.long().unsqueeze(1))
    return -torch.log(p.clamp_min(PROB_FLOOR)).mean()


def pair_consistency(pred: LabeledPair, target: LabeledPair) -> torch.Tensor:
    """L1 between images plus class cross-entropy against the target labels."""
    if pred.num_classes != target.num_classes:
        raise ShapeError("class counts differ")
    return (pred.image - target.image).abs().mean() + class_cross_entropy(
        target.labels(), pred.classes
    )


def gan_criterion(logits: torch.Tensor, real: bool, mode: str = LEAST_SQUARES) -> torch.Tensor:
    if mode == LEAST_SQUARES:
        return ((logits - float(real)) ** 2).mean()
    if mode == LOG:
        target = torch.full_like(logits, float(real))
        return F.binary_cross_entropy_with_logits(logits, target)
    raise LossModeError(f"GAN mode must be one of {GAN_MODES}, got {mode!r}")


def adversarial_loss(D, real_pair, fake_pair, role: str, mode: str = LEAST_SQUARES):
    """Generator role: push D(fake) toward real. Discriminator role: average of
    the real and fake terms."""
    if mode not in GAN_MODES:
        raise LossModeError(f"GAN mode must be one of {GAN_MODES}, got {mode!r}")
    if role == "generator":
        return gan_criterion(D(fake_pair), True, mode)
    if role == "discriminator":
        return 0.5 * (gan_criterion(D(real_pair), True, mode) + gan_criterion(D(fake_pair), False, mode))
    raise ValueError(f"role must be 'generator' or 'discriminator', got {role!r}")


def identity_loss(G_t2s, G_s2t, pair_S: LabeledPair, pair_T: LabeledPair) -> torch.Tensor:
    return pair_consistency(G_t2s(pair_S), pair_S) + pair_consistency(G_s2t(pair_T), pair_T)


def reconstruction_loss(G_s2t, G_t2s, pair_S: LabeledPair, pair_T: LabeledPair) -> torch.Tensor:
    cyc_S = G_t2s(G_s2t(pair_S))
    cyc_T = G_s2t(G_t2s(pair_T))
    return pair_consistency(cyc_S, pair_S) + pair_consistency(cyc_T, pair_T)


def cross_domain_loss(pair_S, translated_S, pair_T, translated_T) -> torch.Tensor:
    return class_cross_entropy(pair_S.labels(), translated_S.classes) + class_cross_entropy(
        pair_T.labels(), translated_T.classes
    )


def cls_loss(pair_S, translated_S, pair_T, translated_T, foreground_classes=None):
    """Background-preservation term summed over both translation directions."""
    p_s = pixel_indicator(pair_S.labels(), translated_S.labels(), foreground_classes)
    p_t = pixel_indicator(pair_T.labels(), translated_T.labels(), foreground_classes)
    return transfiguration_loss(pair_S.image, translated_S.image, p_s) + transfiguration_loss(
        pair_T.image, translated_T.image, p_t
    )


def total_generator_loss(w: LossWeights, parts):
    """Weighted sum of the generator-side terms. ``parts`` may be a LossReport
    or a mapping; values may be floats or tensors."""
    get = parts.get if isinstance(parts, dict) else (lambda k: getattr(parts, k))
    if w.task_mode == TRANSFIGURATION and w.dom != 0:
        raise LossModeError("transfiguration mode requires dom weight 0")
    if w.task_mode == DOMAIN_TRANSFER and w.cls != 0:
        raise LossModeError("domain_transfer mode requires cls weight 0")
    return (
        w.adv * get("adv_G")
        + w.idt * get("idt")
        + w.rec * get("rec")
        + w.cls * get("cls")
        + w.dom * get("dom")
    )


def check_finite(terms: dict):
    for name, value in terms.items():
        v = float(value.detach()) if isinstance(value, torch.Tensor) else float(value)
        if not math.isfinite(v):
            raise NonFiniteLossError(name, v)


class NonFiniteLossError(FloatingPointError):
    def __init__(self, term, value):
        super().__init__(f"loss term {term!r} became non-finite ({value})")
        self.term = term
