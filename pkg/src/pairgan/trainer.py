"""Adversarial min-max training over two generator/discriminator pairs."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from pairgan.datamodel import LabeledPair, ShapeError
from pairgan.losses import (
    DOMAIN_TRANSFER,
    GAN_MODES,
    LEAST_SQUARES,
    TRANSFIGURATION,
    LossReport,
    LossWeights,
    adversarial_loss,
    check_finite,
    cls_loss,
    cross_domain_loss,
    pair_consistency,
    total_generator_loss,
)
from pairgan.networks import (
    DiscriminatorConfig,
    GeneratorConfig,
    build_discriminator,
    build_generator,
)

log = logging.getLogger(__name__)

SCHEDULES = ("constant", "linear_decay_after_half")
LOG_COLUMNS = ("step", "epoch") + LossReport.COLUMNS


@dataclass
class TrainConfig:
    num_classes: int = 2
    image_size: int = 128
    epochs: int = 200
    batch_size: int = 1
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    weights: LossWeights = field(default_factory=LossWeights)
    history_capacity: int = 50
    seed: int = 0
    gan_mode: str = LEAST_SQUARES
    lr_schedule: str = "constant"
    gen_base_channels: int = 64
    # None picks 6 blocks for images up to 64 px and 9 above
    gen_res_blocks: int | None = None
    disc_base_channels: int = 64
    disc_layers: int = 3
    checkpoint_every: int = 10
    foreground_classes: tuple | None = None

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        if self.foreground_classes is not None:
            self.foreground_classes = tuple(int(c) for c in self.foreground_classes)
        if self.lr < 0:
            raise ValueError("lr must be nonnegative")
        if self.history_capacity < 0:
            raise ValueError("history_capacity must be >= 0")
        if self.epochs < 0 or self.batch_size < 1 or self.checkpoint_every < 1:
            raise ValueError("epochs >= 0, batch_size >= 1 and checkpoint_every >= 1 required")
        if self.gan_mode not in GAN_MODES:
            raise ValueError(f"gan_mode must be one of {GAN_MODES}")
        if self.lr_schedule not in SCHEDULES:
            raise ValueError(f"lr_schedule must be one of {SCHEDULES}")

    @property
    def res_blocks(self) -> int:
        if self.gen_res_blocks is not None:
            return self.gen_res_blocks
        return 6 if self.image_size <= 64 else 9

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(self.num_classes, self.gen_base_channels, self.res_blocks)

    def discriminator_config(self) -> DiscriminatorConfig:
        return DiscriminatorConfig(self.num_classes, self.disc_base_channels, self.disc_layers)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["foreground_classes"] is not None:
            d["foreground_classes"] = list(d["foreground_classes"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**d)


def lr_factor(schedule: str, epoch: int, total_epochs: int) -> float:
    """Multiplier on the base learning rate at the start of ``epoch`` (0-based)."""
    if schedule == "constant" or total_epochs <= 0:
        return 1.0
    half = total_epochs / 2
    if epoch < half:
        return 1.0
    return max(0.0, 1.0 - (epoch - half) / half)


class HistoryBuffer:
    """Pool of past fakes for the discriminator.

    While filling, fresh samples are stored and returned. Once full, each
    sample has even odds of being swapped with a uniformly chosen stored one
    (the stored one is returned) or passed through untouched.
    """

    def __init__(self, capacity: int = 50, seed=None):
        self.capacity = capacity
        self.items: list[LabeledPair] = []
        self.rng = np.random.default_rng(seed)

    def __len__(self):
        return len(self.items)

    def sample(self, fresh: LabeledPair) -> LabeledPair:
        if self.capacity == 0:
            return fresh
        out = []
        for i in range(len(fresh)):
            item = fresh[i].detach()
            if len(self.items) < self.capacity:
                self.items.append(item)
                out.append(item)
            elif self.rng.random() < 0.5:
                j = int(self.rng.integers(self.capacity))
                out.append(self.items[j])
                self.items[j] = item
            else:
                out.append(item)
        return LabeledPair.cat(out)


def history_sample(buf: HistoryBuffer, fresh: LabeledPair) -> LabeledPair:
    return buf.sample(fresh)


@dataclass
class TrainState:
    config: TrainConfig
    G_s2t: torch.nn.Module
    G_t2s: torch.nn.Module
    D_s: torch.nn.Module
    D_t: torch.nn.Module
    opt_G: torch.optim.Optimizer
    opt_D: torch.optim.Optimizer
    history_S: HistoryBuffer  # fakes in the source domain, judged by D_s
    history_T: HistoryBuffer
    rng: np.random.Generator
    epoch: int = 0
    step: int = 0

    def generator_params(self):
        return list(self.G_s2t.parameters()) + list(self.G_t2s.parameters())

    def discriminator_params(self):
        return list(self.D_s.parameters()) + list(self.D_t.parameters())

    def set_lr(self, lr: float):
        for opt in (self.opt_G, self.opt_D):
            for group in opt.param_groups:
                group["lr"] = lr

    def train(self):
        for m in (self.G_s2t, self.G_t2s, self.D_s, self.D_t):
            m.train()


def _seeds(seed: int):
    ss = np.random.SeedSequence(seed)
    net_seeds = [int(s) for s in ss.generate_state(4)]
    data_ss, hist_s, hist_t = ss.spawn(3)
    return net_seeds, data_ss, hist_s, hist_t


def create_state(cfg: TrainConfig) -> TrainState:
    net_seeds, data_ss, hist_s, hist_t = _seeds(cfg.seed)
    gcfg, dcfg = cfg.generator_config(), cfg.discriminator_config()
    G_s2t = build_generator(gcfg, net_seeds[0])
    G_t2s = build_generator(gcfg, net_seeds[1])
    D_s = build_discriminator(dcfg, net_seeds[2])
    D_t = build_discriminator(dcfg, net_seeds[3])
    betas = (cfg.beta1, cfg.beta2)
    opt_G = torch.optim.Adam(
        list(G_s2t.parameters()) + list(G_t2s.parameters()), lr=cfg.lr, betas=betas
    )
    opt_D = torch.optim.Adam(list(D_s.parameters()) + list(D_t.parameters()), lr=cfg.lr, betas=betas)
    return TrainState(
        cfg, G_s2t, G_t2s, D_s, D_t, opt_G, opt_D,
        HistoryBuffer(cfg.history_capacity, hist_s),
        HistoryBuffer(cfg.history_capacity, hist_t),
        np.random.default_rng(data_ss),
    )


def _set_requires_grad(modules, flag: bool):
    for m in modules:
        for p in m.parameters():
            p.requires_grad_(flag)


def generator_losses(state: TrainState, batch_S: LabeledPair, batch_T: LabeledPair):
    """Forward both directions and compute every generator-side term.

    Returns ``(terms, fake_T, fake_S)`` where ``terms`` maps term names to
    scalar tensors, ``total`` included.
    """
    cfg, w = state.config, state.config.weights
    fake_T = state.G_s2t(batch_S)
    fake_S = state.G_t2s(batch_T)
    rec_S = state.G_t2s(fake_T)
    rec_T = state.G_s2t(fake_S)
    idt_S = state.G_t2s(batch_S)
    idt_T = state.G_s2t(batch_T)

    zero = batch_S.image.new_zeros(())
    terms = {
        "adv_G": adversarial_loss(state.D_t, None, fake_T, "generator", cfg.gan_mode)
        + adversarial_loss(state.D_s, None, fake_S, "generator", cfg.gan_mode),
        "idt": pair_consistency(idt_S, batch_S) + pair_consistency(idt_T, batch_T),
        "rec": pair_consistency(rec_S, batch_S) + pair_consistency(rec_T, batch_T),
        "cls": cls_loss(batch_S, fake_T, batch_T, fake_S, cfg.foreground_classes)
        if w.task_mode == TRANSFIGURATION
        else zero,
        "dom": cross_domain_loss(batch_S, fake_T, batch_T, fake_S)
        if w.task_mode == DOMAIN_TRANSFER
        else zero,
    }
    terms["total"] = total_generator_loss(w, terms)
    return terms, fake_T, fake_S


def train_step(state: TrainState, batch_S: LabeledPair, batch_T: LabeledPair) -> LossReport:
    """One generator update followed by one discriminator update, in place."""
    cfg = state.config
    if batch_S.num_classes != cfg.num_classes or batch_T.num_classes != cfg.num_classes:
        raise ShapeError(
            f"batches have {batch_S.num_classes}/{batch_T.num_classes} classes, "
            f"model expects {cfg.num_classes}"
        )
    state.train()

    _set_requires_grad((state.D_s, state.D_t), False)
    state.opt_G.zero_grad(set_to_none=True)
    terms, fake_T, fake_S = generator_losses(state, batch_S, batch_T)
    check_finite(terms)
    terms["total"].backward()
    state.opt_G.step()
    _set_requires_grad((state.D_s, state.D_t), True)

    state.opt_D.zero_grad(set_to_none=True)
    pool_T = state.history_T.sample(fake_T.detach())
    pool_S = state.history_S.sample(fake_S.detach())
    loss_D = adversarial_loss(state.D_t, batch_T, pool_T, "discriminator", cfg.gan_mode) + (
        adversarial_loss(state.D_s, batch_S, pool_S, "discriminator", cfg.gan_mode)
    )
    check_finite({"adv_D": loss_D})
    loss_D.backward()
    state.opt_D.step()

    state.step += 1
    values = {k: float(v.detach()) for k, v in terms.items()}
    return LossReport(adv_D=float(loss_D.detach()), **values)


def _trim_log(path: Path, last_step: int):
    """Drop rows written after the checkpoint being resumed from."""
    rows = path.read_text().splitlines()
    kept = [rows[0]] + [r for r in rows[1:] if r and int(r.split(",")[0]) <= last_step]
    path.write_text("\n".join(kept) + "\n")


def fit(
    cfg: TrainConfig,
    data_S: LabeledPair,
    data_T: LabeledPair,
    out_dir,
    resume=None,
    progress=None,
) -> Path:
    """Train for ``cfg.epochs`` epochs and return the final checkpoint path.

    Checkpoints go to ``out_dir/epoch_NNNN.ckpt`` every ``checkpoint_every``
    epochs plus ``out_dir/last.ckpt`` at the end; per-step losses are appended
    to ``out_dir/losses.csv``.
    """
    from pairgan.checkpoint import load_checkpoint, save_checkpoint

    if len(data_S) == 0 or len(data_T) == 0:
        raise ValueError("both domains need at least one sample")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "losses.csv"

    if resume is not None:
        state = load_checkpoint(resume, num_classes=cfg.num_classes)
        if state.config.to_dict() != cfg.to_dict():
            # only the epoch budget may change on resume
            a, b = state.config.to_dict(), cfg.to_dict()
            diff = sorted(k for k in a if a[k] != b[k] and k != "epochs")
            if diff:
                raise ValueError(f"resume config differs from checkpoint in {diff}")
            state.config = cfg
        if log_path.exists():
            _trim_log(log_path, state.step)
    else:
        state = create_state(cfg)
        with open(log_path, "w", newline="") as fh:
            csv.writer(fh).writerow(LOG_COLUMNS)

    bs = cfg.batch_size
    n_S, n_T = len(data_S), len(data_T)
    steps = max(1, max(n_S, n_T) // bs)
    last = None
    for epoch in range(state.epoch, cfg.epochs):
        state.set_lr(cfg.lr * lr_factor(cfg.lr_schedule, epoch, cfg.epochs))
        perm_S = state.rng.permutation(n_S)
        perm_T = state.rng.permutation(n_T)
        with open(log_path, "a", newline="") as fh:
            writer = csv.writer(fh)
            for k in range(steps):
                offs = k * bs + np.arange(bs)
                idx_S = torch.as_tensor(perm_S[offs % n_S])
                idx_T = torch.as_tensor(perm_T[offs % n_T])
                batch_S = LabeledPair(data_S.image[idx_S], data_S.classes[idx_S])
                batch_T = LabeledPair(data_T.image[idx_T], data_T.classes[idx_T])
                report = train_step(state, batch_S, batch_T)
                writer.writerow([state.step, epoch] + [repr(v) for v in report.as_dict().values()])
                if progress is not None:
                    progress(state, report)
        state.epoch = epoch + 1
        log.info("epoch %d/%d done at step %d", state.epoch, cfg.epochs, state.step)
        if state.epoch % cfg.checkpoint_every == 0:
            last = save_checkpoint(state, out / f"epoch_{state.epoch:04d}.ckpt")
    last = save_checkpoint(state, out / "last.ckpt")
    return last


def read_loss_log(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
