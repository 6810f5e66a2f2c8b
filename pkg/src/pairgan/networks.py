"""Joint image/class generator and the joint patch discriminator."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from pairgan.datamodel import LabeledPair, ShapeError, concat_pair

INIT_STD = 0.02


@dataclass(frozen=True)
class GeneratorConfig:
    num_classes: int = 2
    base_channels: int = 64
    n_res_blocks: int = 9

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.base_channels < 1:
            raise ValueError("base_channels must be positive")
        if self.n_res_blocks < 1:
            raise ValueError("n_res_blocks must be >= 1")


@dataclass(frozen=True)
class DiscriminatorConfig:
    num_classes: int = 2
    base_channels: int = 64
    n_layers: int = 3  # stride-2 convs; one stride-1 conv and the 1-channel head follow

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.base_channels < 1 or self.n_layers < 1:
            raise ValueError("base_channels and n_layers must be positive")


def _norm(ch):
    return nn.InstanceNorm2d(ch, affine=False, track_running_stats=False)


class ResidualBlock(nn.Module):
    def __init__(self, ch):
        super().__init__()
        self.body = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(ch, ch, 3),
            _norm(ch),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(ch, ch, 3),
            _norm(ch),
        )

    def forward(self, x):
        return x + self.body(x)


def _decoder(base, out_ch):
    return nn.Sequential(
        nn.Upsample(scale_factor=2, mode="nearest"),
        nn.Conv2d(4 * base, 2 * base, 3, padding=1),
        _norm(2 * base),
        nn.ReLU(inplace=True),
        nn.Upsample(scale_factor=2, mode="nearest"),
        nn.Conv2d(2 * base, base, 3, padding=1),
        _norm(base),
        nn.ReLU(inplace=True),
        nn.ReflectionPad2d(3),
        nn.Conv2d(base, out_ch, 7),
    )


def init_weights(module: nn.Module, generator: torch.Generator):
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            with torch.no_grad():
                m.weight.normal_(0.0, INIT_STD, generator=generator)
                if m.bias is not None:
                    m.bias.zero_()


class Generator(nn.Module):
    """Shared encoder trunk feeding an image head (tanh) and a class head (softmax)."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        b, m = cfg.base_channels, cfg.num_classes
        self.encoder = nn.Sequential(
            nn.ReflectionPad2d(3),
            nn.Conv2d(3 + m, b, 7),
            _norm(b),
            nn.ReLU(inplace=True),
            nn.Conv2d(b, 2 * b, 3, stride=2, padding=1),
            _norm(2 * b),
            nn.ReLU(inplace=True),
            nn.Conv2d(2 * b, 4 * b, 3, stride=2, padding=1),
            _norm(4 * b),
            nn.ReLU(inplace=True),
            *[ResidualBlock(4 * b) for _ in range(cfg.n_res_blocks)],
        )
        self.image_head = _decoder(b, 3)
        self.class_head = _decoder(b, m)

    @property
    def num_classes(self):
        return self.cfg.num_classes

    def encode(self, pair: LabeledPair) -> torch.Tensor:
        if pair.num_classes != self.num_classes:
            raise ShapeError(
                f"generator expects {self.num_classes} classes, input has {pair.num_classes}"
            )
        h, w = pair.spatial
        if h % 4 or w % 4:
            raise ShapeError(f"spatial size {h}x{w} must be divisible by 4")
        return self.encoder(concat_pair(pair))

    def forward(self, pair: LabeledPair) -> LabeledPair:
        z = self.encode(pair)
        image = torch.tanh(self.image_head(z))
        classes = torch.softmax(self.class_head(z), dim=1)
        return LabeledPair(image, classes)


class PatchDiscriminator(nn.Module):
    """Fully convolutional critic over concatenated image and class planes."""

    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        self.cfg = cfg
        b = cfg.base_channels
        layers = [nn.Conv2d(3 + cfg.num_classes, b, 4, stride=2, padding=1), nn.LeakyReLU(0.2, True)]
        ch = b
        for i in range(1, cfg.n_layers + 1):
            nxt = b * min(2**i, 8)
            stride = 2 if i < cfg.n_layers else 1
            layers += [nn.Conv2d(ch, nxt, 4, stride=stride, padding=1), _norm(nxt), nn.LeakyReLU(0.2, True)]
            ch = nxt
        layers.append(nn.Conv2d(ch, 1, 4, stride=1, padding=1))
        self.model = nn.Sequential(*layers)

    @property
    def num_classes(self):
        return self.cfg.num_classes

    def forward(self, pair: LabeledPair) -> torch.Tensor:
        if pair.num_classes != self.num_classes:
            raise ShapeError(
                f"discriminator expects {self.num_classes} classes, input has {pair.num_classes}"
            )
        return self.model(concat_pair(pair))


def build_generator(cfg: GeneratorConfig, seed: int = 0) -> Generator:
    g = Generator(cfg)
    init_weights(g, torch.Generator().manual_seed(seed))
    return g


def build_discriminator(cfg: DiscriminatorConfig, seed: int = 0) -> PatchDiscriminator:
    d = PatchDiscriminator(cfg)
    init_weights(d, torch.Generator().manual_seed(seed))
    return d


def patch_grid_size(size: int, n_layers: int = 3) -> int:
    """Side length of the logit grid for a square input of the given side."""
    for _ in range(n_layers):
        size = (size + 2 - 4) // 2 + 1
    for _ in range(2):
        size = size + 2 - 4 + 1
    return size


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
