import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from pairgan.datamodel import LabeledPair, ShapeError
from pairgan.losses import (
    DOMAIN_TRANSFER,
    LEAST_SQUARES,
    LOG,
    TRANSFIGURATION,
    LossModeError,
    LossReport,
    LossWeights,
    NonFiniteLossError,
    adversarial_loss,
    check_finite,
    class_cross_entropy,
    cls_loss,
    cross_domain_loss,
    identity_loss,
    masked_l1,
    pixel_indicator,
    reconstruction_loss,
    total_generator_loss,
    transfiguration_loss,
)

from conftest import random_pair


class Copy(torch.nn.Module):
    def forward(self, pair):
        return pair


class Uniform(torch.nn.Module):
    """Copies the image, predicts a flat class distribution."""

    def forward(self, pair):
        return LabeledPair(pair.image, torch.full_like(pair.classes, 1.0 / pair.num_classes))


class ConstantCritic(torch.nn.Module):
    def __init__(self, real_value, fake_value=None):
        super().__init__()
        self.real_value, self.fake_value = real_value, fake_value

    def forward(self, pair):
        v = self.real_value if pair.image.mean() > 0 or self.fake_value is None else self.fake_value
        return torch.full((pair.image.shape[0], 1, 3, 3), float(v))


def brute_force_indicator(src, trans, fg):
    out = np.zeros(src.shape, dtype=np.uint8)
    for i in range(src.shape[0]):
        for j in range(src.shape[1]):
            out[i, j] = int(src[i, j] not in fg and trans[i, j] not in fg)
    return out


def test_indicator_trivial_cases():
    zeros = np.zeros((4, 4), dtype=int)
    assert pixel_indicator(zeros, zeros).all()
    assert not pixel_indicator(np.ones((4, 4), dtype=int), zeros).any()


def test_indicator_worked_example():
    p = pixel_indicator(np.array([[1, 0], [0, 0]]), np.array([[0, 1], [0, 0]]))
    assert p.tolist() == [[0, 0], [1, 1]]


def test_indicator_matches_brute_force():
    rng = np.random.default_rng(7)
    for k in range(1000):
        m = int(rng.integers(2, 6))
        src, trans = rng.integers(0, m, (2, 16, 16))
        fg = set(range(1, m)) if k % 2 else set(rng.choice(m, size=int(rng.integers(1, m)), replace=False).tolist())
        got = pixel_indicator(src, trans, None if k % 2 else fg).numpy()
        assert np.array_equal(got, brute_force_indicator(src, trans, fg))


def test_indicator_shape_mismatch():
    with pytest.raises(ShapeError):
        pixel_indicator(np.zeros((4, 4), dtype=int), np.zeros((4, 5), dtype=int))


def test_transfiguration_worked_example():
    diff = torch.tensor([[0.4, 0.9], [0.9, 0.2]], dtype=torch.float64)
    a = torch.zeros(3, 2, 2, dtype=torch.float64)
    b = diff.expand(3, 2, 2)
    P = torch.tensor([[1, 0], [0, 1]])
    assert abs(float(transfiguration_loss(a, b, P)) - 0.15) < 1e-9


def test_transfiguration_simple_cases(rng):
    a = torch.tensor(rng.random((1, 3, 8, 8)))
    assert float(transfiguration_loss(a, a, torch.ones(8, 8))) == 0
    assert abs(float(transfiguration_loss(a, a + 0.5, torch.ones(8, 8))) - 0.5) < 1e-12
    assert float(transfiguration_loss(a, -a, torch.zeros(1, 8, 8))) == 0


def test_masked_l1_batched_mask(rng):
    a = torch.tensor(rng.random((2, 3, 4, 4)))
    b = torch.tensor(rng.random((2, 3, 4, 4)))
    mask = torch.tensor(rng.integers(0, 2, (2, 4, 4)))
    expected = (mask[:, None].double() * (a - b).abs()).mean()
    assert torch.isclose(masked_l1(a, b, mask), expected)
    with pytest.raises(ShapeError):
        masked_l1(a, b[:, :, :3], mask)


@pytest.mark.parametrize("m", [2, 5, 20])
def test_cross_entropy_uniform_is_log_m(m):
    pred = torch.full((1, m, 6, 6), 1.0 / m, dtype=torch.float64)
    target = torch.randint(0, m, (1, 6, 6))
    assert abs(float(class_cross_entropy(target, pred)) - math.log(m)) < 1e-6


def test_cross_entropy_examples():
    target = torch.zeros(1, 4, 4, dtype=torch.long)
    onehot = torch.zeros(1, 2, 4, 4, dtype=torch.float64)
    onehot[:, 0] = 1
    assert float(class_cross_entropy(target, onehot)) <= 1e-6
    pred = torch.stack([torch.full((4, 4), 0.9, dtype=torch.float64), torch.full((4, 4), 0.1, dtype=torch.float64)])[None]
    assert abs(float(class_cross_entropy(target, pred)) + math.log(0.9)) < 1e-12
    # clamped rather than infinite
    assert math.isfinite(float(class_cross_entropy(target + 1, onehot)))
    with pytest.raises(ShapeError):
        class_cross_entropy(target + 2, onehot)


def test_cross_entropy_monotone():
    target = torch.zeros(1, 2, 2, dtype=torch.long)
    values = []
    for p in (0.2, 0.4, 0.6, 0.8, 0.99):
        pred = torch.stack([torch.full((2, 2), p), torch.full((2, 2), 1 - p)])[None].double()
        values.append(float(class_cross_entropy(target, pred)))
    assert all(x > y for x, y in zip(values, values[1:]))


def test_identity_and_cycle_with_copy_generators(rng):
    S, T = random_pair(rng, num_classes=3), random_pair(rng, num_classes=3)
    assert float(identity_loss(Copy(), Copy(), S, T)) <= 1e-6
    assert float(reconstruction_loss(Copy(), Copy(), S, T)) <= 1e-6


def test_uniform_classes_cost_log_m_per_direction(rng):
    S, T = random_pair(rng, num_classes=2, dtype=torch.float64), random_pair(rng, num_classes=2, dtype=torch.float64)
    assert abs(float(identity_loss(Uniform(), Uniform(), S, T)) - 2 * math.log(2)) < 1e-6
    assert abs(float(reconstruction_loss(Uniform(), Uniform(), S, T)) - 2 * math.log(2)) < 1e-6


def test_identity_symmetric_under_domain_swap(rng):
    S, T = random_pair(rng, num_classes=2), random_pair(rng, num_classes=2)
    G1, G2 = Uniform(), Copy()
    assert torch.isclose(identity_loss(G1, G2, S, T), identity_loss(G2, G1, T, S))


def test_cross_domain_examples(rng):
    S = random_pair(rng, num_classes=20, dtype=torch.float64)
    T = random_pair(rng, num_classes=20, dtype=torch.float64)
    assert float(cross_domain_loss(S, S, T, T)) <= 1e-6
    u = Uniform()
    assert abs(float(cross_domain_loss(S, u(S), T, u(T))) - 2 * math.log(20)) < 1e-6


def test_cls_loss_ignores_foreground(rng):
    S = LabeledPair.from_arrays(rng.random((8, 8, 3)), np.ones((8, 8), dtype=int), 2)
    moved = LabeledPair(S.image * 0, S.classes)
    assert float(cls_loss(S, moved, S, moved)) == 0


def test_adversarial_examples():
    real = LabeledPair(torch.ones(1, 3, 8, 8), torch.full((1, 2, 8, 8), 0.5))
    fake = LabeledPair(-torch.ones(1, 3, 8, 8), torch.full((1, 2, 8, 8), 0.5))
    perfect = ConstantCritic(1.0, 0.0)
    assert float(adversarial_loss(perfect, real, fake, "discriminator", LEAST_SQUARES)) == 0
    half = ConstantCritic(0.5)
    assert float(adversarial_loss(half, None, fake, "generator", LEAST_SQUARES)) == 0.25
    assert float(adversarial_loss(half, real, fake, "discriminator", LEAST_SQUARES)) == 0.25
    # logit 0 is probability 0.5
    zero = ConstantCritic(0.0)
    assert abs(float(adversarial_loss(zero, None, fake, "generator", LOG)) - math.log(2)) < 1e-6
    with pytest.raises(LossModeError):
        adversarial_loss(zero, real, fake, "generator", "hinge")
    with pytest.raises(ValueError):
        adversarial_loss(zero, real, fake, "critic")


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.sampled_from([LEAST_SQUARES, LOG]))
def test_adversarial_nonnegative(r, f, mode):
    real = LabeledPair(torch.ones(1, 3, 8, 8), torch.full((1, 2, 8, 8), 0.5))
    fake = LabeledPair(-torch.ones(1, 3, 8, 8), torch.full((1, 2, 8, 8), 0.5))
    D = ConstantCritic(r, f)
    assert float(adversarial_loss(D, real, fake, "discriminator", mode)) >= 0
    assert float(adversarial_loss(D, real, fake, "generator", mode)) >= 0


def test_total_weighted_sum():
    parts = {"adv_G": 1.0, "idt": 2.0, "rec": 3.0, "cls": 4.0, "dom": 5.0}
    trans = LossWeights.for_mode(TRANSFIGURATION)
    dom_only = LossWeights(adv=0, idt=0, rec=0, cls=0, dom=1, task_mode=DOMAIN_TRANSFER)
    # both modes together cover the five-term combination 1 + 20 + 30 + 40 + 5
    assert total_generator_loss(trans, parts) + total_generator_loss(dom_only, parts) == 96
    assert total_generator_loss(LossWeights.for_mode(DOMAIN_TRANSFER), parts) == 1 + 20 + 30 + 5
    assert total_generator_loss(trans, dict.fromkeys(parts, 0.0)) == 0
    report = LossReport(adv_G=1, idt=2, rec=3, cls=4, dom=5)
    assert total_generator_loss(trans, report) == 91


def test_total_is_linear_in_each_coefficient(rng):
    parts = dict(zip(("adv_G", "idt", "rec", "cls", "dom"), rng.random(5)))
    base = dict(adv=1.0, idt=10.0, rec=10.0, cls_w=10.0, dom=1.0)
    for mode in (TRANSFIGURATION, DOMAIN_TRANSFER):
        for key, term in (("adv", "adv_G"), ("idt", "idt"), ("rec", "rec"), ("cls_w", "cls"), ("dom", "dom")):
            if (mode, key) in ((TRANSFIGURATION, "dom"), (DOMAIN_TRANSFER, "cls_w")):
                continue
            w0 = LossWeights.for_mode(mode, **base)
            w1 = LossWeights.for_mode(mode, **{**base, key: base[key] + 0.37})
            delta = total_generator_loss(w1, parts) - total_generator_loss(w0, parts)
            assert abs(delta - 0.37 * parts[term]) < 1e-12


def test_weight_mode_invariants():
    assert LossWeights.for_mode(TRANSFIGURATION, dom=3).dom == 0
    assert LossWeights.for_mode(DOMAIN_TRANSFER, cls_w=3).cls == 0
    with pytest.raises(LossModeError):
        LossWeights(dom=1.0, task_mode=TRANSFIGURATION)
    with pytest.raises(LossModeError):
        LossWeights(cls=1.0, task_mode=DOMAIN_TRANSFER)
    with pytest.raises(LossModeError):
        LossWeights(task_mode="segmentation")
    with pytest.raises(ValueError):
        LossWeights(adv=-1)


def test_check_finite_names_term():
    check_finite({"a": torch.tensor(1.0)})
    with pytest.raises(NonFiniteLossError, match="'rec'"):
        check_finite({"a": 1.0, "rec": torch.tensor(float("nan"))})
