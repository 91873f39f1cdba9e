"""Adversarial, pixel and perceptual objectives and their weighted total."""

from __future__ import annotations

from dataclasses import dataclass

from . import tensor as T
from .layers import Conv2d, Module
from .tensor import Var

DEFAULT_FX_SEED = 0x5EED


@dataclass(frozen=True)
class LossWeights:
    lambda_gan: float = 5.0
    lambda_l1: float = 50.0
    lambda_p: float = 50.0

    def __post_init__(self):
        for k, v in vars(self).items():
            if v < 0:
                raise ValueError(f"{k} must be >= 0, got {v}")


def gan_loss_d(real_logits, fake_logits) -> Var:
    """Discriminator loss: 0.5 * (BCE(real, 1) + BCE(fake, 0)), patch-averaged."""
    return T.scale(T.add(T.bce_with_logits(real_logits, 1.0), T.bce_with_logits(fake_logits, 0.0)), 0.5)


def gan_loss_g(fake_logits) -> Var:
    """Non-saturating generator loss BCE(fake, 1)."""
    return T.bce_with_logits(fake_logits, 1.0)


def l1_loss(generated, target) -> Var:
    generated, target = T.as_var(generated), T.as_var(target)
    if generated.shape != target.shape:
        raise ValueError(f"l1_loss shape mismatch: {generated.shape} vs {target.shape}")
    return T.mean(T.abs_(T.sub(generated, target)))


class FeatureExtractor(Module):
    """Frozen random conv stack standing in for pretrained perceptual features.

    Layers: 3->8 (stride 1), 8->16, 16->32, 32->64 (stride 2), 3x3 kernels,
    leaky ReLU 0.2. The first conv copies the RGB input into its first three
    channels, so identical first-layer features imply identical images.
    Weights for a real network can be loaded with :meth:`load`.
    """

    CHANNELS = (8, 16, 32, 64)

    def __init__(self, seed: int = DEFAULT_FX_SEED):
        chans = (3,) + self.CHANNELS
        self.convs = [Conv2d(chans[i], chans[i + 1], 3, stride=1 if i == 0 else 2, pad=1)
                      for i in range(len(self.CHANNELS))]
        self.initialize(seed)
        w = self.convs[0].weight.data
        w[:3] = 0.0
        for ch in range(3):
            w[ch, ch, 1, 1] = 1.0
        self.requires_grad_(False)

    @classmethod
    def load(cls, path) -> "FeatureExtractor":
        from .checkpoint import read_checkpoint

        fx = cls()
        _, tensors = read_checkpoint(path)
        fx.load_state_dict(tensors, prefix="fx.")
        fx.requires_grad_(False)
        return fx

    def __call__(self, image) -> list[Var]:
        x = T.as_var(image)
        feats = []
        for conv in self.convs:
            x = T.leaky_relu(conv(x), 0.2)
            feats.append(x)
        return feats


def perceptual_loss(generated, target, fx: FeatureExtractor) -> Var:
    """Sum over extractor layers of the mean absolute feature difference."""
    generated, target = T.as_var(generated), T.as_var(target)
    if generated.shape != target.shape:
        raise ValueError(f"perceptual_loss shape mismatch: {generated.shape} vs {target.shape}")
    total = None
    for fg, ft in zip(fx(generated), fx(target.detach())):
        term = T.mean(T.abs_(T.sub(fg, ft)))
        total = term if total is None else T.add(total, term)
    return total


def total_loss(parts, weights: LossWeights = LossWeights()) -> Var:
    """lambda_gan * gan + lambda_l1 * l1 + lambda_p * perceptual.

    ``parts`` is a (gan, l1, perceptual) triple of Vars or floats.
    """
    gan, l1, perc = (T.as_var(p) for p in parts)
    return T.add(T.add(T.scale(gan, weights.lambda_gan), T.scale(l1, weights.lambda_l1)),
                 T.scale(perc, weights.lambda_p))


def adversarial_term(terms, reduction: str = "mean") -> Var:
    """Combine the D_I and D_P contributions ('mean' or 'sum')."""
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    total = terms[0]
    for t in terms[1:]:
        total = T.add(total, t)
    return T.scale(total, 1.0 / len(terms)) if reduction == "mean" else total

