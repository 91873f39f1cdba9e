"""Generator (encoders, Xing cascade, co-attention fusion) and the two
conditional patch discriminators."""

from __future__ import annotations

from dataclasses import dataclass

from . import tensor as T
from .blocks import ASBlockParams, SABlockParams, as_block, sa_block
from .layers import Conv2d, ConvTranspose2d, InstanceNorm, Module
from .tensor import Var

VARIANTS = ("SA", "AS", "SA+AS", "FULL")
POSE_CHANNELS = 18


class Encoder(Module):
    """Two stride-2 3x3 convs (cin -> c/2 -> c), each with instance norm + ReLU."""

    def __init__(self, cin: int, c: int):
        self.conv1 = Conv2d(cin, c // 2, 3, stride=2, pad=1)
        self.norm1 = InstanceNorm(c // 2)
        self.conv2 = Conv2d(c // 2, c, 3, stride=2, pad=1)
        self.norm2 = InstanceNorm(c)

    def __call__(self, x: Var) -> Var:
        x = T.relu(self.norm1(self.conv1(x)))
        return T.relu(self.norm2(self.conv2(x)))


class Decoder(Module):
    """Two stride-2 transposed convs (cin -> c/2 -> c/4, instance norm + ReLU)
    followed by a k x k output conv. No output activation here."""

    def __init__(self, cin: int, c: int, out_channels: int, k: int):
        self.up1 = ConvTranspose2d(cin, c // 2)
        self.norm1 = InstanceNorm(c // 2)
        self.up2 = ConvTranspose2d(c // 2, c // 4)
        self.norm2 = InstanceNorm(c // 4)
        self.out = Conv2d(c // 4, out_channels, k, pad=k // 2)

    def __call__(self, x: Var) -> Var:
        x = T.relu(self.norm1(self.up1(x)))
        x = T.relu(self.norm2(self.up2(x)))
        return self.out(x)


@dataclass
class CAFOutput:
    """Generator output. Batched: final [B,3,H,W], intermediates [B,N,3,H,W],
    attention [B,2N+1,H,W]. Ablation variants fill only ``final``."""

    final: Var
    intermediates_i: Var | None = None
    intermediates_p: Var | None = None
    attention: Var | None = None
    code_i0: Var | None = None
    code_i: Var | None = None
    code_p: Var | None = None


class Generator(Module):
    def __init__(self, T_blocks: int = 9, N: int = 10, c: int = 64, variant: str = "FULL"):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        if T_blocks < 1 or N < 1:
            raise ValueError(f"need T >= 1 and N >= 1, got T={T_blocks}, N={N}")
        if c % 4:
            raise ValueError(f"channel width c={c} must be divisible by 4")
        self.variant = variant
        self.T, self.N, self.c = T_blocks, N, c
        self.image_encoder = Encoder(3, c)
        self.pose_encoder = Encoder(2 * POSE_CHANNELS, c)
        use_sa = variant in ("SA", "SA+AS", "FULL")
        use_as = variant in ("AS", "SA+AS", "FULL")
        self.sa_blocks = [SABlockParams(c) for _ in range(T_blocks)] if use_sa else []
        self.as_blocks = [ASBlockParams(c) for _ in range(T_blocks)] if use_as else []
        if variant == "FULL":
            self.decoder_i = Decoder(c, c, 3 * N, 3)
            self.decoder_p = Decoder(c, c, 3 * N, 3)
            self.attention_head = Decoder(2 * c, c, 2 * N + 1, 1)
        else:
            if variant == "SA+AS":
                self.fuse = Conv2d(2 * c, c, 3, pad=1)
            self.decoder = Decoder(c, c, 3, 3)

    # -- encoders ---------------------------------------------------------

    def encode_image(self, image: Var) -> Var:
        image = T.as_var(image)
        h, w = image.shape[-2:]
        if image.shape[-3] != 3:
            raise ValueError(f"source image needs 3 channels, got shape {image.shape}")
        if h % 4 or w % 4:
            raise ValueError(f"image size {h}x{w} must be divisible by 4; "
                             f"pad by {(-h) % 4} rows and {(-w) % 4} columns")
        return self.image_encoder(image)

    def encode_pose(self, pose_s: Var, pose_t: Var) -> Var:
        pose_s, pose_t = T.as_var(pose_s), T.as_var(pose_t)
        for name, p in (("source", pose_s), ("target", pose_t)):
            if p.shape[-3] != POSE_CHANNELS:
                raise ValueError(f"{name} pose heatmap needs {POSE_CHANNELS} channels, got shape {p.shape}")
        h, w = pose_s.shape[-2:]
        if h % 4 or w % 4:
            raise ValueError(f"pose size {h}x{w} must be divisible by 4; "
                             f"pad by {(-h) % 4} rows and {(-w) % 4} columns")
        return self.pose_encoder(T.concat_channels([pose_s, pose_t]))

    # -- cascade ------------------------------------------------------------

    def cascade(self, f_i: Var, f_p: Var) -> tuple[Var, Var]:
        """Run the T blocks; returns (F_T^I, F_T^P)."""
        if self.variant == "SA":
            for sa in self.sa_blocks:
                f_i = sa_block(f_i, f_p, sa)
        elif self.variant == "AS":
            for asb in self.as_blocks:
                f_p = as_block(f_p, f_i, f_i, asb)
        else:
            for sa, asb in zip(self.sa_blocks, self.as_blocks):
                f_i_new = sa_block(f_i, f_p, sa)
                f_p = as_block(f_p, f_i, f_i_new, asb)
                f_i = f_i_new
        return f_i, f_p

    def caf_forward(self, f_i: Var, f_p: Var, source: Var) -> CAFOutput:
        """Decode 2N candidates plus the source image and blend them with a
        per-pixel channel softmax."""
        if self.variant != "FULL":
            raise ValueError(f"co-attention fusion needs the FULL variant, not {self.variant}")
        source = T.as_var(source)
        b = source.shape[0]
        h, w = source.shape[-2:]
        n = self.N
        dec_i = self.decoder_i(f_i)
        dec_p = self.decoder_p(f_p)
        if dec_i.shape[1] != 3 * n or dec_p.shape[1] != 3 * n:
            raise ValueError(f"decoders emit {dec_i.shape[1]}/{dec_p.shape[1]} channels, need 3N = {3 * n}")
        if dec_i.shape[-2:] != (h, w):
            raise ValueError(f"decoder resolution {dec_i.shape[-2:]} does not match source {(h, w)}")
        inter_i = T.reshape(T.tanh(dec_i), (b, n, 3, h, w))
        inter_p = T.reshape(T.tanh(dec_p), (b, n, 3, h, w))
        logits = self.attention_head(T.concat_channels([f_i, f_p]))
        attn = T.softmax(logits, axis=1)
        candidates = T.concat([inter_i, inter_p, T.reshape(source, (b, 1, 3, h, w))], axis=1)
        weights = T.reshape(attn, (b, 2 * n + 1, 1, h, w))
        final = T.sum_(T.mul(weights, candidates), axis=1)
        return CAFOutput(final, inter_i, inter_p, attn)

    def forward(self, source: Var, pose_s: Var, pose_t: Var) -> CAFOutput:
        source = T.as_var(source)
        single = source.ndim == 3
        if single:
            source = T.reshape(source, (1,) + source.shape)
            pose_s = T.reshape(T.as_var(pose_s), (1,) + pose_s.shape)
            pose_t = T.reshape(T.as_var(pose_t), (1,) + pose_t.shape)
        f_i0 = self.encode_image(source)
        f_p0 = self.encode_pose(pose_s, pose_t)
        if f_p0.shape != f_i0.shape:
            raise ValueError(f"pose code {f_p0.shape} does not match appearance code {f_i0.shape}")
        f_i, f_p = self.cascade(f_i0, f_p0)
        if self.variant == "FULL":
            out = self.caf_forward(f_i, f_p, source)
        elif self.variant == "SA":
            out = CAFOutput(T.tanh(self.decoder(f_i)))
        elif self.variant == "AS":
            out = CAFOutput(T.tanh(self.decoder(f_p)))
        else:
            fused = self.fuse(T.concat_channels([f_i, f_p]))
            out = CAFOutput(T.tanh(self.decoder(fused)))
        out.code_i0, out.code_i, out.code_p = f_i0, f_i, f_p
        if single:
            out = _unbatch(out)
        return out

    __call__ = forward


def _unbatch(out: CAFOutput) -> CAFOutput:
    def sq(v):
        return None if v is None else T.reshape(v, v.shape[1:])

    return CAFOutput(*(sq(getattr(out, f)) for f in
                       ("final", "intermediates_i", "intermediates_p", "attention",
                        "code_i0", "code_i", "code_p")))


class Discriminator(Module):
    """Conditional patch discriminator over concat(condition, image).

    Four stride-2 3x3 convs (base, 2b, 4b, 8b channels, leaky ReLU 0.2) and a
    final 3x3 conv to one logit channel. Returns raw logits.
    """

    def __init__(self, cond_channels: int, base: int = 64, kind: str = "appearance"):
        self.kind = kind
        self.cond_channels = cond_channels
        chans = [cond_channels + 3, base, 2 * base, 4 * base, 8 * base]
        self.convs = [Conv2d(chans[i], chans[i + 1], 3, stride=2, pad=1) for i in range(4)]
        self.head = Conv2d(8 * base, 1, 3, pad=1)

    def __call__(self, condition: Var, image: Var) -> Var:
        condition, image = T.as_var(condition), T.as_var(image)
        if condition.shape[-3] != self.cond_channels:
            raise ValueError(f"{self.kind} discriminator expects a {self.cond_channels}-channel condition, "
                             f"got shape {condition.shape}")
        x = T.concat_channels([condition, image])
        for conv in self.convs:
            x = T.leaky_relu(conv(x), 0.2)
        return self.head(x)


def build_discriminators(base: int = 64) -> tuple[Discriminator, Discriminator]:
    """(D_I conditioned on the source image, D_P conditioned on the target pose)."""
    return (Discriminator(3, base, kind="appearance"),
            Discriminator(POSE_CHANNELS, base, kind="shape"))
