"""Training configuration and its flat ``key=value`` text form."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .nets import VARIANTS


@dataclass
class TrainConfig:
    variant: str = "FULL"
    T: int = 3
    N: int = 4
    c: int = 64
    height: int = 64
    width: int = 32
    lambda_gan: float = 5.0
    lambda_l1: float = 50.0
    lambda_p: float = 50.0
    adv_reduction: str = "mean"
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    iterations: int = 2000
    batch_size: int = 4
    master_seed: int = 42
    eval_every: int = 500
    checkpoint_every: int = 500
    log_every: int = 10
    d_base: int = 64
    n_train_identities: int = 200
    n_test_identities: int = 40
    pairs_per_identity: int = 20
    eval_pairs_per_identity: int = 2
    sigma: float = 1.5
    mask_radius: int = 3
    threads: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.height % 4 or self.width % 4:
            raise ValueError(f"image size {self.height}x{self.width} must be divisible by 4")
        if self.T < 1 or self.N < 1:
            raise ValueError(f"need T >= 1 and N >= 1, got T={self.T}, N={self.N}")
        if self.c % 4:
            raise ValueError(f"c={self.c} must be divisible by 4")
        if self.adv_reduction not in ("mean", "sum"):
            raise ValueError(f"adv_reduction must be 'mean' or 'sum', got {self.adv_reduction!r}")
        if min(self.lambda_gan, self.lambda_l1, self.lambda_p) < 0:
            raise ValueError("loss weights must be non-negative")

    @classmethod
    def full_size(cls, **overrides) -> "TrainConfig":
        """Full-size settings: T=9, N=10, 90K iterations at 128x64."""
        base = dict(T=9, N=10, iterations=90_000, height=128, width=64)
        base.update(overrides)
        return cls(**base)

    def to_text(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)!r}\n".replace("'", "")
                       for f in dataclasses.fields(self))

    @classmethod
    def from_text(cls, text: str, strict: bool = True) -> "TrainConfig":
        return cls(**parse_key_values(text, strict=strict))


def parse_key_values(text: str, strict: bool = True) -> dict:
    """Parse ``key=value`` lines (``#`` comments) into typed TrainConfig kwargs."""
    types = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in types:
            if strict:
                raise ValueError(f"line {lineno}: unknown config key {key!r}")
            continue
        kind = types[key]
        try:
            out[key] = int(val) if kind == "int" else float(val) if kind == "float" else val
        except ValueError:
            raise ValueError(f"line {lineno}: {key} expects {kind}, got {val!r}") from None
    return out
