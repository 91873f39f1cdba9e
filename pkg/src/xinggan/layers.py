"""Minimal parameter containers: a ``Module`` base plus conv/norm layers."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .rng import SplitMix64, derive_seed
from .tensor import Parameter, Var


class Module:
    """Parameter container; attributes that are Parameters, Modules or lists
    of Modules are discovered in definition order."""

    def named_parameters(self, prefix: str = ""):
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Parameter):
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], prefix: str = "") -> None:
        for name, p in self.named_parameters():
            key = prefix + name
            if key not in state:
                raise KeyError(f"missing tensor {key!r}")
            arr = np.asarray(state[key])
            if arr.shape != p.shape:
                raise ValueError(f"tensor {key!r} has shape {arr.shape}, expected {p.shape}")
            p.data = arr.astype(p.dtype, copy=True)

    def initialize(self, seed: int) -> None:
        """Fill every parameter from a stream keyed by (seed, parameter name)."""
        for name, p in self.named_parameters():
            if p.init == "uniform":
                rng = SplitMix64(derive_seed(seed, name))
                bound = 1.0 / np.sqrt(p.fan_in)
                p.data = rng.uniform(-bound, bound, p.shape).astype(p.dtype)
            elif p.init == "ones":
                p.data = np.ones(p.shape, dtype=p.dtype)
            else:
                p.data = np.zeros(p.shape, dtype=p.dtype)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def requires_grad_(self, flag: bool) -> None:
        for p in self.parameters():
            p.requires_grad = flag

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, k: int, stride: int = 1, pad: int = 0, bias: bool = True):
        self.weight = Parameter((cout, cin, k, k), init="uniform", fan_in=cin * k * k)
        if bias:
            self.bias = Parameter((cout,))
        self.stride, self.pad = stride, pad

    def __call__(self, x: Var) -> Var:
        return T.conv2d(x, self.weight, getattr(self, "bias", None), self.stride, self.pad)


class ConvTranspose2d(Module):
    """Stride-2 upsampling; k=4, pad=1 doubles the spatial size exactly."""

    def __init__(self, cin: int, cout: int, k: int = 4, stride: int = 2, pad: int = 1):
        self.weight = Parameter((cin, cout, k, k), init="uniform", fan_in=cout * k * k)
        self.bias = Parameter((cout,))
        self.stride, self.pad = stride, pad

    def __call__(self, x: Var) -> Var:
        return T.conv_transpose2d(x, self.weight, self.bias, self.stride, self.pad)


class InstanceNorm(Module):
    def __init__(self, c: int, eps: float = 1e-5):
        self.gamma = Parameter((c,), init="ones")
        self.beta = Parameter((c,))
        self.eps = eps

    def __call__(self, x: Var) -> Var:
        return T.instance_norm(x, self.gamma, self.beta, self.eps)
