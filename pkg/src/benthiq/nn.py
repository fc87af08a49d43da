"""Tiny module tree: parameter registration, naming, and the basic layers."""
from __future__ import annotations

import numpy as np

from .tensor import Parameter, Rng, Tensor, layer_norm, linear, trunc_normal


def _join(prefix: str, name: str) -> str:
    return f"{prefix}.{name}" if prefix else name


class Module:
    """Base class; children are discovered from instance attributes.

    Lists of modules are named with the attribute plus an index
    (`stage` -> `stage0`, `stage1`, ...), so parameter paths read like
    `encoder.stage0.block1.attn.qkv.weight`.
    """

    def named_parameters(self, prefix: str = ""):
        for attr, value in vars(self).items():
            if isinstance(value, Parameter):
                yield _join(prefix, attr), value
            elif isinstance(value, Module):
                yield from value.named_parameters(_join(prefix, attr))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{_join(prefix, attr)}{i}")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def bind_names(self) -> dict[str, Parameter]:
        """Assign each parameter its tree path; paths must be unique."""
        table: dict[str, Parameter] = {}
        for name, p in self.named_parameters():
            if name in table:
                raise ValueError(f"duplicate parameter name {name!r}")
            p.name = name
            p.tensor.op = f"param:{name}"     # lets non-finite scans name the culprit
            table[name] = p
        return table

    def param_count(self) -> int:
        return sum(p.tensor.size for p in self.parameters())


class Linear(Module):
    """y = x @ weight + bias, weight shaped [d_in, d_out]."""

    def __init__(self, d_in: int, d_out: int, rng: Rng, bias: bool = True):
        self.weight = Parameter(trunc_normal(rng, (d_in, d_out)))
        self.bias = Parameter(np.zeros(d_out, dtype=np.float32)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.weight.tensor, self.bias.tensor if self.bias else None)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(dim, dtype=np.float32))
        self.beta = Parameter(np.zeros(dim, dtype=np.float32))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma.tensor, self.beta.tensor, self.eps)
