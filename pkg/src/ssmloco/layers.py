"""Parameter containers and the few layer types the networks are built from."""
from __future__ import annotations

import numpy as np

from .diffcore import Tensor, layernorm, relu


class Module:
    """Anything holding parameter tensors or child modules as attributes.

    Parameter names follow attribute insertion order, which keeps checkpoint
    layouts and optimizer ordering stable across runs.
    """

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor):
                if val.requires_grad:
                    out[name] = val
            elif isinstance(val, Module):
                out.update(val.named_parameters(name + "."))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{name}.{i}."))
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_arrays(self, arrays: dict[str, np.ndarray], strict: bool = True) -> None:
        params = self.named_parameters()
        missing = set(params) - set(arrays)
        if strict and missing:
            raise KeyError(f"missing parameters: {sorted(missing)[:5]}")
        for name, p in params.items():
            if name not in arrays:
                continue
            arr = np.asarray(arrays[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = arr.astype(p.dtype, copy=True)


def param(data, dtype) -> Tensor:
    return Tensor(np.ascontiguousarray(data, dtype=dtype), requires_grad=True)


def orthogonal(rng: np.random.Generator, n_in: int, n_out: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if n_in < n_out:
        q = q.T
    return gain * q[:n_in, :n_out]


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, dtype=np.float32,
                 gain: float = np.sqrt(2), bias: bool = True):
        self.weight = param(orthogonal(rng, n_in, n_out, gain), dtype)
        self.bias = param(np.zeros(n_out), dtype) if bias else None
        self.n_in, self.n_out = n_in, n_out

    def __call__(self, x) -> Tensor:
        if x.shape[-1] != self.n_in:
            raise ValueError(f"expected last dim {self.n_in}, got {x.shape}")
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class MLP(Module):
    """Linear layers with ReLU between them (and after the last if asked)."""

    def __init__(self, sizes, rng, dtype=np.float32, final_gain: float = np.sqrt(2), relu_last: bool = False):
        sizes = list(sizes)
        n = len(sizes) - 1
        self.layers = [Linear(sizes[i], sizes[i + 1], rng, dtype,
                              gain=final_gain if i == n - 1 else np.sqrt(2)) for i in range(n)]
        self.relu_last = relu_last

    def __call__(self, x) -> Tensor:
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < last or self.relu_last:
                x = relu(x)
        return x


class LayerNorm(Module):
    def __init__(self, d: int, dtype=np.float32, eps: float = 1e-5):
        self.gain = param(np.ones(d), dtype)
        self.bias = param(np.zeros(d), dtype)
        self.eps = eps

    def __call__(self, x) -> Tensor:
        return layernorm(x, self.gain, self.bias, self.eps)
