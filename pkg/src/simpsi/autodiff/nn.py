"""Parameter containers and the layers used by the demodulator and map generator."""

from __future__ import annotations

import contextlib
import hashlib
from typing import Iterator

import numpy as np

from ..rng import RngStream
from . import functional as F
from .tensor import Tensor, relu

ParameterSet = dict  # ordered name -> Parameter; order fixed by construction sequence


class Parameter(Tensor):
    def __init__(self, data, name: str | None = None):
        super().__init__(np.asarray(data), requires_grad=True, name=name)


class Module:
    """Minimal module tree.

    Parameters, buffers and child modules are discovered in attribute
    assignment order, so construction order fixes the registry order.
    """

    training = True

    def __init__(self):
        self._buffers: dict[str, np.ndarray] = {}

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value

    def _children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
                for i, child in enumerate(value):
                    yield f"{name}.{i}", child

    def named_parameters(self, prefix: str = "") -> ParameterSet:
        out: ParameterSet = {}
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                out[prefix + name] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(prefix + name + "."))
            elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
                for i, child in enumerate(value):
                    out.update(child.named_parameters(f"{prefix}{name}.{i}."))
        return out

    def named_buffers(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {prefix + k: v for k, v in self._buffers.items()}
        for name, child in self._children():
            out.update(child.named_buffers(prefix + name + "."))
        return out

    def parameters(self) -> list[Parameter]:
        return list(self.named_parameters().values())

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self._children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        """Parameters then buffers, each in registry order."""
        state = {k: p.data for k, p in self.named_parameters().items()}
        state.update(self.named_buffers())
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        buffers = self.named_buffers()
        for name, p in params.items():
            p.data = np.array(state[name], dtype=p.dtype).reshape(p.shape)
        for name, buf in buffers.items():
            buf[...] = state[name]

    def astype(self, dtype) -> "Module":
        """Cast parameters and buffers in place (e.g. to float64 for gradient checks)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        for module in self._modules():
            for k, v in module._buffers.items():
                module._buffers[k] = v.astype(dtype)
        return self

    def _modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self._children():
            yield from child._modules()

    def checksum(self, include_buffers: bool = True) -> str:
        h = hashlib.sha256()
        items = self.state_dict() if include_buffers else {k: p.data for k, p in self.named_parameters().items()}
        for name, arr in items.items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


@contextlib.contextmanager
def frozen(*modules: Module):
    """Temporarily stop parameters of ``modules`` from recording gradients."""
    params = [p for m in modules for p in m.parameters()]
    saved = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, flag in zip(params, saved):
            p.requires_grad = flag


@contextlib.contextmanager
def eval_mode(module: Module):
    was_training = module.training
    module.eval()
    try:
        yield module
    finally:
        module.train(was_training)


def kaiming_uniform(shape: tuple[int, ...], fan_in: int, rng: RngStream) -> np.ndarray:
    """He-uniform init, bound ``sqrt(6 / fan_in)``; ``rng`` needs ``shape[0]`` lanes."""
    bound = np.sqrt(6.0 / fan_in)
    u = rng.random(*shape[1:]) if len(shape) > 1 else rng.random(1)[:, 0]
    return ((2.0 * u - 1.0) * bound).astype(np.float32).reshape(shape)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: RngStream | None, bias: bool = True):
        super().__init__()
        if rng is None:
            w = np.zeros((out_features, in_features), dtype=np.float32)
        else:
            if rng.lanes != out_features:
                raise ValueError("Linear init stream needs one lane per output feature")
            w = kaiming_uniform((out_features, in_features), in_features, rng)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(out_features, dtype=np.float32)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class PositionwiseLinear(Module):
    """Independent ``C -> M`` linear readout at each of ``S`` positions."""

    def __init__(self, positions: int, in_features: int, out_features: int, rng: RngStream):
        super().__init__()
        if rng.lanes != out_features:
            raise ValueError("PositionwiseLinear init stream needs one lane per output feature")
        w = kaiming_uniform((out_features, positions, in_features), in_features, rng)
        self.weight = Parameter(np.ascontiguousarray(w.transpose(1, 2, 0)))
        self.bias = Parameter(np.zeros((positions, out_features), dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        return F.positionwise_linear(x, self.weight, self.bias)


class Conv1d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: RngStream,
                 stride: int = 1, padding: int = 0, bias: bool = True):
        super().__init__()
        if rng.lanes != out_channels:
            raise ValueError("Conv1d init stream needs one lane per output channel")
        self.stride = stride
        self.padding = padding
        self.weight = Parameter(kaiming_uniform((out_channels, in_channels, kernel_size),
                                                in_channels * kernel_size, rng))
        self.bias = Parameter(np.zeros(out_channels, dtype=np.float32)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv1d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class BatchNorm1d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.weight = Parameter(np.ones(channels, dtype=np.float32))
        self.bias = Parameter(np.zeros(channels, dtype=np.float32))
        self.register_buffer("running_mean", np.zeros(channels, dtype=np.float32))
        self.register_buffer("running_var", np.ones(channels, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        return F.batchnorm1d(x, self.weight, self.bias, self._buffers["running_mean"],
                             self._buffers["running_var"], self.training, self.momentum, self.eps)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.weight = Parameter(np.ones(dim, dtype=np.float32))
        self.bias = Parameter(np.zeros(dim, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        return F.layernorm(x, self.weight, self.bias, self.eps)


class MultiHeadSelfAttention(Module):
    def __init__(self, dim: int, heads: int, rng_qkv: RngStream, rng_out: RngStream):
        super().__init__()
        if dim % heads:
            raise ValueError(f"model dim {dim} not divisible by {heads} heads")
        self.heads = heads
        self.in_proj_weight = Parameter(kaiming_uniform((3 * dim, dim), dim, rng_qkv))
        self.in_proj_bias = Parameter(np.zeros(3 * dim, dtype=np.float32))
        self.out_proj_weight = Parameter(kaiming_uniform((dim, dim), dim, rng_out))
        self.out_proj_bias = Parameter(np.zeros(dim, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        return F.multi_head_self_attention(x, self.in_proj_weight, self.in_proj_bias,
                                           self.out_proj_weight, self.out_proj_bias, self.heads)


class TransformerEncoderLayer(Module):
    """Post-norm encoder layer: ``x = LN(x + MHSA(x)); x = LN(x + FFN(x))``."""

    def __init__(self, dim: int, heads: int, ffn_dim: int, streams):
        super().__init__()
        self.attn = MultiHeadSelfAttention(dim, heads, streams("attn_qkv", 3 * dim), streams("attn_out", dim))
        self.norm1 = LayerNorm(dim)
        self.ffn1 = Linear(dim, ffn_dim, streams("ffn1", ffn_dim))
        self.ffn2 = Linear(ffn_dim, dim, streams("ffn2", dim))
        self.norm2 = LayerNorm(dim)

    def forward(self, x: Tensor) -> Tensor:
        x = self.norm1(x + self.attn(x))
        return self.norm2(x + self.ffn2(relu(self.ffn1(x))))
