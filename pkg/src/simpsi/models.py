"""ResNet1D per-symbol demodulator and the transformer preservation-map generator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autodiff import functional as F
from .autodiff.nn import (
    BatchNorm1d,
    Conv1d,
    Linear,
    Module,
    Parameter,
    PositionwiseLinear,
    TransformerEncoderLayer,
)
from .autodiff.tensor import Tensor, add, mean, relu, sigmoid
from .dsp import HalfSpectrum
from .errors import ConfigError, ShapeError
from .rng import RngFabric, RngStream

StreamFactory = Callable[[str, int], RngStream]


def init_streams(fabric: RngFabric, model: str) -> StreamFactory:
    """Per-layer init streams: ``fabric.stream("init", model, layer, lanes=fan_out)``."""

    def factory(layer: str, lanes: int) -> RngStream:
        return fabric.stream("init", model, layer, lanes=lanes)

    return factory


def _scoped(streams: StreamFactory, prefix: str) -> StreamFactory:
    return lambda name, lanes: streams(f"{prefix}.{name}", lanes)


@dataclass
class DemodulatorConfig:
    in_channels: int = 1
    input_length: int = 128
    num_symbols: int = 32
    num_classes: int = 8
    stem_channels: int = 32
    num_blocks: int = 3
    stem_kernel: int = 7
    block_kernel: int = 3
    widths: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.input_length % self.num_symbols:
            raise ConfigError("input_length must be divisible by num_symbols", key="input_length")
        factor = self.input_length // self.num_symbols
        if factor & (factor - 1):
            raise ConfigError("downsampling factor input_length/num_symbols must be a power of two",
                              key="num_symbols")
        if self.num_blocks < self.n_downsample + 1:
            raise ConfigError(f"num_blocks must be >= {self.n_downsample + 1}", key="num_blocks")
        if self.widths is None:
            widths = [self.stem_channels * (2 if i > 0 else 1) for i in range(self.num_blocks)]
            self.widths = tuple(widths)
        self.widths = tuple(int(w) for w in self.widths)
        if len(self.widths) != self.num_blocks:
            raise ConfigError("widths must list one channel count per block", key="widths")

    @property
    def n_downsample(self) -> int:
        return int(math.log2(self.input_length // self.num_symbols))


class ResidualBlock(Module):
    def __init__(self, channels: int, kernel: int, streams: StreamFactory):
        super().__init__()
        pad = kernel // 2
        self.conv1 = Conv1d(channels, channels, kernel, streams("conv1", channels), padding=pad)
        self.bn1 = BatchNorm1d(channels)
        self.conv2 = Conv1d(channels, channels, kernel, streams("conv2", channels), padding=pad)
        self.bn2 = BatchNorm1d(channels)

    def forward(self, x: Tensor) -> Tensor:
        h = relu(self.bn1(self.conv1(x)))
        h = self.bn2(self.conv2(h))
        return relu(add(h, x))


class Downsample(Module):
    """Stride-2 conv/BN/ReLU transition, halving the time axis."""

    def __init__(self, cin: int, cout: int, kernel: int, streams: StreamFactory):
        super().__init__()
        self.conv = Conv1d(cin, cout, kernel, streams("conv", cout), stride=2, padding=kernel // 2)
        self.bn = BatchNorm1d(cout)

    def forward(self, x: Tensor) -> Tensor:
        return relu(self.bn(self.conv(x)))


class Demodulator(Module):
    """ResNet1D mapping a [C, L] signal to per-symbol logits [S, M].

    Layout: stem conv -> block 0 -> (downsample -> block)* -> per-symbol head.
    The stride-2 transitions precede the last ``log2(L/S)`` blocks. The head
    has its own weights for every symbol slot: with phase-continuous carriers
    a symbol's waveform depends on where it sits in the signal.
    """

    def __init__(self, config: DemodulatorConfig, streams: StreamFactory):
        super().__init__()
        self.config = cfg = config
        w = cfg.widths
        self.stem = Conv1d(cfg.in_channels, w[0], cfg.stem_kernel, streams("stem", w[0]),
                           padding=cfg.stem_kernel // 2)
        self.stem_bn = BatchNorm1d(w[0])
        first_down = cfg.num_blocks - cfg.n_downsample
        stages: list[Module] = []
        for i in range(cfg.num_blocks):
            if i >= first_down:
                stages.append(Downsample(w[i - 1], w[i], cfg.block_kernel, _scoped(streams, f"down{i}")))
            stages.append(ResidualBlock(w[i], cfg.block_kernel, _scoped(streams, f"block{i}")))
        self.stages = stages
        self.head = PositionwiseLinear(cfg.num_symbols, w[-1], cfg.num_classes, streams("head", cfg.num_classes))

    def forward(self, x: Tensor) -> Tensor:
        cfg = self.config
        if x.ndim != 3 or x.shape[1:] != (cfg.in_channels, cfg.input_length):
            raise ShapeError(f"demodulator expects [N, {cfg.in_channels}, {cfg.input_length}], got {x.shape}")
        h = relu(self.stem_bn(self.stem(x)))
        for stage in self.stages:
            h = stage(h)
        return self.head(h)


def demodulator_loss(logits: Tensor, labels) -> Tensor:
    """Mean per-symbol cross-entropy; ``logits`` [N, S, M] (or [S, M]), labels [N, S]."""
    return F.softmax_cross_entropy(logits, labels)


@dataclass
class MapGeneratorConfig:
    in_channels: int = 1  # signal channels C; the token features are the 2C real/imag parts
    seq_len: int = 65
    d_model: int = 64
    heads: int = 4
    ffn_dim: int = 128
    layers: int = field(default=2, init=False)
    zero_init_head: bool = False

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ConfigError("d_model must be divisible by heads", key="heads")

    @property
    def feature_dim(self) -> int:
        return 2 * self.in_channels


def spectrum_tokens(x_f: HalfSpectrum | np.ndarray, length: int | None = None) -> np.ndarray:
    """[N, C, F] complex -> [N, F, 2C] real tokens, ordered (Re c0..c{C-1}, Im c0..c{C-1}).

    Values are scaled by ``1/sqrt(L)`` so token magnitudes do not grow with
    the signal length.
    """
    if isinstance(x_f, HalfSpectrum):
        data, length = x_f.data, x_f.origin_length
    else:
        data = np.asarray(x_f)
    if length is None:
        length = 2 * (data.shape[-1] - 1)
    if data.ndim == 2:
        data = data[None]
    feats = np.concatenate([data.real, data.imag], axis=1) / np.sqrt(length)
    return np.ascontiguousarray(feats.transpose(0, 2, 1)).astype(np.float32)


class MapGenerator(Module):
    """Two-layer transformer encoder over frequency tokens emitting a map in (0, 1)."""

    def __init__(self, config: MapGeneratorConfig, streams: StreamFactory):
        super().__init__()
        self.config = cfg = config
        self.input_proj = Linear(cfg.feature_dim, cfg.d_model, streams("input_proj", cfg.d_model))
        pos = streams("pos_embedding", cfg.seq_len).normal(cfg.d_model, scale=0.02)
        self.pos_embedding = Parameter(pos.astype(np.float32))
        self.layers = [TransformerEncoderLayer(cfg.d_model, cfg.heads, cfg.ffn_dim, _scoped(streams, f"layer{i}"))
                       for i in range(cfg.layers)]
        head_rng = None if cfg.zero_init_head else streams("output_proj", cfg.d_model)
        self.output_proj = Linear(cfg.d_model, cfg.d_model, head_rng)

    def forward(self, tokens: np.ndarray | Tensor) -> Tensor:
        cfg = self.config
        x = tokens if isinstance(tokens, Tensor) else Tensor(tokens)
        if x.ndim != 3 or x.shape[1:] != (cfg.seq_len, cfg.feature_dim):
            raise ShapeError(f"map generator expects tokens [N, {cfg.seq_len}, {cfg.feature_dim}], got {x.shape}")
        h = add(self.input_proj(x), self.pos_embedding)
        for layer in self.layers:
            h = layer(h)
        return sigmoid(mean(self.output_proj(h), axis=-1))

    def preservation_map(self, x_f: HalfSpectrum) -> Tensor:
        return self.forward(spectrum_tokens(x_f))


def build_demodulator(config: DemodulatorConfig, fabric: RngFabric) -> Demodulator:
    return Demodulator(config, init_streams(fabric, "classifier"))


def build_generator(config: MapGeneratorConfig, fabric: RngFabric) -> MapGenerator:
    return MapGenerator(config, init_streams(fabric, "generator"))
