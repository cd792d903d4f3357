"""Preservation maps, spectrum mixing and the preservation contrastive loss.

A preservation map assigns every half-spectrum bin a score in [0, 1]. Mixing
keeps ``P`` of the original spectrum and ``1 - P`` of an augmented one, so
bins with high scores survive augmentation. Maps carry a leading batch axis
when they are computed for a batch: ``values`` is ``[F]`` or ``[N, F]`` and is
broadcast across channels.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import augment, dsp
from .autodiff.functional import gather_logits
from .autodiff.nn import Module, eval_mode, frozen
from .autodiff.tensor import Tensor, make_result, relu
from .dsp import HalfSpectrum
from .errors import ConfigError, ShapeError
from .rng import RngStream


class PsiMode(str, enum.Enum):
    NONE = "none"
    RANDOM = "random"
    MAGNITUDE = "magnitude"
    SALIENCY = "saliency"
    SPECTRUM_PRESERVATIVE = "spectrum_preservative"

    @classmethod
    def parse(cls, value: "str | PsiMode") -> "PsiMode":
        try:
            return cls(value)
        except ValueError:
            options = ", ".join(m.value for m in cls)
            raise ConfigError(f"unknown psi_mode {value!r}; expected one of {options}", key="psi_mode") from None


@dataclass(frozen=True)
class PreservationMap:
    """Per-bin scores in [0, 1].

    ``mode`` is one of magnitude, saliency, generator, random, constant or
    inverted. An inverted map remembers the map it came from, which makes
    double inversion and argument-swapped mixing exact.
    """

    values: np.ndarray
    mode: str
    inner: "PreservationMap | None" = None

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim not in (1, 2):
            raise ShapeError(f"preservation map must be [F] or [N, F], got {v.shape}")
        if not np.all(np.isfinite(v)) or v.min() < 0 or v.max() > 1:
            raise ValueError("preservation map values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def n_bins(self) -> int:
        return self.values.shape[-1]

    def __len__(self) -> int:
        return self.n_bins

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def constant_map(n_bins: int, value: float, batch: int | None = None) -> PreservationMap:
    shape = (n_bins,) if batch is None else (batch, n_bins)
    return PreservationMap(np.full(shape, value, dtype=np.float32), f"constant({value:g})")


def minmax_norm(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """Rescale to [0, 1] along ``axis``; a constant slice maps to 0.5."""
    v = np.asarray(v)
    lo = v.min(axis=axis, keepdims=True)
    hi = v.max(axis=axis, keepdims=True)
    span = hi - lo
    flat = span == 0
    out = (v - lo) / np.where(flat, 1, span)
    out = np.where(flat, 0.5, out)
    return np.clip(out, 0, 1).astype(v.dtype if np.issubdtype(v.dtype, np.floating) else np.float64)


def _channel_max(values: np.ndarray) -> np.ndarray:
    # [C, F] -> [F] and [N, C, F] -> [N, F]
    if values.ndim < 2:
        raise ShapeError(f"expected a [C, F] or [N, C, F] spectrum, got {values.shape}")
    return values.max(axis=-2)


def magnitude_map(x_f: HalfSpectrum) -> PreservationMap:
    return PreservationMap(minmax_norm(_channel_max(dsp.magnitude(x_f))), "magnitude")


def spectrum_saliency(classifier: Module, x_f: HalfSpectrum, labels) -> np.ndarray:
    """Modulus of the label-logit gradient at each complex bin, [.., C, F].

    The label logit is summed over symbol positions when the classifier emits
    one logit vector per symbol. The classifier runs in eval mode with its
    parameters frozen, so neither its gradients nor its statistics change.
    """
    data = x_f.data
    single = data.ndim == 2
    batch = data[None] if single else data
    signal = dsp.irfft(HalfSpectrum(batch, x_f.origin_length))
    labels = np.asarray(labels)
    if single:
        labels = labels[None]
    xt = Tensor(signal, requires_grad=True)
    with eval_mode(classifier), frozen(classifier):
        logits = classifier(xt)
        target = labels.reshape(labels.shape + (1,) * (logits.ndim - 1 - labels.ndim))
        gather_logits(logits, np.broadcast_to(target, logits.shape[:-1])).backward()
    grad_t = xt.grad if xt.grad is not None else np.zeros_like(signal)
    modulus = np.abs(dsp.irfft_adjoint(grad_t, x_f.origin_length))
    return modulus[0] if single else modulus


def saliency_map(classifier: Module, x_f: HalfSpectrum, labels) -> PreservationMap:
    return PreservationMap(minmax_norm(_channel_max(spectrum_saliency(classifier, x_f, labels))), "saliency")


def generator_map(generator: Module, x_f: HalfSpectrum) -> PreservationMap:
    """Map from a trained generator, evaluated without recording gradients."""
    single = x_f.data.ndim == 2
    with eval_mode(generator), frozen(generator):
        out = generator.preservation_map(x_f).data
    return PreservationMap(out[0] if single else out, "generator")


def random_map(rng: RngStream, n_bins: int) -> PreservationMap:
    """i.i.d. U(0, 1) scores: ``[F]`` for a one-lane stream, else ``[lanes, F]``."""
    if n_bins < 1:
        raise ValueError("random_map needs at least one bin")
    v = rng.random(n_bins)
    return PreservationMap(v[0] if rng.lanes == 1 else v, "random")


def invert(p: PreservationMap) -> PreservationMap:
    if p.mode == "inverted" and p.inner is not None:
        return p.inner
    return PreservationMap(1 - p.values, "inverted", inner=p)


def _broadcast_map(values: np.ndarray, data: np.ndarray) -> np.ndarray:
    if values.shape[-1] != data.shape[-1]:
        raise ShapeError(f"map has {values.shape[-1]} bins, spectrum has {data.shape[-1]}")
    if values.ndim == 2:
        if data.ndim != 3 or data.shape[0] != values.shape[0]:
            raise ShapeError(f"batched map {values.shape} does not match spectrum {data.shape}")
        return values[:, None, :]
    return values


def mix(x_f: HalfSpectrum, x_aug_f: HalfSpectrum, p: PreservationMap) -> HalfSpectrum:
    """``P * x_f + (1 - P) * x_aug_f`` with ``P`` broadcast across channels."""
    if x_f.data.shape != x_aug_f.data.shape or x_f.origin_length != x_aug_f.origin_length:
        raise ShapeError(f"mix: spectra {x_f.data.shape} and {x_aug_f.data.shape} differ")
    if p.mode == "inverted" and p.inner is not None:
        # 1 - (1 - P) need not round back to P; mixing swapped arguments stays exact
        return mix(x_aug_f, x_f, p.inner)
    keep = _broadcast_map(p.values, x_f.data)
    dtype = x_f.data.dtype
    kept = keep.astype(dtype.type(0).real.dtype)
    data = kept * x_f.data + (1 - kept) * x_aug_f.data
    return HalfSpectrum(data.astype(dtype, copy=False), x_f.origin_length)


def mix_signals(p: Tensor, x_f: HalfSpectrum, x_aug_f: HalfSpectrum, invert_map: bool = False) -> Tensor:
    """Differentiable ``irfft(mix(x_f, x_aug_f, P))`` for a batched map tensor ``p`` [N, F].

    With ``invert_map`` the map ``1 - P`` is used, i.e. the augmented spectrum
    is kept where ``P`` is high. Gradients flow to ``p`` only.
    """
    a, b = (x_aug_f.data, x_f.data) if invert_map else (x_f.data, x_aug_f.data)
    if a.shape != b.shape or a.ndim != 3 or p.shape != (a.shape[0], a.shape[-1]):
        raise ShapeError(f"mix_signals: map {p.shape} with spectra {x_f.data.shape}, {x_aug_f.data.shape}")
    length = x_f.origin_length
    keep = p.data[:, None, :]
    mixed = keep * a + (1 - keep) * b
    out = dsp.irfft(HalfSpectrum(mixed.astype(a.dtype, copy=False), length))
    diff = a - b

    def backward(g):
        h = dsp.irfft_adjoint(g, length)
        return ((h.real * diff.real + h.imag * diff.imag).sum(axis=1).astype(p.dtype),)

    return make_result(out.astype(p.dtype, copy=False), (p,), backward, "mix_signals")


def augment_and_preserve(x_t: np.ndarray, x_f: HalfSpectrum, p: PreservationMap, spec: augment.AugmentSpec,
                         rng: RngStream, donors: np.ndarray | None = None) -> np.ndarray:
    """Augment, then restore the bins the map asks to keep.

    ``x_t`` may be one [C, L] series (one-lane ``rng``) or an [N, C, L] batch
    with one lane per sample. Every call draws a fresh augmentation.
    """
    x_t = np.asarray(x_t)
    single = x_t.ndim == 2
    batch = x_t[None] if single else x_t
    if donors is not None and single:
        donors = np.asarray(donors)[None]
    aug = augment.apply_batch(spec, batch, rng, donors=donors)
    spec_f = HalfSpectrum(x_f.data[None] if single else x_f.data, x_f.origin_length)
    aug_f = dsp.rfft(aug)
    out = dsp.irfft(mix(spec_f, aug_f, p))
    return out[0] if single else out


def hinge(z):
    """``max(z, 0)`` for floats or Tensors."""
    if isinstance(z, Tensor):
        return relu(z)
    return max(z, 0.0)


def check_margins(beta1: float, beta2: float) -> None:
    if not beta1 < beta2:
        raise ConfigError(f"beta1 < beta2 required (got beta1={beta1}, beta2={beta2})", key="beta1")


def preservation_contrastive_loss(loss_pos, loss_rnd, loss_neg, beta1: float = 0.1, beta2: float = 0.5):
    """``max(L+ - Lrnd + b1, 0) + max(L+ - L- + b2, 0)``.

    Accepts floats or scalar Tensors; with Tensors the result is
    differentiable with respect to all three losses.
    """
    check_margins(beta1, beta2)
    return hinge(loss_pos - loss_rnd + beta1) + hinge(loss_pos - loss_neg + beta2)

