"""Random time- and frequency-domain augmentations for [C, L] series.

Every augmentation is batched: ``apply_batch`` takes an [N, C, L] batch and
an ``RngStream`` with one lane per sample, so each sample draws from its own
deterministic generator. ``apply`` is the single-series convenience form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy.interpolate import CubicSpline

from . import dsp
from .errors import ConfigError, ShapeError
from .rng import RngStream

DEFAULTS: dict[str, dict[str, Any]] = {
    "none": {},
    "jitter": {"sigma": 0.05, "relative": True},
    "scale": {"sigma": 0.1, "value": None},
    "shift": {"sigma": 0.1},
    "magnitude_warp": {"sigma": 0.2, "knots": 4},
    "time_warp": {"sigma": 0.2, "knots": 4},
    "permute": {"max_segments": 5},
    "dropout": {"p": 0.1},
    "freq_mask": {"ratio": 0.1},
    "freq_mix": {"ratio": 0.1},
    "freq_add": {"ratio": 0.1, "alpha": 0.5},
    "scale_shift_jitter": {"scale_sigma": 0.1, "shift_sigma": 0.1, "jitter_sigma": 0.05, "relative": True},
}
KINDS = tuple(DEFAULTS)

_NONNEG = {"sigma", "alpha", "scale_sigma", "shift_sigma", "jitter_sigma"}
_UNIT = {"ratio", "p"}
_COUNTS = {"knots": 0, "max_segments": 1}


@dataclass(frozen=True)
class AugmentSpec:
    """An augmentation kind plus its parameters (defaults filled in)."""

    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in DEFAULTS:
            raise ConfigError(f"unknown augmentation kind {self.kind!r}; expected one of {', '.join(KINDS)}",
                              key="augmentation.kind")
        defaults = DEFAULTS[self.kind]
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown parameter(s) {sorted(unknown)} for augmentation {self.kind!r}",
                              key=f"augmentation.{sorted(unknown)[0]}")
        merged = {**defaults, **self.params}
        for name, value in merged.items():
            key = f"augmentation.{name}"
            if name in _NONNEG and not (value >= 0):
                raise ConfigError(f"{name} must be >= 0, got {value}", key=key)
            if name in _UNIT and not (0 <= value <= 1):
                raise ConfigError(f"{name} must lie in [0, 1], got {value}", key=key)
            if name in _COUNTS and (int(value) != value or value < _COUNTS[name]):
                raise ConfigError(f"{name} must be an integer >= {_COUNTS[name]}, got {value}", key=key)
        object.__setattr__(self, "params", merged)

    def __getitem__(self, name: str):
        return self.params[name]

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, **self.params}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any] | str) -> "AugmentSpec":
        if isinstance(d, str):
            return cls.parse(d)
        d = dict(d)
        if "kind" not in d:
            raise ConfigError("augmentation needs a 'kind'", key="augmentation.kind")
        kind = d.pop("kind")
        params = d.pop("params", {})
        return cls(kind, {**params, **d})

    @classmethod
    def parse(cls, text: str) -> "AugmentSpec":
        """``"freq_mask"`` or ``"freq_mask:ratio=0.2,..."``."""
        kind, _, rest = text.partition(":")
        params: dict[str, Any] = {}
        for item in filter(None, rest.split(",")):
            name, eq, raw = item.partition("=")
            if not eq:
                raise ConfigError(f"malformed augmentation parameter {item!r}", key="augmentation")
            params[name.strip()] = _parse_value(raw.strip())
        return cls(kind.strip(), params)


def _parse_value(raw: str):
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    if low == "none":
        return None
    try:
        return int(raw)
    except ValueError:
        return float(raw)


def apply(spec: AugmentSpec, x: np.ndarray, rng: RngStream, donor: np.ndarray | None = None) -> np.ndarray:
    """Augment one [C, L] series; ``donor`` is required for ``freq_mix``."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise ShapeError(f"apply expects a [C, L] series, got {x.shape}")
    if spec.kind == "freq_mix" and donor is None:
        raise ValueError("freq_mix requires a donor series")
    donors = None if donor is None else np.asarray(donor)[None]
    return apply_batch(spec, x[None], rng, donors=donors)[0]


def apply_batch(spec: AugmentSpec, x: np.ndarray, rng: RngStream, donors: np.ndarray | None = None) -> np.ndarray:
    """Augment an [N, C, L] batch with one rng lane per sample.

    For ``freq_mix`` without explicit ``donors`` each sample's donor is another
    member of the batch, chosen from its own lane.
    """
    x = np.asarray(x)
    if x.ndim != 3:
        raise ShapeError(f"apply_batch expects [N, C, L], got {x.shape}")
    if rng.lanes != x.shape[0]:
        raise ValueError(f"rng has {rng.lanes} lanes for a batch of {x.shape[0]}")
    if donors is not None and donors.shape != x.shape:
        raise ShapeError(f"donor shape {donors.shape} does not match input {x.shape}")
    fn = _KERNELS[spec.kind]
    if spec.kind == "freq_mix":
        out = fn(x, rng, spec.params, donors)
    else:
        out = fn(x, rng, spec.params)
    return out.astype(x.dtype, copy=False)


def _identity(x, rng, p):
    return x.copy()


def _jitter(x, rng, p):
    sigma = p["sigma"]
    noise = rng.normal(*x.shape[1:])
    if p["relative"]:
        sigma = sigma * x.std(axis=-1, keepdims=True)
    return x + sigma * noise


def _scale(x, rng, p):
    s = rng.normal(1, loc=1.0, scale=p["sigma"])[:, :, None]
    if p.get("value") is not None:
        s = np.full_like(s, p["value"])
    return x * s


def _shift(x, rng, p):
    h = rng.normal(x.shape[1], scale=p["sigma"])[:, :, None]
    return x + h


def _knot_positions(length: int, knots: int) -> np.ndarray:
    return np.linspace(0.0, length - 1.0, knots + 2)


def _magnitude_warp(x, rng, p):
    n, c, length = x.shape
    k = p["knots"]
    y = rng.normal(c, k + 2, loc=1.0, scale=p["sigma"])
    curve = CubicSpline(_knot_positions(length, k), y, axis=-1)(np.arange(length))
    return x * curve


def _time_warp(x, rng, p):
    n, c, length = x.shape
    k = p["knots"]
    speeds = rng.normal(c, k + 2, loc=1.0, scale=p["sigma"])
    t = np.arange(length, dtype=np.float64)
    knots_t = _knot_positions(length, k)
    # piecewise-linear speed profile, clipped positive so the warp stays monotone
    seg = np.clip(np.searchsorted(knots_t, t, side="right") - 1, 0, k)
    frac = (t - knots_t[seg]) / (knots_t[seg + 1] - knots_t[seg]) if k + 2 > 1 else np.zeros_like(t)
    speed = speeds[..., seg] * (1 - frac) + speeds[..., np.minimum(seg + 1, k + 1)] * frac
    speed = np.maximum(speed, 0.05)
    warped = np.cumsum(speed, axis=-1) - speed[..., :1]
    if length > 1:
        warped *= (length - 1) / warped[..., -1:]
    return _interp_rows(x, warped)


def _interp_rows(x: np.ndarray, positions: np.ndarray) -> np.ndarray:
    length = x.shape[-1]
    lo = np.clip(np.floor(positions).astype(np.int64), 0, length - 1)
    hi = np.minimum(lo + 1, length - 1)
    frac = positions - lo
    a = np.take_along_axis(x, lo, axis=-1)
    b = np.take_along_axis(x, hi, axis=-1)
    return a * (1 - frac) + b * frac


def _permute(x, rng, p):
    n, c, length = x.shape
    max_seg = int(p["max_segments"])
    # lane draw order: segment count, split-point keys, segment-order keys
    counts = rng.integers(max_seg, 1)[:, 0] + 1
    split_keys = rng.random(max(length - 1, 1))
    order_keys = rng.random(max_seg)
    out = x.copy()
    for i in range(n):
        k = min(int(counts[i]), length)
        if k <= 1:
            continue
        cuts = np.sort(np.argsort(split_keys[i][: length - 1], kind="stable")[: k - 1] + 1)
        segments = np.split(np.arange(length), cuts)
        order = np.argsort(order_keys[i][:k], kind="stable")
        idx = np.concatenate([segments[j] for j in order])
        out[i] = x[i][:, idx]
    return out


def _dropout(x, rng, p):
    keep = rng.random(x.shape[-1]) >= p["p"]
    return x * keep[:, None, :]


def _selected_count(ratio: float, n_bins: int) -> int:
    return min(n_bins - 1, int(math.floor(ratio * n_bins + 0.5)))


def _choose_bins(rng: RngStream, n_bins: int, ratio: float) -> np.ndarray:
    """Boolean [N, F] selection of ``round(ratio * F)`` non-DC bins per sample."""
    count = _selected_count(ratio, n_bins)
    keys = rng.random(max(n_bins - 1, 1))
    chosen = np.zeros((rng.lanes, n_bins), dtype=bool)
    if count > 0:
        picks = np.argsort(keys, axis=-1, kind="stable")[:, :count] + 1
        np.put_along_axis(chosen, picks, True, axis=-1)
    return chosen


def _freq_mask(x, rng, p):
    spec = dsp.rfft(x)
    chosen = _choose_bins(rng, spec.n_bins, p["ratio"])
    data = np.where(chosen[:, None, :], 0, spec.data)
    return dsp.irfft(dsp.HalfSpectrum(data, spec.origin_length))


def _freq_mix(x, rng, p, donors):
    n = x.shape[0]
    if donors is None:
        if n < 2:
            raise ValueError("freq_mix needs a donor: pass donors or a batch of at least two samples")
        offsets = rng.integers(n - 1, 1)[:, 0] + 1
        donors = x[(np.arange(n) + offsets) % n]
    spec = dsp.rfft(x)
    chosen = _choose_bins(rng, spec.n_bins, p["ratio"])
    donor_spec = dsp.rfft(donors).data
    data = np.where(chosen[:, None, :], donor_spec, spec.data)
    return dsp.irfft(dsp.HalfSpectrum(data, spec.origin_length))


def _freq_add(x, rng, p):
    spec = dsp.rfft(x)
    chosen = _choose_bins(rng, spec.n_bins, p["ratio"])
    peak = dsp.magnitude(spec).max(axis=-1, keepdims=True)
    data = spec.data + np.where(chosen[:, None, :], p["alpha"] * peak, 0)
    return dsp.irfft(dsp.HalfSpectrum(data.astype(spec.data.dtype), spec.origin_length))


def _scale_shift_jitter(x, rng, p):
    jittered = _jitter(x, rng, {"sigma": p["jitter_sigma"], "relative": p["relative"]})
    shifted = _shift(jittered, rng, {"sigma": p["shift_sigma"]})
    return _scale(shifted, rng, {"sigma": p["scale_sigma"]})


_KERNELS = {
    "none": _identity,
    "jitter": _jitter,
    "scale": _scale,
    "shift": _shift,
    "magnitude_warp": _magnitude_warp,
    "time_warp": _time_warp,
    "permute": _permute,
    "dropout": _dropout,
    "freq_mask": _freq_mask,
    "freq_mix": _freq_mix,
    "freq_add": _freq_add,
    "scale_shift_jitter": _scale_shift_jitter,
}
