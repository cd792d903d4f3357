"""Synthetic M-ary FSK signals, an oracle demodulator and dataset persistence.

Each 128-sample signal carries 32 symbols of 4 samples. Symbol ``s`` at
position ``j`` occupies samples ``n = 4j .. 4j+3`` as ``cos(2 pi b_s n / L)``
with the global sample index ``n``, so each carrier keeps a continuous phase
across symbol boundaries and its energy lands on bin ``b_s`` of the rfft.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DatasetError,
    ManifestError,
    ShapeError,
    ShapeInconsistencyError,
    TruncatedFileError,
    VersionMismatchError,
)
from .rng import RngFabric, RngStream

FORMAT_VERSION = 1
DEFAULT_SIZES = {"train": 2304, "val": 288, "test": 288}
SPLITS = ("train", "val", "test")

CARRIER_BINS = {
    8: tuple(range(4, 61, 8)),
    32: tuple(range(1, 64, 2)),
}


@dataclass(frozen=True)
class FskScheme:
    order: int = 8
    carrier_bins: tuple[int, ...] = CARRIER_BINS[8]
    samples_per_symbol: int = 4
    length: int = 128
    num_symbols: int = 32
    snr_db: float = 10.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "carrier_bins", tuple(int(b) for b in self.carrier_bins))
        bins = self.carrier_bins
        n_bins = self.length // 2 + 1
        if len(bins) != self.order or len(set(bins)) != self.order:
            raise ValueError(f"need {self.order} distinct carrier bins, got {bins}")
        if min(bins) <= 0 or max(bins) >= n_bins - 1:
            raise ValueError(f"carrier bins must avoid DC and Nyquist (0 and {n_bins - 1})")
        if len(set(np.diff(bins))) > 1:
            raise ValueError("carrier bins must be equally spaced")
        if self.num_symbols * self.samples_per_symbol != self.length:
            raise ValueError("num_symbols * samples_per_symbol must equal length")
        if math.isnan(self.snr_db):
            raise ValueError("snr_db must not be NaN")

    @classmethod
    def named(cls, name: str, snr_db: float = 10.0, seed: int = 0) -> "FskScheme":
        name = name.lower()
        if name not in ("fsk8", "fsk32"):
            raise ValueError(f"unknown scheme {name!r}; expected fsk8 or fsk32")
        order = int(name[3:])
        return cls(order=order, carrier_bins=CARRIER_BINS[order], snr_db=snr_db, seed=seed)

    @property
    def name(self) -> str:
        return f"fsk{self.order}"

    def templates(self) -> np.ndarray:
        """[M, S, samples_per_symbol]: the waveform of every symbol at every position."""
        n = np.arange(self.length, dtype=np.float64).reshape(self.num_symbols, self.samples_per_symbol)
        bins = np.asarray(self.carrier_bins, dtype=np.float64)
        return np.cos(2 * np.pi * bins[:, None, None] * n[None] / self.length)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["carrier_bins"] = list(self.carrier_bins)
        d["snr_db"] = _encode_snr(self.snr_db)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FskScheme":
        d = dict(d)
        d["snr_db"] = _decode_snr(d["snr_db"])
        d["carrier_bins"] = tuple(d["carrier_bins"])
        return cls(**d)


def _encode_snr(snr: float):
    return "inf" if math.isinf(snr) and snr > 0 else float(snr)


def _decode_snr(value) -> float:
    return float(value)


@dataclass
class FskDataset:
    signals: np.ndarray  # [N, 1, L] float32
    labels: np.ndarray  # [N, S] uint16
    scheme: FskScheme
    splits: dict[str, tuple[int, int]] = field(default_factory=dict)

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        if name not in self.splits:
            raise KeyError(f"unknown split {name!r}; have {sorted(self.splits)}")
        lo, hi = self.splits[name]
        return self.signals[lo:hi], self.labels[lo:hi]

    def sizes(self) -> dict[str, int]:
        return {k: hi - lo for k, (lo, hi) in self.splits.items()}


def modulate(symbols, scheme: FskScheme) -> np.ndarray:
    """[S] symbols -> [1, L] signal, or [N, S] -> [N, 1, L]."""
    symbols = np.asarray(symbols)
    if symbols.shape[-1] != scheme.num_symbols:
        raise ShapeError(f"expected {scheme.num_symbols} symbols, got shape {symbols.shape}")
    if symbols.size and (symbols.min() < 0 or symbols.max() >= scheme.order):
        raise ValueError(f"symbols must lie in [0, {scheme.order})")
    tpl = scheme.templates()
    wave = tpl[symbols.astype(np.int64), np.arange(scheme.num_symbols)]
    return wave.reshape(symbols.shape[:-1] + (1, scheme.length))


def add_awgn(x: np.ndarray, snr_db: float, rng: RngStream) -> np.ndarray:
    """Add white Gaussian noise at ``snr_db`` relative to each signal's own power.

    ``x`` is [C, L] (one-lane ``rng``) or [N, C, L] (one lane per signal);
    ``snr_db = inf`` disables noise.
    """
    x = np.asarray(x)
    if math.isinf(snr_db) and snr_db > 0:
        return x.copy()
    if not math.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite or +inf, got {snr_db}")
    single = x.ndim == 2
    batch = x[None] if single else x
    power = (batch.astype(np.float64) ** 2).mean(axis=(1, 2), keepdims=True)
    if np.any(power == 0):
        raise ValueError("cannot set an SNR for a zero-power signal")
    noise_std = np.sqrt(power / 10 ** (snr_db / 10))
    noisy = batch + noise_std * rng.normal(*batch.shape[1:])
    out = noisy.astype(x.dtype if np.issubdtype(x.dtype, np.floating) else np.float64)
    return out[0] if single else out


def oracle_demodulate(x: np.ndarray, scheme: FskScheme) -> np.ndarray:
    """Nearest-template decision per symbol segment: [C=1, L] -> [S], [N, 1, L] -> [N, S]."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-2:] != (1, scheme.length):
        raise ShapeError(f"expected [..., 1, {scheme.length}] signals, got {x.shape}")
    seg = x[..., 0, :].reshape(x.shape[:-2] + (scheme.num_symbols, scheme.samples_per_symbol))
    tpl = scheme.templates()  # [M, S, sps]
    dist = ((seg[..., None, :, :] - tpl) ** 2).sum(axis=-1)  # [..., M, S]
    return dist.argmin(axis=-2)


def generate_dataset(scheme: FskScheme, sizes: dict[str, int] | None = None, seed: int | None = None) -> FskDataset:
    """Draw symbols and noise per split from independent named streams."""
    sizes = dict(DEFAULT_SIZES if sizes is None else sizes)
    seed = scheme.seed if seed is None else seed
    if any(n < 1 for n in sizes.values()):
        raise ValueError(f"split sizes must be positive, got {sizes}")
    fabric = RngFabric(seed)
    signals, labels, offsets = [], [], {}
    start = 0
    for name, n in sizes.items():
        symbols = fabric.stream("data", name, "symbols", lanes=n).integers(scheme.order, scheme.num_symbols)
        clean = modulate(symbols, scheme)
        noisy = add_awgn(clean, scheme.snr_db, fabric.stream("data", name, "noise", lanes=n))
        signals.append(noisy.astype(np.float32))
        labels.append(symbols.astype(np.uint16))
        offsets[name] = (start, start + n)
        start += n
    return FskDataset(np.concatenate(signals), np.concatenate(labels), scheme, offsets)


def _manifest(ds: FskDataset) -> dict:
    return {
        "version": FORMAT_VERSION,
        "dtype": "f32le",
        "label_dtype": "u16le",
        "signal_shape": list(ds.signals.shape),
        "label_shape": list(ds.labels.shape),
        "scheme": ds.scheme.to_dict(),
        "seed": ds.scheme.seed,
        "splits": {k: list(v) for k, v in ds.splits.items()},
    }


def save_dataset(ds: FskDataset, directory: str | Path) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "signals.bin").write_bytes(np.ascontiguousarray(ds.signals, dtype="<f4").tobytes())
    (out / "labels.bin").write_bytes(np.ascontiguousarray(ds.labels, dtype="<u2").tobytes())
    (out / "manifest.json").write_text(json.dumps(_manifest(ds), indent=2, sort_keys=True) + "\n")
    return out


def _field(manifest: dict, name: str, kind):
    if name not in manifest:
        raise ManifestError(f"manifest is missing field {name!r}", field=name)
    value = manifest[name]
    if not isinstance(value, kind):
        raise ManifestError(f"manifest field {name!r} has the wrong type", field=name)
    return value


def _shape(manifest: dict, name: str, ndim: int) -> tuple[int, ...]:
    shape = _field(manifest, name, list)
    if len(shape) != ndim or not all(isinstance(s, int) and s >= 0 for s in shape):
        raise ManifestError(f"manifest field {name!r} must be {ndim} non-negative integers", field=name)
    return tuple(shape)


def _read_blob(path: Path, shape: tuple[int, ...], dtype: str) -> np.ndarray:
    if not path.exists():
        raise DatasetError(f"missing data file {path}")
    raw = path.read_bytes()
    expected = int(np.prod(shape)) * np.dtype(dtype).itemsize
    if len(raw) < expected:
        raise TruncatedFileError(f"{path.name}: {len(raw)} bytes, manifest shape {list(shape)} needs {expected}")
    if len(raw) > expected:
        raise ShapeInconsistencyError(f"{path.name}: {len(raw)} bytes, manifest shape {list(shape)} "
                                      f"accounts for only {expected}")
    return np.frombuffer(raw, dtype=dtype).reshape(shape)


def load_dataset(directory: str | Path) -> FskDataset:
    root = Path(directory)
    path = root / "manifest.json"
    if not path.exists():
        raise DatasetError(f"no manifest.json in {root}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest.json is not valid JSON: {exc}", field="manifest") from None
    if not isinstance(manifest, dict):
        raise ManifestError("manifest.json must hold an object", field="manifest")
    version = _field(manifest, "version", int)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"dataset format version {version}, this build reads {FORMAT_VERSION}")
    if _field(manifest, "dtype", str) != "f32le":
        raise ManifestError("unsupported signal dtype", field="dtype")
    if manifest.get("label_dtype", "u16le") != "u16le":
        raise ManifestError("unsupported label dtype", field="label_dtype")
    sig_shape = _shape(manifest, "signal_shape", 3)
    lab_shape = _shape(manifest, "label_shape", 2)
    try:
        scheme = FskScheme.from_dict(_field(manifest, "scheme", dict))
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"invalid scheme record: {exc}", field="scheme") from None
    if sig_shape[0] != lab_shape[0] or sig_shape[1:] != (1, scheme.length) or lab_shape[1] != scheme.num_symbols:
        raise ShapeInconsistencyError(f"signal shape {list(sig_shape)} and label shape {list(lab_shape)} "
                                      f"disagree with each other or with the scheme")
    splits_raw = _field(manifest, "splits", dict)
    splits: dict[str, tuple[int, int]] = {}
    for name, bounds in splits_raw.items():
        if (not isinstance(bounds, list) or len(bounds) != 2 or not all(isinstance(b, int) for b in bounds)
                or not 0 <= bounds[0] <= bounds[1] <= sig_shape[0]):
            raise ManifestError(f"invalid bounds for split {name!r}", field="splits")
        splits[name] = (bounds[0], bounds[1])
    signals = _read_blob(root / "signals.bin", sig_shape, "<f4").astype(np.float32)
    labels = _read_blob(root / "labels.bin", lab_shape, "<u2").astype(np.uint16)
    if labels.size and labels.max() >= scheme.order:
        raise ShapeInconsistencyError(f"labels exceed the scheme order {scheme.order}")
    return FskDataset(signals, labels, scheme, splits)
