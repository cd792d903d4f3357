"""Discrete Fourier transforms for arbitrary lengths.

Conventions: forward transforms are unnormalised, inverse transforms scale by
``1/L``. Every transform acts on the last axis and broadcasts over the rest, so
a ``[C, L]`` series or an ``[N, C, L]`` batch is transformed channel-wise.

Powers of two use an iterative radix-2 Cooley-Tukey pass; other lengths go
through Bluestein's chirp-z algorithm on a power-of-two convolution.
Arithmetic is carried out in double precision; outputs are returned at the
precision of the input (complex64 for float32/complex64 input).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import NonFiniteError, ShapeError


@dataclass(frozen=True)
class HalfSpectrum:
    """The non-negative-frequency half of a real signal's spectrum.

    ``data`` has shape ``[..., C, F]`` with ``F = origin_length // 2 + 1``.
    """

    data: np.ndarray
    origin_length: int

    def __post_init__(self):
        expected = self.origin_length // 2 + 1
        if self.data.shape[-1] != expected:
            raise ShapeError(
                f"HalfSpectrum: {self.data.shape[-1]} bins inconsistent with "
                f"origin length {self.origin_length} (expected {expected})"
            )

    @property
    def n_bins(self) -> int:
        return self.data.shape[-1]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape


def n_bins(length: int) -> int:
    return length // 2 + 1


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@lru_cache(maxsize=None)
def _bitrev(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return _frozen(rev)


@lru_cache(maxsize=None)
def _twiddles(size: int) -> np.ndarray:
    return _frozen(np.exp(-2j * np.pi * np.arange(size // 2) / size))


@lru_cache(maxsize=None)
def _bluestein_plan(n: int) -> tuple[np.ndarray, np.ndarray, int]:
    m = 1 << (2 * n - 1).bit_length()
    k = np.arange(n, dtype=np.int64)
    # n^2 mod 2n keeps the chirp phase exact for long inputs
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = np.conj(chirp)
    if n > 1:
        b[m - n + 1 :] = np.conj(chirp[1:])[::-1]
    return _frozen(chirp), _frozen(_fft_pow2(b)), m


def _fft_pow2(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    lead = x.shape[:-1]
    y = x[..., _bitrev(n)]
    size = 2
    while size <= n:
        half = size // 2
        y = y.reshape(*lead, n // size, size)
        even = y[..., :half]
        odd = y[..., half:] * _twiddles(size)
        y = np.concatenate([even + odd, even - odd], axis=-1)
        size *= 2
    return y.reshape(*lead, n)


def _fft_any(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    if _is_pow2(n):
        return _fft_pow2(x)
    chirp, b_hat, m = _bluestein_plan(n)
    a = np.zeros(x.shape[:-1] + (m,), dtype=np.complex128)
    a[..., :n] = x * chirp
    conv = _ifft_pow2(_fft_pow2(a) * b_hat)
    return conv[..., :n] * chirp


def _ifft_pow2(x: np.ndarray) -> np.ndarray:
    return np.conj(_fft_pow2(np.conj(x))) / x.shape[-1]


def _check(x: np.ndarray, op: str) -> None:
    if x.shape[-1] < 1:
        raise ShapeError(f"{op}: length must be >= 1, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{op}: input contains NaN or Inf")


def _out_complex(x: np.ndarray) -> np.dtype:
    single = x.dtype in (np.float32, np.complex64, np.float16)
    return np.dtype(np.complex64 if single else np.complex128)


def _out_real(x: np.ndarray) -> np.dtype:
    single = x.dtype in (np.float32, np.complex64, np.float16)
    return np.dtype(np.float32 if single else np.float64)


def fft(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    _check(x, "fft")
    return _fft_any(x.astype(np.complex128)).astype(_out_complex(x))


def ifft(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    _check(x, "ifft")
    xc = x.astype(np.complex128)
    y = np.conj(_fft_any(np.conj(xc))) / xc.shape[-1]
    return y.astype(_out_complex(x))


def rfft(x: np.ndarray) -> HalfSpectrum:
    """Half spectrum of a real signal along the last axis."""
    x = np.asarray(x)
    if np.iscomplexobj(x):
        raise TypeError("rfft expects a real-valued signal")
    _check(x, "rfft")
    n = x.shape[-1]
    xd = x.astype(np.float64)
    if n % 2 == 0 and n >= 2:
        m = n // 2
        z = _fft_any(xd[..., 0::2] + 1j * xd[..., 1::2])
        z_ext = np.concatenate([z, z[..., :1]], axis=-1)
        z_rev = np.conj(z_ext[..., ::-1])
        even = 0.5 * (z_ext + z_rev)
        odd = -0.5j * (z_ext - z_rev)
        w = np.exp(-2j * np.pi * np.arange(m + 1) / n)
        spec = even + w * odd
        # exact zeros where a real signal has real-valued bins
        spec[..., 0] = spec[..., 0].real
        spec[..., m] = spec[..., m].real
    else:
        spec = _fft_any(xd.astype(np.complex128))[..., : n // 2 + 1]
        spec[..., 0] = spec[..., 0].real
    return HalfSpectrum(spec.astype(_out_complex(x)), n)


def irfft(s: HalfSpectrum) -> np.ndarray:
    """Real signal whose half spectrum is ``s``.

    Imaginary parts at DC (and at Nyquist for even lengths) cannot be carried
    by a real signal; they are discarded before inversion.
    """
    data = np.asarray(s.data)
    n = s.origin_length
    if data.shape[-1] != n // 2 + 1:
        raise ShapeError(f"irfft: {data.shape[-1]} bins inconsistent with length {n}")
    _check(data, "irfft")
    spec = data.astype(np.complex128)
    spec[..., 0] = spec[..., 0].real
    if n % 2 == 0 and n >= 2:
        m = n // 2
        spec[..., m] = spec[..., m].real
        rev = np.conj(spec[..., ::-1])
        even = 0.5 * (spec + rev)
        w = np.exp(2j * np.pi * np.arange(m + 1) / n)
        odd = 0.5 * (spec - rev) * w
        z = (even + 1j * odd)[..., :m]
        t = np.conj(_fft_any(np.conj(z))) / m
        out = np.empty(spec.shape[:-1] + (n,), dtype=np.float64)
        out[..., 0::2] = t.real
        out[..., 1::2] = t.imag
    else:
        tail = np.conj(spec[..., 1 : (n + 1) // 2][..., ::-1])
        full = np.concatenate([spec, tail], axis=-1)
        out = (np.conj(_fft_any(np.conj(full))) / n).real
    return out.astype(_out_real(data))


def magnitude(s: HalfSpectrum | np.ndarray) -> np.ndarray:
    data = s.data if isinstance(s, HalfSpectrum) else np.asarray(s)
    return np.abs(data)


def irfft_adjoint(g: np.ndarray, length: int) -> np.ndarray:
    """Adjoint of ``irfft`` under the real inner product on complex bins.

    For real ``g`` of shape ``[..., L]`` this returns ``H`` with
    ``sum(g * irfft(Z)) == sum(H.real * Z.real + H.imag * Z.imag)`` for every
    half spectrum ``Z``, i.e. ``H = dL/dRe(Z) + i dL/dIm(Z)``.
    """
    spec = rfft(np.asarray(g, dtype=np.float64)).data
    weights = np.full(spec.shape[-1], 2.0)
    weights[0] = 1.0
    if length % 2 == 0:
        weights[-1] = 1.0
    out = spec * weights / length
    # discarded imaginary parts at DC/Nyquist carry no gradient
    out[..., 0] = out[..., 0].real
    if length % 2 == 0:
        out[..., -1] = out[..., -1].real
    return out.astype(_out_complex(np.asarray(g)))
