"""Deterministic random streams.

Every random draw in the package comes from a named stream so that datasets,
initialisations and augmentations are reproducible bit-for-bit, and can be
re-derived by an independent implementation.

Derivation
----------
* ``base = blake2b(f"{master_seed}/{name}", digest_size=8)`` read little-endian,
  where ``name`` joins the path components with ``/``.
* Lane ``i`` of a stream is seeded with ``s_i = splitmix64_mix(base + i * GOLDEN)``;
  its four xoshiro256++ state words are the first four outputs of a splitmix64
  generator started at ``s_i``.
* ``random`` maps each 64-bit output ``u`` to ``(u >> 11) * 2**-53``.
* ``normal`` uses Box-Muller on consecutive pairs ``(u1, u2)``:
  ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`` then ``... * sin(2 pi u2)``.

Lanes advance in lock-step, which lets one stream feed a whole batch of
independent per-sample generators with vectorised numpy arithmetic.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64


def _rotl(x: np.ndarray, k: int) -> np.ndarray:
    return (x << _U64(k)) | (x >> _U64(64 - k))


def splitmix64_mix(z: np.ndarray) -> np.ndarray:
    """The splitmix64 output finaliser, applied elementwise."""
    z = (z ^ (z >> _U64(30))) * _MIX1
    z = (z ^ (z >> _U64(27))) * _MIX2
    return z ^ (z >> _U64(31))


def name_hash(master_seed: int, name: str) -> int:
    digest = hashlib.blake2b(f"{master_seed}/{name}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """A bank of ``lanes`` independent xoshiro256++ generators.

    Draw methods return arrays with a leading lane axis, ``(lanes, *shape)``.
    """

    def __init__(self, key: int, lanes: int = 1):
        if lanes < 1:
            raise ValueError(f"lanes must be >= 1, got {lanes}")
        self.key = int(key) & 0xFFFFFFFFFFFFFFFF
        self.lanes = lanes
        idx = np.arange(lanes, dtype=np.uint64)
        seeds = splitmix64_mix(_U64(self.key) + idx * GOLDEN)
        state = np.empty((4, lanes), dtype=np.uint64)
        x = seeds
        for w in range(4):
            x = x + GOLDEN
            state[w] = splitmix64_mix(x)
        self._s = state

    def next_u64(self) -> np.ndarray:
        s0, s1, s2, s3 = self._s
        result = _rotl(s0 + s3, 23) + s0
        t = s1 << _U64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        self._s[3] = _rotl(s3, 45)
        return result

    def _raw(self, count: int) -> np.ndarray:
        out = np.empty((self.lanes, count), dtype=np.uint64)
        for j in range(count):
            out[:, j] = self.next_u64()
        return out

    def random(self, *shape: int) -> np.ndarray:
        """Uniform doubles in [0, 1)."""
        count = math.prod(shape)
        u = self._raw(count) >> _U64(11)
        return (u.astype(np.float64) * 2.0**-53).reshape(self.lanes, *shape)

    def normal(self, *shape: int, loc: float = 0.0, scale: float = 1.0) -> np.ndarray:
        count = math.prod(shape)
        pairs = (count + 1) // 2
        u = self.random(pairs, 2)
        radius = np.sqrt(-2.0 * np.log1p(-u[:, :, 0]))
        angle = 2.0 * np.pi * u[:, :, 1]
        z = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=-1)
        z = z.reshape(self.lanes, 2 * pairs)[:, :count]
        return loc + scale * z.reshape(self.lanes, *shape)

    def integers(self, high: int, *shape: int) -> np.ndarray:
        """Integers in [0, high) via ``floor(random * high)``."""
        if high < 1:
            raise ValueError(f"high must be >= 1, got {high}")
        r = np.floor(self.random(*shape) * high).astype(np.int64)
        return np.minimum(r, high - 1)

    def permutation(self, n: int) -> np.ndarray:
        """Per-lane random permutations of ``range(n)`` (argsort of uniform keys)."""
        return np.argsort(self.random(n), axis=-1, kind="stable")


class RngFabric:
    """Named streams derived from one master seed.

    The training harness uses the names ``data``, ``init``, ``augment``,
    ``random_map`` and ``shuffle``; sub-streams append path components,
    e.g. ``fabric.stream("augment", epoch, batch, "cls", lanes=64)``.
    """

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)

    def key(self, *path: object) -> int:
        if not path:
            raise ValueError("stream path must not be empty")
        return name_hash(self.master_seed, "/".join(str(p) for p in path))

    def stream(self, *path: object, lanes: int = 1) -> RngStream:
        return RngStream(self.key(*path), lanes=lanes)
