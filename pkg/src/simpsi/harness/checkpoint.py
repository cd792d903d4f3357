"""Checkpoint file format.

Layout: the 8-byte magic ``SIMPSI01``, a little-endian u64 header length, a
UTF-8 JSON header, then the tensors as little-endian float32 blobs in
registry order. The header records the training config, metadata and, for
every tensor, its name, shape and byte offset into the blob section.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..autodiff.nn import Module
from ..errors import CheckpointError, CheckpointFormatError, CheckpointMismatchError, CheckpointTruncatedError
from ..models import Demodulator, DemodulatorConfig, MapGenerator, MapGeneratorConfig

MAGIC = b"SIMPSI01"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: dict[str, Any]
    classifier_config: dict[str, Any]
    classifier_state: dict[str, np.ndarray]
    generator_config: dict[str, Any] | None = None
    generator_state: dict[str, np.ndarray] | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_models(cls, config: dict, classifier: Demodulator, generator: MapGenerator | None = None,
                    metadata: dict | None = None) -> "Checkpoint":
        return cls(
            config=config,
            classifier_config=_config_dict(classifier.config),
            classifier_state={k: np.array(v, dtype=np.float32) for k, v in classifier.state_dict().items()},
            generator_config=None if generator is None else _config_dict(generator.config),
            generator_state=None if generator is None else
            {k: np.array(v, dtype=np.float32) for k, v in generator.state_dict().items()},
            metadata=dict(metadata or {}),
        )

    def build_classifier(self) -> Demodulator:
        cfg = DemodulatorConfig(**self.classifier_config)
        model = Demodulator(cfg, _zero_streams)
        load_state(model, self.classifier_state, "classifier")
        return model.eval()

    def build_generator(self) -> MapGenerator | None:
        if self.generator_config is None:
            return None
        cfg = MapGeneratorConfig(**self.generator_config)
        model = MapGenerator(cfg, _zero_streams)
        load_state(model, self.generator_state or {}, "generator")
        return model.eval()


def _config_dict(cfg) -> dict[str, Any]:
    d = {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg) if f.init}
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


class _ZeroStream:
    """Stand-in init stream: checkpoint loading overwrites every value."""

    def __init__(self, lanes: int):
        self.lanes = lanes

    def random(self, *shape):
        return np.full((self.lanes, *shape), 0.5)

    def normal(self, *shape, loc=0.0, scale=1.0):
        return np.full((self.lanes, *shape), float(loc))


def _zero_streams(name: str, lanes: int):
    return _ZeroStream(lanes)


def load_state(model: Module, state: dict[str, np.ndarray], section: str) -> None:
    """Load ``state`` into ``model``, requiring the same names, order and shapes."""
    expected = model.state_dict()
    names = list(expected)
    got = list(state)
    for i, name in enumerate(names):
        if i >= len(got):
            raise CheckpointMismatchError(f"{section}: checkpoint lacks parameter {name!r}", parameter=name)
        if got[i] != name:
            raise CheckpointMismatchError(f"{section}: registry position {i} holds {got[i]!r}, model expects "
                                          f"{name!r}", parameter=name)
        if tuple(state[name].shape) != tuple(expected[name].shape):
            raise CheckpointMismatchError(f"{section}: parameter {name!r} has shape {tuple(state[name].shape)}, "
                                          f"model expects {tuple(expected[name].shape)}", parameter=name)
    if len(got) > len(names):
        extra = got[len(names)]
        raise CheckpointMismatchError(f"{section}: unexpected parameter {extra!r}", parameter=extra)
    model.load_state_dict(state)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> Path:
    sections = [("classifier", ckpt.classifier_state)]
    if ckpt.generator_state is not None:
        sections.append(("generator", ckpt.generator_state))
    registry = []
    blobs = []
    offset = 0
    for section, state in sections:
        for name, arr in state.items():
            data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            registry.append({"section": section, "name": name, "shape": list(np.shape(arr)), "offset": offset,
                             "nbytes": len(data)})
            blobs.append(data)
            offset += len(data)
    header = {
        "version": FORMAT_VERSION,
        "config": ckpt.config,
        "classifier_config": ckpt.classifier_config,
        "generator_config": ckpt.generator_config,
        "metadata": ckpt.metadata,
        "registry": registry,
        "blob_bytes": offset,
    }
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        for b in blobs:
            fh.write(b)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise CheckpointFormatError(f"{path}: not a checkpoint (bad magic)")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    if 16 + hlen > len(raw):
        raise CheckpointTruncatedError(f"{path}: header truncated")
    try:
        header = json.loads(raw[16 : 16 + hlen])
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: unreadable header ({exc})") from None
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointFormatError(f"{path}: checkpoint version {header.get('version')}, "
                                    f"this build reads {FORMAT_VERSION}")
    body = raw[16 + hlen :]
    if len(body) < header["blob_bytes"]:
        raise CheckpointTruncatedError(f"{path}: {len(body)} blob bytes, header promises {header['blob_bytes']}")
    if len(body) > header["blob_bytes"]:
        raise CheckpointFormatError(f"{path}: {len(body) - header['blob_bytes']} trailing bytes after the blobs")
    states: dict[str, dict[str, np.ndarray]] = {"classifier": {}, "generator": {}}
    for entry in header["registry"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start, nbytes = entry["offset"], entry["nbytes"]
        if nbytes != 4 * count or start + nbytes > len(body):
            raise CheckpointMismatchError(f"{path}: registry entry {entry['name']!r} is inconsistent",
                                          parameter=entry["name"])
        arr = np.frombuffer(body, dtype="<f4", count=count, offset=start).reshape(shape)
        states[entry["section"]][entry["name"]] = arr.astype(np.float32)
    has_gen = header.get("generator_config") is not None
    if has_gen != bool(states["generator"]):
        raise CheckpointError(f"{path}: generator config and generator tensors disagree")
    return Checkpoint(
        config=header["config"],
        classifier_config=header["classifier_config"],
        classifier_state=states["classifier"],
        generator_config=header.get("generator_config"),
        generator_state=states["generator"] if has_gen else None,
        metadata=header.get("metadata", {}),
    )
