"""
Checkpoint files.

Layout, little-endian: magic "SWCK"; u32 version; u32 length and the UTF-8
config text (the run configuration followed by `step = N` and `epoch = E`);
u32 tensor count; then per tensor a u16 name length, the name bytes, a u8
rank, u32 dims and the float32 payload. Optimizer velocities are stored as
`velocity.<parameter name>`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

from sitswin.config import RunConfig, parse_config
from sitswin.decoder.model import SegmentationModel
from sitswin.errors import FormatError
from sitswin.train.optim import VELOCITY_PREFIX

PathLike = Union[str, Path]

MAGIC = b"SWCK"
VERSION = 1
STATE_KEYS = ("step", "epoch")


@dataclass
class Checkpoint:
    config: RunConfig
    step: int = 0
    epoch: int = 0
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)
    version: int = VERSION

    @classmethod
    def capture(cls, config: RunConfig, model: SegmentationModel, velocities: Dict[str, np.ndarray], step: int, epoch: int) -> "Checkpoint":
        tensors = dict(model.state_dict())
        tensors.update(velocities)
        return cls(config, step, epoch, tensors)

    def model_state(self) -> Dict[str, np.ndarray]:
        return {k: v for k, v in self.tensors.items() if not k.startswith(VELOCITY_PREFIX)}

    def velocities(self) -> Dict[str, np.ndarray]:
        return {k: v for k, v in self.tensors.items() if k.startswith(VELOCITY_PREFIX)}

    def build_model(self) -> SegmentationModel:
        """A model for the embedded configuration carrying the stored weights."""
        model = SegmentationModel(self.config.model)
        model.load_state_dict(self.model_state())
        return model

    def config_text(self) -> str:
        return self.config.to_text() + "".join(f"{key} = {getattr(self, key)}\n" for key in STATE_KEYS)


class _Reader:
    def __init__(self, blob: bytes, source: str) -> None:
        self.blob = blob
        self.source = source
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.blob):
            raise FormatError(f"load_checkpoint: {self.source}: truncated {what} at offset {self.offset}")
        chunk = self.blob[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str, what: str) -> Tuple:
        fmt = struct.Struct("<" + fmt)
        return fmt.unpack(self.take(fmt.size, what))


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    text = ckpt.config_text().encode("utf-8")
    parts = [MAGIC, struct.pack("<II", ckpt.version, len(text)), text, struct.pack("<I", len(ckpt.tensors))]
    for name, value in ckpt.tensors.items():
        encoded = name.encode("utf-8")
        value = np.asarray(value)
        parts.append(struct.pack("<H", len(encoded)) + encoded)
        parts.append(struct.pack(f"<B{value.ndim}I", value.ndim, *value.shape))
        parts.append(value.astype("<f4").tobytes())
    return b"".join(parts)


def _split_state(text: str) -> Tuple[str, Dict[str, int]]:
    config_lines = []
    state: Dict[str, int] = {}
    for line in text.splitlines():
        key, sep, value = line.partition("=")
        if sep and key.strip() in STATE_KEYS:
            state[key.strip()] = int(value)
        else:
            config_lines.append(line)
    return "\n".join(config_lines) + "\n", state


def checkpoint_from_bytes(blob: bytes, source: str = "<bytes>") -> Checkpoint:
    reader = _Reader(blob, source)
    magic = reader.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"load_checkpoint: {source}: bad magic {magic!r} at offset 0")
    version, length = reader.unpack("II", "header")
    if version != VERSION:
        raise FormatError(f"load_checkpoint: {source}: unsupported version {version} at offset 4, expected {VERSION}")
    try:
        text, state = _split_state(reader.take(length, "config text").decode("utf-8"))
    except (UnicodeDecodeError, ValueError):
        raise FormatError(f"load_checkpoint: {source}: unreadable config text at offset 12") from None
    config = parse_config(text, f"{source} (embedded config)")
    (count,) = reader.unpack("I", "tensor count")
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        start = reader.offset
        (name_length,) = reader.unpack("H", "name length")
        name = reader.take(name_length, "tensor name").decode("utf-8", errors="replace")
        if name in tensors:
            raise FormatError(f"load_checkpoint: {source}: duplicate tensor '{name}' at offset {start}")
        (rank,) = reader.unpack("B", f"rank of '{name}'")
        dims = reader.unpack(f"{rank}I", f"dims of '{name}'")
        size = int(np.prod(dims, dtype=np.int64))
        payload = reader.take(4 * size, f"payload of '{name}'")
        tensors[name] = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(dims)
    if reader.offset != len(blob):
        raise FormatError(f"load_checkpoint: {source}: {len(blob) - reader.offset} trailing bytes at offset {reader.offset}")
    return Checkpoint(config, state.get("step", 0), state.get("epoch", 0), tensors, version)


def save_checkpoint(ckpt: Checkpoint, path: PathLike) -> None:
    Path(path).write_bytes(checkpoint_bytes(ckpt))


def load_checkpoint(path: PathLike) -> Checkpoint:
    path = Path(path)
    return checkpoint_from_bytes(path.read_bytes(), str(path))
