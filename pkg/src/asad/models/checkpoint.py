"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"ASADCKPT"  u32 version
    u32 len, model id (UTF-8)
    u32 len, config block (UTF-8 ``key=value`` lines, values JSON-encoded)
    u32 record count
    per record: u32 name len, name, u8 precision tag (4 or 8), u32 rank,
                rank x u64 extents, IEEE-754 little-endian data (row-major)
"""
from __future__ import annotations

import io
import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"ASADCKPT"
VERSION = 1
_OPT_PREFIX = "adam."


class CheckpointFormatError(ValueError):
    pass


@dataclass
class Checkpoint:
    model_id: str
    config: dict
    tensors: "OrderedDict[str, np.ndarray]"
    seed: int = 0
    metadata: dict = field(default_factory=dict)
    optimizer: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<I", VERSION))
        _write_str(buf, self.model_id)
        block = {"config": self.config, "seed": int(self.seed), "metadata": self.metadata}
        _write_str(buf, "\n".join(f"{k}={json.dumps(v, sort_keys=True)}" for k, v in block.items()))
        records = list(self.tensors.items()) + [(_OPT_PREFIX + k, v) for k, v in self.optimizer.items()]
        buf.write(struct.pack("<I", len(records)))
        for name, arr in records:
            arr = np.asarray(arr)
            if arr.dtype == np.float64:
                tag, le = 8, "<f8"
            elif arr.dtype == np.float32:
                tag, le = 4, "<f4"
            else:
                raise TypeError(f"{name}: unsupported dtype {arr.dtype}")
            _write_str(buf, name)
            buf.write(struct.pack("<BI", tag, arr.ndim))
            buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            buf.write(np.ascontiguousarray(arr, dtype=le).tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        r = _Reader(data)
        if r.take(8) != MAGIC:
            raise CheckpointFormatError("bad magic: not a checkpoint file")
        (version,) = r.unpack("<I")
        if version != VERSION:
            raise CheckpointFormatError(f"unsupported checkpoint version {version}")
        model_id = r.string()
        block = {}
        for line in r.string().splitlines():
            key, _, value = line.partition("=")
            block[key] = json.loads(value)
        (n,) = r.unpack("<I")
        tensors, optimizer = OrderedDict(), OrderedDict()
        for _ in range(n):
            name = r.string()
            tag, rank = r.unpack("<BI")
            if tag not in (4, 8):
                raise CheckpointFormatError(f"{name}: bad precision tag {tag} at offset {r.pos - 5}")
            shape = r.unpack(f"<{rank}Q")
            count = int(np.prod(shape)) if rank else 1
            arr = np.frombuffer(r.take(count * tag), dtype="<f8" if tag == 8 else "<f4").reshape(shape)
            arr = arr.astype(np.float64 if tag == 8 else np.float32)
            if name.startswith(_OPT_PREFIX):
                optimizer[name[len(_OPT_PREFIX):]] = arr
            else:
                tensors[name] = arr
        if r.pos != len(data):
            raise CheckpointFormatError(f"{len(data) - r.pos} trailing bytes after last record")
        return cls(model_id, block.get("config", {}), tensors, block.get("seed", 0),
                   block.get("metadata", {}), optimizer)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())


def _write_str(buf, s: str):
    b = s.encode("utf-8")
    buf.write(struct.pack("<I", len(b)))
    buf.write(b)


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointFormatError(
                f"truncated checkpoint: need {self.pos + n} bytes, file has {len(self.data)}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")
