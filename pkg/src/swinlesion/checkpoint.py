"""Checkpoint files: a text header indexing raw little-endian float64 payloads.

Layout::

    SWINLESION-CHECKPOINT 1
    meta <single-line JSON, sorted keys>
    tensor <name> <d0xd1x...|scalar> <byte offset> <byte count>
    ...
    end
    <payload>

Offsets are relative to the start of the payload.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = "SWINLESION-CHECKPOINT 1"


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    @property
    def config(self) -> dict:
        return self.meta.get("config", {})

    @property
    def epoch(self) -> int:
        return int(self.meta.get("epoch", 0))

    def model_state(self) -> dict[str, np.ndarray]:
        return {k[len("model."):]: v for k, v in self.tensors.items() if k.startswith("model.")}

    def group(self, prefix: str) -> dict[str, np.ndarray]:
        return {k[len(prefix):]: v for k, v in self.tensors.items() if k.startswith(prefix)}

    def to_bytes(self) -> bytes:
        header = [MAGIC, "meta " + json.dumps(self.meta, sort_keys=True, separators=(",", ":"))]
        chunks = []
        offset = 0
        for name in sorted(self.tensors):
            if any(c.isspace() for c in name):
                raise ValueError(f"tensor name {name!r} contains whitespace")
            arr = np.asarray(self.tensors[name], dtype="<f8")
            raw = arr.tobytes(order="C")
            shape = "x".join(str(d) for d in arr.shape) or "scalar"
            header.append(f"tensor {name} {shape} {offset} {len(raw)}")
            chunks.append(raw)
            offset += len(raw)
        header.append("end")
        return ("\n".join(header) + "\n").encode() + b"".join(chunks)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        end = data.find(b"\nend\n")
        if not data.startswith(MAGIC.encode()) or end < 0:
            raise ValueError("not a swinlesion checkpoint")
        payload = memoryview(data)[end + len(b"\nend\n"):]
        lines = data[:end].decode().split("\n")
        meta: dict = {}
        tensors: dict[str, np.ndarray] = {}
        for line in lines[1:]:
            kind, _, rest = line.partition(" ")
            if kind == "meta":
                meta = json.loads(rest)
            elif kind == "tensor":
                name, shape, offset, nbytes = rest.split(" ")
                if name in tensors:
                    raise ValueError(f"duplicate tensor {name}")
                dims = () if shape == "scalar" else tuple(int(d) for d in shape.split("x"))
                o, n = int(offset), int(nbytes)
                if o + n > len(payload):
                    raise ValueError(f"tensor {name} extends past end of file")
                arr = np.frombuffer(payload[o:o + n], dtype="<f8").reshape(dims)
                tensors[name] = arr.astype(np.float64)
            else:
                raise ValueError(f"unexpected header line {line!r}")
        return cls(tensors, meta)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())
