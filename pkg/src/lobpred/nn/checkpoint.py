"""Model checkpoint files.

Layout, all integers little-endian::

    8 bytes   magic b"LOBNNCK1"
    u16       format version (1)
    u64       seed the model was built with
    u32       length L of the architecture descriptor
    L bytes   architecture descriptor, UTF-8 JSON (ArchitectureSpec.to_dict)
    u64       parameter count P
    P * f64   parameters, little-endian IEEE-754, in Model.params() order,
              each tensor flattened row-major
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import ArchitectureSpec, Model

MAGIC = b"LOBNNCK1"
VERSION = 1


def dumps(model: Model) -> bytes:
    desc = json.dumps(model.spec.to_dict(), sort_keys=True).encode()
    flat = model.get_flat().astype("<f8")
    return b"".join([
        MAGIC,
        struct.pack("<HQI", VERSION, model.seed, len(desc)),
        desc,
        struct.pack("<Q", flat.size),
        flat.tobytes(),
    ])


def loads(blob: bytes) -> Model:
    if blob[:8] != MAGIC:
        raise ValueError("not a model checkpoint")
    version, seed, n_desc = struct.unpack_from("<HQI", blob, 8)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 8 + struct.calcsize("<HQI")
    spec = ArchitectureSpec.from_dict(json.loads(blob[pos : pos + n_desc]))
    pos += n_desc
    (count,) = struct.unpack_from("<Q", blob, pos)
    pos += 8
    flat = np.frombuffer(blob, dtype="<f8", count=count, offset=pos)
    model = Model(spec, seed)
    model.set_flat(flat)
    return model


def save(model: Model, path: str | Path) -> None:
    Path(path).write_bytes(dumps(model))


def load(path: str | Path) -> Model:
    return loads(Path(path).read_bytes())
