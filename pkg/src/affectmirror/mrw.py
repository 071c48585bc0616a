"""MRW1 weight container: a flat little-endian binary holding named f32 tensors
plus string metadata.

Layout (all little-endian):
    magic   4 bytes  "MRW1"
    count   u32      number of entries
    entry repeated `count` times:
        name_len  u16
        name      name_len bytes, UTF-8
        dtype     u8   0 = f32 tensor, 1 = UTF-8 metadata string
        rank      u8
        dims      rank x u32
        payload   product(dims) * 4 bytes for f32; product(dims) bytes for metadata
                  (metadata entries have rank 1, dims = [byte length])

Names are unique across tensors and metadata. See docs/mrw1_format.md.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BadMagic, DuplicateName, TruncatedTensor

MAGIC = b"MRW1"
DTYPE_F32 = 0
DTYPE_META = 1


@dataclass
class WeightContainer:
    entries: dict[str, np.ndarray] = field(default_factory=dict)
    metadata: dict[str, str] = field(default_factory=dict)

    def tensor(self, name: str) -> np.ndarray:
        return self.entries[name]


def write_container(container: WeightContainer) -> bytes:
    names = list(container.entries) + list(container.metadata)
    if len(set(names)) != len(names):
        raise DuplicateName("tensor and metadata names must be unique")
    out = [MAGIC, struct.pack("<I", len(names))]
    for name, tensor in container.entries.items():
        arr = np.ascontiguousarray(tensor, dtype="<f4")
        if arr.ndim == 0:
            arr = arr.reshape(1)
        nb = name.encode("utf-8")
        out.append(struct.pack("<H", len(nb)))
        out.append(nb)
        out.append(struct.pack("<BB", DTYPE_F32, arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    for name, text in container.metadata.items():
        nb = name.encode("utf-8")
        tb = text.encode("utf-8")
        out.append(struct.pack("<H", len(nb)))
        out.append(nb)
        out.append(struct.pack("<BB", DTYPE_META, 1))
        out.append(struct.pack("<I", len(tb)))
        out.append(tb)
    return b"".join(out)


def load_container(data: bytes) -> WeightContainer:
    if data[:4] != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, got {data[:4]!r}")
    if len(data) < 8:
        raise TruncatedTensor("missing entry count")
    (count,) = struct.unpack_from("<I", data, 4)
    pos = 8
    container = WeightContainer()
    seen: set[str] = set()
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos : pos + name_len].decode("utf-8")
            if len(data) - pos < name_len:
                raise struct.error("name runs past end")
            pos += name_len
            dtype, rank = struct.unpack_from("<BB", data, pos)
            pos += 2
            dims = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
        except struct.error as e:
            raise TruncatedTensor(f"header truncated: {e}") from None
        if not name:
            raise TruncatedTensor("empty entry name")
        if name in seen:
            raise DuplicateName(name)
        seen.add(name)
        n_items = 1
        for d in dims:
            n_items *= d
        if dtype == DTYPE_F32:
            if any(d < 1 for d in dims):
                raise TruncatedTensor(f"{name}: zero dimension")
            nbytes = n_items * 4
            if len(data) - pos < nbytes:
                raise TruncatedTensor(
                    f"{name}: declared {nbytes} payload bytes, {len(data) - pos} left"
                )
            arr = np.frombuffer(data, dtype="<f4", count=n_items, offset=pos)
            container.entries[name] = arr.reshape(dims).copy()
            pos += nbytes
        elif dtype == DTYPE_META:
            if rank != 1:
                raise TruncatedTensor(f"{name}: metadata must have rank 1")
            if len(data) - pos < n_items:
                raise TruncatedTensor(f"{name}: metadata payload truncated")
            container.metadata[name] = data[pos : pos + n_items].decode("utf-8")
            pos += n_items
        else:
            raise TruncatedTensor(f"{name}: unknown dtype code {dtype}")
    return container
