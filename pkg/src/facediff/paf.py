"""PAF: a tiny named-array container for float32 tensors.

Layout, all integers unsigned 32-bit little-endian:

    magic  "PAF1"
    count  u32
    entry* count times:
        name_len  u32
        name      UTF-8 bytes
        dtype     u32 (1 = float32)
        rank      u32 (0..3)
        dims      u32 * rank
        payload   float32 little-endian, row-major, prod(dims) values

Readers validate every field and report the byte offset of the first
corrupt value. Round trips are bit-exact.
"""

import struct

import numpy as np

MAGIC = b"PAF1"
DTYPE_FLOAT32 = 1
MAX_RANK = 3


class PafError(Exception):
    """Corrupt or malformed container; ``offset`` is the failing byte."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def write_paf(path, arrays):
    """Write named float32 arrays (a dict or (name, array) pairs).

    Order is preserved; names must be unique.
    """
    items = list(arrays.items()) if hasattr(arrays, "items") else list(arrays)
    names = [name for name, _ in items]
    if len(set(names)) != len(names):
        raise ValueError("duplicate array names")
    chunks = [MAGIC, struct.pack("<I", len(items))]
    for name, value in items:
        arr = np.ascontiguousarray(value, dtype=np.float32)
        if arr.ndim > MAX_RANK:
            raise ValueError(f"{name!r}: rank {arr.ndim} > {MAX_RANK}")
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<II", DTYPE_FLOAT32, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype("<f4", copy=False).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def read_paf(path):
    """Read a container back into an ordered dict of float32 arrays."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != MAGIC:
        raise PafError(f"bad magic {buf[:4]!r}", 0)
    off = 4
    count, off = _u32(buf, off, "entry count")
    out = {}
    for _ in range(count):
        name_len, off = _u32(buf, off, "name length")
        if off + name_len > len(buf):
            raise PafError("truncated name", off)
        try:
            name = buf[off : off + name_len].decode("utf-8")
        except UnicodeDecodeError:
            raise PafError("name is not valid UTF-8", off) from None
        off += name_len
        if name in out:
            raise PafError(f"duplicate name {name!r}", off)
        dtype, off = _u32(buf, off, "dtype code")
        if dtype != DTYPE_FLOAT32:
            raise PafError(f"unsupported dtype code {dtype}", off - 4)
        rank, off = _u32(buf, off, "rank")
        if rank > MAX_RANK:
            raise PafError(f"rank {rank} > {MAX_RANK}", off - 4)
        dims = []
        for _ in range(rank):
            d, off = _u32(buf, off, "dim")
            dims.append(d)
        size = int(np.prod(dims, dtype=np.int64)) if dims else 1
        nbytes = size * 4
        if off + nbytes > len(buf):
            raise PafError(f"truncated payload for {name!r}", off)
        arr = np.frombuffer(buf[off : off + nbytes], dtype="<f4").reshape(dims)
        out[name] = arr.astype(np.float32, copy=True)
        off += nbytes
    if off != len(buf):
        raise PafError(f"{len(buf) - off} trailing bytes", off)
    return out


def _u32(buf, off, what):
    if off + 4 > len(buf):
        raise PafError(f"truncated {what}", off)
    return struct.unpack_from("<I", buf, off)[0], off + 4
