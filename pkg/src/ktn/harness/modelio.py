"""KTNZ v1 model container.

Layout (all integers little-endian)::

    b"KTNZ"                      magic
    u16  version                 1
    u32  n, n bytes UTF-8        canonical layer text block
    u32  tensor count
    per tensor:
        u32 n, n bytes UTF-8     name
        u8  dtype                0 = f64, 1 = f32 (widened to f64 on load)
        u8  rank
        u64 * rank               dims
        payload                  row-major, little-endian
"""

import struct

import numpy as np

from ..errors import BadMagic, FormatError, ShapeInconsistency, TruncatedFile, UnsupportedVersion
from ..tensor import DenseTensor
from .model import ModelSpec, check_shapes, layers_to_text, text_to_layers

MAGIC = b"KTNZ"
VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}


def dumps(model):
    out = [MAGIC, struct.pack("<H", VERSION)]
    text = layers_to_text(model).encode("utf-8")
    out += [struct.pack("<I", len(text)), text, struct.pack("<I", len(model.params))]
    for name, t in model.params.items():
        raw = name.encode("utf-8")
        out += [struct.pack("<I", len(raw)), raw, struct.pack("<BB", 0, t.rank)]
        out += [struct.pack("<Q", d) for d in t.dims]
        out.append(np.ascontiguousarray(t.array, dtype="<f8").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise TruncatedFile(f"file ends inside {what}: need {n} bytes, {len(self.buf) - self.pos} left", self.pos)
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def loads(buf):
    r = _Reader(bytes(buf))
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise BadMagic("not a KTNZ file: bad magic bytes", 0)
    (version,) = r.unpack("<H", "version")
    if version != VERSION:
        raise UnsupportedVersion(f"KTNZ version {version} not supported (expected {VERSION})", 4)
    (n,) = r.unpack("<I", "layer block length")
    text_at = r.pos
    try:
        text = r.take(n, "layer block").decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError("layer block is not valid UTF-8", text_at) from exc
    layers, input_shape = text_to_layers(text)
    (count,) = r.unpack("<I", "tensor count")
    params = {}
    for i in range(count):
        entry_at = r.pos
        (n,) = r.unpack("<I", f"tensor {i} name length")
        name = r.take(n, f"tensor {i} name").decode("utf-8")
        dtype_code, rank = r.unpack("<BB", f"tensor {name!r} header")
        if dtype_code not in _DTYPES:
            raise FormatError(f"tensor {name!r}: unknown dtype code {dtype_code}", r.pos - 2)
        dims = r.unpack(f"<{rank}Q", f"tensor {name!r} dims")
        if any(d < 1 for d in dims):
            raise ShapeInconsistency(f"tensor {name!r} has a zero dim {dims} (at byte offset {entry_at})")
        dtype = _DTYPES[dtype_code]
        size = int(np.prod(dims, dtype=np.int64)) if dims else 1
        payload = r.take(size * dtype.itemsize, f"tensor {name!r} payload")
        arr = np.frombuffer(payload, dtype=dtype).astype(np.float64).reshape(dims)
        if name in params:
            raise FormatError(f"duplicate tensor name {name!r}", entry_at)
        params[name] = DenseTensor(arr)
    if r.pos != len(r.buf):
        raise FormatError(f"{len(r.buf) - r.pos} trailing bytes after tensor table", r.pos)
    model = ModelSpec(layers, params, input_shape)
    check_shapes(model)
    return model


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(dumps(model))


def load_model(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
