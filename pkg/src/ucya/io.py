"""Binary dump format for complex tensors.

Layout (little-endian): magic ``b"CYLA"``, version ``u32``, order ``u32``,
``order`` extents as ``u32``, then ``(re, im)`` pairs of ``f64`` in
first-index-fastest order.
"""
import struct

import numpy as np

MAGIC = b"CYLA"
VERSION = 1


def dumps(t):
    t = np.asarray(t, dtype=np.complex128)
    if t.ndim < 1 or 0 in t.shape:
        raise ValueError("tensor must have order >= 1 and positive extents")
    header = MAGIC + struct.pack(f"<II{t.ndim}I", VERSION, t.ndim, *t.shape)
    body = np.ravel(t, order="F").astype("<c16").tobytes()
    return header + body


def loads(buf):
    if buf[:4] != MAGIC:
        raise ValueError("not a CYLA tensor dump")
    version, order = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise ValueError(f"unsupported dump version {version}")
    shape = struct.unpack_from(f"<{order}I", buf, 12)
    start = 12 + 4 * order
    count = int(np.prod(shape))
    if len(buf) - start != 16 * count:
        raise ValueError("payload length does not match the extents")
    data = np.frombuffer(buf, dtype="<c16", count=count, offset=start)
    return data.astype(np.complex128).reshape(shape, order="F")


def write_tensor(path, t):
    with open(path, "wb") as fh:
        fh.write(dumps(t))


def read_tensor(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
