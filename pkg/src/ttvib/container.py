"""TTV1 binary container for blocks of TT tensors.

Layout (all integers int64 little-endian, all reals float64 little-endian)::

    b"TTV1"
    d
    n_1 .. n_d                      mode sizes shared by every member
    B                               number of members
    B records of r_0 .. r_d         ranks of each member
    cores of member 1, then member 2, ...
        each core r_{k-1} x n_k x r_k in C order

Everything before the first core is header; the remainder is exactly
``8 * sum_members sum_k r_{k-1} n_k r_k`` bytes of payload.
"""

from pathlib import Path

import numpy as np

from .tt import TtTensor

MAGIC = b"TTV1"
_INT = np.dtype("<i8")
_REAL = np.dtype("<f8")


def header_bytes(d, count):
    return len(MAGIC) + _INT.itemsize * (1 + d + 1 + count * (d + 1))


def payload_bytes(tensors):
    return _REAL.itemsize * sum(t.num_params for t in tensors)


def encode(tensors):
    tensors = list(tensors)
    if not tensors:
        raise ValueError("cannot encode an empty block")
    sizes = tensors[0].mode_sizes
    for t in tensors:
        if t.mode_sizes != sizes:
            raise ValueError("all members must share mode sizes")
    head = [len(sizes), *sizes, len(tensors)]
    for t in tensors:
        head.extend(t.ranks)
    parts = [MAGIC, np.asarray(head, dtype=_INT).tobytes()]
    for t in tensors:
        for c in t.cores:
            parts.append(np.ascontiguousarray(c, dtype=_REAL).tobytes())
    return b"".join(parts)


def decode(data):
    if data[:4] != MAGIC:
        raise ValueError("not a TTV1 container")
    pos = 4

    def ints(k):
        nonlocal pos
        out = np.frombuffer(data, dtype=_INT, count=k, offset=pos)
        pos += k * _INT.itemsize
        return [int(v) for v in out]

    (d,) = ints(1)
    sizes = ints(d)
    (count,) = ints(1)
    ranks = [ints(d + 1) for _ in range(count)]
    tensors = []
    for r in ranks:
        cores = []
        for k in range(d):
            shape = (r[k], sizes[k], r[k + 1])
            k_size = int(np.prod(shape))
            arr = np.frombuffer(data, dtype=_REAL, count=k_size, offset=pos)
            pos += k_size * _REAL.itemsize
            cores.append(arr.reshape(shape))
        tensors.append(TtTensor(cores))
    if pos != len(data):
        raise ValueError("trailing bytes after TTV1 payload")
    return tensors


def write_block(path, tensors):
    data = encode(tensors)
    Path(path).write_bytes(data)
    return len(data)


def read_block(path):
    return decode(Path(path).read_bytes())
