"""Versioned binary parameter files.

Layout (all little-endian)::

    magic      8 bytes  b"KSATCKPT"
    version    u16
    kind       u16      0 = full checkpoint, 1 = kernel snapshot
    epoch      u32
    seed       u64
    desc_len   u32, then desc_len bytes of UTF-8 architecture descriptor
    n_blocks   u32
    per block: name_len u16, name (UTF-8), ndim u8, ndim x u32 dims,
               prod(dims) x float32
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .network import Architecture, Network

MAGIC = b"KSATCKPT"
VERSION = 1
KIND_CHECKPOINT = 0
KIND_SNAPSHOT = 1


class CheckpointError(ValueError):
    pass


@dataclass
class ParameterFile:
    descriptor: str
    epoch: int
    seed: int
    kind: int
    blocks: dict  # name -> float32 array, file order


def encode(blocks: dict, descriptor: str, epoch: int, seed: int, kind: int = KIND_CHECKPOINT) -> bytes:
    buf = io.BytesIO()
    desc = descriptor.encode()
    buf.write(MAGIC)
    buf.write(struct.pack("<HHIQI", VERSION, kind, epoch, seed & 0xFFFFFFFFFFFFFFFF, len(desc)))
    buf.write(desc)
    buf.write(struct.pack("<I", len(blocks)))
    for name, arr in blocks.items():
        arr = np.asarray(arr)
        bname = name.encode()
        buf.write(struct.pack("<HB", len(bname), arr.ndim))
        buf.write(bname)
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def decode(raw: bytes) -> ParameterFile:
    view = memoryview(raw)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("truncated parameter file")
        out = view[pos:pos + n]
        pos += n
        return out

    if bytes(take(8)) != MAGIC:
        raise CheckpointError("bad magic: not a kernsat parameter file")
    version, kind, epoch, seed, dlen = struct.unpack("<HHIQI", take(20))
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}")
    descriptor = bytes(take(dlen)).decode()
    (count,) = struct.unpack("<I", take(4))
    blocks = {}
    for _ in range(count):
        nlen, ndim = struct.unpack("<HB", take(3))
        name = bytes(take(nlen)).decode()
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        blocks[name] = np.frombuffer(bytes(take(4 * size)), dtype="<f4").reshape(shape).astype(np.float32)
    if pos != len(view):
        raise CheckpointError(f"{len(view) - pos} trailing bytes after last block")
    return ParameterFile(descriptor, epoch, seed, kind, blocks)


def save_checkpoint(path, network: Network, epoch: int, seed: int) -> None:
    Path(path).write_bytes(encode(network.parameters(), network.descriptor, epoch, seed))


def load_checkpoint(path) -> tuple[Network, ParameterFile]:
    pf = decode(Path(path).read_bytes())
    if pf.kind != KIND_CHECKPOINT:
        raise CheckpointError(f"{path} is a kernel snapshot, not a checkpoint")
    net = Network(Architecture.parse(pf.descriptor))
    net.load_parameters(pf.blocks)
    return net, pf


def read_parameter_file(path) -> ParameterFile:
    return decode(Path(path).read_bytes())
