"""Bit-exact serialization for arrays and model checkpoints.

Array container (``.dbpt``): magic ``DBPT``, version byte 0x01, dtype
byte 0x01 (64-bit IEEE-754 little-endian), rank byte, one unsigned 32-bit
little-endian length per dimension, then the payload row-major with the
last dimension fastest.

Checkpoint (``.dbpm``): magic ``DBPM``, version byte 0x01, a 32-bit
little-endian metadata length, UTF-8 ``key=value`` lines describing the
architecture, then one array container per parameter in layer order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .nn import Network

__all__ = [
    "ContainerError",
    "dumps_tensor",
    "loads_tensor",
    "save_tensor",
    "load_tensor",
    "save_checkpoint",
    "load_checkpoint",
    "export_pgm",
]

TENSOR_MAGIC = b"DBPT"
CHECKPOINT_MAGIC = b"DBPM"
VERSION = 0x01
DTYPE_F64_LE = 0x01


class ContainerError(ValueError):
    """Malformed container; the message names the field and byte offset."""


def dumps_tensor(arr) -> bytes:
    """Serialize one float64 array."""
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    if arr.ndim < 1 or arr.ndim > 255:
        raise ValueError(f"rank must be in [1, 255], got {arr.ndim}")
    if any(d > 0xFFFFFFFF for d in arr.shape):
        raise ValueError("dimension too large for 32-bit length field")
    header = TENSOR_MAGIC + bytes([VERSION, DTYPE_F64_LE, arr.ndim])
    header += b"".join(struct.pack("<I", d) for d in arr.shape)
    return header + arr.astype("<f8").tobytes()


def _read_exact(buf: bytes, offset: int, count: int, name: str) -> bytes:
    if offset + count > len(buf):
        raise ContainerError(
            f"truncated {name} at byte offset {offset}: need {count} bytes, "
            f"have {len(buf) - offset}"
        )
    return buf[offset : offset + count]


def _parse_tensor(buf: bytes, offset: int = 0):
    """Parse one container starting at ``offset``; returns (array, end)."""
    magic = _read_exact(buf, offset, 4, "magic")
    if magic != TENSOR_MAGIC:
        raise ContainerError(f"bad magic {magic!r} at byte offset {offset}")
    version = _read_exact(buf, offset + 4, 1, "version")[0]
    if version != VERSION:
        raise ContainerError(f"unknown version {version} at byte offset {offset + 4}")
    dtype = _read_exact(buf, offset + 5, 1, "dtype")[0]
    if dtype != DTYPE_F64_LE:
        raise ContainerError(f"unknown dtype {dtype} at byte offset {offset + 5}")
    rank = _read_exact(buf, offset + 6, 1, "rank")[0]
    if rank == 0:
        raise ContainerError(f"zero rank at byte offset {offset + 6}")
    pos = offset + 7
    dims = []
    for _ in range(rank):
        dims.append(struct.unpack("<I", _read_exact(buf, pos, 4, "dimension"))[0])
        pos += 4
    count = 1
    for d in dims:
        count *= d
    payload = _read_exact(buf, pos, 8 * count, "payload")
    arr = np.frombuffer(payload, dtype="<f8").reshape(dims).astype(np.float64)
    return arr, pos + 8 * count


def loads_tensor(buf: bytes) -> np.ndarray:
    arr, end = _parse_tensor(buf, 0)
    if end != len(buf):
        raise ContainerError(f"{len(buf) - end} trailing bytes at byte offset {end}")
    return arr


def save_tensor(path, arr) -> None:
    Path(path).write_bytes(dumps_tensor(arr))


def load_tensor(path) -> np.ndarray:
    return loads_tensor(Path(path).read_bytes())


# Checkpoint parameter order per layer: conv weights then bias; batchnorm
# gamma, beta, running mean, running variance.
_META_KEYS = ("views", "depth", "width", "size", "seed", "epochs")


def _network_blobs(net: Network) -> list[np.ndarray]:
    blobs = [net.conv_in.weights, net.conv_in.bias]
    for conv, bn in net.blocks:
        blobs += [conv.weights, conv.bias,
                  bn.gamma, bn.beta, bn.running_mean, bn.running_var]
    blobs += [net.conv_out.weights, net.conv_out.bias]
    return blobs


def save_checkpoint(path, net: Network, size: int, seed: int, epochs: int) -> None:
    """Write the network parameters with enough metadata to rebuild it."""
    meta = {
        "views": net.views,
        "depth": net.depth,
        "width": net.width,
        "size": size,
        "seed": seed,
        "epochs": epochs,
    }
    text = "".join(f"{k}={meta[k]}\n" for k in _META_KEYS).encode("utf-8")
    body = CHECKPOINT_MAGIC + bytes([VERSION]) + struct.pack("<I", len(text)) + text
    body += b"".join(dumps_tensor(b) for b in _network_blobs(net))
    Path(path).write_bytes(body)


def load_checkpoint(path):
    """Read a checkpoint; returns ``(network, metadata_dict)``.

    Every parameter shape is validated against the metadata before it is
    accepted.
    """
    buf = Path(path).read_bytes()
    magic = _read_exact(buf, 0, 4, "magic")
    if magic != CHECKPOINT_MAGIC:
        raise ContainerError(f"bad magic {magic!r} at byte offset 0")
    version = _read_exact(buf, 4, 1, "version")[0]
    if version != VERSION:
        raise ContainerError(f"unknown version {version} at byte offset 4")
    (meta_len,) = struct.unpack("<I", _read_exact(buf, 5, 4, "metadata length"))
    text = _read_exact(buf, 9, meta_len, "metadata").decode("utf-8")
    meta = {}
    for line in text.splitlines():
        if line:
            key, _, value = line.partition("=")
            meta[key] = int(value)
    missing = [k for k in _META_KEYS if k not in meta]
    if missing:
        raise ContainerError(f"metadata missing keys {missing}")

    net = Network(views=meta["views"], depth=meta["depth"], width=meta["width"])
    blobs = _network_blobs(net)
    pos = 9 + meta_len
    for i, expected in enumerate(blobs):
        arr, pos = _parse_tensor(buf, pos)
        if arr.shape != expected.shape:
            raise ContainerError(
                f"parameter {i} has shape {arr.shape}, expected {expected.shape}"
            )
        expected[...] = arr
    if pos != len(buf):
        raise ContainerError(f"{len(buf) - pos} trailing bytes at byte offset {pos}")
    return net, meta


def export_pgm(path, image) -> None:
    """Write a binary PGM (P5, maxval 255); bytes are ``round(255 x)``
    with halves rounding up.  Input values must already lie in [0, 1]."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {arr.shape}")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]; clamp before export")
    raster = np.floor(255.0 * arr + 0.5).astype(np.uint8)
    h, w = arr.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + raster.tobytes())
