"""Binary container formats for datasets and checkpoints.

FieldContainer ("SINODATA", version 1), little-endian:
    magic[8] | version u32 | ndim u8 | channels u32 | points u64*ndim |
    lengths f64*ndim | snapshots u64 | cadence f64 |
    payload f64 (snapshot-major, channel-major, row-major) | crc32(payload) u32

CheckpointContainer ("SINOCKPT", version 1), little-endian:
    magic[8] | version u32 | cfg_len u64 | cfg utf-8 (canonical key-sorted text) |
    n_tensors u32 | { name_len u32 | name utf-8 | rank u8 | dims u64*rank |
    data f64 }* | crc32(everything after version) u32

Writes go through a temp file and an atomic rename.
"""

from __future__ import annotations

import os
import struct
import zlib

import numpy as np

from .errors import ContainerError
from .spectral import GridSpec

FIELD_MAGIC = b"SINODATA"
CKPT_MAGIC = b"SINOCKPT"
VERSION = 1


def _atomic_write(path, blob: bytes) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def write_field_container(path, grid: GridSpec, cadence: float, snaps: np.ndarray) -> None:
    """snaps has shape (snapshots, channels, *points)."""
    snaps = np.asarray(snaps, dtype=np.float64)
    if snaps.ndim != grid.dim + 2 or snaps.shape[2:] != grid.points:
        raise ValueError(f"snapshot block must be (S, C, {grid.points}), got {snaps.shape}")
    header = bytearray()
    header += FIELD_MAGIC
    header += struct.pack("<I", VERSION)
    header += struct.pack("<B", grid.dim)
    header += struct.pack("<I", snaps.shape[1])
    header += struct.pack(f"<{grid.dim}Q", *grid.points)
    header += struct.pack(f"<{grid.dim}d", *grid.length)
    header += struct.pack("<Q", snaps.shape[0])
    header += struct.pack("<d", cadence)
    payload = np.ascontiguousarray(snaps).astype("<f8").tobytes()
    _atomic_write(path, bytes(header) + payload + struct.pack("<I", zlib.crc32(payload)))


def read_field_container(path) -> tuple[GridSpec, float, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != FIELD_MAGIC:
        raise ContainerError(f"{path}: bad magic")
    (version,) = struct.unpack_from("<I", blob, 8)
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported version {version}")
    pos = 12
    (ndim,) = struct.unpack_from("<B", blob, pos); pos += 1
    (channels,) = struct.unpack_from("<I", blob, pos); pos += 4
    points = struct.unpack_from(f"<{ndim}Q", blob, pos); pos += 8 * ndim
    lengths = struct.unpack_from(f"<{ndim}d", blob, pos); pos += 8 * ndim
    (snapshots,) = struct.unpack_from("<Q", blob, pos); pos += 8
    (cadence,) = struct.unpack_from("<d", blob, pos); pos += 8
    count = snapshots * channels * int(np.prod(points))
    payload = blob[pos : pos + 8 * count]
    if len(payload) != 8 * count or len(blob) < pos + 8 * count + 4:
        raise ContainerError(f"{path}: truncated payload")
    (crc,) = struct.unpack_from("<I", blob, pos + 8 * count)
    if crc != zlib.crc32(payload):
        raise ContainerError(f"{path}: payload CRC mismatch")
    grid = GridSpec(points=tuple(int(n) for n in points), length=tuple(lengths))
    data = np.frombuffer(payload, dtype="<f8").reshape((snapshots, channels) + grid.points)
    return grid, cadence, data.astype(np.float64)


def write_checkpoint(path, config_echo: str, tensors: dict[str, np.ndarray]) -> None:
    body = bytearray()
    cfg = config_echo.encode("utf-8")
    body += struct.pack("<Q", len(cfg))
    body += cfg
    body += struct.pack("<I", len(tensors))
    for name in sorted(tensors):
        data = np.asarray(tensors[name], dtype=np.float64)
        nb = name.encode("utf-8")
        body += struct.pack("<I", len(nb))
        body += nb
        body += struct.pack("<B", data.ndim)
        body += struct.pack(f"<{data.ndim}Q", *data.shape) if data.ndim else b""
        body += np.ascontiguousarray(data).astype("<f8").tobytes()
    blob = CKPT_MAGIC + struct.pack("<I", VERSION) + bytes(body)
    _atomic_write(path, blob + struct.pack("<I", zlib.crc32(bytes(body))))


def read_checkpoint(path) -> tuple[str, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != CKPT_MAGIC:
        raise ContainerError(f"{path}: bad magic")
    (version,) = struct.unpack_from("<I", blob, 8)
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported version {version}")
    body = blob[12:-4]
    (crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if crc != zlib.crc32(body):
        raise ContainerError(f"{path}: checkpoint CRC mismatch")
    pos = 0
    (cfg_len,) = struct.unpack_from("<Q", body, pos); pos += 8
    config_echo = body[pos : pos + cfg_len].decode("utf-8"); pos += cfg_len
    (n_tensors,) = struct.unpack_from("<I", body, pos); pos += 4
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        (name_len,) = struct.unpack_from("<I", body, pos); pos += 4
        name = body[pos : pos + name_len].decode("utf-8"); pos += name_len
        (rank,) = struct.unpack_from("<B", body, pos); pos += 1
        shape = struct.unpack_from(f"<{rank}Q", body, pos) if rank else ()
        pos += 8 * rank
        count = int(np.prod(shape)) if rank else 1
        tensors[name] = (
            np.frombuffer(body, dtype="<f8", count=count, offset=pos)
            .reshape(shape)
            .astype(np.float64)
        )
        pos += 8 * count
    if pos != len(body):
        raise ContainerError(f"{path}: trailing bytes in checkpoint body")
    return config_echo, tensors
