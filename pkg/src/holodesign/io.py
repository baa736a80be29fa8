"""Binary field and voxel formats, PGM images and checkpoint files.

Field file (little-endian)::

    b"AHFB" | u16 version=1 | u16 ndim | ndim x u64 dims | f64 dx
    | prod(dims) x (f64 re, f64 im) row-major
    [ | b"AHCH" | 32-byte SHA-256 config hash ]

Voxel file::

    b"AHVX" | u16 version=1 | u16 ndim | ndim x u64 dims | f64 dx
    | prod(dims) x u8 material index
    | 6 x f64 (c0, rho0, alpha0, c1, rho1, alpha1)
    [ | b"AHCH" | 32-byte SHA-256 config hash ]

The optional trailer carries the hash of the configuration that produced
the file. Every write goes to a temporary file in the destination
directory and is then renamed into place.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .grid import ComplexField, Grid, PlaneField
from .material import LensPatch, MaterialPair, material_indices

FIELD_MAGIC = b"AHFB"
VOXEL_MAGIC = b"AHVX"
HASH_MAGIC = b"AHCH"
VERSION = 1
HASH_BYTES = 32


class FormatError(ValueError):
    pass


def atomic_write(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write(path, text.encode("utf-8"))


def _hash_bytes(config_hash: Optional[str]) -> bytes:
    if config_hash is None:
        return b""
    raw = bytes.fromhex(config_hash)
    if len(raw) != HASH_BYTES:
        raise FormatError("config hash must be 32 bytes (64 hex digits)")
    return HASH_MAGIC + raw


def _header(magic: bytes, dims: Sequence[int], dx: float) -> bytes:
    return magic + struct.pack(f"<HH{len(dims)}Qd", VERSION, len(dims), *dims, dx)


def _parse_header(data: bytes, magic: bytes):
    if len(data) < 8:
        raise FormatError(f"truncated payload: expected at least 8 bytes, got {len(data)}")
    found = data[:4]
    if found != magic:
        raise FormatError(f"bad magic {found!r}, expected {magic!r}")
    version, ndim = struct.unpack_from("<HH", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if not 1 <= ndim <= 3:
        raise FormatError(f"dimension mismatch: ndim={ndim} not in 1..3")
    head = 8 + 8 * ndim + 8
    if len(data) < head:
        raise FormatError(f"truncated payload: expected {head} bytes")
    dims = struct.unpack_from(f"<{ndim}Q", data, 8)
    (dx,) = struct.unpack_from("<d", data, 8 + 8 * ndim)
    return tuple(int(n) for n in dims), dx, head


def _parse_trailer(data: bytes, offset: int) -> Optional[str]:
    rest = data[offset:]
    if not rest:
        return None
    if len(rest) != 4 + HASH_BYTES or rest[:4] != HASH_MAGIC:
        raise FormatError(f"unexpected {len(rest)} trailing bytes")
    return rest[4:].hex()


# -- fields -----------------------------------------------------------------------

class FieldFile(NamedTuple):
    values: np.ndarray
    dx: float
    config_hash: Optional[str]


def encode_field(values, dx: float, config_hash: Optional[str] = None) -> bytes:
    values = np.ascontiguousarray(values, dtype="<c16")
    return _header(FIELD_MAGIC, values.shape, dx) + values.tobytes() + _hash_bytes(config_hash)


def decode_field(data: bytes) -> FieldFile:
    dims, dx, head = _parse_header(data, FIELD_MAGIC)
    n = int(np.prod(dims)) * 16
    if len(data) < head + n:
        raise FormatError(f"truncated payload: expected {n} bytes")
    values = np.frombuffer(data, dtype="<c16", count=n // 16, offset=head).reshape(dims).astype(np.complex128)
    return FieldFile(values, dx, _parse_trailer(data, head + n))


def write_field(path, field, config_hash: Optional[str] = None) -> Path:
    dx = field.grid.dx if isinstance(field, ComplexField) else field.dx
    return atomic_write(path, encode_field(field.values, dx, config_hash))


def read_field_file(path) -> FieldFile:
    return decode_field(Path(path).read_bytes())


def read_field(path, grid: Optional[Grid] = None):
    """ComplexField when ``grid`` is given (shapes must agree), PlaneField
    otherwise."""
    ff = read_field_file(path)
    if grid is None:
        return PlaneField(ff.values.shape, ff.dx, ff.values)
    if ff.values.shape != grid.shape:
        raise FormatError(f"dimension mismatch: file {ff.values.shape} vs grid {grid.shape}")
    if ff.dx != grid.dx:
        raise FormatError(f"dx mismatch: file {ff.dx} vs grid {grid.dx}")
    return ComplexField(grid, ff.values)


# -- voxels -----------------------------------------------------------------------

class VoxelFile(NamedTuple):
    indices: np.ndarray
    dx: float
    pair: MaterialPair
    config_hash: Optional[str]


def encode_voxels(indices, dx: float, pair: MaterialPair, config_hash: Optional[str] = None) -> bytes:
    idx = np.ascontiguousarray(indices, dtype=np.uint8)
    if idx.size and idx.max() > 1:
        raise FormatError("material indices must be 0 or 1")
    footer = struct.pack("<6d", *pair.material0, *pair.material1)
    return _header(VOXEL_MAGIC, idx.shape, dx) + idx.tobytes() + footer + _hash_bytes(config_hash)


def decode_voxels(data: bytes) -> VoxelFile:
    dims, dx, head = _parse_header(data, VOXEL_MAGIC)
    n = int(np.prod(dims))
    if len(data) < head + n + 48:
        raise FormatError(f"truncated payload: expected {n + 48} bytes")
    idx = np.frombuffer(data, dtype=np.uint8, count=n, offset=head).reshape(dims).copy()
    props = struct.unpack_from("<6d", data, head + n)
    pair = MaterialPair(props[:3], props[3:])
    return VoxelFile(idx, dx, pair, _parse_trailer(data, head + n + 48))


def write_voxels(path, indices, dx: float, pair: MaterialPair, config_hash: Optional[str] = None) -> Path:
    return atomic_write(path, encode_voxels(indices, dx, pair, config_hash))


def read_voxels(path) -> VoxelFile:
    return decode_voxels(Path(path).read_bytes())


def export_voxels(path, patch: LensPatch, pair: MaterialPair, dx: float,
                  config_hash: Optional[str] = None) -> VoxelFile:
    """Write a two-valued lens patch as material indices."""
    idx = material_indices(patch, pair)
    write_voxels(path, idx, dx, pair, config_hash)
    return VoxelFile(idx, dx, pair, config_hash)


# -- PGM --------------------------------------------------------------------------

def _pgm_tokens(data: bytes):
    """Header tokens of a PGM file and the offset just past the header."""
    tokens, i = [], 0
    while len(tokens) < 4:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        if j == i:
            raise FormatError("truncated PGM header")
        tokens.append(data[i:j])
        i = j
    return tokens, i + 1


def read_pgm(path) -> np.ndarray:
    """Grayscale image scaled to [0, 1] (P2 or P5, 8 or 16 bit)."""
    data = Path(path).read_bytes()
    tokens, offset = _pgm_tokens(data)
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise FormatError(f"bad magic {magic!r}, expected b'P2' or b'P5'")
    width, height, maxval = (int(t) for t in tokens[1:])
    if not 0 < maxval < 65536:
        raise FormatError(f"invalid PGM maxval {maxval}")
    n = width * height
    if magic == b"P2":
        values = np.array(data[offset:].split(), dtype=float)
        if values.size < n:
            raise FormatError(f"truncated payload: expected {n} values")
        values = values[:n]
    else:
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
        if len(data) - offset < n * dtype.itemsize:
            raise FormatError(f"truncated payload: expected {n * dtype.itemsize} bytes")
        values = np.frombuffer(data, dtype=dtype, count=n, offset=offset).astype(float)
    return values.reshape(height, width) / maxval


def encode_pgm(image) -> bytes:
    img = np.asarray(image, dtype=float)
    if img.ndim == 1:
        img = img[None, :]
    peak = img.max() if img.size and img.max() > 0 else 1.0
    pix = np.clip(np.rint(img / peak * 255), 0, 255).astype(np.uint8)
    return f"P5\n{pix.shape[1]} {pix.shape[0]}\n255\n".encode() + pix.tobytes()


def write_pgm(path, image) -> Path:
    """Binary PGM scaled so the image maximum maps to 255."""
    return atomic_write(path, encode_pgm(image))


# -- checkpoints ------------------------------------------------------------------

def write_checkpoints(directory, checkpoints, dx: float, config_hash: Optional[str] = None) -> Path:
    """One gamma file per checkpoint plus a ``checkpoints.json`` index."""
    directory = Path(directory)
    entries = []
    for cp in checkpoints:
        name = f"gamma_{cp.iteration:05d}.ahfb"
        write_field(directory / name, PlaneField.from_array(np.asarray(cp.gamma, dtype=complex), dx), config_hash)
        entries.append({"iteration": int(cp.iteration), "file": name, "loss": float(cp.loss),
                        "binarization_error": None if cp.binarization_error is None
                        else float(cp.binarization_error)})
    index = {"config_hash": config_hash, "checkpoints": entries}
    return atomic_write_text(directory / "checkpoints.json", json.dumps(index, indent=2) + "\n")


def read_checkpoints(directory):
    from .optim import Checkpoint

    directory = Path(directory)
    index = json.loads((directory / "checkpoints.json").read_text())
    out = []
    for e in index["checkpoints"]:
        gamma = read_field_file(directory / e["file"]).values.real.copy()
        out.append(Checkpoint(e["iteration"], gamma, e["loss"], e["binarization_error"]))
    return index["config_hash"], out
