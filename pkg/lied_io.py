#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# lied_io.py - LIED2D field files, pattern tables and YAML reports with atomic, per-path serialized writes

from __future__ import annotations

import fcntl
import json
import os
import struct
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from lied_analysis import MomentumMap, Pattern
from lied_core import FormatError, Grid2D, MomentumGrid, Wavefunction, _debug_log

MAGIC = b"LIED2D\0\0"
FORMAT_VERSION = 1
WAVEFUNCTION = "complex-wavefunction"
DENSITY = "real-density"
MOMENTUM_MAP = "momentum-map"
KINDS = {WAVEFUNCTION: "<c16", DENSITY: "<f8", MOMENTUM_MAP: "<f8"}
UNITS_NOTE = "hartree atomic units; positions in bohr, momenta in bohr^-1"

_LENGTH = struct.Struct("<I")

# ============================================================================== Write Serialization ==============================================================================
PATH_LOCKS = {}
PATH_LOCKS_GUARD = threading.Lock()


def _path_lock(path):
    key = str(Path(path).resolve())
    with PATH_LOCKS_GUARD:
        if key not in PATH_LOCKS:
            PATH_LOCKS[key] = threading.Lock()
        return PATH_LOCKS[key]


def atomic_write_bytes(path, data):
    """Write via a temp file in the target directory, then rename over the destination"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with _path_lock(path):
        fd, temp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
        try:
            with os.fdopen(fd, "wb") as f:
                fcntl.flock(f.fileno(), fcntl.LOCK_EX)
                f.write(data)
                f.flush()
                os.fsync(f.fileno())
                fcntl.flock(f.fileno(), fcntl.LOCK_UN)
            os.replace(temp_name, path)
        except BaseException:
            if os.path.exists(temp_name):
                os.unlink(temp_name)
            raise
    _debug_log(f"Wrote {len(data)} bytes to {path}")
    return path


def atomic_write_text(path, text):
    return atomic_write_bytes(path, text.encode("utf-8"))


# ============================================================================== Field Files ==============================================================================
@dataclass
class FieldFile:
    """Self-describing 2D array: real-space wavefunctions and densities or momentum maps"""
    kind: str
    nx: int
    ny: int
    lx: float
    ly: float
    values: np.ndarray
    t: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FormatError(f"unknown field kind '{self.kind}'")
        self.values = np.asarray(self.values, dtype=np.dtype(KINDS[self.kind]).newbyteorder("="))
        if self.values.shape != (self.ny, self.nx):
            raise FormatError(f"payload shape {self.values.shape} does not match header ({self.ny}, {self.nx})")

    @property
    def grid(self):
        return Grid2D(self.nx, self.ny, self.lx, self.ly)

    def header(self):
        return {"version": FORMAT_VERSION, "kind": self.kind, "nx": int(self.nx), "ny": int(self.ny),
                "lx": float(self.lx), "ly": float(self.ly), "t": float(self.t), "units": UNITS_NOTE,
                "dtype": KINDS[self.kind], "meta": self.meta}

    def to_wavefunction(self):
        if self.kind != WAVEFUNCTION:
            raise FormatError(f"expected a {WAVEFUNCTION} file, got {self.kind}")
        return Wavefunction(self.grid, self.values.copy(), self.t)

    def to_momentum_map(self):
        if self.kind != MOMENTUM_MAP:
            raise FormatError(f"expected a {MOMENTUM_MAP} file, got {self.kind}")
        return MomentumMap(self.grid.momentum(), self.values.copy(), self.t)


def wavefunction_file(psi, **meta):
    g = psi.grid
    return FieldFile(WAVEFUNCTION, g.nx, g.ny, g.lx, g.ly, psi.values, psi.t, meta)


def density_file(grid, density, t=0.0, **meta):
    return FieldFile(DENSITY, grid.nx, grid.ny, grid.lx, grid.ly, density, t, meta)


def momentum_map_file(momentum_map, space, **meta):
    """`space` is the real-space Grid2D the momentum grid is conjugate to"""
    if MomentumGrid.from_grid(space) != momentum_map.grid:
        raise FormatError("momentum map grid is not conjugate to the given real-space grid")
    return FieldFile(MOMENTUM_MAP, space.nx, space.ny, space.lx, space.ly, momentum_map.density, momentum_map.t, meta)


def encode_field(ff):
    header = json.dumps(ff.header(), sort_keys=True).encode("utf-8")
    payload = np.ascontiguousarray(ff.values, dtype=KINDS[ff.kind]).tobytes()
    return MAGIC + _LENGTH.pack(len(header)) + header + payload


def decode_field(data, source="<bytes>"):
    if len(data) < len(MAGIC) + _LENGTH.size or data[:len(MAGIC)] != MAGIC:
        raise FormatError(f"{source}: not a LIED2D field file (bad magic)")
    offset = len(MAGIC)
    (length,) = _LENGTH.unpack_from(data, offset)
    offset += _LENGTH.size
    if offset + length > len(data):
        raise FormatError(f"{source}: truncated header")
    try:
        header = json.loads(data[offset:offset + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{source}: unreadable header: {e}") from e
    offset += length
    if header.get("version") != FORMAT_VERSION:
        raise FormatError(f"{source}: unsupported format version {header.get('version')!r}")
    kind = header.get("kind")
    if kind not in KINDS:
        raise FormatError(f"{source}: unknown payload kind {kind!r}")
    try:
        nx, ny = int(header["nx"]), int(header["ny"])
        lx, ly = float(header["lx"]), float(header["ly"])
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{source}: incomplete grid descriptor: {e}") from e
    dtype = np.dtype(KINDS[kind])
    expected = nx * ny * dtype.itemsize
    if len(data) - offset != expected:
        raise FormatError(f"{source}: payload is {len(data) - offset} bytes, header requires {expected}")
    values = np.frombuffer(data, dtype=dtype, count=nx * ny, offset=offset).reshape(ny, nx)
    return FieldFile(kind, nx, ny, lx, ly, values.astype(dtype.newbyteorder("=")), float(header.get("t", 0.0)),
                     header.get("meta", {}))


def write_field(path, ff):
    return atomic_write_bytes(path, encode_field(ff))


def read_field(path):
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read field file '{path}': {e}") from e
    return decode_field(data, path.name)


# ============================================================================== Patterns ==============================================================================
def format_pattern(pattern, config_hash, extra=None):
    lines = ["# LIED2D pattern", f"# label: {pattern.label or '-'}", f"# config_sha256: {config_hash}",
             f"# normalized: {str(pattern.normalized).lower()}"]
    for key, value in (extra or {}).items():
        lines.append(f"# {key}: {value}")
    lines.append("# columns: k_y [a.u.]  S(k_y)")
    lines.extend(f"{k:.12e} {s:.12e}" for k, s in zip(pattern.ky, pattern.values))
    return "\n".join(lines) + "\n"


def write_pattern(path, pattern, config_hash, extra=None):
    return atomic_write_text(path, format_pattern(pattern, config_hash, extra))


def read_pattern(path):
    """Two-column pattern table; `#` header lines carry the metadata"""
    path = Path(path)
    meta = {}
    rows = []
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise FormatError(f"cannot read pattern '{path}': {e}") from e
    for number, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition(":")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        parts = line.split()
        if len(parts) != 2:
            raise FormatError(f"{path.name}:{number}: expected two columns, got {len(parts)}")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError as e:
            raise FormatError(f"{path.name}:{number}: {e}") from e
    if len(rows) < 2:
        raise FormatError(f"{path.name}: a pattern needs at least two rows")
    data = np.array(rows)
    label = meta.get("label", "")
    return Pattern(data[:, 0], data[:, 1], meta.get("normalized") == "true", "" if label == "-" else label), meta


# ============================================================================== Reports ==============================================================================
def write_report(path, report):
    text = yaml.safe_dump(_plain(report), sort_keys=False, allow_unicode=True, default_flow_style=None)
    return atomic_write_text(path, text)


def write_json(path, data):
    return atomic_write_text(path, json.dumps(_plain(data), indent=2, sort_keys=True) + "\n")


def _plain(value):
    """numpy scalars and arrays -> builtin types for the emitters"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    return value
