"""Binary logic-table format (ACXT).

Little-endian layout:

    magic           4 bytes  b"ACXT"
    version         u32      format version (currently 1)
    dim_count       u32      number of continuous axes (h, hdot0, hdot1, tau)
    per dimension:  u32 cut-point count, then that many f64 cut points
    advisory_count  u32
    per advisory:   u32 name byte length, then UTF-8 name bytes
    values          f32 array, row-major over
                    (h, hdot0, hdot1, tau, a_prev, action)

The tau axis is stored as explicit cut points 0..tau_max so readers need no
side channel.  Values are truncated to 32-bit floats on write; a read/write
cycle is byte-stable.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

from .core import Advisory
from .optimizer import Grid, LogicTable

MAGIC = b"ACXT"
FORMAT_VERSION = 1


class TableFormatError(ValueError):
    pass


def write_table(table: LogicTable, path) -> None:
    with open(path, "wb") as f:
        _write_stream(table, f)


def _write_stream(table: LogicTable, f: BinaryIO) -> None:
    grid = table.grid
    dims = (
        grid.h_cuts,
        grid.hdot0_cuts,
        grid.hdot1_cuts,
        np.arange(grid.tau_max + 1, dtype=float),
    )
    f.write(MAGIC)
    f.write(struct.pack("<II", FORMAT_VERSION, len(dims)))
    for cuts in dims:
        f.write(struct.pack("<I", len(cuts)))
        f.write(np.asarray(cuts, dtype="<f8").tobytes())
    f.write(struct.pack("<I", len(grid.advisories)))
    for adv in grid.advisories:
        name = adv.value.encode("utf-8")
        f.write(struct.pack("<I", len(name)))
        f.write(name)
    f.write(np.ascontiguousarray(table.values, dtype="<f4").tobytes())


def read_table(path) -> LogicTable:
    with open(path, "rb") as f:
        return _read_stream(f)


def _read_stream(f: BinaryIO) -> LogicTable:
    magic = f.read(4)
    if magic != MAGIC:
        raise TableFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, dim_count = struct.unpack("<II", _read_exact(f, 8))
    if version != FORMAT_VERSION:
        raise TableFormatError(f"unsupported table format version {version}")
    if dim_count != 4:
        raise TableFormatError(f"expected 4 dimensions, found {dim_count}")
    dims = []
    for _ in range(dim_count):
        (count,) = struct.unpack("<I", _read_exact(f, 4))
        dims.append(np.frombuffer(_read_exact(f, 8 * count), dtype="<f8"))
    (adv_count,) = struct.unpack("<I", _read_exact(f, 4))
    advisories = []
    for _ in range(adv_count):
        (name_len,) = struct.unpack("<I", _read_exact(f, 4))
        advisories.append(Advisory(_read_exact(f, name_len).decode("utf-8")))
    tau_cuts = dims[3]
    if len(tau_cuts) < 1 or not np.array_equal(tau_cuts, np.arange(len(tau_cuts))):
        raise TableFormatError("tau axis must be 0..tau_max in unit steps")
    grid = Grid(
        h_cuts=dims[0],
        hdot0_cuts=dims[1],
        hdot1_cuts=dims[2],
        tau_max=len(tau_cuts) - 1,
        advisories=tuple(advisories),
    )
    shape = grid.shape + (adv_count,)
    n_values = int(np.prod(shape))
    raw = _read_exact(f, 4 * n_values)
    if f.read(1):
        raise TableFormatError("trailing bytes after value array")
    values = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
    return LogicTable(grid=grid, values=values)


def _read_exact(f: BinaryIO, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise TableFormatError("truncated table file")
    return data
