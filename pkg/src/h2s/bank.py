"""Stage-1 sample banks and their binary file format.

Layout (all integers little-endian)::

    offset  size  field
    0       8     magic  b"H2SBANK1"
    8       4     format version (uint32, currently 1)
    12      8     group_id (uint64)
    20      8     column count c (uint64)
    28      8     row count A (uint64)
    36      ...   c column names, each uint32 byte length + UTF-8 bytes
    ...     ...   metadata JSON, uint64 byte length + UTF-8 bytes
    ...     8*A*c draws, float64 little-endian, row-major

The file must end exactly after the payload.
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError
from .io import atomic_write_bytes

MAGIC = b"H2SBANK1"
VERSION = 1
_HEAD = struct.Struct("<8sIQQQ")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")

_CELL_COL = re.compile(r"^(delta|eta2)\[(-?\d+)\]$")


def bank_columns(depth: int, cell_ids=()) -> list[str]:
    cols = ["theta", "sigma2"]
    if depth == 4:
        cols += [f"delta[{j}]" for j in cell_ids] + [f"eta2[{j}]" for j in cell_ids]
    return cols


@dataclass
class SampleBank:
    """Retained stage-1 draws for one group; one row per draw."""

    group_id: int
    columns: list[str]
    draws: np.ndarray
    meta: dict = field(default_factory=dict)
    wall_time: float | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        self.draws = np.ascontiguousarray(self.draws, dtype=np.float64)
        if self.draws.ndim != 2 or self.draws.shape[1] != len(self.columns):
            raise InputError(
                f"bank {self.group_id}: draws shape {self.draws.shape} vs {len(self.columns)} columns"
            )
        if self.draws.shape[0] < 1:
            raise InputError(f"bank {self.group_id} is empty")
        if not np.all(np.isfinite(self.draws)):
            raise InputError(f"bank {self.group_id} contains non-finite draws")
        if self.columns[:2] != ["theta", "sigma2"]:
            raise InputError(f"bank {self.group_id}: first columns must be theta, sigma2")
        cells = self.cell_ids
        if self.columns != bank_columns(self.depth, cells):
            raise InputError(f"bank {self.group_id}: unexpected column layout {self.columns}")
        var_cols = [i for i, c in enumerate(self.columns) if c == "sigma2" or c.startswith("eta2")]
        if np.any(self.draws[:, var_cols] <= 0):
            raise InputError(f"bank {self.group_id}: variance columns must be > 0")

    @property
    def A(self) -> int:
        return self.draws.shape[0]

    @property
    def depth(self) -> int:
        return 3 if len(self.columns) == 2 else 4

    @property
    def cell_ids(self) -> list[int]:
        ids = []
        for c in self.columns[2:]:
            m = _CELL_COL.match(c)
            if m is None:
                raise InputError(f"bank {self.group_id}: bad column name {c!r}")
            if m.group(1) == "delta":
                ids.append(int(m.group(2)))
        return ids

    @property
    def theta(self) -> np.ndarray:
        return self.draws[:, 0]

    @property
    def sigma2(self) -> np.ndarray:
        return self.draws[:, 1]

    def __eq__(self, other):
        if not isinstance(other, SampleBank):
            return NotImplemented
        return (
            self.group_id == other.group_id
            and self.columns == other.columns
            and self.meta == other.meta
            and self.draws.shape == other.draws.shape
            and self.draws.tobytes() == other.draws.tobytes()
        )

    def to_bytes(self) -> bytes:
        if self.group_id < 0:
            raise InputError("bank files require a non-negative group_id")
        parts = [_HEAD.pack(MAGIC, VERSION, self.group_id, len(self.columns), self.A)]
        for name in self.columns:
            b = name.encode("utf-8")
            parts += [_U32.pack(len(b)), b]
        meta = json.dumps(self.meta, sort_keys=True).encode("utf-8")
        parts += [_U64.pack(len(meta)), meta]
        parts.append(self.draws.astype("<f8", copy=False).tobytes(order="C"))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, buf: bytes, path=None) -> "SampleBank":
        def need(offset, n, what):
            if offset + n > len(buf):
                raise FormatError(
                    f"truncated bank: {what} needs {n} bytes, {len(buf) - offset} left",
                    offset=offset,
                    path=path,
                )

        need(0, _HEAD.size, "header")
        magic, version, gid, ncol, A = _HEAD.unpack_from(buf, 0)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}", offset=0, path=path)
        if version != VERSION:
            raise FormatError(
                f"unsupported bank format version {version} (this reader supports {VERSION})",
                offset=8,
                path=path,
            )
        off = _HEAD.size
        columns = []
        for _ in range(ncol):
            need(off, 4, "column name length")
            (n,) = _U32.unpack_from(buf, off)
            off += 4
            need(off, n, "column name")
            try:
                columns.append(buf[off : off + n].decode("utf-8"))
            except UnicodeDecodeError:
                raise FormatError("column name is not UTF-8", offset=off, path=path) from None
            off += n
        need(off, 8, "metadata length")
        (n,) = _U64.unpack_from(buf, off)
        off += 8
        need(off, n, "metadata")
        try:
            meta = json.loads(buf[off : off + n].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"bad metadata blob: {exc}", offset=off, path=path) from None
        off += n
        nbytes = 8 * A * ncol
        need(off, nbytes, "payload")
        if len(buf) != off + nbytes:
            raise FormatError(
                f"{len(buf) - off - nbytes} trailing bytes after payload",
                offset=off + nbytes,
                path=path,
            )
        draws = np.frombuffer(buf, dtype="<f8", count=A * ncol, offset=off)
        bad = np.flatnonzero(~np.isfinite(draws))
        if bad.size:
            raise FormatError(
                f"non-finite value in payload (element {bad[0]})",
                offset=off + 8 * int(bad[0]),
                path=path,
            )
        draws = draws.astype(np.float64).reshape(A, ncol)
        try:
            return cls(gid, columns, draws, meta)
        except InputError as exc:
            raise FormatError(str(exc), path=path) from None


def save_bank(bank: SampleBank, path):
    atomic_write_bytes(path, bank.to_bytes())


def load_bank(path) -> SampleBank:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except FileNotFoundError:
        raise InputError(f"bank file not found: {path}") from None
    return SampleBank.from_bytes(buf, path=path)


def bank_filename(group_id: int) -> str:
    return f"bank_{group_id:06d}.h2sbank"


def export_bank_csv(bank: SampleBank) -> str:
    lines = [",".join(bank.columns)]
    lines.extend(",".join(repr(float(x)) for x in row) for row in bank.draws)
    return "\n".join(lines) + "\n"
