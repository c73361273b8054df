"""Dataset CSV ingestion/export, atomic writes and provenance metadata.

Dataset CSV schema (a header line is required, ``#`` lines are skipped):

    depth 3:  group_id,value
    depth 4:  group_id,cell_id,value

Values are taken as given; any transformation (e.g. a log transform of
skewed measurements) is the caller's responsibility.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import tempfile
from collections import defaultdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, InputError
from .model import GroupData

TOOL_NAME = "h2s"
TOOL_VERSION = "0.1.0"

HEADERS = {3: ["group_id", "value"], 4: ["group_id", "cell_id", "value"]}


def atomic_write_bytes(path, data: bytes):
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


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def provenance(seed, config: dict) -> dict:
    return {
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "seed": seed,
        "config_hash": config_hash(config),
    }


def metadata_comment(meta: dict) -> str:
    return "# " + json.dumps(meta, sort_keys=True, separators=(",", ":"))


def read_metadata_comment(line: str) -> dict:
    try:
        return json.loads(line.lstrip("#").strip() or "{}")
    except json.JSONDecodeError:
        return {}


def write_dataset_csv(path, dataset: Sequence[GroupData], meta: dict | None = None):
    depth = dataset[0].depth
    lines = []
    if meta is not None:
        lines.append(metadata_comment(meta))
    lines.append(",".join(HEADERS[depth]))
    for g in dataset:
        if depth == 3:
            lines.extend(f"{g.group_id},{float(v)!r}" for v in g.values)
        else:
            for j, vals in g.cells.items():
                lines.extend(f"{g.group_id},{j},{float(v)!r}" for v in vals)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_dataset_csv(path, depth: int | None = None) -> list[GroupData]:
    """Parse a dataset CSV; the header decides the depth unless ``depth`` is given.

    Errors name the 1-based line number of the offending row.
    """
    path = Path(path)
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise InputError(f"dataset file not found: {path}") from None
    with fh:
        reader = csv.reader(fh)
        header = None
        values3 = defaultdict(list)
        values4 = defaultdict(lambda: defaultdict(list))
        for row in reader:
            lineno = reader.line_num
            if not row or (row[0].startswith("#")):
                continue
            fields = [f.strip() for f in row]
            if header is None:
                header = fields
                found = next((d for d, h in HEADERS.items() if h == header), None)
                if found is None:
                    raise FormatError(
                        f"line {lineno}: header must be {HEADERS[3]} or {HEADERS[4]}, got {header}",
                        path=path,
                    )
                if depth is not None and depth != found:
                    raise FormatError(
                        f"line {lineno}: header is for depth {found}, expected depth {depth}",
                        path=path,
                    )
                depth = found
                continue
            if len(fields) != len(header):
                raise FormatError(
                    f"line {lineno}: expected {len(header)} fields, got {len(fields)}", path=path
                )
            try:
                gid = int(fields[0])
                cid = int(fields[1]) if depth == 4 else None
            except ValueError:
                raise FormatError(f"line {lineno}: ids must be integers", path=path) from None
            try:
                val = float(fields[-1])
            except ValueError:
                raise FormatError(
                    f"line {lineno}: non-numeric value {fields[-1]!r}", path=path
                ) from None
            if not np.isfinite(val):
                raise FormatError(f"line {lineno}: non-finite value", path=path)
            if depth == 3:
                values3[gid].append(val)
            else:
                values4[gid][cid].append(val)
    if header is None:
        raise FormatError("missing header line", path=path)
    if depth == 3:
        groups = [GroupData(g, values=np.array(v)) for g, v in sorted(values3.items())]
    else:
        groups = [
            GroupData(g, cells={j: np.array(v) for j, v in cells.items()})
            for g, cells in sorted(values4.items())
        ]
    if not groups:
        raise InputError(f"dataset {path} has no rows")
    return groups


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment.  Keys mirror CLI flags."""
    out = {}
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise InputError(f"config file not found: {path}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected key = value", path=path)
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out
