"""On-disk formats.

Grid file (``.mtsg``), all integers little-endian::

    offset  size        field
    0       4           magic b"MTSG"
    4       2           version (u16, = 1)
    6       2           ndim (u16)
    8       8 * ndim    dims (u64 each)
    ...     8 * prod    payload, row-major float64 little-endian

Every artifact may carry a JSON sidecar at ``<path>.json``. Taper sets are
written as a directory holding ``mask.mtsg``, ``taper_000.mtsg`` ... and
``tapers.json``. Run configurations are JSON objects validated against
:data:`CONFIG_SCHEMA` before any computation.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path
from typing import Any, Optional

import jsonschema
import numpy as np

from .errors import ContractError, GridFileError
from .grid import DomainMask
from .tapers import TaperSet

__all__ = [
    "MAGIC",
    "VERSION",
    "write_grid",
    "read_grid",
    "write_sidecar",
    "read_sidecar",
    "save_mask",
    "load_mask",
    "save_tapers",
    "load_tapers",
    "CONFIG_SCHEMA",
    "validate_config",
    "load_config",
    "write_csv",
]

MAGIC = b"MTSG"
VERSION = 1
_HEADER = struct.Struct("<4sHH")


def write_grid(path, values: np.ndarray) -> None:
    arr = np.ascontiguousarray(values, dtype="<f8")
    if arr.ndim < 1 or arr.ndim > 0xFFFF:
        raise ContractError(f"cannot store a {arr.ndim}-dimensional grid")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.tobytes(order="C"))


def read_grid(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise GridFileError(f"{path}: truncated header")
    magic, version, ndim = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise GridFileError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise GridFileError(f"{path}: unsupported version {version}")
    off = _HEADER.size + 8 * ndim
    if len(raw) < off:
        raise GridFileError(f"{path}: truncated dims")
    dims = struct.unpack_from(f"<{ndim}Q", raw, _HEADER.size)
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 0
    if len(raw) - off != 8 * count:
        raise GridFileError(f"{path}: payload has {len(raw) - off} bytes, expected {8 * count}")
    return np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(dims).astype(np.float64)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def write_sidecar(path, payload: dict) -> Path:
    side = Path(str(path) + ".json")
    side.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable))
    return side


def read_sidecar(path) -> dict:
    side = Path(str(path) + ".json")
    try:
        return json.loads(side.read_text())
    except json.JSONDecodeError as exc:
        raise GridFileError(f"{side}: {exc}") from exc


def save_mask(path, mask: DomainMask) -> None:
    write_grid(path, mask.indicator())


def load_mask(path) -> DomainMask:
    g = read_grid(path)
    if not np.all((g == 0.0) | (g == 1.0)):
        raise GridFileError(f"{path}: mask values must be exactly 0.0 or 1.0")
    return DomainMask(g == 1.0)


def save_tapers(directory, tapers: TaperSet, extra: Optional[dict] = None) -> list[Path]:
    """Write a taper bundle; returns the grid file paths."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    save_mask(out / "mask.mtsg", tapers.mask)
    paths = []
    for k, grid in enumerate(tapers.grids()):
        p = out / f"taper_{k:03d}.mtsg"
        write_grid(p, grid)
        paths.append(p)
    meta = {
        "kind": tapers.kind,
        "K": tapers.K,
        "W": tapers.meta.get("W"),
        "T": tapers.meta.get("T"),
        "seed": tapers.meta.get("seed"),
        "lambdas": None if tapers.lambdas is None else tapers.lambdas.tolist(),
        "meta": tapers.meta,
    }
    if extra:
        meta.update(extra)
    (out / "tapers.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=_jsonable))
    return paths


def load_tapers(directory) -> TaperSet:
    src = Path(directory)
    try:
        meta = json.loads((src / "tapers.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise GridFileError(f"{src}: unreadable taper sidecar ({exc})") from exc
    mask = load_mask(src / "mask.mtsg")
    grids = [read_grid(src / f"taper_{k:03d}.mtsg") for k in range(int(meta["K"]))]
    for g in grids:
        if g.shape != mask.dims:
            raise GridFileError(f"{src}: taper grid shape {g.shape} != mask {mask.dims}")
    vectors = mask.restrict(np.stack(grids)) if grids else np.zeros((mask.n_omega, 0))
    lam = meta.get("lambdas")
    return TaperSet(mask, vectors, meta["kind"], None if lam is None else np.array(lam), meta.get("meta", {}))


_POS_INT = {"type": "integer", "minimum": 1}
_INT_LIST = {"type": "array", "items": _POS_INT, "minItems": 1}

CONFIG_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["command"],
    "properties": {
        "command": {"enum": ["mask", "tapers", "window", "estimate", "simulate", "sweep-specwin",
                             "sweep-mse", "compare-subgrid", "compare-cryoem", "selftest"]},
        "N": {"type": "integer", "minimum": 2},
        "d": {"type": "integer", "minimum": 1, "maximum": 3},
        "R": {"type": "number", "minimum": 0},
        "radii": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "W": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
        "K": _POS_INT,
        "T": _POS_INT,
        "M": _POS_INT,
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "freq_dims": _INT_LIST,
        "paths": {"type": "object", "additionalProperties": {"type": "string"}},
        "options": {"type": "object"},
    },
}


def validate_config(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ContractError(f"invalid run config: {exc.message}") from exc
    if "W" in cfg and "K" in cfg and cfg["command"] == "tapers":
        raise ContractError("give either W or K for tapers, not both")
    return cfg


def load_config(path) -> dict:
    """Read a run config, or the ``config`` member of an artifact sidecar."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GridFileError(f"{path}: {exc}") from exc
    if isinstance(doc, dict) and "config" in doc and "command" not in doc:
        doc = doc["config"]
    return validate_config(doc)


def write_csv(path, header: list[str], rows) -> None:
    """Comma-separated, '.' decimal, one header row; floats in repr precision."""
    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        return str(v)

    tmp = f"{path}.part"
    with open(tmp, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
    os.replace(tmp, path)
