"""Portable serialization of named matrices and tabular reports.

A bundle on disk is a directory with a human-readable ``manifest.json``
listing one entry per matrix (name, rows, cols, dtype, relative data file)
and one raw binary file per matrix. Payloads are row-major little-endian
with no embedded shape metadata; the manifest is the single source of
truth. Supported dtypes are ``f32`` and ``f64``. Round trips are bit-exact,
including the stored dtype; widening of ``f32`` payloads to the library's
``float64`` compute precision happens in :meth:`MatrixBundle.matrix`.

Reports are flat tables of records that serialize to CSV (header row
mandatory, ``.`` decimal separator) or JSON with identical numeric content.
"""

import csv
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BundleCorruptionError,
    BundleNotFoundError,
    UnsupportedFormatError,
    ValidationError,
)

MANIFEST_NAME = "manifest.json"

_DTYPE_CODES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_NAME_PATTERN = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.\-]*$")


def _dtype_code(dtype: np.dtype) -> str:
    if dtype == np.float32:
        return "f32"
    if dtype == np.float64:
        return "f64"
    raise UnsupportedFormatError(f"unsupported matrix dtype {dtype}")


@dataclass
class MatrixBundle:
    """Ordered collection of uniquely named 2-D float matrices."""

    entries: dict[str, np.ndarray] = field(default_factory=dict)

    def add(self, name: str, matrix: np.ndarray) -> None:
        """Add a matrix under ``name``. Non-float input is cast to float64."""
        if not _NAME_PATTERN.match(name):
            raise ValidationError(f"invalid entry name {name!r}")
        if name in self.entries:
            raise ValidationError(f"duplicate entry name {name!r}")
        arr = np.asarray(matrix)
        if arr.ndim != 2 or arr.size == 0:
            raise ValidationError(f"entry {name!r} must be a non-empty 2-D matrix")
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.entries[name] = arr

    def matrix(self, name: str) -> np.ndarray:
        """Return entry ``name`` widened to float64 for computation."""
        if name not in self.entries:
            raise KeyError(name)
        return np.asarray(self.entries[name], dtype=np.float64)

    def names(self) -> list[str]:
        return list(self.entries)


def write_bundle(path, bundle: MatrixBundle) -> None:
    """Write ``bundle`` to directory ``path`` (created if absent)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = []
    for name, arr in bundle.entries.items():
        code = _dtype_code(arr.dtype)
        data_name = f"{name}.bin"
        payload = np.ascontiguousarray(arr, dtype=_DTYPE_CODES[code]).tobytes()
        (root / data_name).write_bytes(payload)
        manifest.append(
            {
                "name": name,
                "rows": int(arr.shape[0]),
                "cols": int(arr.shape[1]),
                "dtype": code,
                "data": data_name,
            }
        )
    with open(root / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def read_bundle(path) -> MatrixBundle:
    """Read a bundle directory written by :func:`write_bundle`."""
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise BundleNotFoundError(f"no {MANIFEST_NAME} in {root}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BundleCorruptionError(f"malformed manifest in {root}: {exc}") from exc
    if not isinstance(manifest, list):
        raise BundleCorruptionError(f"manifest in {root} is not a list of entries")

    bundle = MatrixBundle()
    for entry in manifest:
        try:
            name = entry["name"]
            rows = int(entry["rows"])
            cols = int(entry["cols"])
            code = entry["dtype"]
            data_name = entry["data"]
        except (KeyError, TypeError) as exc:
            raise BundleCorruptionError(f"manifest entry missing fields: {entry!r}") from exc
        if code not in _DTYPE_CODES:
            raise UnsupportedFormatError(f"entry {name!r} declares unknown dtype {code!r}")
        if rows < 1 or cols < 1:
            raise BundleCorruptionError(f"entry {name!r} declares empty shape {rows}x{cols}")
        data_path = root / data_name
        if not data_path.is_file():
            raise BundleNotFoundError(f"missing data file {data_path}")
        raw = data_path.read_bytes()
        dtype = _DTYPE_CODES[code]
        expected = rows * cols * dtype.itemsize
        if len(raw) != expected:
            raise BundleCorruptionError(
                f"entry {name!r}: data file holds {len(raw)} bytes, manifest implies {expected}"
            )
        arr = np.frombuffer(raw, dtype=dtype).reshape(rows, cols).copy()
        bundle.add(name, arr)
    return bundle


REPORT_KINDS = ("spectra", "ranks", "projections", "metrics")


def _format_value(value) -> str:
    # repr() round-trips floats exactly and always uses "." as separator
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class Report:
    """A flat table of records, e.g. one row per matrix or per component."""

    kind: str
    records: list[dict]

    def __post_init__(self):
        if self.kind not in REPORT_KINDS:
            raise ValidationError(f"unknown report kind {self.kind!r}")

    def _columns(self) -> list[str]:
        if not self.records:
            raise ValidationError("cannot serialize an empty report")
        columns = list(self.records[0])
        for rec in self.records:
            if list(rec) != columns:
                raise ValidationError("all report records must share the same keys")
        return columns

    def to_csv(self, path) -> None:
        columns = self._columns()
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns)
            for rec in self.records:
                writer.writerow([_format_value(rec[c]) for c in columns])

    def to_json(self, path) -> None:
        self._columns()
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"kind": self.kind, "records": self.records}, fh, indent=2)
            fh.write("\n")

    def write(self, path, fmt: str) -> None:
        if fmt == "csv":
            self.to_csv(path)
        elif fmt == "json":
            self.to_json(path)
        else:
            raise ValidationError(f"unknown report format {fmt!r}")
