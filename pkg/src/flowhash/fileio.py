"""On-disk formats shared by the CLI.

Embeddings: binary, magic "QEMB", uint16 version, uint32 n, uint32 d (all
little-endian), then n*d float32 little-endian values row-major.
Labels: text, one non-negative integer per line.
Codes: text, header `# d=<d> k=<k>`, then one line of k sorted bit indices
per item.
Config: flat `key = value` text with `#` comment lines.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import HashCode, ValidationError

MAGIC = b"QEMB"
VERSION = 1
_HEADER = struct.Struct("<4sHII")


class FileIOError(Exception):
    """File missing, unreadable, or malformed on disk."""


def write_embeddings(path, data) -> None:
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim != 2:
        raise ValidationError(f"embeddings must be 2-d, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValidationError("embeddings contain NaN or Inf")
    n, d = arr.shape
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, n, d))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    except OSError as exc:
        raise FileIOError(f"cannot write {path}: {exc}") from exc


def read_embeddings(path) -> np.ndarray:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise FileIOError(f"cannot read {path}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise FileIOError(f"{path}: truncated header")
    magic, version, n, d = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FileIOError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FileIOError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 4 * n * d
    if len(blob) != expected:
        raise FileIOError(f"{path}: payload is {len(blob)} bytes, expected {expected}")
    data = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(n, d)
    if not np.isfinite(data).all():
        raise FileIOError(f"{path}: payload contains NaN or Inf")
    return data.astype(np.float64)


def write_labels(path, labels) -> None:
    arr = np.asarray(labels)
    if arr.ndim != 1 or not np.issubdtype(arr.dtype, np.integer):
        raise ValidationError("labels must be a 1-d integer array")
    if (arr < 0).any():
        raise ValidationError("labels must be non-negative")
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(str(int(v)) for v in arr.tolist()) + "\n")
    except OSError as exc:
        raise FileIOError(f"cannot write {path}: {exc}") from exc


def read_labels(path) -> np.ndarray:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise FileIOError(f"cannot read {path}: {exc}") from exc
    values = []
    for ln_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            v = int(line)
        except ValueError as exc:
            raise FileIOError(f"{path}:{ln_no}: not an integer: {line!r}") from exc
        if v < 0:
            raise FileIOError(f"{path}:{ln_no}: negative label {v}")
        values.append(v)
    if not values:
        raise FileIOError(f"{path}: no labels")
    return np.asarray(values, dtype=np.int64)


def write_codes(path, codes: Sequence[HashCode]) -> None:
    if not codes:
        raise ValidationError("no codes to write")
    d, k = codes[0].d, codes[0].k
    lines = [f"# d={d} k={k}"]
    for i, code in enumerate(codes):
        if code.d != d or code.k != k:
            raise ValidationError(f"code {i} has mixed (d, k)")
        lines.append(" ".join(str(b) for b in code.bits))
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise FileIOError(f"cannot write {path}: {exc}") from exc


def read_codes(path) -> list[HashCode]:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise FileIOError(f"cannot read {path}: {exc}") from exc
    if not lines or not lines[0].startswith("#"):
        raise FileIOError(f"{path}: missing '# d=<d> k=<k>' header")
    fields = dict(
        part.split("=", 1) for part in lines[0].lstrip("# ").split() if "=" in part
    )
    try:
        d, k = int(fields["d"]), int(fields["k"])
    except (KeyError, ValueError) as exc:
        raise FileIOError(f"{path}: malformed header {lines[0]!r}") from exc
    codes = []
    for ln_no, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        try:
            bits = tuple(int(x) for x in line.split())
            code = HashCode(bits, d)
        except (ValueError, ValidationError) as exc:
            raise FileIOError(f"{path}:{ln_no}: bad code line: {exc}") from exc
        if code.k != k:
            raise FileIOError(f"{path}:{ln_no}: expected {k} bits, got {code.k}")
        codes.append(code)
    if not codes:
        raise FileIOError(f"{path}: no codes")
    return codes


class ConfigError(ValidationError):
    """Malformed config content (reported with a line number)."""


def parse_config(text: str, source: str = "<config>") -> dict[str, str]:
    """Flat `key = value` parser; `#` lines and blanks are ignored."""
    out: dict[str, str] = {}
    for ln_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{ln_no}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"{source}:{ln_no}: empty key or value in {raw!r}")
        if key in out:
            raise ConfigError(f"{source}:{ln_no}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config(path) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FileIOError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, source=str(path))
