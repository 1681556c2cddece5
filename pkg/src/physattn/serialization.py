"""Feature/mask containers on disk.

Two equivalent layouts are supported:

* JSON: ``{"T": int, "H": int, "W": int, "d": int, "data": [floats]}``
* binary: four little-endian uint32 (T, H, W, d) followed by T*H*W*d
  little-endian float64 values.

Data is flattened frame-major, then row-major spatial, then channel.  Masks
are stored with d=1 and values 0.0/1.0.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .core import DomainError, FeatureSequence, MaskSequence, PhysAttnError

_HEADER = struct.Struct("<4I")
_KEYS = ("T", "H", "W", "d")


class ContainerParseError(PhysAttnError, ValueError):
    """Malformed container; ``line``/``column``/``offset`` locate the problem when known."""

    def __init__(self, message, *, line=None, column=None, offset=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if offset is not None:
            where.append(f"offset {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line, self.column, self.offset = line, column, offset


def array_to_json(arr: np.ndarray) -> str:
    T, H, W, d = arr.shape
    payload = {"T": T, "H": H, "W": W, "d": d, "data": [float(v) for v in arr.ravel()]}
    return json.dumps(payload)


def array_to_bytes(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return _HEADER.pack(*arr.shape) + arr.tobytes()


def _check_header(dims):
    for key, value in zip(_KEYS, dims):
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise ContainerParseError(f"header field {key!r} must be a positive integer, got {value!r}")


def array_from_json(text: str) -> np.ndarray:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ContainerParseError(exc.msg, line=exc.lineno, column=exc.colno, offset=exc.pos) from None
    if not isinstance(payload, dict):
        raise ContainerParseError("top-level JSON value must be an object", line=1, column=1)
    unknown = set(payload) - set(_KEYS) - {"data"}
    missing = (set(_KEYS) | {"data"}) - set(payload)
    if missing:
        raise ContainerParseError(f"missing keys: {sorted(missing)}")
    if unknown:
        raise ContainerParseError(f"unknown keys: {sorted(unknown)}")
    dims = tuple(payload[k] for k in _KEYS)
    _check_header(dims)
    data = payload["data"]
    if not isinstance(data, list):
        raise ContainerParseError("'data' must be a list of numbers")
    expected = int(np.prod(dims))
    if len(data) != expected:
        raise ContainerParseError(f"'data' has {len(data)} values, header implies {expected}")
    for i, v in enumerate(data):
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ContainerParseError(f"'data' entry {i} is not a number: {v!r}", offset=i)
    return np.asarray(data, dtype=np.float64).reshape(dims)


def array_from_bytes(raw: bytes) -> np.ndarray:
    if len(raw) < _HEADER.size:
        raise ContainerParseError(f"binary container shorter than its {_HEADER.size}-byte header", offset=len(raw))
    dims = _HEADER.unpack_from(raw)
    _check_header(dims)
    expected = _HEADER.size + 8 * int(np.prod(dims))
    if len(raw) != expected:
        raise ContainerParseError(f"binary container is {len(raw)} bytes, header implies {expected}", offset=len(raw))
    return np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(np.float64).reshape(dims)


def is_binary(raw: bytes) -> bool:
    return not raw.lstrip()[:1] == b"{"


def read_array(path) -> tuple[np.ndarray, str]:
    """Return the (T, H, W, d) array stored at ``path`` and its format name."""
    raw = Path(path).read_bytes()
    if is_binary(raw):
        return array_from_bytes(raw), "binary"
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ContainerParseError("container is not valid UTF-8", offset=exc.start) from None
    return array_from_json(text), "json"


def read_features(path) -> tuple[FeatureSequence, str]:
    arr, fmt = read_array(path)
    if not np.all(np.isfinite(arr)):
        raise ContainerParseError("feature container holds non-finite values")
    return FeatureSequence(arr), fmt


def read_masks(path) -> MaskSequence:
    arr, _ = read_array(path)
    if arr.shape[3] != 1:
        raise ContainerParseError(f"mask containers must have d=1, got d={arr.shape[3]}")
    try:
        return MaskSequence(arr[..., 0])
    except DomainError as exc:
        raise ContainerParseError(str(exc)) from None


def write_atomic(path, payload: bytes | str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(payload, str):
        payload = payload.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_array(path, arr: np.ndarray, fmt: str = "json") -> None:
    if fmt == "json":
        write_atomic(path, array_to_json(arr))
    elif fmt == "binary":
        write_atomic(path, array_to_bytes(arr))
    else:
        raise ValueError(f"unknown container format {fmt!r}")


def write_features(path, features: FeatureSequence, fmt: str = "json") -> None:
    write_array(path, features.data, fmt)


def write_masks(path, masks: MaskSequence, fmt: str = "json") -> None:
    write_array(path, masks.expanded(), fmt)
