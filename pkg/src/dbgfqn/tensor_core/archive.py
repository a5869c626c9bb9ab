"""Flat tensor archives: parameter path -> shape + little-endian raw values.

Archives are zip files in numpy's ``.npz`` layout. Every array is stored with
an explicit little-endian dtype, and the reserved entry ``__schema_version__``
records the format version.
"""
from __future__ import annotations

import os
from typing import Mapping

import numpy as np

SCHEMA_VERSION = 1
_VERSION_KEY = "__schema_version__"


class ArchiveError(Exception):
    pass


def save_archive(path: str | os.PathLike, arrays: Mapping[str, np.ndarray]) -> None:
    payload = {}
    for name, arr in arrays.items():
        if name == _VERSION_KEY:
            raise ArchiveError(f"{_VERSION_KEY!r} is reserved")
        arr = np.asarray(arr)
        payload[name] = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
    payload[_VERSION_KEY] = np.array(SCHEMA_VERSION, dtype="<i8")
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_archive(path: str | os.PathLike) -> dict[str, np.ndarray]:
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {k: data[k] for k in data.files}
    except (OSError, ValueError) as exc:
        raise ArchiveError(f"cannot read archive {os.fspath(path)!r}: {exc}") from exc
    version = arrays.pop(_VERSION_KEY, None)
    if version is None:
        raise ArchiveError(f"{os.fspath(path)!r} has no schema version")
    if int(version) != SCHEMA_VERSION:
        raise ArchiveError(f"{os.fspath(path)!r} has schema version {int(version)}, expected {SCHEMA_VERSION}")
    return arrays
