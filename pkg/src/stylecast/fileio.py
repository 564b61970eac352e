"""Atomic file writes: no partial output files survive a failure."""

from __future__ import annotations

import os
from pathlib import Path


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def atomic_write_text(path: str | Path, data: str) -> None:
    atomic_write_bytes(path, data.encode("utf-8"))
