"""Shared file helpers: atomic writes and float formatting.

All pipeline outputs go through :func:`atomic_write_text` so an error part-way
through a run never leaves a truncated file behind: content is written to a
temporary sibling and moved into place with ``os.replace``.
"""

from __future__ import annotations

import os
import tempfile


def format_float(v: float) -> str:
    """Shortest decimal string that round-trips to the same float."""
    return repr(float(v))


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_bytes(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
