"""Delimiter-separated tables and atomic file output."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(x) -> str:
    """Round-trippable, platform-independent float formatting."""
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    return repr(float(x))


def format_table(header: Sequence[str], rows: Iterable[Sequence], delimiter: str = ",") -> str:
    lines = [delimiter.join(header)]
    lines += [delimiter.join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def write_table(path, header, rows, delimiter: str = ",") -> None:
    atomic_write_text(path, format_table(header, rows, delimiter))


def read_table(path, delimiter: str = ","):
    """Return ``(header, rows)`` with rows parsed as floats."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split(delimiter)
    rows = [[float(v) for v in ln.split(delimiter)] for ln in lines[1:]]
    return header, rows
