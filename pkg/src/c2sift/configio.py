"""Shared parsing for the small key=value config files used by the CLI."""
from __future__ import annotations

from pathlib import Path


def parse_kv_file(path: str | Path) -> dict[str, str]:
    """Read a ``key = value`` file, skipping blanks and ``#`` comments.

    Raises ValueError on lines without ``=`` or on duplicate keys.
    """
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"{path}:{lineno}: empty key")
        if key in out:
            raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out
