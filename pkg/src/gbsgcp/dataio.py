"""Count-pattern files: one pattern per line of M whitespace-separated non-negative integers.

An optional first line ``# M=<int> N_E=<int>`` declares the shape. Other
dataset layouts plug in through :func:`register_ingester`.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .stats import CountPatternSet

_HEADER = re.compile(r"#\s*M\s*=\s*(\d+)(?:\s+N_E\s*=\s*(\d+))?\s*$")


class IngestionError(ValueError):
    """A dataset file could not be read as count patterns."""


def ingest_patterns(path) -> CountPatternSet:
    """Read and validate a count-pattern text file; errors name the offending line."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise IngestionError(f"{path}: {exc}") from exc
    M = NE = None
    rows = []
    for lineno, line in enumerate(lines, 1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            m = _HEADER.match(s)
            if m and not rows and M is None:
                M = int(m.group(1))
                NE = int(m.group(2)) if m.group(2) else None
            continue
        toks = s.split()
        if M is None:
            M = len(toks)
        if len(toks) != M:
            raise IngestionError(f"{path}:{lineno}: expected {M} counts, found {len(toks)}")
        try:
            vals = [int(t) for t in toks]
        except ValueError:
            raise IngestionError(f"{path}:{lineno}: non-integer token in {s!r}") from None
        if min(vals) < 0:
            raise IngestionError(f"{path}:{lineno}: negative count")
        rows.append(vals)
    if not rows:
        raise IngestionError(f"{path}: no count patterns found")
    if NE is not None and NE != len(rows):
        raise IngestionError(f"{path}: header declares N_E={NE} but {len(rows)} patterns were read")
    arr = np.array(rows, dtype=np.int64)
    cmax = int(arr.max())
    arr = arr.astype(np.min_scalar_type(cmax))
    return CountPatternSet(arr, {"source": str(path)})


def write_patterns(path, patterns: CountPatternSet) -> None:
    """Write patterns in the ingestion format, with an ``# M= N_E=`` header."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"# M={patterns.n_modes} N_E={patterns.n_samples}\n")
        np.savetxt(fh, patterns.patterns, fmt="%d", delimiter=" ")


_INGESTERS = {"text": ingest_patterns}


def register_ingester(name: str, fn) -> None:
    """Add a reader ``fn(path) -> CountPatternSet`` for an external dataset format."""
    _INGESTERS[name] = fn


def load_dataset(path, fmt: str = "text") -> CountPatternSet:
    try:
        reader = _INGESTERS[fmt]
    except KeyError:
        raise IngestionError(f"unknown dataset format {fmt!r}; known: {sorted(_INGESTERS)}") from None
    return reader(path)
