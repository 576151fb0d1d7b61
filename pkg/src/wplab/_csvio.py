"""Deterministic CSV emission for the command-line tools.

Floats are written with 17 significant digits so a double round-trips
losslessly; rows end with a single trailing comment line carrying the
package version, the seed, and a hash of the run configuration.  The
line terminator is pinned to newline, making output bytes identical
across platforms for identical inputs.
"""

from __future__ import annotations

import csv
import hashlib
import json
from typing import Iterable, Mapping, Sequence


def format_cell(value) -> str:
    """17-significant-digit floats; everything else through str()."""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, complex):
        return f"{value.real:.17g}{value.imag:+.17g}j"
    return str(value)


def config_hash(config: Mapping) -> str:
    """sha256 of the canonical JSON form of the configuration."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"),
                      default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence],
              version: str, seed, config: Mapping) -> None:
    """Header row, formatted data rows, one trailing '#' metadata line."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(cell) for cell in row])
        fh.write(f"# wplab={version} seed={seed} "
                 f"config_sha256={config_hash(config)}\n")
