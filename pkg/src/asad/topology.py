"""Electrode-to-grid tables and the channels x time -> H x W x T embedding."""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

GRID_HEIGHT, GRID_WIDTH = 10, 11
DEFAULT_TABLE = "biosemi64_10x11.txt"


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class TopologyMap:
    entries: dict  # label -> (row, col), insertion order preserved
    grid_height: int = GRID_HEIGHT
    grid_width: int = GRID_WIDTH
    montage_name: str = "custom"

    @property
    def labels(self) -> list:
        return list(self.entries)

    def cells(self, labels=None):
        """Row and column index arrays for ``labels`` (default: table order)."""
        labels = self.labels if labels is None else labels
        missing = [l for l in labels if l not in self.entries]
        if missing:
            raise TopologyError(f"channel(s) not in topology '{self.montage_name}': {', '.join(missing)}")
        rc = np.array([self.entries[l] for l in labels], dtype=np.intp).reshape(-1, 2)
        return rc[:, 0], rc[:, 1]


def load_topology(source, grid_height: int = GRID_HEIGHT, grid_width: int = GRID_WIDTH,
                  montage_name: str | None = None) -> TopologyMap:
    """Validate a table given as text lines (``label row col``, ``#`` comments) or (label, row, col) tuples.

    A ``str``/``Path`` pointing at an existing file is read from disk.
    """
    name = montage_name
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                    and Path(source).is_file()):
        name = name or Path(source).stem
        source = Path(source).read_text().splitlines()
    elif isinstance(source, str):
        source = source.splitlines()
    rows = []
    for lineno, item in enumerate(source, 1):
        if isinstance(item, str):
            text = item.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 3:
                raise TopologyError(f"line {lineno}: expected 'label row col', got {item!r}")
            try:
                rows.append((parts[0], int(parts[1]), int(parts[2])))
            except ValueError:
                raise TopologyError(f"line {lineno}: non-integer coordinate in {item!r}") from None
        else:
            label, r, c = item
            rows.append((str(label), int(r), int(c)))

    problems = []
    seen_labels = {}
    by_cell = {}
    for label, r, c in rows:
        if label in seen_labels:
            problems.append(f"duplicate channel label {label!r}")
        seen_labels[label] = (r, c)
        if not (0 <= r < grid_height and 0 <= c < grid_width):
            problems.append(f"{label!r} at ({r},{c}) is outside the {grid_height}x{grid_width} grid")
        by_cell.setdefault((r, c), []).append(label)
    for cell, labels in by_cell.items():
        if len(labels) > 1:
            problems.append(f"cell {cell} assigned to {', '.join(labels)}")
    if problems:
        raise TopologyError("invalid topology table: " + "; ".join(problems))
    return TopologyMap(dict(seen_labels), grid_height, grid_width, name or "custom")


def default_topology() -> TopologyMap:
    text = resources.files("asad.data").joinpath(DEFAULT_TABLE).read_text()
    return load_topology(text.splitlines(), montage_name="biosemi64_10x11")


def to_grid(samples: np.ndarray, labels, topo: TopologyMap) -> np.ndarray:
    """Scatter a (C, T) matrix into a zero-filled (H, W, T) grid."""
    samples = np.asarray(samples)
    rows, cols = topo.cells(list(labels))
    if samples.shape[0] != len(rows):
        raise TopologyError(f"{samples.shape[0]} channels but {len(rows)} labels")
    grid = np.zeros((topo.grid_height, topo.grid_width) + samples.shape[1:], dtype=samples.dtype)
    grid[rows, cols] = samples
    return grid


def from_grid(grid: np.ndarray, labels, topo: TopologyMap) -> np.ndarray:
    """Gather mapped cells back into channel order: (H, W, T) -> (C, T), (N, H, W, T) -> (N, C, T)."""
    rows, cols = topo.cells(list(labels))
    if grid.ndim == 4:
        return grid[:, rows, cols]
    return grid[rows, cols]


@dataclass
class GridStats:
    mapped: int
    unmapped: int
    per_row: list = field(default_factory=list)


def grid_stats(topo: TopologyMap) -> GridStats:
    per_row = [0] * topo.grid_height
    for r, _ in topo.entries.values():
        per_row[r] += 1
    mapped = len(topo.entries)
    return GridStats(mapped, topo.grid_height * topo.grid_width - mapped, per_row)
