"""Row-based die, placements, legalization and wirelength."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.isotonic import IsotonicRegression

from .netlist import Netlist
from .variation import VariationGrid


class InfeasiblePlacementError(ValueError):
    """Total cell area exceeds the die capacity."""


@dataclass
class Die:
    """Die of ``rows`` standard-cell rows, each ``width`` sites wide.

    Sites are one unit wide; ``io_pads`` maps primary I/O nets to fixed
    boundary coordinates.
    """
    width: int
    rows: int
    row_height: float = 1.0
    io_pads: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.width < 1 or self.rows < 1 or self.row_height <= 0:
            raise ValueError("die needs positive width, rows and row height")
        for net, (x, y) in self.io_pads.items():
            on_edge = x in (0, self.width) or y in (0, self.height)
            if not on_edge or not (0 <= x <= self.width and 0 <= y <= self.height):
                raise ValueError(f"pad {net!r} at ({x}, {y}) is not on the die boundary")

    @property
    def height(self) -> float:
        return self.rows * self.row_height

    @property
    def capacity(self) -> int:
        return self.rows * self.width

    @classmethod
    def for_netlist(cls, n: Netlist, utilization: float = 0.5, aspect: float = 1.0,
                    row_height: float = 1.0) -> "Die":
        """Smallest roughly ``aspect``-shaped die at the requested utilization.

        A utilization above one yields a die too small for the cells, which
        the placers report as infeasible.

        Primary inputs sit on the left edge and primary outputs on the right.
        """
        if not utilization > 0:
            raise ValueError("utilization must be positive")
        need = n.widths.sum() / utilization
        rows = max(1, math.ceil(math.sqrt(need * aspect / row_height)))
        width = max(int(n.widths.max()), math.ceil(need / rows))
        height = rows * row_height
        pads = {}
        for side, nets in ((0.0, n.primary_inputs), (float(width), n.primary_outputs)):
            for k, net in enumerate(nets):
                pads[net] = (side, height * (k + 0.5) / len(nets))
        return cls(width, rows, row_height, pads)


@dataclass
class Placement:
    """Cell centres on a die; ``row`` is set once the placement is legalized."""
    cell_ids: tuple[str, ...]
    x: np.ndarray
    y: np.ndarray
    widths: np.ndarray
    die: Die
    row: np.ndarray | None = None

    def __post_init__(self):
        self.cell_ids = tuple(self.cell_ids)
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.widths = np.asarray(self.widths, dtype=int)
        if self.row is not None:
            self.row = np.asarray(self.row, dtype=int)
        self.index = {c: i for i, c in enumerate(self.cell_ids)}

    def copy(self) -> "Placement":
        return Placement(self.cell_ids, self.x.copy(), self.y.copy(), self.widths.copy(), self.die,
                         None if self.row is None else self.row.copy())

    @property
    def left(self) -> np.ndarray:
        return self.x - self.widths / 2.0

    def coords(self, cid: str) -> tuple[float, float]:
        i = self.index[cid]
        return float(self.x[i]), float(self.y[i])

    def overlaps(self) -> list[tuple[str, str]]:
        """Pairs of overlapping cells in the same row (legalized placements only)."""
        if self.row is None:
            raise ValueError("placement is not legalized")
        bad = []
        for r in np.unique(self.row):
            idx = np.flatnonzero(self.row == r)
            idx = idx[np.argsort(self.left[idx], kind="stable")]
            for a, b in zip(idx[:-1], idx[1:]):
                if self.left[a] + self.widths[a] > self.left[b] + 1e-9:
                    bad.append((self.cell_ids[a], self.cell_ids[b]))
        return bad

    def is_legal(self) -> bool:
        if self.row is None:
            return False
        d = self.die
        left = self.left
        on_grid = np.allclose(left, np.round(left)) and np.all(left >= -1e-9) \
            and np.all(left + self.widths <= d.width + 1e-9)
        rows_ok = np.all((self.row >= 0) & (self.row < d.rows)) and \
            np.allclose(self.y, (self.row + 0.5) * d.row_height)
        return bool(on_grid and rows_ok and not self.overlaps())

    def to_csv(self, meta: dict | None = None) -> str:
        buf = io.StringIO()
        if meta:
            buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cell_id", "x", "y", "row"])
        for i, cid in enumerate(self.cell_ids):
            w.writerow([cid, repr(float(self.x[i])), repr(float(self.y[i])),
                        "" if self.row is None else int(self.row[i])])
        return buf.getvalue()


def placement_from_csv(text: str, n: Netlist, die: Die) -> Placement:
    body = [line for line in text.splitlines() if line.strip() and not line.startswith("#")]
    rows = {r["cell_id"]: r for r in csv.DictReader(body)}
    missing = [c for c in n.cell_ids if c not in rows]
    if missing:
        raise ValueError(f"placement lacks {len(missing)} cells, e.g. {missing[:3]}")
    x = [float(rows[c]["x"]) for c in n.cell_ids]
    y = [float(rows[c]["y"]) for c in n.cell_ids]
    has_rows = all(rows[c]["row"] not in ("", None) for c in n.cell_ids)
    row = [int(rows[c]["row"]) for c in n.cell_ids] if has_rows else None
    return Placement(n.cell_ids, x, y, n.widths, die, row)


def write_placement(path: str | Path, p: Placement, meta: dict | None = None) -> None:
    Path(path).write_text(p.to_csv(meta))


def read_placement(path: str | Path, n: Netlist, die: Die) -> Placement:
    return placement_from_csv(Path(path).read_text(), n, die)


def _pack_row(desired_left: np.ndarray, widths: np.ndarray, row_width: int) -> np.ndarray:
    """Integer lefts keeping the given order, minimizing width-weighted squared displacement.

    With ``s_i`` the summed width of the cells before ``i``, ordered
    non-overlapping packings are exactly the nondecreasing sequences
    ``left_i - s_i``, so the optimum is a bounded isotonic regression.
    Rounding each value keeps the sequence nondecreasing, hence legal.
    """
    widths = np.asarray(widths, dtype=int)
    before = np.concatenate([[0], np.cumsum(widths)[:-1]])
    slack = row_width - int(widths.sum())
    if len(widths) == 1:
        z = np.clip(desired_left - before, 0, slack)
    else:
        iso = IsotonicRegression(y_min=0.0, y_max=float(slack), increasing=True)
        z = iso.fit_transform(np.arange(len(widths)), desired_left - before, sample_weight=widths)
    return (np.floor(z + 0.5).astype(int) + before).astype(int)


def legalize(x: np.ndarray, y: np.ndarray, widths: np.ndarray, die: Die,
             cell_ids: tuple[str, ...]) -> Placement:
    """Snap cells to their nearest row and pack each row left to right.

    Each cell of an overfull row that has to leave goes to the nearest row
    with room for it, the cell nearest that row first. Every such move
    strictly lowers the total overflow, so the loop ends. In-row order
    follows the global x order (ties by id).
    """
    widths = np.asarray(widths, dtype=int)
    if widths.sum() > die.capacity:
        raise InfeasiblePlacementError(
            f"cells need {int(widths.sum())} sites, die offers {die.capacity}")
    y = np.asarray(y, dtype=float)
    row = np.clip(np.floor(y / die.row_height), 0, die.rows - 1).astype(int)
    load = np.bincount(row, weights=widths, minlength=die.rows).astype(int)
    rank = np.empty(len(cell_ids), dtype=int)
    rank[sorted(range(len(cell_ids)), key=lambda i: cell_ids[i])] = np.arange(len(cell_ids))
    by_distance = [sorted(range(die.rows), key=lambda c, r=r: (abs(c - r), c)) for r in range(die.rows)]
    while np.any(load > die.width):
        r = int(np.argmax(load - die.width))
        spare = die.width - load
        best = None
        for cand in by_distance[r][1:]:
            members = np.flatnonzero((row == r) & (widths <= spare[cand]))
            if members.size:
                best = cand
                break
        if best is None:
            raise InfeasiblePlacementError(f"row {r} overflows and no other row can take its cells")
        key = y[members] * (1 if best > r else -1)
        pick = members[np.lexsort((rank[members], -key))[0]]
        row[pick] = best
        load[r] -= widths[pick]
        load[best] += widths[pick]
    xs = np.empty(len(widths))
    for r in range(die.rows):
        idx = np.flatnonzero(row == r)
        if idx.size == 0:
            continue
        idx = idx[np.lexsort((rank[idx], x[idx]))]
        left = _pack_row(x[idx] - widths[idx] / 2.0, widths[idx], die.width)
        xs[idx] = left + widths[idx] / 2.0
    ys = (row + 0.5) * die.row_height
    return Placement(cell_ids, xs, ys, widths, die, row)


def resolve_vth(p: Placement, grid: VariationGrid) -> np.ndarray:
    """Threshold voltage of the fragment under each cell centre."""
    fx, fy = fragment_index(p.x, p.y, p.die, grid.n)
    return grid.values[fy, fx]


def fragment_index(x, y, die: Die, n: int) -> tuple[np.ndarray, np.ndarray]:
    fx = np.clip(np.floor(np.asarray(x) / die.width * n), 0, n - 1).astype(int)
    fy = np.clip(np.floor(np.asarray(y) / die.height * n), 0, n - 1).astype(int)
    return fx, fy


class NetGeometry:
    """Pin membership of every net for wirelength computations."""

    def __init__(self, n: Netlist, die: Die):
        self.net_ids: list[str] = []
        self.cells: list[np.ndarray] = []
        self.pads: list[list[tuple[float, float]]] = []
        self.nets_of_cell: list[list[int]] = [[] for _ in n.cell_ids]
        for k, (net_id, cells, is_in, is_out) in enumerate(n.hyperedges()):
            self.net_ids.append(net_id)
            idx = np.array([n.index[c] for c in cells], dtype=int)
            self.cells.append(idx)
            pads = [die.io_pads[net_id]] if (is_in or is_out) and net_id in die.io_pads else []
            self.pads.append(pads)
            for i in idx:
                self.nets_of_cell[i].append(k)

    def net_hpwl(self, k: int, x: np.ndarray, y: np.ndarray) -> float:
        idx = self.cells[k]
        xs = list(x[idx]) + [p[0] for p in self.pads[k]]
        ys = list(y[idx]) + [p[1] for p in self.pads[k]]
        if len(xs) < 2:
            return 0.0
        return (max(xs) - min(xs)) + (max(ys) - min(ys))

    def hpwl(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(sum(self.net_hpwl(k, x, y) for k in range(len(self.cells))))


def hpwl(n: Netlist, p: Placement) -> float:
    return NetGeometry(n, p.die).hpwl(p.x, p.y)
