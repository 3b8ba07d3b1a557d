"""Quadratic global placement with SER-weighted nets and LVT-avoidance anchors.

The placer follows the classic recursive-bipartitioning scheme: each level
solves one equality-constrained QP per axis, where every partition region
pins the area-weighted centre of gravity of its cells to the region centre.
Sensitive cells that land on low-threshold (LVT) fragments receive spring
anchors toward the nearest retained HVT block; the QP is then re-solved a
bounded number of times before the regions are split again.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .netlist import Netlist
from .placement import Die, Placement, fragment_index, legalize
from .sermodel import SerReport
from .solver import EqConstrainedQp, solve_eq_qp
from .variation import HVT, LVT, RMap, filter_blocks

VERTICAL, HORIZONTAL = "vertical", "horizontal"
MIN_PAIR_WEIGHT = 0.05


@dataclass
class GlobalConfig:
    K: float = 2.5
    penalty_iters: int = 3
    leaf_size: int = 1
    min_area: int = 0
    bridge_area: int = 0
    seed: int = 0
    penalty_scale: float = 1.0
    ser_weighting: bool = True
    penalty_start_level: int = 1

    def __post_init__(self):
        if self.K <= 0:
            raise ValueError("K must be positive")
        if self.penalty_iters < 0 or self.leaf_size < 1:
            raise ValueError("penalty_iters must be >= 0 and leaf_size >= 1")
        if self.penalty_start_level < 0:
            raise ValueError("penalty_start_level must be >= 0")
        if self.penalty_scale < 0:
            raise ValueError("penalty_scale must be nonnegative")


@dataclass
class PartitionNode:
    x0: float
    x1: float
    y0: float
    y1: float
    members: np.ndarray
    level: int = 0
    cut: str = VERTICAL

    def __post_init__(self):
        if len(self.members) == 0:
            raise ValueError("partition node has no cells")

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def centre(self, axis: int) -> float:
        return 0.5 * (self.x0 + self.x1) if axis == 0 else 0.5 * (self.y0 + self.y1)


@dataclass(frozen=True)
class PenaltyAnchor:
    cell: str
    target: tuple[float, float]
    weight: float

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError("anchor weight must be positive")


@dataclass
class GlobalResult:
    placement: Placement
    unlegalized: Placement
    anchors: dict[str, PenaltyAnchor]
    trace: list[tuple[int, int, float]] = field(default_factory=list)
    levels: list[list[PartitionNode]] = field(default_factory=list)


class _Connectivity:
    """Clique-expanded nets as weighted cell-cell and cell-pad springs."""

    def __init__(self, n: Netlist, die: Die, ser_norm: np.ndarray):
        ci, cj, cw = [], [], []
        pi, pxy, pw = [], [], []
        self.net_weights = []
        s = np.asarray(ser_norm, dtype=float)
        for net_id, cells, is_in, is_out in n.hyperedges():
            idx = [n.index[c] for c in cells]
            pad = die.io_pads.get(net_id) if (is_in or is_out) else None
            size = len(idx) + (pad is not None)
            if size < 2:
                continue
            base = 2.0 / size
            total = 0.0
            for a in range(len(idx)):
                for b in range(a + 1, len(idx)):
                    u, v = idx[a], idx[b]
                    ci.append(u)
                    cj.append(v)
                    cw.append(base * _pair_weight(s[u], s[v]))
                    total += cw[-1]
                if pad is not None:
                    pi.append(idx[a])
                    pxy.append(pad)
                    pw.append(base * _pair_weight(s[idx[a]], 0.0))
                    total += pw[-1]
            self.net_weights.append(total)
        self.n = len(n)
        self.ci, self.cj, self.cw = np.array(ci, int), np.array(cj, int), np.array(cw)
        self.pi, self.pw = np.array(pi, int), np.array(pw)
        self.pxy = np.array(pxy, dtype=float).reshape(-1, 2)
        diag = np.bincount(self.ci, self.cw, self.n) + np.bincount(self.cj, self.cw, self.n) \
            + np.bincount(self.pi, self.pw, self.n)
        off = sp.coo_matrix((-self.cw, (self.ci, self.cj)), shape=(self.n, self.n))
        self.laplacian = (off + off.T + sp.diags(diag)).tocsr()

    def linear(self, axis: int) -> np.ndarray:
        return -np.bincount(self.pi, self.pw * self.pxy[:, axis], self.n) if len(self.pi) \
            else np.zeros(self.n)


def _pair_weight(sm: float, sn: float) -> float:
    return min(1.0, max(MIN_PAIR_WEIGHT, 1.0 - 0.5 * (sm + sn)))


def build_qp(n: Netlist, r: SerReport, part: list[PartitionNode],
             anchors: dict[str, PenaltyAnchor] | list[PenaltyAnchor], axis: int,
             die: Die | None = None, _conn: _Connectivity | None = None) -> EqConstrainedQp:
    """QP for one axis: SER-weighted clique springs, anchors and COG rows.

    ``axis`` is 0 for x and 1 for y. Anchors add ``weight * (x - target)^2``.
    """
    conn = _conn or _Connectivity(n, die or Die.for_netlist(n), r.ser_norm)
    q = conn.laplacian
    c = conn.linear(axis)
    anchor_list = list(anchors.values()) if isinstance(anchors, dict) else list(anchors)
    if anchor_list:
        idx = np.array([n.index[a.cell] for a in anchor_list])
        w = np.array([a.weight for a in anchor_list])
        t = np.array([a.target[axis] for a in anchor_list])
        q = q + sp.csr_matrix((2.0 * w, (idx, idx)), shape=q.shape)
        c = c - np.bincount(idx, 2.0 * w * t, len(n))
    seen = np.zeros(len(n), dtype=int)
    rows, cols, vals, u = [], [], [], []
    area = n.areas
    for k, node in enumerate(part):
        m = np.asarray(node.members)
        if m.size == 0:
            raise ValueError("partition node has no cells")
        seen[m] += 1
        rows.extend([k] * m.size)
        cols.extend(m.tolist())
        vals.extend((area[m] / area[m].sum()).tolist())
        u.append(node.centre(axis))
    if np.any(seen != 1):
        raise ValueError("every cell must belong to exactly one partition node")
    a = sp.csr_matrix((vals, (rows, cols)), shape=(len(part), len(n)))
    return EqConstrainedQp(q, c, a, np.array(u))


def block_rects(rmap: RMap, die: Die, cls: str) -> np.ndarray:
    """Die-coordinate rectangles (x0, x1, y0, y1) of the blocks of one class."""
    fw, fh = die.width / rmap.n, die.height / rmap.n
    bs = rmap.of_class(cls)
    return np.array([(b.lx * fw, (b.ux + 1) * fw, b.ly * fh, (b.uy + 1) * fh) for b in bs],
                    dtype=float).reshape(-1, 4)


def _block_lookup(rmap: RMap) -> np.ndarray:
    ids = np.full((rmap.n, rmap.n), -1, dtype=int)
    for k, b in enumerate(rmap.blocks):
        ids[b.ly:b.uy + 1, b.lx:b.ux + 1] = k
    return ids


def lvt_membership(p: Placement, rmap: RMap, sensitive) -> list[tuple[str, int]]:
    """(cell, block index) pairs for sensitive cells sitting inside LVT blocks.

    Fragment bounds are half-open, so a point on a shared edge belongs to the
    block on its upper/right side; the die's far edges close the last fragment.
    """
    if not sensitive:
        return []
    ids = _block_lookup(rmap)
    out = []
    for cid in sorted(sensitive):
        i = p.index[cid]
        fx, fy = fragment_index(p.x[i], p.y[i], p.die, rmap.n)
        k = ids[fy, fx]
        if k >= 0 and rmap.blocks[k].cls == LVT:
            out.append((cid, int(k)))
    return out


def raw_penalty(ser_norm, K: float):
    return np.exp((np.asarray(ser_norm, dtype=float) + 1.0) ** K)


def penalty_pass(p: Placement, incidences, r: SerReport, rmap: RMap, K: float = 2.5,
                 net_weight: float = 1.0, scale: float = 1.0,
                 regions: dict[str, tuple[float, float, float, float]] | None = None,
                 ) -> dict[str, PenaltyAnchor]:
    """One anchor per incident cell, pulling it into the nearest HVT block.

    ``net_weight`` is the median total spring weight of a net; anchor weights are scaled
    so their median equals it (times ``scale``). When ``regions`` gives a
    cell's current partition bounds, only the parts of HVT blocks inside that
    region are candidate targets (the cell cannot leave its region later on);
    a region without HVT area falls back to the whole die.

    Cells claim targets in decreasing penalty order and each HVT block takes
    at most its area times the average cell density, so one small block does
    not attract every sensitive cell around it.
    """
    if K <= 0:
        raise ValueError("K must be positive")
    if not incidences:
        return {}
    die = p.die
    rects = block_rects(rmap, die, HVT)
    if len(rects) == 0:
        warnings.warn("variation map has no HVT blocks; no penalties applied", RuntimeWarning,
                      stacklevel=2)
        return {}
    fw, fh = die.width / rmap.n, die.height / rmap.n
    sn = r.ser_norm
    cells = sorted({c for c, _ in incidences})
    raw = raw_penalty([sn[p.index[c]] for c in cells], K)
    beta = scale * net_weight / float(np.median(raw))
    area = p.widths.astype(float)
    density = area.sum() / (die.width * die.height)
    room = (rects[:, 1] - rects[:, 0]) * (rects[:, 3] - rects[:, 2]) * density
    out = {}
    # most sensitive cells claim HVT room first
    for k in sorted(range(len(cells)), key=lambda k: (-raw[k], cells[k])):
        cid, w = cells[k], raw[k]
        x, y = p.coords(cid)
        cand, ids = rects, np.arange(len(rects))
        if regions is not None and cid in regions:
            x0, x1, y0, y1 = regions[cid]
            clipped = np.column_stack([np.maximum(rects[:, 0], x0), np.minimum(rects[:, 1], x1),
                                       np.maximum(rects[:, 2], y0), np.minimum(rects[:, 3], y1)])
            keep = (clipped[:, 0] < clipped[:, 1]) & (clipped[:, 2] < clipped[:, 3])
            if keep.any():
                cand, ids = clipped[keep], ids[keep]
        a = area[p.index[cid]]
        free = room[ids] >= a
        if free.any():
            cand, ids = cand[free], ids[free]
        j, tx, ty = _nearest_inner_point(cand, x, y, fw, fh)
        room[ids[j]] -= a
        out[cid] = PenaltyAnchor(cid, (tx, ty), float(beta * w))
    return dict(sorted(out.items()))


def _nearest_inner_point(rects: np.ndarray, x: float, y: float, fw: float, fh: float):
    """Closest point of the nearest rectangle, moved one fragment inward."""
    dx = np.maximum(np.maximum(rects[:, 0] - x, 0.0), x - rects[:, 1])
    dy = np.maximum(np.maximum(rects[:, 2] - y, 0.0), y - rects[:, 3])
    k = int(np.argmin(np.hypot(dx, dy)))
    x0, x1, y0, y1 = rects[k]
    mx, my = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    tx = float(np.clip(x, min(x0 + fw, mx), max(x1 - fw, mx)))
    ty = float(np.clip(y, min(y0 + fh, my), max(y1 - fh, my)))
    return k, tx, ty


def _split(node: PartitionNode, pos: np.ndarray, area: np.ndarray, axis: int) -> list[PartitionNode]:
    m = node.members
    order = m[np.lexsort((m, pos[m]))]
    cum = np.cumsum(area[order])
    total = cum[-1]
    k = int(np.argmin(np.abs(cum[:-1] - 0.5 * total))) + 1
    frac = cum[k - 1] / total
    lo, hi = (node.x0, node.x1) if axis == 0 else (node.y0, node.y1)
    cut = lo + (hi - lo) * frac
    left, right = np.sort(order[:k]), np.sort(order[k:])
    kw = dict(level=node.level + 1, cut=HORIZONTAL if axis == 0 else VERTICAL)
    if axis == 0:
        return [PartitionNode(node.x0, cut, node.y0, node.y1, left, **kw),
                PartitionNode(cut, node.x1, node.y0, node.y1, right, **kw)]
    return [PartitionNode(node.x0, node.x1, node.y0, cut, left, **kw),
            PartitionNode(node.x0, node.x1, cut, node.y1, right, **kw)]


def run_global(n: Netlist, r: SerReport, rmap: RMap, die: Die,
               cfg: GlobalConfig | None = None) -> GlobalResult:
    """Recursive bipartitioning placement followed by row legalization."""
    cfg = cfg or GlobalConfig()
    if n.widths.sum() > die.capacity:
        from .placement import InfeasiblePlacementError
        raise InfeasiblePlacementError(
            f"cells need {int(n.widths.sum())} sites, die offers {die.capacity}")
    ser_norm = r.ser_norm if cfg.ser_weighting else np.zeros(len(n))
    conn = _Connectivity(n, die, ser_norm)
    net_weight = float(np.median(conn.net_weights)) if conn.net_weights else 1.0
    kept = filter_blocks(rmap, cfg.min_area, cfg.bridge_area)
    use_penalty = cfg.penalty_scale > 0 and cfg.penalty_iters > 0 and bool(r.sensitive)
    area = n.areas
    nodes = [PartitionNode(0.0, float(die.width), 0.0, float(die.height),
                           np.arange(len(n)), 0, VERTICAL)]
    anchors: dict[str, PenaltyAnchor] = {}
    result = GlobalResult(None, None, anchors)

    def solve() -> tuple[np.ndarray, np.ndarray, float]:
        xs = []
        total = 0.0
        for axis in (0, 1):
            qp = build_qp(n, r, nodes, anchors, axis, die, conn)
            x, _ = solve_eq_qp(qp)
            xs.append(x)
            total += qp.objective(x)
        return xs[0], xs[1], total

    level = 0
    while True:
        x, y, obj = solve()
        result.trace.append((level, 0, obj))
        result.levels.append(list(nodes))
        if use_penalty and level >= cfg.penalty_start_level:
            for it in range(1, cfg.penalty_iters + 1):
                cur = Placement(n.cell_ids, x, y, n.widths, die)
                inc = lvt_membership(cur, kept, r.sensitive)
                if not inc:
                    break
                regions = {n.cell_ids[i]: (nd.x0, nd.x1, nd.y0, nd.y1) for nd in nodes for i in nd.members}
                fresh = penalty_pass(cur, inc, r, kept, cfg.K, net_weight, cfg.penalty_scale, regions)
                if not fresh:
                    break
                anchors.update(fresh)
                x, y, obj = solve()
                result.trace.append((level, it, obj))
        if all(len(nd.members) <= cfg.leaf_size for nd in nodes):
            break
        axis = level % 2
        pos = x if axis == 0 else y
        nxt = []
        for nd in nodes:
            nxt.extend(_split(nd, pos, area, axis) if len(nd.members) > cfg.leaf_size else [nd])
        nodes = nxt
        level += 1
    x = np.clip(x, 0.0, die.width)
    y = np.clip(y, 0.0, die.height)
    result.unlegalized = Placement(n.cell_ids, x, y, n.widths, die)
    result.placement = legalize(x, y, n.widths, die, n.cell_ids)
    return result


def wirelength_placement(n: Netlist, r: SerReport, rmap: RMap, die: Die,
                         cfg: GlobalConfig | None = None) -> GlobalResult:
    """Baseline without SER weighting or penalties."""
    base = cfg or GlobalConfig()
    plain = GlobalConfig(**{**base.__dict__, "penalty_scale": 0.0, "ser_weighting": False})
    return run_global(n, r, rmap, die, plain)


def sensitive_in_lvt(p: Placement, rmap: RMap, sensitive) -> int:
    return len(lvt_membership(p, rmap, sensitive))
