"""MET-aware detailed placement.

Candidate pairs (CAPs) are electrically related cells whose joint failure
under one strike is lower than two independent failures. The placer pulls
each CAP within masking distance by transferring one cell into a vacant slot
beside its partner or by swapping it with a neighbour of the partner. Moves
are scored, selected under cumulative SER and wirelength budgets with a
multiple-choice knapsack, and applied most-improving first as long as they
are still consistent with the moves already performed.

Pair accounting: a pair of cells within masking distance fails with its JFP
under a shared strike; a pair farther apart can only fail through two
separate strikes, worth ``fp_a + fp_b``. The change in that quantity over all
pairs touched by a move is the move's ``dfp``.
"""
from __future__ import annotations

import bisect
import csv
import io
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .netlist import Netlist
from .placement import NetGeometry, Placement
from .sermodel import SerModel, is_cap
from .solver import McksInstance, Option, solve_mcks
from .solver.mcks import EXACT_MAX_GROUPS

TRANSFER, SWAP = "transfer", "swap"
VACANT = None
_TOL = 1e-12

Slot = tuple[int, int]  # (row, left site)


@dataclass(frozen=True)
class Cap:
    a: str
    b: str
    jfp: float
    ind_fp: float

    def __post_init__(self):
        if not self.jfp < self.ind_fp:
            raise ValueError("a CAP needs jfp < ind_fp")

    @property
    def cells(self) -> tuple[str, str]:
        return self.a, self.b


@dataclass(frozen=True)
class MaskingGeometry:
    masking_distance_x: float = 2.0
    oval_ax: float = 2.0
    oval_ay: float = 0.4
    row_pitch: float = 1.0

    def __post_init__(self):
        if self.masking_distance_x < 0 or self.oval_ax <= 0 or self.oval_ay <= 0:
            raise ValueError("masking geometry needs nonnegative distance and positive semi-axes")
        if self.masking_distance_x > 2 * self.oval_ax:
            raise ValueError("masking distance cannot exceed the oval width")
        if self.oval_ay >= self.row_pitch:
            raise ValueError("oval must not span two rows")


@dataclass
class Move:
    """One Ω action.

    ``relocations`` lists ``(cell, from_slot, to_slot)``; the first entry is
    the CAP cell being brought next to ``anchor``, which stays put. A
    transfer fills the vacant ``to_slot``; a swap exchanges two cells.
    """
    kind: str
    cap: tuple[str, str]
    relocations: tuple[tuple[str, Slot, Slot], ...]
    anchor: tuple[str, Slot]
    dfp: float = float("nan")
    dser: float = float("nan")
    dwl: float = float("nan")

    def __post_init__(self):
        if not self.relocations:
            raise ValueError("a move relocates at least one cell")
        if self.kind not in (TRANSFER, SWAP):
            raise ValueError(f"unknown move kind {self.kind!r}")

    @property
    def mover(self) -> str:
        return self.relocations[0][0]

    @property
    def sub_cells(self) -> list[tuple[str | None, Slot]]:
        """Operands expected before the move: mover at its source, target occupant."""
        cell, src, dst = self.relocations[0]
        occupant = self.relocations[1][0] if self.kind == SWAP else VACANT
        return [(cell, src), (occupant, dst)]

    @property
    def super_pair(self) -> list[tuple[str, Slot]]:
        """The CAP after the move: anchor in place, mover at the target."""
        return [self.anchor, (self.relocations[0][0], self.relocations[0][2])]

    @property
    def key(self) -> tuple:
        return (self.kind, self.cap, tuple((c, s, d) for c, s, d in self.relocations))


@dataclass
class AffectedSet:
    center: Slot
    pairs: list[tuple[str, str]]


@dataclass
class Budget:
    ser_total: float
    wl_total: float
    dser_max: float = 0.1
    dwl_max: float = 0.1
    spent_ser: float = 0.0
    spent_wl: float = 0.0

    def __post_init__(self):
        if self.dser_max < 0 or self.dwl_max < 0:
            raise ValueError("budget fractions must be nonnegative")

    @property
    def ser_left(self) -> float:
        return max(0.0, self.dser_max * self.ser_total - self.spent_ser)

    @property
    def wl_left(self) -> float:
        return max(0.0, self.dwl_max * self.wl_total - self.spent_wl)

    def fits(self, dser: float, dwl: float) -> bool:
        return max(dser, 0.0) <= self.ser_left + _TOL * max(1.0, self.ser_total) and \
            max(dwl, 0.0) <= self.wl_left + _TOL * max(1.0, self.wl_total)

    def charge(self, dser: float, dwl: float) -> None:
        self.spent_ser += max(dser, 0.0)
        self.spent_wl += max(dwl, 0.0)

    @property
    def exhausted(self) -> bool:
        return self.ser_left <= 0 or self.wl_left <= 0


@dataclass
class DetailedConfig:
    dser_max: float = 0.1
    dwl_max: float = 0.1
    masking_distance_x: float = 2.0
    oval_ax: float = 2.0
    oval_ay: float = 0.4
    max_iters: int = 10
    retry_limit: int = 3
    jfp_trials: int = 2000
    seed: int = 0
    mcks_mode: str = "auto"

    def __post_init__(self):
        if self.max_iters < 1 or self.retry_limit < 0:
            raise ValueError("max_iters must be >= 1 and retry_limit >= 0")
        if self.mcks_mode not in ("auto", "relaxed", "exact"):
            raise ValueError(f"unknown mcks_mode {self.mcks_mode!r}")

    @property
    def geometry(self) -> MaskingGeometry:
        return MaskingGeometry(self.masking_distance_x, self.oval_ax, self.oval_ay)


class PlacementState:
    """Mutable legal placement on integer sites, indexed by row."""

    def __init__(self, p: Placement):
        if p.row is None:
            raise ValueError("detailed placement needs a legalized placement")
        self.die = p.die
        self.cell_ids = p.cell_ids
        self.width = {c: int(w) for c, w in zip(p.cell_ids, p.widths)}
        self.slot: dict[str, Slot] = {}
        self.rows: list[list[tuple[int, str]]] = [[] for _ in range(p.die.rows)]
        for c, r, left in zip(p.cell_ids, p.row, np.rint(p.left).astype(int)):
            self.slot[c] = (int(r), int(left))
            self.rows[int(r)].append((int(left), c))
        for row in self.rows:
            row.sort()

    def to_placement(self) -> Placement:
        rows = np.array([self.slot[c][0] for c in self.cell_ids])
        left = np.array([self.slot[c][1] for c in self.cell_ids], dtype=float)
        w = np.array([self.width[c] for c in self.cell_ids])
        return Placement(self.cell_ids, left + w / 2.0, (rows + 0.5) * self.die.row_height,
                         w, self.die, rows)

    def centre(self, cid: str, slot: Slot | None = None) -> tuple[float, float]:
        r, left = slot or self.slot[cid]
        return left + self.width[cid] / 2.0, (r + 0.5) * self.die.row_height

    def is_free(self, row: int, left: int, width: int, ignore: frozenset = frozenset()) -> bool:
        if row < 0 or row >= self.die.rows or left < 0 or left + width > self.die.width:
            return False
        for l2, c in self.rows[row]:
            if c in ignore:
                continue
            if l2 < left + width and left < l2 + self.width[c]:
                return False
        return True

    def neighbours(self, cid: str) -> list[str]:
        """Immediate left and right neighbours of ``cid`` in its row."""
        r, left = self.slot[cid]
        row = self.rows[r]
        k = bisect.bisect_left(row, (left, cid))
        out = []
        if k > 0:
            out.append(row[k - 1][1])
        if k + 1 < len(row):
            out.append(row[k + 1][1])
        return out

    def occupant(self, slot: Slot, width: int) -> str | None:
        """The cell exactly filling ``slot`` (``None`` if vacant)."""
        r, left = slot
        for l2, c in self.rows[r]:
            if l2 == left and self.width[c] == width:
                return c
        return None

    def apply(self, relocations) -> None:
        for cell, src, _ in relocations:
            self.rows[src[0]].remove((src[1], cell))
        for cell, _, dst in relocations:
            bisect.insort(self.rows[dst[0]], (dst[1], cell))
            self.slot[cell] = dst

    def gap(self, a: str, b: str) -> float:
        (ra, la), (rb, lb) = self.slot[a], self.slot[b]
        if ra != rb:
            return float("inf")
        return max(0, lb - (la + self.width[a]), la - (lb + self.width[b]))


def within_masking(state: PlacementState, a: str, b: str, geom: MaskingGeometry) -> bool:
    return state.gap(a, b) <= geom.masking_distance_x


def masked_pairs_near(state: PlacementState, moved: dict[str, Slot],
                      geom: MaskingGeometry) -> set[tuple[str, str]]:
    """Within-masking pairs touching a moved cell, with ``moved`` applied hypothetically."""
    rows = {s[0] for s in moved.values()}
    out = set()
    for r in rows:
        members = [(left, c) for left, c in state.rows[r] if c not in moved]
        members += [(s[1], c) for c, s in moved.items() if s[0] == r]
        members.sort()
        for i, (la, a) in enumerate(members):
            ra = la + state.width[a]
            for lb, b in members[i + 1:]:
                if lb - ra > geom.masking_distance_x:
                    break
                if a in moved or b in moved:
                    out.add((a, b) if a < b else (b, a))
    return out


def all_masked_pairs(state: PlacementState, geom: MaskingGeometry) -> set[tuple[str, str]]:
    out = set()
    for row in state.rows:
        for i, (la, a) in enumerate(row):
            ra = la + state.width[a]
            for lb, b in row[i + 1:]:
                if lb - ra > geom.masking_distance_x:
                    break
                out.add((a, b) if a < b else (b, a))
    return out


class PairValues:
    """JFP bookkeeping on a fixed threshold-voltage snapshot.

    ``value(a, b)`` is the failure of a shared strike on the pair minus the
    failure of two separate strikes, so within-masking pairs add it to the
    total and others contribute nothing.
    """

    def __init__(self, env: SerModel, vth: np.ndarray):
        self.env = env
        self.vth = np.asarray(vth, dtype=float)
        self.fps = env.cell_fps(self.vth)
        self._cache: dict[tuple[str, str], float] = {}

    def jfp(self, a: str, b: str):
        return self.env.pair_jfp(a, b, self.vth, self.fps)

    def value(self, a: str, b: str) -> float:
        key = (a, b) if a < b else (b, a)
        v = self._cache.get(key)
        if v is None:
            idx = self.env.netlist.index
            pf = self.jfp(*key)
            v = pf.fp - self.fps[idx[key[0]]] - self.fps[idx[key[1]]]
            self._cache[key] = v
        return v

    def total(self, pairs) -> float:
        return float(sum(self.value(a, b) for a, b in sorted(pairs)))


def identify_caps(n: Netlist, sens, env: SerModel, vth=None, pairs: PairValues | None = None) -> list[Cap]:
    """CAPs among sensitive cells and their direct fanin/fanout neighbours."""
    if not sens:
        return []
    v = env._vth(vth)
    fps = pairs.fps if pairs is not None else env.cell_fps(v)
    seen = set()
    out = []
    for s in sorted(sens):
        for t in n.neighbors(s):
            key = (s, t) if s < t else (t, s)
            if key in seen:
                continue
            seen.add(key)
            pf = env.pair_jfp(key[0], key[1], v, fps)
            if is_cap(pf, pf.ind):
                out.append(Cap(key[0], key[1], pf.fp, pf.ind))
    return sorted(out, key=lambda c: (c.a, c.b))


def enumerate_moves(state: PlacementState, caps, geom: MaskingGeometry) -> dict[tuple[str, str], list[Move]]:
    """Candidate moves per CAP (an empty list means only the null move)."""
    cms: dict[tuple[str, str], list[Move]] = {}
    for cap in caps:
        a, b = cap.cells
        moves: list[Move] = []
        if not within_masking(state, a, b, geom):
            for mover, partner in ((a, b), (b, a)):
                moves += _transfers(state, mover, partner, cap.cells)
                moves += _swaps(state, mover, partner, cap.cells, geom)
        uniq = {}
        for m in moves:
            uniq.setdefault(m.key, m)
        cms[cap.cells] = [uniq[k] for k in sorted(uniq)]
    return cms


def _transfers(state: PlacementState, mover: str, partner: str, cap) -> list[Move]:
    w = state.width[mover]
    r, left = state.slot[partner]
    pw = state.width[partner]
    out = []
    for dst_left in (left - w, left + pw):
        if state.is_free(r, dst_left, w, frozenset({mover})):
            dst = (r, dst_left)
            if dst != state.slot[mover]:
                out.append(Move(TRANSFER, cap, ((mover, state.slot[mover], dst),),
                                (partner, state.slot[partner])))
    return out


def _swaps(state: PlacementState, mover: str, partner: str, cap, geom: MaskingGeometry) -> list[Move]:
    out = []
    for other in state.neighbours(partner):
        if other in (mover, partner) or state.width[other] != state.width[mover]:
            continue
        if state.gap(other, partner) > geom.masking_distance_x:
            continue
        src, dst = state.slot[mover], state.slot[other]
        out.append(Move(SWAP, cap, ((mover, src, dst), (other, dst, src)),
                        (partner, state.slot[partner])))
    return out


def affected_sets(state: PlacementState, move: Move, geom: MaskingGeometry) -> list[AffectedSet]:
    """Pairs whose masking status changes, grouped by the nearer end of the move."""
    src = {c: s for c, s, _ in move.relocations}
    dst = {c: d for c, _, d in move.relocations}
    before = masked_pairs_near(state, src, geom)
    after = masked_pairs_near(state, dst, geom)
    centres = (move.relocations[0][1], move.relocations[0][2])
    sets = [AffectedSet(centres[0], []), AffectedSet(centres[1], [])]
    for pair in sorted(before ^ after):
        where = src if pair in before else dst
        slots = [where.get(c, state.slot[c]) for c in pair]
        dist = [min(abs(s[0] - ctr[0]) * state.die.width + abs(s[1] - ctr[1]) for s in slots)
                for ctr in centres]
        sets[int(dist[1] < dist[0])].pairs.append(pair)
    return sets


def delta_fp(state: PlacementState, move: Move, pairs: PairValues, geom: MaskingGeometry) -> float:
    before = masked_pairs_near(state, {c: s for c, s, _ in move.relocations}, geom)
    after = masked_pairs_near(state, {c: d for c, _, d in move.relocations}, geom)
    return pairs.total(after - before) - pairs.total(before - after)


class SerDelta:
    """Own-SER change of relocated cells when their fragment changes."""

    def __init__(self, env: SerModel, grid, vth0: np.ndarray):
        self.env = env
        self.grid = grid
        self.vth0 = np.asarray(vth0, dtype=float)
        self.ser0 = env.ser_from_fp(env.cell_fps(self.vth0))
        self.mel0 = env.mel(self.vth0)

    def vth_at(self, state: PlacementState, cid: str, slot: Slot) -> float:
        from .placement import fragment_index
        x, y = state.centre(cid, slot)
        fx, fy = fragment_index(x, y, state.die, self.grid.n)
        return float(self.grid.values[fy, fx])

    def cell_ser(self, state: PlacementState, cid: str, slot: Slot) -> float:
        i = self.env.netlist.index[cid]
        v = self.vth0.copy()
        v[i] = self.vth_at(state, cid, slot)
        return float(self.ser0[i] * self.env.mel(v)[i] / self.mel0[i])

    def delta(self, state: PlacementState, move: Move) -> float:
        return float(sum(self.cell_ser(state, c, d) - self.cell_ser(state, c, s)
                         for c, s, d in move.relocations))


def delta_ser(state: PlacementState, move: Move, sd: SerDelta) -> float:
    return sd.delta(state, move)


def delta_wl(state: PlacementState, move: Move, geo: NetGeometry, index: dict[str, int]) -> float:
    moved = {index[c]: state.centre(c, d) for c, _, d in move.relocations}
    nets = sorted({k for i in moved for k in geo.nets_of_cell[i]})
    x = np.array([state.centre(c)[0] for c in state.cell_ids])
    y = np.array([state.centre(c)[1] for c in state.cell_ids])
    before = sum(geo.net_hpwl(k, x, y) for k in nets)
    for i, (cx, cy) in moved.items():
        x[i], y[i] = cx, cy
    after = sum(geo.net_hpwl(k, x, y) for k in nets)
    return float(after - before)


def select_moves(cms: dict[tuple[str, str], list[Move]], budget: Budget,
                 mode: str = "auto") -> list[Move]:
    """Knapsack selection: one move or nothing per CAP, within remaining budgets."""
    groups, payload = [], []
    for cap in sorted(cms):
        opts = [m for m in cms[cap] if m.dfp < 0]
        if not opts:
            continue
        groups.append([Option(0.0)] + [Option(-m.dfp, max(m.dser, 0.0), max(m.dwl, 0.0), m)
                                       for m in opts])
        payload.append(opts)
    if not groups:
        return []
    inst = McksInstance(groups, budget.ser_left, budget.wl_left)
    if mode == "auto":
        mode = "exact" if len(groups) <= EXACT_MAX_GROUPS else "relaxed"
    sel = solve_mcks(inst, mode)
    return [groups[i][j].payload for i, j in enumerate(sel) if j != 0]


def triple_condition(move: Move, state: PlacementState) -> bool:
    """Both subscript operands in place and at least one superscript cell in place."""
    (cell, src), (occupant, dst) = move.sub_cells
    if state.slot.get(cell) != src:
        return False
    w = state.width[cell]
    if occupant is VACANT:
        if not state.is_free(dst[0], dst[1], w, frozenset({cell})):
            return False
    elif state.slot.get(occupant) != dst:
        return False
    return any(state.slot.get(c) == s for c, s in move.super_pair)


@dataclass
class LogEntry:
    iter: int
    move: Move
    applied: bool


@dataclass
class DetailedResult:
    placement: Placement
    log: list[LogEntry] = field(default_factory=list)
    budget: Budget | None = None
    caps: list[Cap] = field(default_factory=list)
    iterations: int = 0
    fp_change: float = 0.0

    def applied(self) -> list[Move]:
        return [e.move for e in self.log if e.applied]

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "kind", "cells", "from", "to", "dfp", "dser", "dwl", "applied"])
        for e in self.log:
            m = e.move
            w.writerow([e.iter, m.kind, " ".join(c for c, _, _ in m.relocations),
                        " ".join(f"{s[0]}:{s[1]}" for _, s, _ in m.relocations),
                        " ".join(f"{d[0]}:{d[1]}" for _, _, d in m.relocations),
                        repr(float(m.dfp)), repr(float(m.dser)), repr(float(m.dwl)), int(e.applied)])
        return buf.getvalue()


def _annotate(state, move, pairs, sd, geo, index, geom):
    move.dfp = delta_fp(state, move, pairs, geom)
    move.dser = delta_ser(state, move, sd)
    move.dwl = delta_wl(state, move, geo, index)


def run_detailed(n: Netlist, p0: Placement, env: SerModel, grid, sens,
                 cfg: DetailedConfig | None = None) -> DetailedResult:
    """Iterate CAP moves on a legal placement until nothing more is gained."""
    from .placement import resolve_vth
    cfg = cfg or DetailedConfig()
    geom = cfg.geometry
    state = PlacementState(p0)
    vth0 = resolve_vth(p0, grid)
    pairs = PairValues(env, vth0)
    sd = SerDelta(env, grid, vth0)
    geo = NetGeometry(n, p0.die)
    index = n.index
    budget = Budget(float(sd.ser0.sum()), geo.hpwl(p0.x, p0.y), cfg.dser_max, cfg.dwl_max)
    caps = identify_caps(n, sens, env, vth0, pairs)
    result = DetailedResult(p0.copy(), budget=budget, caps=caps)
    not_moved = list(caps)
    retries: Counter = Counter()
    for it in range(1, cfg.max_iters + 1):
        result.iterations = it
        if not not_moved or budget.exhausted:
            break
        cms = enumerate_moves(state, not_moved, geom)
        for moves in cms.values():
            for m in moves:
                _annotate(state, m, pairs, sd, geo, index, geom)
        chosen = select_moves(cms, budget, cfg.mcks_mode)
        chosen.sort(key=lambda m: (m.dfp, m.key))
        applied = 0
        retry: list[Cap] = []
        by_cells = {c.cells: c for c in not_moved}
        done = set()
        for m in chosen:
            ok = triple_condition(m, state)
            if ok:
                _annotate(state, m, pairs, sd, geo, index, geom)
                ok = m.dfp < 0 and budget.fits(m.dser, m.dwl)
            if ok:
                state.apply(m.relocations)
                budget.charge(m.dser, m.dwl)
                result.fp_change += m.dfp
                applied += 1
                done.add(m.cap)
            else:
                retries[m.cap] += 1
                if retries[m.cap] <= cfg.retry_limit:
                    retry.append(by_cells[m.cap])
            result.log.append(LogEntry(it, m, ok))
        not_moved = [c for c in retry if c.cells not in done]
        if applied == 0:
            break
    result.placement = state.to_placement()
    return result
