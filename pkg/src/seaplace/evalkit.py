"""Placement evaluation: Monte Carlo MET failure probability, SET SER, HPWL, delay."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .netlist import Netlist
from .placement import NetGeometry, Placement, resolve_vth
from .sermodel import SerModel

BLOCK = 10_000
METRICS = ("met_fp", "set_ser", "hpwl", "crit_delay")
SURROGATE_NOTE = ("met_fp is a surrogate: uniform strike centres, oval footprint, "
                  "at most two struck cells evaluated per strike")


@dataclass(frozen=True)
class StrikeModel:
    trials: int = 100_000
    oval_ax: float = 2.0
    oval_ay: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.oval_ax <= 0 or self.oval_ay <= 0:
            raise ValueError("oval semi-axes must be positive")


@dataclass
class EvalReport:
    met_fp: float
    set_ser: float
    hpwl: float
    crit_delay: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.met_fp <= 1.0:
            raise ValueError("met_fp must be a probability")

    def metrics(self) -> dict[str, float]:
        return {m: getattr(self, m) for m in METRICS}

    def to_json(self, baseline: "EvalReport | None" = None) -> str:
        doc = {"metrics": self.metrics(), "note": SURROGATE_NOTE, "provenance": self.provenance}
        if baseline is not None:
            doc["baseline"] = baseline.metrics()
            doc["reduction_percent"] = compare(self, baseline)
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def csv_row(self, label: str = "") -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow([label] + [repr(float(v)) for v in self.metrics().values()])
        return buf.getvalue()


def csv_header() -> str:
    return ",".join(("label",) + METRICS) + "\n"


def _strikes(sm: StrikeModel, width: float, height: float):
    """Strike centres in fixed-size blocks, each block with its own sub-seed."""
    n_blocks = -(-sm.trials // BLOCK)
    seeds = np.random.SeedSequence(sm.seed).spawn(n_blocks)
    for b, ss in enumerate(seeds):
        size = min(BLOCK, sm.trials - b * BLOCK)
        u = np.random.default_rng(ss).random((size, 2))
        yield u[:, 0] * width, u[:, 1] * height


def met_failure_probability(n: Netlist, p: Placement, env: SerModel, sm: StrikeModel,
                            vth=None, fps: np.ndarray | None = None) -> float:
    """Mean failure probability of one particle strike at a uniform random point.

    Each trial contributes the failure probability of the struck cells
    (the cell's FP for one, the pair JFP for two, the nearest two otherwise),
    which has the same mean as sampling the failure itself but less noise.
    """
    if p.row is None:
        raise ValueError("evaluation needs a legalized placement")
    v = env._vth(vth)
    fps = env.cell_fps(v) if fps is None else np.asarray(fps, dtype=float)
    die = p.die
    rh = die.row_height
    left, right = p.left, p.left + p.widths
    rows = []
    for r in range(die.rows):
        idx = np.flatnonzero(p.row == r)
        idx = idx[np.argsort(left[idx], kind="stable")]
        rows.append((idx, left[idx], right[idx]))
    pair_cache: dict[tuple[int, int], float] = {}
    ids = n.cell_ids

    def pair_value(i: int, j: int) -> float:
        key = (i, j) if i < j else (j, i)
        val = pair_cache.get(key)
        if val is None:
            val = env.pair_jfp(ids[key[0]], ids[key[1]], v, fps).fp
            pair_cache[key] = val
        return val

    total = 0.0
    for sx, sy in _strikes(sm, die.width, die.height):
        r = np.minimum((sy // rh).astype(int), die.rows - 1)
        dy = sy - (r + 0.5) * rh
        inside = np.abs(dy) <= sm.oval_ay
        hw = np.zeros_like(sx)
        hw[inside] = sm.oval_ax * np.sqrt(1.0 - (dy[inside] / sm.oval_ay) ** 2)
        for row in np.unique(r[inside]):
            t = np.flatnonzero(inside & (r == row))
            idx, lo_edge, hi_edge = rows[row]
            if idx.size == 0:
                continue
            lo = np.searchsorted(hi_edge, sx[t] - hw[t], side="left")
            hi = np.searchsorted(lo_edge, sx[t] + hw[t], side="right")
            count = hi - lo
            one = count == 1
            total += float(fps[idx[lo[one]]].sum())
            for k in np.flatnonzero(count >= 2):
                cand = np.arange(lo[k], hi[k])
                dist = np.maximum(0.0, np.maximum(lo_edge[cand] - sx[t[k]], sx[t[k]] - hi_edge[cand]))
                a, b = cand[np.lexsort((cand, dist))[:2]]
                total += pair_value(int(idx[a]), int(idx[b]))
    return total / sm.trials


def single_cell_coverage(width: float, sm: StrikeModel) -> float:
    """Area of strike centres whose oval touches a lone cell of ``width``."""
    return 2.0 * sm.oval_ay * width + np.pi * sm.oval_ax * sm.oval_ay


def critical_delay(n: Netlist, env: SerModel, vth=None) -> float:
    d = env.delays(vth)
    arrival = {}
    for cid in n._order:
        drivers = [n.nets[x].driver for x in n.cells[cid].fanin]
        start = max((arrival[c] for c in drivers if c is not None), default=0.0)
        arrival[cid] = start + d[n.index[cid]]
    return float(max(arrival.values(), default=0.0))


def evaluate(n: Netlist, p: Placement, env: SerModel, sm: StrikeModel | None = None,
             grid=None, provenance: dict | None = None) -> EvalReport:
    sm = sm or StrikeModel()
    vth = resolve_vth(p, grid) if grid is not None else env.nominal_vth()
    return EvalReport(
        met_fp=met_failure_probability(n, p, env, sm, vth),
        set_ser=env.circuit_ser(vth).circuit_ser,
        hpwl=NetGeometry(n, p.die).hpwl(p.x, p.y),
        crit_delay=critical_delay(n, env, vth),
        provenance=dict(provenance or {}, trials=sm.trials, strike_seed=sm.seed),
    )


def compare(a: EvalReport, b: EvalReport) -> dict[str, float | str]:
    """Percent reduction of each metric of ``a`` relative to baseline ``b``."""
    out: dict[str, float | str] = {}
    for m in METRICS:
        base, val = getattr(b, m), getattr(a, m)
        out[m] = "n/a" if base == 0 else 100.0 * (base - val) / base
    return out


def reduction_svg(reductions: dict[str, float | str], title: str = "reduction (%)") -> str:
    """Static bar chart of percent reductions; ``n/a`` entries are drawn empty."""
    names = list(reductions)
    vals = [v if isinstance(v, (int, float)) else 0.0 for v in reductions.values()]
    span = max([abs(v) for v in vals] + [1.0])
    w, h, pad, bar = 120 * len(names) + 40, 260, 20, 60
    mid = h / 2
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">',
             f'<text x="{pad}" y="{pad}" font-size="14">{title}</text>',
             f'<line x1="{pad}" y1="{mid}" x2="{w - pad}" y2="{mid}" stroke="black"/>']
    for k, (name, v) in enumerate(zip(names, vals)):
        x = pad + 20 + 120 * k
        length = (mid - 2 * pad) * v / span
        y = mid - max(length, 0.0)
        parts.append(f'<rect x="{x}" y="{y:.2f}" width="{bar}" height="{abs(length):.2f}" fill="steelblue"/>')
        label = reductions[name]
        text = f"{label:.2f}" if isinstance(label, (int, float)) else str(label)
        parts.append(f'<text x="{x}" y="{h - 8}" font-size="12">{name} {text}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def report_dict(r: EvalReport) -> dict:
    return asdict(r)
