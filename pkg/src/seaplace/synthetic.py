"""Seeded synthetic circuits for experiments and tests."""
from __future__ import annotations

import math

import numpy as np

from .netlist import Cell, GateKind, Netlist, load_library

DEFAULT_MIX = {"INV": 0.14, "BUF": 0.04, "NAND2": 0.24, "NOR2": 0.18,
               "AND2": 0.12, "OR2": 0.12, "XOR2": 0.16}


def random_circuit(n_cells: int, seed: int = 0, n_inputs: int | None = None,
                   depth: int | None = None, spread: int = 3,
                   mix: dict[str, float] | None = None,
                   library: dict[str, GateKind] | None = None) -> Netlist:
    """Generate a random levelized combinational circuit.

    Cells are spread over ``depth`` levels. Input pin 0 of a cell reads a net
    from the previous level, the remaining pins read any earlier level; all
    picks stay within ``spread`` positions of the cell's relative position, so
    the circuit has the local structure of a synthesized block. Outputs that
    nobody reads become primary outputs.
    """
    if n_cells < 1:
        raise ValueError("n_cells must be >= 1")
    rng = np.random.default_rng(seed)
    lib = library or load_library()
    mix = mix or DEFAULT_MIX
    names = sorted(mix)
    weights = np.array([mix[k] for k in names], dtype=float)
    weights /= weights.sum()
    n_inputs = n_inputs or max(2, n_cells // 10)
    depth = depth or max(2, min(n_cells, round(2 * math.log2(n_cells + 1))))
    width = len(str(n_cells))

    pis = [f"in{i}" for i in range(n_inputs)]
    levels: list[list[str]] = [pis]
    bounds = np.linspace(0, n_cells, depth + 1).round().astype(int)
    used: set[str] = set()
    cells = []

    def pick(level: list[str], rel: float, exclude: list[str]) -> str:
        centre = int(rel * len(level))
        lo, hi = max(0, centre - spread), min(len(level), centre + spread + 1)
        pool = [x for x in level[lo:hi] if x not in exclude] or \
               [x for x in level if x not in exclude]
        fresh = [x for x in pool if x not in used]
        if fresh and rng.random() < 0.5:
            pool = fresh
        return pool[rng.integers(len(pool))] if pool else ""

    i = 0
    for lv in range(depth):
        count = bounds[lv + 1] - bounds[lv]
        outs = []
        for j in range(count):
            rel = (j + 0.5) / count
            kind = lib[names[rng.choice(len(names), p=weights)]]
            fanin: list[str] = []
            for k in range(kind.input_count):
                src = levels[-1] if k == 0 else levels[rng.integers(len(levels))]
                net = pick(src, rel, fanin)
                if not net:
                    flat = [x for lvl in levels for x in lvl if x not in fanin]
                    net = flat[rng.integers(len(flat))]
                fanin.append(net)
                used.add(net)
            cid, out = f"g{i:0{width}d}", f"n{i:0{width}d}"
            cells.append(Cell(cid, kind, tuple(fanin), out))
            outs.append(out)
            i += 1
        if outs:
            levels.append(outs)
    # a primary input nobody consumed gets a buffer so every net has a sink
    for j, pi in enumerate(p for p in pis if p not in used):
        cid, out = f"gb{j}", f"nb{j}"
        cells.append(Cell(cid, lib["BUF"], (pi,), out))
    sinks = {x for c in cells for x in c.fanin}
    pos = [c.fanout for c in cells if c.fanout not in sinks]
    return Netlist(cells, pis, pos, lib)
