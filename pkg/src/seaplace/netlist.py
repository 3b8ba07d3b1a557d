"""Gate-level combinational netlists.

A netlist is a DAG of single-output library cells connected by nets. Each net
has exactly one driver (a cell output or a primary input) and at least one
sink (a cell input pin or a primary output).
"""
from __future__ import annotations

import heapq
import json
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np


class NetlistError(ValueError):
    """Raised when a netlist document is malformed or violates an invariant."""


class NetlistSyntaxError(NetlistError):
    pass


class DanglingNetError(NetlistError):
    pass


class CombinationalCycleError(NetlistError):
    pass


class UnknownGateError(NetlistError):
    pass


@dataclass(frozen=True)
class GateKind:
    name: str
    area: float
    logical_effort: float
    parasitic_delay: float
    input_count: int
    truth_table: tuple[int, ...]

    def __post_init__(self):
        if self.input_count < 1:
            raise NetlistError(f"gate {self.name}: input_count must be >= 1")
        if len(self.truth_table) != 2 ** self.input_count:
            raise NetlistError(
                f"gate {self.name}: truth table needs {2 ** self.input_count} entries, "
                f"got {len(self.truth_table)}")
        if any(v not in (0, 1) for v in self.truth_table):
            raise NetlistError(f"gate {self.name}: truth table entries must be 0/1")
        if self.area < 1:
            raise NetlistError(f"gate {self.name}: area must be >= 1")

    @property
    def width(self) -> int:
        """Footprint in placement sites."""
        return max(1, int(round(self.area)))

    def evaluate(self, bits: Iterable[int]) -> int:
        idx = 0
        for k, b in enumerate(bits):
            idx |= (int(b) & 1) << k
        return self.truth_table[idx]

    def to_dict(self) -> dict:
        return {"name": self.name, "area": self.area, "logical_effort": self.logical_effort,
                "parasitic_delay": self.parasitic_delay, "inputs": self.input_count,
                "truth_table": list(self.truth_table)}


@dataclass(frozen=True)
class Cell:
    id: str
    kind: GateKind
    fanin: tuple[str, ...]
    fanout: str


@dataclass
class Net:
    id: str
    driver: str | None
    sinks: list[str]
    is_input: bool = False
    is_output: bool = False


def _gate_from_dict(d: Mapping) -> GateKind:
    try:
        return GateKind(
            name=str(d["name"]),
            area=float(d["area"]),
            logical_effort=float(d["logical_effort"]),
            parasitic_delay=float(d["parasitic_delay"]),
            input_count=int(d["inputs"]),
            truth_table=tuple(int(v) for v in d["truth_table"]),
        )
    except KeyError as exc:
        raise NetlistError(f"library entry missing field {exc}") from None


def load_library(path: str | Path | None = None) -> dict[str, GateKind]:
    """Load a gate library file; ``None`` loads the bundled default library."""
    if path is None:
        text = resources.files("seaplace.data").joinpath("default_library.json").read_text()
    else:
        text = Path(path).read_text()
    doc = json.loads(text)
    entries = doc["library"] if isinstance(doc, dict) else doc
    return {g.name: g for g in map(_gate_from_dict, entries)}


class Netlist:
    """Validated, immutable combinational netlist.

    Cells keep document order in ``cell_ids``; ``index`` maps ids to positions
    used by the array-based analyses downstream.
    """

    def __init__(self, cells: Iterable[Cell], primary_inputs: Iterable[str],
                 primary_outputs: Iterable[str], library: Mapping[str, GateKind] | None = None):
        self.cells: dict[str, Cell] = {}
        for c in cells:
            if c.id in self.cells:
                raise NetlistError(f"duplicate cell id {c.id!r}")
            if len(c.fanin) != c.kind.input_count:
                raise NetlistError(
                    f"cell {c.id}: {c.kind.name} takes {c.kind.input_count} inputs, got {len(c.fanin)}")
            self.cells[c.id] = c
        self.primary_inputs = tuple(primary_inputs)
        self.primary_outputs = tuple(primary_outputs)
        self.library = dict(library) if library is not None else {
            c.kind.name: c.kind for c in self.cells.values()}
        self.cell_ids = tuple(self.cells)
        self.index = {cid: i for i, cid in enumerate(self.cell_ids)}
        self.nets = self._build_nets()
        self._order = self._check_acyclic()

    def _build_nets(self) -> dict[str, Net]:
        nets: dict[str, Net] = {}
        for pi in self.primary_inputs:
            if pi in nets:
                raise NetlistError(f"duplicate primary input {pi!r}")
            nets[pi] = Net(pi, None, [], is_input=True)
        for c in self.cells.values():
            net = nets.get(c.fanout)
            if net is not None:
                what = "a primary input" if net.is_input else f"cell {net.driver}"
                raise NetlistError(f"net {c.fanout!r} driven by both {what} and cell {c.id}")
            nets[c.fanout] = Net(c.fanout, c.id, [])
        for c in self.cells.values():
            for n in c.fanin:
                if n not in nets:
                    raise DanglingNetError(f"cell {c.id} reads undriven net {n!r}")
                nets[n].sinks.append(c.id)
        for po in self.primary_outputs:
            if po not in nets:
                raise DanglingNetError(f"primary output {po!r} is not driven")
            nets[po].is_output = True
        for net in nets.values():
            if not net.sinks and not net.is_output:
                raise DanglingNetError(f"net {net.id!r} has no sinks")
        return nets

    def _check_acyclic(self) -> tuple[str, ...]:
        indeg = {cid: 0 for cid in self.cell_ids}
        for c in self.cells.values():
            for n in c.fanin:
                if self.nets[n].driver is not None:
                    indeg[c.id] += 1
        heap = [cid for cid, d in indeg.items() if d == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            cid = heapq.heappop(heap)
            order.append(cid)
            for s in self.nets[self.cells[cid].fanout].sinks:
                indeg[s] -= 1
                if indeg[s] == 0:
                    heapq.heappush(heap, s)
        if len(order) != len(self.cell_ids):
            stuck = sorted(cid for cid, d in indeg.items() if d > 0)
            raise CombinationalCycleError(f"combinational cycle through cells {stuck[:10]}")
        return tuple(order)

    def __len__(self) -> int:
        return len(self.cell_ids)

    def __repr__(self) -> str:
        return (f"Netlist(cells={len(self.cells)}, nets={len(self.nets)}, "
                f"pi={len(self.primary_inputs)}, po={len(self.primary_outputs)})")

    def fanin_cells(self, cid: str) -> list[str]:
        out = []
        for n in self.cells[cid].fanin:
            d = self.nets[n].driver
            if d is not None and d not in out:
                out.append(d)
        return out

    def fanout_cells(self, cid: str) -> list[str]:
        return list(dict.fromkeys(self.nets[self.cells[cid].fanout].sinks))

    def neighbors(self, cid: str) -> list[str]:
        """Cells adjacent to ``cid`` through a fanin or fanout connection."""
        return sorted(set(self.fanin_cells(cid)) | set(self.fanout_cells(cid)))

    def fanout_count(self, cid: str) -> int:
        """Number of sink pins on the cell's output, counting a primary output as one."""
        net = self.nets[self.cells[cid].fanout]
        return len(net.sinks) + int(net.is_output)

    @cached_property
    def areas(self) -> np.ndarray:
        return np.array([self.cells[c].kind.area for c in self.cell_ids], dtype=float)

    @cached_property
    def widths(self) -> np.ndarray:
        return np.array([self.cells[c].kind.width for c in self.cell_ids], dtype=int)

    @cached_property
    def depth(self) -> int:
        level: dict[str, int] = {}
        for cid in self._order:
            preds = [level[d] for d in self.fanin_cells(cid)]
            level[cid] = 1 + max(preds, default=0)
        return max(level.values(), default=0)

    def hyperedges(self) -> list[tuple[str, list[str], bool, bool]]:
        """Nets as ``(net_id, cell_pins, has_input_pad, has_output_pad)``.

        ``cell_pins`` lists each connected cell once, driver first.
        """
        out = []
        for net in self.nets.values():
            cells = [net.driver] if net.driver is not None else []
            cells += [s for s in dict.fromkeys(net.sinks) if s != net.driver]
            out.append((net.id, cells, net.is_input, net.is_output))
        return out

    def to_dict(self) -> dict:
        used = {c.kind.name for c in self.cells.values()}
        return {
            "library": [self.library[name].to_dict() for name in sorted(used)],
            "cells": [{"id": c.id, "kind": c.kind.name, "fanin": list(c.fanin), "fanout": c.fanout}
                      for c in self.cells.values()],
            "primary_inputs": list(self.primary_inputs),
            "primary_outputs": list(self.primary_outputs),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def parse_netlist(text: str, library: Mapping[str, GateKind] | None = None) -> Netlist:
    """Parse a JSON netlist document.

    Gate kinds come from the document's ``library`` section; kinds it does not
    define fall back to ``library`` (default: the bundled library).
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetlistSyntaxError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise NetlistSyntaxError("line 1: netlist document must be a JSON object")
    lib = dict(library if library is not None else load_library())
    for entry in doc.get("library", []):
        g = _gate_from_dict(entry)
        lib[g.name] = g
    cells = []
    for raw in doc.get("cells", []):
        try:
            kind_name, cid = raw["kind"], str(raw["id"])
            fanin, fanout = tuple(str(n) for n in raw["fanin"]), str(raw["fanout"])
        except (KeyError, TypeError) as exc:
            raise NetlistError(f"malformed cell entry {raw!r}: {exc}") from None
        if kind_name not in lib:
            raise UnknownGateError(f"cell {cid}: unknown gate kind {kind_name!r}")
        cells.append(Cell(cid, lib[kind_name], fanin, fanout))
    return Netlist(cells, [str(n) for n in doc.get("primary_inputs", [])],
                   [str(n) for n in doc.get("primary_outputs", [])], lib)


def read_netlist(path: str | Path, library: Mapping[str, GateKind] | None = None) -> Netlist:
    return parse_netlist(Path(path).read_text(), library)


def topo_order(n: Netlist) -> list[str]:
    """Cells in topological order, ties broken by lexicographic id."""
    return list(n._order)


def forward_cone(n: Netlist, cid: str) -> set[str]:
    """All cells reachable from the output of ``cid`` (excluding ``cid``)."""
    if cid not in n.cells:
        raise KeyError(f"unknown cell {cid!r}")
    seen: set[str] = set()
    queue = deque(n.fanout_cells(cid))
    while queue:
        c = queue.popleft()
        if c in seen:
            continue
        seen.add(c)
        queue.extend(n.fanout_cells(c))
    seen.discard(cid)
    return seen


def _input_weights(p: np.ndarray, k: int) -> np.ndarray:
    """Probability of each of the 2**k input vectors under independent inputs."""
    w = np.ones(1)
    for i in range(k):
        # vector index bit i is input i: extend as [bit=0 block, bit=1 block]
        w = np.concatenate([w * (1.0 - p[i]), w * p[i]])
    return w


def gate_output_probability(kind: GateKind, input_probs) -> float:
    p = np.asarray(input_probs, dtype=float)
    return float(_input_weights(p, kind.input_count) @ np.asarray(kind.truth_table, dtype=float))


def sensitization_probability(kind: GateKind, pin: int, input_probs) -> float:
    """Probability that a flip on input ``pin`` flips the gate output.

    Side inputs are treated as independent with the given signal probabilities.
    """
    p = np.asarray(input_probs, dtype=float)
    tt = kind.truth_table
    total = 0.0
    k = kind.input_count
    for idx in range(2 ** k):
        if idx >> pin & 1:
            continue
        if tt[idx] == tt[idx | (1 << pin)]:
            continue
        w = 1.0
        for j in range(k):
            if j != pin:
                w *= p[j] if idx >> j & 1 else 1.0 - p[j]
        total += w
    return total


def signal_probabilities(n: Netlist, pi_probs: Mapping[str, float] | float = 0.5) -> dict[str, float]:
    """Probability of logic 1 on every net, assuming independent fanins."""
    if isinstance(pi_probs, (int, float)):
        pi_probs = {pi: float(pi_probs) for pi in n.primary_inputs}
    probs: dict[str, float] = {}
    for pi in n.primary_inputs:
        if pi not in pi_probs:
            raise KeyError(f"no probability for primary input {pi!r}")
        v = float(pi_probs[pi])
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"probability for {pi!r} outside [0, 1]: {v}")
        probs[pi] = v
    for cid in n._order:
        c = n.cells[cid]
        v = gate_output_probability(c.kind, [probs[x] for x in c.fanin])
        probs[c.fanout] = min(1.0, max(0.0, v))
    return probs


def simulate(n: Netlist, pi_values: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Bit-parallel logic simulation: each primary input maps to a bool vector."""
    values = {pi: np.asarray(pi_values[pi], dtype=bool) for pi in n.primary_inputs}
    for cid in n._order:
        c = n.cells[cid]
        tt = np.asarray(c.kind.truth_table, dtype=bool)
        idx = np.zeros(values[c.fanin[0]].shape, dtype=np.int64)
        for k, net in enumerate(c.fanin):
            idx |= values[net].astype(np.int64) << k
        values[c.fanout] = tt[idx]
    return values
