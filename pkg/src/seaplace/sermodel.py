"""Surrogate soft-error model.

Per-cell failure probability is a product of masking factors along the most
permeable path from the struck cell to a primary output:

    FP(c) = P_gen * M_el(c) * max_paths prod_{g on path} M_log(g) * M_el(g)

``M_log`` is the probability that side inputs sensitize the pin the pulse
arrives on, and ``M_el(g) = min(1, w0 / delay(g))`` models pulse attenuation
through slow gates. Gate delay follows the alpha-power law, so a cell sitting
on a high threshold-voltage fragment attenuates pulses more.

Pairs of struck cells whose forward cones interact are evaluated by seeded
Monte Carlo logic simulation with parity-combining fault markers; the
resulting quenching ratio is applied to the analytic independent bound.
"""
from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .netlist import (GateKind, Netlist, forward_cone, sensitization_probability,
                      signal_probabilities, simulate)

HIGH, LOW = "high", "low"


@dataclass(frozen=True)
class DelayModel:
    vdd: float = 1.1
    alpha: float = 1.3
    vth_nominal: float = 0.22

    def __post_init__(self):
        if not 0 < self.vth_nominal < self.vdd:
            raise ValueError("need 0 < vth_nominal < vdd")


def inverter_delay(vth, m: DelayModel):
    """Intrinsic inverter delay in normalized units, vectorized over ``vth``."""
    v = np.asarray(vth, dtype=float)
    if np.any(v <= 0) or np.any(v >= m.vdd):
        raise ValueError(f"vth must lie in (0, vdd={m.vdd})")
    t = m.vdd * (1.0 + v / m.vth_nominal) / (m.vdd - v) ** m.alpha
    return float(t) if t.ndim == 0 else t


def gate_delay(kind: GateKind, fanout_effort: float, vth, m: DelayModel):
    return inverter_delay(vth, m) * (kind.logical_effort + fanout_effort + kind.parasitic_delay)


@dataclass
class CellSer:
    cell: str
    ser: float
    ser_norm: float


@dataclass
class SerReport:
    per_cell: list[CellSer]
    circuit_ser: float
    sensitive: set[str]
    mode: str = HIGH
    fp: np.ndarray | None = field(default=None, repr=False)

    @property
    def ser(self) -> np.ndarray:
        return np.array([c.ser for c in self.per_cell])

    @property
    def ser_norm(self) -> np.ndarray:
        return np.array([c.ser_norm for c in self.per_cell])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cell_id", "ser", "ser_norm", "sensitive"])
        for c in self.per_cell:
            w.writerow([c.cell, repr(c.ser), repr(c.ser_norm), int(c.cell in self.sensitive)])
        return buf.getvalue()


@dataclass(frozen=True)
class PairFp:
    a: str
    b: str
    fp: float
    dependent: bool
    ind: float = float("nan")


def pair_fp_independent(fa: float, fb: float) -> float:
    """Failure probability of two independently propagating error sites."""
    if not (0.0 <= fa <= 1.0 and 0.0 <= fb <= 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    return fa + fb - fa * fb


def is_cap(jfp: PairFp, ind: float) -> bool:
    return jfp.fp < ind


def normalize(values: np.ndarray) -> np.ndarray:
    """Min-max normalization; a constant vector maps to zeros."""
    lo, hi = float(values.min()), float(values.max())
    if hi - lo <= 1e-15 * max(1.0, abs(hi)):
        return np.zeros_like(values, dtype=float)
    return (values - lo) / (hi - lo)


def classify_sensitive(r: SerReport, mode: str = HIGH) -> set[str]:
    """Cells whose SER is at or above (``high``) / at or below (``low``) the mean."""
    if not r.per_cell:
        return set()
    t = r.circuit_ser / len(r.per_cell)
    tol = 1e-12 * max(abs(t), 1e-300)
    if mode == HIGH:
        return {c.cell for c in r.per_cell if c.ser >= t - tol}
    if mode == LOW:
        return {c.cell for c in r.per_cell if c.ser <= t + tol}
    raise ValueError(f"unknown sensitivity mode {mode!r}")


class SerModel:
    """Soft-error evaluation context for one netlist.

    Holds everything that does not depend on placement: signal and
    sensitization probabilities, fanout efforts and the shared Monte Carlo
    input vectors. Placement enters only through a per-cell ``vth`` vector
    ordered like ``netlist.cell_ids``.
    """

    def __init__(self, netlist: Netlist, delay: DelayModel | None = None,
                 pi_probs: Mapping[str, float] | float = 0.5, w0: float = 3.0,
                 strike_rate: float = 1e-3, gen_prob: float = 1.0,
                 jfp_trials: int = 2000, seed: int = 0):
        self.netlist = netlist
        self.delay = delay or DelayModel()
        self.w0 = float(w0)
        self.strike_rate = float(strike_rate)
        self.gen_prob = float(gen_prob)
        self.jfp_trials = int(jfp_trials)
        self.seed = int(seed)
        if isinstance(pi_probs, (int, float)):
            pi_probs = {pi: float(pi_probs) for pi in netlist.primary_inputs}
        self.pi_probs = dict(pi_probs)
        self.probs = signal_probabilities(netlist, self.pi_probs)
        n = netlist
        self._cells = [n.cells[c] for c in n.cell_ids]
        self.effort = np.array([c.kind.logical_effort + n.fanout_count(c.id) + c.kind.parasitic_delay
                                for c in self._cells])
        self.mlog = [np.array([sensitization_probability(c.kind, k, [self.probs[x] for x in c.fanin])
                               for k in range(c.kind.input_count)]) for c in self._cells]
        self.area = n.areas
        self._order = [n.index[c] for c in n._order]
        self._topo_pos = np.empty(len(n), dtype=int)
        self._topo_pos[self._order] = np.arange(len(n))
        self._sinks = [[(n.index[s], n.cells[s].fanin.index(c.fanout)) for s in n.nets[c.fanout].sinks]
                       for c in self._cells]
        self._is_po = np.array([n.nets[c.fanout].is_output for c in self._cells])
        self._cones: dict[int, frozenset[int]] = {}
        self._mc_ready = False
        self._mc_cache: dict[tuple, float] = {}

    # -- analytic part ---------------------------------------------------

    def nominal_vth(self) -> np.ndarray:
        return np.full(len(self.netlist), self.delay.vth_nominal)

    def _vth(self, vth) -> np.ndarray:
        if vth is None:
            return self.nominal_vth()
        if isinstance(vth, Mapping):
            v = self.nominal_vth()
            for cid, val in vth.items():
                v[self.netlist.index[cid]] = val
            return v
        v = np.asarray(vth, dtype=float)
        if v.shape != (len(self.netlist),):
            raise ValueError("vth vector must have one entry per cell")
        return v

    def delays(self, vth=None) -> np.ndarray:
        return inverter_delay(self._vth(vth), self.delay) * self.effort

    def mel(self, vth=None) -> np.ndarray:
        return np.minimum(1.0, self.w0 / self.delays(vth))

    def propagation(self, vth=None) -> np.ndarray:
        """Probability that a pulse on each cell's output reaches a primary output."""
        mel = self.mel(vth)
        t = np.zeros(len(self.netlist))
        for i in reversed(self._order):
            best = 1.0 if self._is_po[i] else 0.0
            for h, pin in self._sinks[i]:
                best = max(best, self.mlog[h][pin] * mel[h] * t[h])
            t[i] = best
        return t

    def cell_fps(self, vth=None) -> np.ndarray:
        v = self._vth(vth)
        return np.clip(self.gen_prob * self.mel(v) * self.propagation(v), 0.0, 1.0)

    def cell_fp(self, cid: str, vth=None) -> float:
        if cid not in self.netlist.index:
            raise KeyError(f"unknown cell {cid!r}")
        return float(self.cell_fps(vth)[self.netlist.index[cid]])

    def ser_from_fp(self, fp: np.ndarray) -> np.ndarray:
        return self.area * self.strike_rate * fp

    def circuit_ser(self, vth=None, mode: str = HIGH) -> SerReport:
        fp = self.cell_fps(vth)
        ser = self.ser_from_fp(fp)
        norm = normalize(ser)
        per = [CellSer(cid, float(s), float(z)) for cid, s, z in zip(self.netlist.cell_ids, ser, norm)]
        r = SerReport(per, float(ser.sum()), set(), mode, fp)
        r.sensitive = classify_sensitive(r, mode)
        return r

    # -- pairwise part ---------------------------------------------------

    def cone(self, i: int) -> frozenset[int]:
        c = self._cones.get(i)
        if c is None:
            idx = self.netlist.index
            c = frozenset(idx[x] for x in forward_cone(self.netlist, self.netlist.cell_ids[i]))
            self._cones[i] = c
        return c

    def dependent(self, a: str, b: str) -> bool:
        """True when the two cells share a gate in their (inclusive) forward cones."""
        i, j = self.netlist.index[a], self.netlist.index[b]
        ci, cj = self.cone(i) | {i}, self.cone(j) | {j}
        return not ci.isdisjoint(cj)

    def _prepare_mc(self):
        if self._mc_ready:
            return
        n = self.netlist
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0x5EA]))
        t = self.jfp_trials
        pis = {pi: rng.random(t) < self.pi_probs[pi] for pi in n.primary_inputs}
        values = simulate(n, pis)
        self._good = [values[c.fanout] for c in self._cells]
        self._net_good = values
        self._u = rng.random((len(n), t))
        self._tt = [np.asarray(c.kind.truth_table, dtype=bool) for c in self._cells]
        self._fanin_drv = [[(n.index[n.nets[x].driver] if n.nets[x].driver is not None else -1, x)
                            for x in c.fanin] for c in self._cells]
        self._mc_ready = True

    def _vth_key(self, vth: np.ndarray) -> bytes:
        return hashlib.blake2b(np.ascontiguousarray(vth).tobytes(), digest_size=16).digest()

    def failure_fraction(self, struck: Iterable[str], vth=None) -> float:
        """Monte Carlo probability that simultaneous strikes on ``struck`` reach an output."""
        v = self._vth(vth)
        idx = tuple(sorted({self.netlist.index[c] for c in struck}))
        key = (idx, self._vth_key(v))
        hit = self._mc_cache.get(key)
        if hit is not None:
            return hit
        self._prepare_mc()
        mel = self.mel(v)
        region: set[int] = set(idx)
        for i in idx:
            region |= self.cone(i)
        faulty: dict[int, np.ndarray] = {}
        fail = np.zeros(self.jfp_trials, dtype=bool)
        inj = set(idx)
        for g in sorted(region, key=self._topo_pos.__getitem__):
            code = np.zeros(self.jfp_trials, dtype=np.int64)
            for k, (d, net) in enumerate(self._fanin_drv[g]):
                val = faulty.get(d) if d >= 0 else None
                if val is None:
                    val = self._net_good[net]
                code |= val.astype(np.int64) << k
            out = self._tt[g][code]
            if g in inj:
                out = ~out
            good = self._good[g]
            err = (out != good) & (self._u[g] < mel[g])
            faulty[g] = good ^ err
            if self._is_po[g]:
                fail |= err
        res = float(fail.mean())
        self._mc_cache[key] = res
        return res

    def pair_jfp(self, a: str, b: str, vth=None, fps: np.ndarray | None = None) -> PairFp:
        """Joint failure probability of a simultaneous strike on ``a`` and ``b``."""
        if a == b:
            raise ValueError("pair needs two distinct cells")
        for c in (a, b):
            if c not in self.netlist.index:
                raise KeyError(f"unknown cell {c!r}")
        v = self._vth(vth)
        if fps is None:
            fps = self.cell_fps(v)
        fa, fb = fps[self.netlist.index[a]], fps[self.netlist.index[b]]
        ind = pair_fp_independent(float(fa), float(fb))
        if not self.dependent(a, b):
            return PairFp(a, b, ind, False, ind)
        joint = self.failure_fraction((a, b), v)
        ma, mb = self.failure_fraction((a,), v), self.failure_fraction((b,), v)
        ind_mc = ma + mb - ma * mb
        ratio = joint / ind_mc if ind_mc > 0 else 1.0
        return PairFp(a, b, float(min(1.0, ind * ratio)), True, ind)


def cell_fp(n: Netlist, vth, target: str, m: DelayModel | None = None,
            pi_probs: Mapping[str, float] | float = 0.5, **kw) -> float:
    return SerModel(n, m, pi_probs, **kw).cell_fp(target, vth)


def circuit_ser(n: Netlist, vth, m: DelayModel | None = None,
                pi_probs: Mapping[str, float] | float = 0.5, mode: str = HIGH, **kw) -> SerReport:
    return SerModel(n, m, pi_probs, **kw).circuit_ser(vth, mode)


def pair_jfp(n: Netlist, a: str, b: str, env: SerModel, vth=None) -> PairFp:
    if env.netlist is not n:
        raise ValueError("model was built for a different netlist")
    return env.pair_jfp(a, b, vth)
