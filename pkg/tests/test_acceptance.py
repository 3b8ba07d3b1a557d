"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict that the terminal summary prints.
"""
import itertools
import time

import numpy as np
import pytest
import scipy.linalg

from seaplace.cli import LOCK_NAME, main
from seaplace.detailedplace import (DetailedConfig, PairValues, PlacementState, all_masked_pairs,
                                    delta_fp, enumerate_moves, run_detailed, triple_condition, Cap)
from seaplace.evalkit import StrikeModel, met_failure_probability
from seaplace.globalplace import run_global, wirelength_placement
from seaplace.placement import Die, hpwl, legalize, resolve_vth
from seaplace.sermodel import SerModel
from seaplace.solver import (EqConstrainedQp, McksInstance, Option, is_feasible, kkt_residuals,
                             selection_gain, solve_eq_qp, solve_mcks)
from seaplace.synthetic import random_circuit
from seaplace.variation import (HVT, VariationParams, build_rmap, classify_regions, correlogram,
                                gen_map, gen_systematic)

from conftest import ACCEPTANCE

SIZES = (200, 500, 1000, 1500, 2000)
MC_TRIALS = 100_000


def record(k, ok, detail):
    ACCEPTANCE[k] = (bool(ok), detail)
    assert ok, detail


def pooled_lag_correlation(fields, k):
    prods = [f[:, :-k] * f[:, k:] for f in fields] + [f[:-k, :] * f[k:, :] for f in fields]
    return float(np.mean([p.mean() for p in prods]))


class Design:
    """One seeded circuit with its map, SER model and baseline placement."""

    def __init__(self, seed, size):
        self.n = random_circuit(size, seed=seed)
        self.grid = gen_map(VariationParams(grid_n=16, seed=seed))
        self.lh = classify_regions(self.grid)
        self.rmap = build_rmap(self.lh)
        self.env = SerModel(self.n, seed=seed)
        self.report = self.env.circuit_ser()
        self.die = Die.for_netlist(self.n, 0.5)
        self.seed = seed
        self.sm = StrikeModel(MC_TRIALS, seed=seed)  # same strikes for every placement
        self.baseline = wirelength_placement(self.n, self.report, self.rmap, self.die).placement

    def set_ser(self, p):
        return self.env.circuit_ser(resolve_vth(p, self.grid)).circuit_ser

    def met_fp(self, p):
        return met_failure_probability(self.n, p, self.env, self.sm, resolve_vth(p, self.grid))

    def detailed(self, p, **kw):
        return run_detailed(self.n, p, self.env, self.grid, self.report.sensitive,
                            DetailedConfig(seed=self.seed, **kw))


@pytest.fixture(scope="module")
def designs():
    return [Design(seed, size) for seed, size in enumerate(SIZES)]


@pytest.fixture(scope="module")
def global_runs(designs):
    start = time.perf_counter()
    out = [run_global(d.n, d.report, d.rmap, d.die).placement for d in designs]
    return out, time.perf_counter() - start


def test_1_correlogram_fidelity():
    start = time.perf_counter()
    fields = [gen_systematic(VariationParams(grid_n=64, phi=0.5, seed=s), 1.0).values for s in range(200)]
    errs = {}
    for r in (0.1, 0.25, 0.4):
        k = round(r * 64)
        errs[r] = abs(pooled_lag_correlation(fields, k) - correlogram(k / 64, 0.5))
    elapsed = time.perf_counter() - start
    worst = max(errs.values())
    record(1, worst <= 0.08 and elapsed < 60, f"max |rho - model| = {worst:.4f} (<= 0.08), {elapsed:.1f}s (< 60s)")


def test_2_moment_fidelity():
    p = VariationParams(grid_n=64)
    maps = np.array([gen_map(VariationParams(grid_n=64, seed=s)).values for s in range(100)])
    mean_err = abs(maps.mean() - p.mu) / p.mu
    var_err = abs(maps.var() - p.sigma ** 2) / p.sigma ** 2
    record(2, mean_err <= 0.01 and var_err <= 0.05,
           f"mean off by {100 * mean_err:.2f}% (<= 1%), variance off by {100 * var_err:.2f}% (<= 5%)")


def test_3_rmap_soundness():
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    bad = 0
    for _ in range(1000):
        lh = rng.integers(0, 2, (10, 10))
        cover = np.zeros((10, 10), dtype=int)
        for b in build_rmap(lh).blocks:
            cover[b.ly:b.uy + 1, b.lx:b.ux + 1] += 1
            if set(np.unique(lh[b.ly:b.uy + 1, b.lx:b.ux + 1])) != {1 if b.cls == HVT else 0}:
                bad += 1
        bad += int(not np.all(cover == 1))
    elapsed = time.perf_counter() - start
    record(3, bad == 0 and elapsed < 10, f"{bad} violations over 1000 grids, {elapsed:.2f}s (< 10s)")


def test_4_qp_correctness():
    rng = np.random.default_rng(4)
    worst, violations = 0.0, 0
    for _ in range(50):
        n, m = int(rng.integers(5, 40)), int(rng.integers(1, 5))
        b = rng.standard_normal((n, n))
        qp = EqConstrainedQp(b @ b.T / n + 0.1 * np.eye(n), rng.standard_normal(n),
                             rng.standard_normal((m, n)), rng.standard_normal(m))
        x, lam = solve_eq_qp(qp)
        worst = max(worst, *kkt_residuals(qp, x, lam))
        z = scipy.linalg.null_space(qp.a.toarray())
        f = qp.objective(x)
        for _ in range(100):
            y = x + z @ rng.standard_normal(z.shape[1])
            violations += int(qp.objective(y) < f - 1e-9 * max(1.0, abs(f)))
    record(4, worst <= 1e-8 and violations == 0,
           f"max KKT residual {worst:.2e} (<= 1e-8), {violations} better feasible perturbations")


def test_5_global_direction(designs, global_runs):
    placements, g_time = global_runs
    start = time.perf_counter()
    for d in designs:
        wirelength_placement(d.n, d.report, d.rmap, d.die)
    elapsed = g_time + time.perf_counter() - start
    red, over, lvt = [], [], []
    for d, p in zip(designs, placements):
        base = d.set_ser(d.baseline)
        red.append((base - d.set_ser(p)) / base)
        over.append(hpwl(d.n, p) / hpwl(d.n, d.baseline) - 1)
        lvt.append(float(np.mean(d.lh == 0)))
    wins = sum(r >= 0 for r in red)
    ok = min(lvt) >= 0.3 and wins >= 4 and np.mean(red) >= 0.10 and max(over) <= 0.15 and elapsed < 300
    record(5, ok, f"SET SER not worse in {wins}/5, mean reduction {100 * np.mean(red):.1f}% (>= 10%), "
                  f"max HPWL overhead {100 * max(over):.1f}% (<= 15%), min LVT area {100 * min(lvt):.0f}%, "
                  f"{elapsed:.0f}s")


def test_6_detailed_soundness(designs):
    d = designs[1]
    res = d.detailed(d.baseline)
    applied = res.applied()
    spent_wl = sum(max(m.dwl, 0.0) for m in applied)
    spent_ser = sum(max(m.dser, 0.0) for m in applied)
    ledger_ok = (spent_wl == pytest.approx(res.budget.spent_wl, rel=1e-9, abs=1e-12)
                 and spent_ser == pytest.approx(res.budget.spent_ser, rel=1e-9, abs=1e-15))
    state = PlacementState(d.baseline)
    replay_ok, legal_ok = True, True
    for m in applied:
        replay_ok &= triple_condition(m, state)
        state.apply(m.relocations)
        legal_ok &= state.to_placement().is_legal()
    legal_ok &= res.placement.is_legal() and state.to_placement().to_csv() == res.placement.to_csv()
    record(6, applied and ledger_ok and replay_ok and legal_ok,
           f"{len(applied)} moves; ledger match {ledger_ok}, triple replay {replay_ok}, legal {legal_ok}")


@pytest.fixture(scope="module")
def detailed_runs(designs, global_runs):
    placements, _ = global_runs
    rows = []
    for d, pg in zip(designs, placements):
        f0 = d.met_fp(d.baseline)
        fd = d.met_fp(d.detailed(d.baseline).placement)
        fgd = d.met_fp(d.detailed(pg).placement)
        rows.append(((f0 - fd) / f0, (f0 - fgd) / f0))
    return rows


def test_7_detailed_direction(detailed_runs):
    red = [r for r, _ in detailed_runs]
    wins = sum(r >= 0.05 for r in red)
    record(7, wins >= 4, f"MET FP cut >= 5% in {wins}/5: " + ", ".join(f"{100 * r:.1f}%" for r in red))


def test_8_pipeline_ordering(detailed_runs):
    wins = sum(gd >= dd for dd, gd in detailed_runs)
    record(8, wins >= 3, f"G->D >= D alone in {wins}/5: "
                         + ", ".join(f"{100 * gd:.1f}% vs {100 * dd:.1f}%" for dd, gd in detailed_runs))


def test_9_delta_fp_oracle():
    worst, count = 0.0, 0
    for k in range(5):
        n = random_circuit(40, seed=k)
        env = SerModel(n, jfp_trials=300, seed=k)
        die = Die.for_netlist(n, 0.6)
        rng = np.random.default_rng(900 + k)
        state = PlacementState(legalize(rng.uniform(0, die.width, len(n)), rng.uniform(0, die.height, len(n)),
                                        n.widths, die, n.cell_ids))
        pairs = PairValues(env, np.full(len(n), 0.22))
        geom = DetailedConfig().geometry
        done = 0
        while done < 20:
            a, b = sorted(rng.choice(n.cell_ids, 2, replace=False))
            moves = enumerate_moves(state, [Cap(a, b, 0.0, 1.0)], geom)[(a, b)]
            if not moves:
                continue
            m = moves[int(rng.integers(len(moves)))]
            before = pairs.total(all_masked_pairs(state, geom))
            inc = delta_fp(state, m, pairs, geom)
            state.apply(m.relocations)
            full = pairs.total(all_masked_pairs(state, geom)) - before
            worst = max(worst, abs(inc - full) / max(abs(full), 1e-300) if full else abs(inc))
            done += 1
            count += 1
    record(9, worst <= 1e-9, f"{count} moves, max relative gap {worst:.2e} (<= 1e-9)")


def test_10_mcks_oracle():
    rng = np.random.default_rng(10)
    bad = 0
    for _ in range(100):
        groups = []
        for _ in range(int(rng.integers(1, 7))):
            g = [Option(0.0)] + [Option(float(rng.uniform(0, 5)), float(rng.uniform(0, 2)),
                                        float(rng.uniform(0, 2))) for _ in range(int(rng.integers(1, 4)))]
            groups.append(g)
        inst = McksInstance(groups, float(rng.uniform(0, 4)), float(rng.uniform(0, 4)))
        best = max(selection_gain(inst, s) for s in itertools.product(*[range(len(g)) for g in groups])
                   if is_feasible(inst, s))
        ex, rel = solve_mcks(inst, "exact"), solve_mcks(inst, "relaxed")
        bad += int(not (is_feasible(inst, ex) and abs(selection_gain(inst, ex) - best) <= 1e-9))
        bad += int(not (is_feasible(inst, rel) and selection_gain(inst, rel) >= 0.0))
    record(10, bad == 0, f"{bad} disagreements over 100 instances")


def test_11_budget_sensitivity(designs):
    d = designs[0]
    f0 = d.met_fp(d.baseline)
    red = [(f0 - d.met_fp(d.detailed(d.baseline, dser_max=b).placement)) / f0 for b in (0.02, 0.05, 0.10, 0.15)]
    ok = red[0] <= red[1] <= red[2]
    record(11, ok, "reduction at dSER 0.02/0.05/0.10/0.15: " + ", ".join(f"{100 * r:.2f}%" for r in red))


def test_12_determinism(tmp_path):
    def run(root):
        main(["genmap", "--grid-n", "24", "--seed", "12", "--out", str(root / "m")])
        common = ["--netlist", "demo", "--map", str(root / "m" / "map.csv"), "--seed", "12", "--trials", "20000"]
        codes = [main(["place", *common, "--out", str(root / "p")]),
                 main(["eval", *common, "--placement", str(root / "p" / "placement.csv"), "--out", str(root / "e")]),
                 main(["plot", "--report", str(root / "p" / "report.json"), "--out", str(root / "f")])]
        files = {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*"))
                 if p.is_file() and p.name != LOCK_NAME}
        return codes, files

    c1, f1 = run(tmp_path / "one")
    c2, f2 = run(tmp_path / "two")
    diff = sorted(k for k in f1 if f1.get(k) != f2.get(k))
    # inputs referenced by path live under different roots; hashes use content, so files still match
    record(12, c1 == c2 == [0, 0, 0] and not diff and f1.keys() == f2.keys(),
           f"{len(f1)} artifacts, {len(diff)} differ, exit codes {c1}")
