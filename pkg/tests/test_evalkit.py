import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from seaplace.evalkit import (EvalReport, StrikeModel, compare, critical_delay, csv_header, evaluate,
                              met_failure_probability, reduction_svg, single_cell_coverage)
from seaplace.placement import Die, Placement
from seaplace.sermodel import SerModel

from conftest import chain, make_netlist, uniform_grid, xor_quench


def placed(n, slots, die):
    rows = np.array([slots[c][0] for c in n.cell_ids])
    left = np.array([slots[c][1] for c in n.cell_ids], dtype=float)
    return Placement(n.cell_ids, left + n.widths / 2.0, (rows + 0.5) * die.row_height, n.widths, die, rows)


def lone_inverter():
    return make_netlist([("u", "INV", ("a",), "y")], ["a"], ["y"])


class TestCoverage:
    @pytest.mark.parametrize("trials", [1_000, 10_000, 100_000])
    def test_single_cell_within_binomial_band(self, trials):
        n = lone_inverter()
        die = Die(20, 3)
        p = placed(n, {"u": (1, 10)}, die)
        env = SerModel(n)
        fp = env.cell_fps()[0]
        sm = StrikeModel(trials, seed=5)
        q = single_cell_coverage(1, sm) / (die.width * die.height)
        got = met_failure_probability(n, p, env, sm)
        assert abs(got / fp - q) <= 3 * math.sqrt(q * (1 - q) / trials)

    def test_coverage_formula(self):
        assert single_cell_coverage(2, StrikeModel()) == pytest.approx(1.6 + math.pi * 0.8)

    def test_empty_die_scores_zero(self):
        n = lone_inverter()
        die = Die(4, 1)
        p = placed(n, {"u": (0, 0)}, die)
        assert met_failure_probability(n, p, SerModel(n), StrikeModel(1000), fps=[0.0]) == 0.0

    def test_unlegalized_rejected(self):
        n = lone_inverter()
        p = Placement(n.cell_ids, [1.0], [0.5], n.widths, Die(4, 1))
        with pytest.raises(ValueError):
            met_failure_probability(n, p, SerModel(n), StrikeModel(10))


class TestMonteCarlo:
    def setup_method(self):
        self.n = xor_quench()
        self.env = SerModel(self.n, w0=30)
        self.die = Die(30, 3)

    def test_quenching_pair_beats_separated(self):
        sm = StrikeModel(50_000, seed=1)
        far = placed(self.n, {"d": (0, 0), "b1": (1, 2), "b2": (1, 25), "x": (2, 14)}, self.die)
        near = placed(self.n, {"d": (0, 0), "b1": (1, 12), "b2": (1, 13), "x": (2, 14)}, self.die)
        # same seed, so the strike centres are common to both placements
        assert met_failure_probability(self.n, near, self.env, sm) < \
            met_failure_probability(self.n, far, self.env, sm)

    def test_scales_with_cell_fps(self):
        p = placed(self.n, {"d": (0, 0), "b1": (1, 8), "b2": (1, 20), "x": (2, 28)}, self.die)
        sm = StrikeModel(20_000, seed=2)
        fps = self.env.cell_fps()
        a = met_failure_probability(self.n, p, self.env, sm, fps=fps)
        b = met_failure_probability(self.n, p, self.env, sm, fps=fps * 0.5)
        assert b == pytest.approx(a / 2)

    def test_block_split_is_deterministic(self):
        p = placed(self.n, {"d": (0, 0), "b1": (1, 12), "b2": (1, 13), "x": (2, 14)}, self.die)
        sm = StrikeModel(25_000, seed=9)
        assert met_failure_probability(self.n, p, self.env, sm) == \
            met_failure_probability(self.n, p, self.env, sm)


class TestDelay:
    def test_single_cell(self):
        n = lone_inverter()
        env = SerModel(n)
        assert critical_delay(n, env) == pytest.approx(env.delays()[0])

    def test_chain_sums(self):
        n = chain(("INV", "BUF", "INV"))
        env = SerModel(n)
        assert critical_delay(n, env) == pytest.approx(env.delays().sum())

    def test_longest_branch(self):
        n = xor_quench()
        env = SerModel(n)
        d = dict(zip(n.cell_ids, env.delays()))
        assert critical_delay(n, env) == pytest.approx(d["d"] + max(d["b1"], d["b2"]) + d["x"])


class TestReports:
    def r(self, **kw):
        base = dict(met_fp=0.01, set_ser=2.0, hpwl=100.0, crit_delay=5.0)
        base.update(kw)
        return EvalReport(**base)

    def test_compare(self):
        out = compare(self.r(met_fp=0.007, hpwl=110.0), self.r())
        assert out["met_fp"] == pytest.approx(30.0) and out["hpwl"] == pytest.approx(-10.0)
        assert out["set_ser"] == 0.0

    def test_compare_zero_baseline(self):
        assert compare(self.r(met_fp=0.0), self.r(met_fp=0.0))["met_fp"] == "n/a"

    def test_probability_checked(self):
        with pytest.raises(ValueError):
            self.r(met_fp=1.5)

    def test_json_with_baseline(self):
        doc = json.loads(self.r(met_fp=0.005).to_json(baseline=self.r()))
        assert doc["reduction_percent"]["met_fp"] == pytest.approx(50.0)
        assert "surrogate" in doc["note"]

    def test_csv(self):
        assert csv_header().strip().split(",") == ["label", "met_fp", "set_ser", "hpwl", "crit_delay"]
        assert self.r().csv_row("x").startswith("x,0.01,")

    def test_svg_parses(self):
        svg = reduction_svg({"met_fp": 30.0, "hpwl": -8.5, "crit_delay": "n/a"})
        root = ET.fromstring(svg)
        rects = [e for e in root.iter() if e.tag.endswith("rect")]
        assert len(rects) == 3
        assert float(rects[2].get("height")) == 0.0

    def test_evaluate_records_trials(self):
        n = lone_inverter()
        die = Die(6, 2)
        r = evaluate(n, placed(n, {"u": (0, 2)}, die), SerModel(n), StrikeModel(500, seed=3),
                     uniform_grid(2), {"command": "t"})
        assert r.provenance == {"command": "t", "trials": 500, "strike_seed": 3}
        assert r.hpwl == 0.0  # one cell, no pads
