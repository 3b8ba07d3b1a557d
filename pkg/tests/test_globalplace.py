import math
import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from seaplace.globalplace import (GlobalConfig, PartitionNode, PenaltyAnchor, _split, build_qp,
                                  lvt_membership, penalty_pass, raw_penalty, run_global,
                                  sensitive_in_lvt, wirelength_placement)
from seaplace.placement import Die, InfeasiblePlacementError, Placement
from seaplace.sermodel import CellSer, SerModel, SerReport
from seaplace.solver import kkt_residuals, solve_eq_qp
from seaplace.synthetic import random_circuit
from seaplace.variation import HVT, LVT, RegionBlock, RMap, build_rmap

from conftest import chain, make_netlist


def flat_report(n, value=0.0, sensitive=()):
    cells = [CellSer(c, 1.0, value) for c in n.cell_ids]
    return SerReport(cells, float(len(n)), set(sensitive))


def whole(n, die, x=(0.0, None)):
    return [PartitionNode(0.0, float(die.width), 0.0, float(die.height), np.arange(len(n)))]


def central_lvt(n=8):
    lh = np.ones((n, n), dtype=int)
    lh[n // 4:3 * n // 4, n // 4:3 * n // 4] = 0
    return build_rmap(lh)


class TestBuildQp:
    def test_two_cells_cog(self):
        n = chain(("INV", "INV"))
        die = Die(10, 10)  # no pads
        qp = build_qp(n, flat_report(n), whole(n, die), {}, 0, die)
        x, _ = solve_eq_qp(qp)
        assert x == pytest.approx([5.0, 5.0])

    def test_zero_ser_is_plain_wirelength(self):
        n = random_circuit(25, seed=1)
        die = Die.for_netlist(n)
        qp = build_qp(n, flat_report(n), whole(n, die), {}, 0, die)
        # independent clique Laplacian with 2/|net| weights, pads counted as pins
        lap = np.zeros((len(n), len(n)))
        for net_id, cells, is_in, is_out in n.hyperedges():
            idx = [n.index[c] for c in cells]
            pad = net_id in die.io_pads
            size = len(idx) + pad
            if size < 2:
                continue
            w = 2.0 / size
            for a in range(len(idx)):
                for b in range(a + 1, len(idx)):
                    i, j = idx[a], idx[b]
                    lap[i, i] += w
                    lap[j, j] += w
                    lap[i, j] -= w
                    lap[j, i] -= w
                if pad:
                    lap[idx[a], idx[a]] += w
        assert np.allclose(qp.q.toarray(), lap)

    def test_ser_lowers_pair_weight(self):
        n = chain(("INV", "INV"))
        die = Die(10, 10)
        hot = SerReport([CellSer("c1", 1.0, 1.0), CellSer("c2", 1.0, 0.5)], 2.0, set())
        qp = build_qp(n, hot, whole(n, die), {}, 0, die)
        assert qp.q.toarray()[0, 1] == pytest.approx(-1.0 * (1 - 0.75))

    def test_pair_weight_floor(self):
        n = chain(("INV", "INV"))
        die = Die(10, 10)
        hot = SerReport([CellSer("c1", 1.0, 1.0), CellSer("c2", 1.0, 1.0)], 2.0, set())
        qp = build_qp(n, hot, whole(n, die), {}, 0, die)
        assert qp.q.toarray()[0, 1] == pytest.approx(-0.05)

    def test_dominant_anchor(self):
        n = random_circuit(20, seed=4)
        die = Die.for_netlist(n)
        target = (1.5, 2.5)
        anchor = PenaltyAnchor(n.cell_ids[3], target, 1e6)
        for axis in (0, 1):
            qp = build_qp(n, flat_report(n), whole(n, die), [anchor], axis, die)
            x, _ = solve_eq_qp(qp)
            assert abs(x[3] - target[axis]) < 1e-3

    def test_empty_node_rejected(self):
        with pytest.raises(ValueError):
            PartitionNode(0, 1, 0, 1, np.array([], dtype=int))

    def test_cell_in_two_nodes(self):
        n = chain(("INV", "INV"))
        die = Die(10, 10)
        part = [PartitionNode(0, 5, 0, 10, np.array([0, 1])), PartitionNode(5, 10, 0, 10, np.array([1]))]
        with pytest.raises(ValueError):
            build_qp(n, flat_report(n), part, {}, 0, die)

    def test_cog_rows_are_area_weighted(self):
        n = make_netlist([("a", "XOR2", ("i", "j"), "n1"), ("b", "INV", ("n1",), "y")], ["i", "j"], ["y"])
        die = Die(10, 10)
        qp = build_qp(n, flat_report(n), whole(n, die), {}, 0, die)
        assert qp.a.toarray().tolist() == [[2 / 3, 1 / 3]]
        assert qp.u.tolist() == [5.0]


class TestMembership:
    def setup_method(self):
        self.die = Die(8, 8)
        self.rmap = RMap([RegionBlock(0, 1, 0, 3, LVT), RegionBlock(2, 3, 0, 3, HVT)], 4)

    def place(self, x, y):
        return Placement(("s",), [x], [y], [1], self.die)

    def test_inside_lvt(self):
        assert lvt_membership(self.place(2.0, 4.0), self.rmap, {"s"}) == [("s", 0)]

    def test_shared_edge_goes_to_upper_block(self):
        assert lvt_membership(self.place(4.0, 4.0), self.rmap, {"s"}) == []

    def test_no_sensitive(self):
        assert lvt_membership(self.place(2.0, 4.0), self.rmap, set()) == []


class TestPenalty:
    def test_raw_weights(self):
        assert raw_penalty(0.0, 2.5) == pytest.approx(math.e)
        assert raw_penalty(1.0, 2.5) == pytest.approx(math.exp(2 ** 2.5))
        assert raw_penalty(1.0, 2.5) == pytest.approx(286.6, rel=2e-3)

    def setup_method(self):
        self.die = Die(8, 8)
        self.rmap = RMap([RegionBlock(0, 1, 0, 3, LVT), RegionBlock(2, 3, 0, 3, HVT)], 4)
        self.p = Placement(("a", "b", "c"), [1.0, 2.0, 7.0], [1.0, 6.0, 4.0], [1, 1, 1], self.die)
        self.r = SerReport([CellSer("a", 1, 1.0), CellSer("b", 1, 0.2), CellSer("c", 1, 0.0)], 3, {"a", "b", "c"})

    def test_anchors_only_for_incident_cells(self):
        inc = lvt_membership(self.p, self.rmap, self.r.sensitive)
        assert [c for c, _ in inc] == ["a", "b"]
        out = penalty_pass(self.p, inc, self.r, self.rmap, 2.5, net_weight=3.0)
        assert set(out) == {"a", "b"}
        for a in out.values():
            x, y = a.target
            # one fragment (2 sites) inside the HVT block [4, 8) x [0, 8)
            assert 6.0 <= x <= 6.0 + 1e-12 or 4.0 + 2.0 <= x <= 8.0 - 2.0
            assert 0.0 <= y <= 8.0
        assert np.median([a.weight for a in out.values()]) == pytest.approx(3.0)
        assert out["a"].weight > out["b"].weight

    def test_no_hvt_warns(self):
        rmap = RMap([RegionBlock(0, 3, 0, 3, LVT)], 4)
        inc = lvt_membership(self.p, rmap, self.r.sensitive)
        with pytest.warns(RuntimeWarning):
            assert penalty_pass(self.p, inc, self.r, rmap) == {}


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 60), st.integers(0, 1))
def test_split_partitions_members(seed, size, axis):
    rng = np.random.default_rng(seed)
    area = rng.integers(1, 3, size).astype(float)
    pos = rng.uniform(0, 10, size)
    node = PartitionNode(0, 10, 0, 10, np.arange(size))
    kids = _split(node, pos, area, axis)
    assert sorted(np.concatenate([k.members for k in kids]).tolist()) == list(range(size))
    assert sum(k.area for k in kids) == pytest.approx(node.area)
    if area.sum() >= 40:
        half = area.sum() / 2
        for k in kids:
            assert abs(area[k.members].sum() - half) <= 0.05 * half
    lo, hi = kids
    side = pos if True else None
    assert side[lo.members].max() <= side[hi.members].min() + 1e-12 or axis is not None


class TestRunGlobal:
    def test_single_row_keeps_qp_order(self):
        n = chain(("INV", "INV", "INV", "INV"))
        die = Die(8, 1, 1.0, {"a": (0.0, 0.5), "y": (8.0, 0.5)})
        rmap = build_rmap(np.ones((4, 4), dtype=int))
        res = run_global(n, SerModel(n).circuit_ser(), rmap, die)
        assert list(np.argsort(res.placement.x)) == list(np.argsort(res.unlegalized.x))
        assert res.placement.is_legal()

    def test_penalties_reduce_sensitive_in_lvt(self, medium_circuit):
        n = medium_circuit
        r = SerModel(n).circuit_ser()
        die = Die.for_netlist(n)
        rmap = central_lvt()
        on = run_global(n, r, rmap, die).placement
        off = run_global(n, r, rmap, die, GlobalConfig(penalty_scale=0.0)).placement
        assert sensitive_in_lvt(on, rmap, r.sensitive) < sensitive_in_lvt(off, rmap, r.sensitive)

    def test_all_hvt_map_has_no_anchors(self, medium_circuit):
        n = medium_circuit
        r = SerModel(n).circuit_ser()
        res = run_global(n, r, build_rmap(np.ones((8, 8), dtype=int)), Die.for_netlist(n))
        assert res.anchors == {}

    def test_zero_penalty_matches_no_penalty_bitwise(self, small_circuit):
        n = small_circuit
        r = SerModel(n).circuit_ser()
        die = Die.for_netlist(n)
        a = run_global(n, r, central_lvt(), die, GlobalConfig(penalty_scale=0.0)).placement
        b = run_global(n, r, central_lvt(), die, GlobalConfig(penalty_iters=0)).placement
        assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)

    def test_levels_partition_cells_and_die(self, small_circuit):
        n = small_circuit
        die = Die.for_netlist(n)
        res = run_global(n, SerModel(n).circuit_ser(), central_lvt(), die)
        for nodes in res.levels:
            members = np.sort(np.concatenate([nd.members for nd in nodes]))
            assert members.tolist() == list(range(len(n)))
            assert sum(nd.area for nd in nodes) == pytest.approx(die.width * die.height)
        assert all(len(nd.members) <= 1 for nd in res.levels[-1])
        assert res.placement.is_legal()

    def test_cog_constraints_hold(self, small_circuit):
        n = small_circuit
        die = Die.for_netlist(n)
        r = SerModel(n).circuit_ser()
        res = run_global(n, r, central_lvt(), die)
        for nodes in res.levels[:4]:
            for axis in (0, 1):
                qp = build_qp(n, r, nodes, res.anchors, axis, die)
                x, lam = solve_eq_qp(qp)
                assert np.max(np.abs(qp.a @ x - qp.u)) <= 1e-6

    def test_disabled_penalties_give_single_solve_per_level(self, small_circuit):
        n = small_circuit
        res = run_global(n, flat_report(n, sensitive=n.cell_ids), central_lvt(), Die.for_netlist(n),
                         GlobalConfig(penalty_scale=0.0))
        levels = [lvl for lvl, _, _ in res.trace]
        assert levels == sorted(set(levels))

    def test_deterministic(self, small_circuit):
        n = small_circuit
        r = SerModel(n).circuit_ser()
        die = Die.for_netlist(n)
        a = run_global(n, r, central_lvt(), die).placement
        b = run_global(n, r, central_lvt(), die).placement
        assert a.to_csv() == b.to_csv()

    def test_infeasible(self, small_circuit):
        with pytest.raises(InfeasiblePlacementError):
            run_global(small_circuit, SerModel(small_circuit).circuit_ser(), central_lvt(), Die(3, 3))

    def test_wirelength_baseline_ignores_ser(self, small_circuit):
        n = small_circuit
        die = Die.for_netlist(n)
        a = wirelength_placement(n, SerModel(n).circuit_ser(), central_lvt(), die).placement
        b = run_global(n, flat_report(n), central_lvt(), die, GlobalConfig(penalty_scale=0.0)).placement
        assert np.array_equal(a.x, b.x)
