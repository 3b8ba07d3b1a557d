import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from seaplace.estimators import (PlacementEvaluator, SeaPlaceD, SeaPlaceG, SerEstimator,
                                 VariationMapGenerator)
from seaplace.placement import Die, Placement
from seaplace.validation import check_fraction, check_grid, check_netlist, check_placement

from conftest import uniform_grid


@pytest.mark.parametrize("cls", [VariationMapGenerator, SerEstimator, SeaPlaceG, SeaPlaceD,
                                 PlacementEvaluator])
def test_params_roundtrip_and_clone(cls):
    est = cls()
    params = est.get_params()
    assert params and clone(est).get_params() == params
    key = "seed" if "seed" in params else next(iter(params))
    est.set_params(**{key: params[key]})


def test_unfitted_estimators_raise(small_circuit):
    with pytest.raises(NotFittedError):
        VariationMapGenerator().transform()
    with pytest.raises(NotFittedError):
        SerEstimator().predict()
    with pytest.raises(NotFittedError):
        SeaPlaceD().transform(None)


def test_map_generator():
    gen = VariationMapGenerator(grid_n=8, seed=3).fit()
    m = gen.transform()
    assert m.shape == (8, 8) and set(np.unique(m)) <= {0, 1}
    again = VariationMapGenerator(grid_n=8, seed=3).fit()
    assert np.array_equal(gen.grid_.values, again.grid_.values)


def test_ser_estimator(small_circuit):
    est = SerEstimator().fit(small_circuit)
    assert np.allclose(est.predict(), est.report_.ser)
    low = est.predict(np.full(len(small_circuit), 0.18))
    assert low.shape == (len(small_circuit),)


def test_pipeline(small_circuit):
    grid = VariationMapGenerator(grid_n=8, seed=1).fit().grid_
    g = SeaPlaceG(seed=1).fit(small_circuit, grid)
    assert g.placement_.is_legal()
    d = SeaPlaceD(jfp_trials=300).fit(small_circuit, grid, g.env_)
    p = d.transform(g.placement_)
    assert p.is_legal()
    ev = PlacementEvaluator(trials=2000).fit(small_circuit, grid, g.env_)
    assert ev.score(p) == -ev.evaluate(p).met_fp


def test_validation_helpers(small_circuit):
    with pytest.raises(TypeError):
        check_netlist("not a netlist")
    g = uniform_grid(2)
    assert check_grid(g) is g
    g.values[0, 0] = np.nan
    with pytest.raises(ValueError):
        check_grid(g)
    n = small_circuit
    die = Die.for_netlist(n)
    p = Placement(n.cell_ids, np.full(len(n), 1.0), np.full(len(n), 1.0), n.widths, die)
    assert check_placement(p, n) is p
    with pytest.raises(ValueError):
        check_placement(p, n, legal=True)
    p.x[0] = -1.0
    with pytest.raises(ValueError):
        check_placement(p, n)
    with pytest.raises(ValueError):
        check_fraction(-0.1, "dwl_max")
