"""scikit-learn style front ends for the map generator, the two placers and the evaluator.

Hyperparameters live in ``__init__`` (so ``get_params``/``set_params`` and
``clone`` work); fitted state ends with an underscore.
"""
from __future__ import annotations

from dataclasses import fields

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .detailedplace import DetailedConfig, run_detailed
from .evalkit import StrikeModel, evaluate
from .globalplace import GlobalConfig, run_global
from .netlist import Netlist
from .placement import Die, Placement
from .sermodel import HIGH, DelayModel, SerModel
from .validation import check_grid, check_netlist, check_placement
from .variation import (VariationParams, build_rmap, classify_regions, filter_blocks,
                        gen_map)


def _subset(est: BaseEstimator, cls) -> dict:
    names = {f.name for f in fields(cls)}
    return {k: v for k, v in est.get_params().items() if k in names}


class VariationMapGenerator(BaseEstimator):
    """Generates a threshold-voltage map; ``transform`` returns the class matrix."""

    def __init__(self, mu=0.22, sigma=0.55 * 0.22 / 3.0, phi=0.5, grid_n=32, seed=0,
                 min_area=0, bridge_area=0):
        self.mu = mu
        self.sigma = sigma
        self.phi = phi
        self.grid_n = grid_n
        self.seed = seed
        self.min_area = min_area
        self.bridge_area = bridge_area

    def fit(self, X=None, y=None):
        params = VariationParams(mu=self.mu, sigma=self.sigma, phi=self.phi,
                                 grid_n=self.grid_n, seed=self.seed)
        self.grid_ = gen_map(params)
        self.classes_ = classify_regions(self.grid_)
        self.rmap_ = filter_blocks(build_rmap(self.classes_), self.min_area, self.bridge_area)
        return self

    def transform(self, X=None):
        check_is_fitted(self, "grid_")
        return self.rmap_.class_matrix()


class SerEstimator(BaseEstimator):
    """Fits the soft-error model of a netlist; ``predict`` gives per-cell SER."""

    def __init__(self, w0=3.0, strike_rate=1e-3, jfp_trials=2000, seed=0, mode=HIGH, vdd=1.1,
                 alpha=1.3, vth_nominal=0.22):
        self.w0 = w0
        self.strike_rate = strike_rate
        self.jfp_trials = jfp_trials
        self.seed = seed
        self.mode = mode
        self.vdd = vdd
        self.alpha = alpha
        self.vth_nominal = vth_nominal

    def fit(self, netlist: Netlist, y=None):
        check_netlist(netlist)
        delay = DelayModel(self.vdd, self.alpha, self.vth_nominal)
        self.model_ = SerModel(netlist, delay, w0=self.w0, strike_rate=self.strike_rate,
                               jfp_trials=self.jfp_trials, seed=self.seed)
        self.report_ = self.model_.circuit_ser(None, self.mode)
        return self

    def predict(self, vth=None) -> np.ndarray:
        check_is_fitted(self, "model_")
        return self.model_.circuit_ser(vth, self.mode).ser


class SeaPlaceG(BaseEstimator):
    """Variation-aware global placer."""

    def __init__(self, K=2.5, penalty_iters=3, leaf_size=1, min_area=0, bridge_area=0, seed=0,
                 penalty_scale=1.0, ser_weighting=True, penalty_start_level=1, utilization=0.5,
                 mode=HIGH):
        self.K = K
        self.penalty_iters = penalty_iters
        self.leaf_size = leaf_size
        self.min_area = min_area
        self.bridge_area = bridge_area
        self.seed = seed
        self.penalty_scale = penalty_scale
        self.ser_weighting = ser_weighting
        self.penalty_start_level = penalty_start_level
        self.utilization = utilization
        self.mode = mode

    def fit(self, netlist: Netlist, grid, die: Die | None = None, env: SerModel | None = None):
        check_netlist(netlist)
        check_grid(grid)
        self.env_ = env or SerModel(netlist, seed=self.seed)
        self.die_ = die or Die.for_netlist(netlist, self.utilization)
        self.report_ = self.env_.circuit_ser(None, self.mode)
        self.rmap_ = build_rmap(classify_regions(grid))
        self.result_ = run_global(netlist, self.report_, self.rmap_, self.die_,
                                  GlobalConfig(**_subset(self, GlobalConfig)))
        self.placement_ = self.result_.placement
        return self

    def fit_transform(self, netlist, grid, die=None, env=None) -> Placement:
        return self.fit(netlist, grid, die, env).placement_


class SeaPlaceD(BaseEstimator):
    """MET-aware detailed placer; ``transform`` maps a legal placement to an improved one."""

    def __init__(self, dser_max=0.1, dwl_max=0.1, masking_distance_x=2.0, oval_ax=2.0,
                 oval_ay=0.4, max_iters=10, retry_limit=3, jfp_trials=2000, seed=0,
                 mcks_mode="auto", mode=HIGH):
        self.dser_max = dser_max
        self.dwl_max = dwl_max
        self.masking_distance_x = masking_distance_x
        self.oval_ax = oval_ax
        self.oval_ay = oval_ay
        self.max_iters = max_iters
        self.retry_limit = retry_limit
        self.jfp_trials = jfp_trials
        self.seed = seed
        self.mcks_mode = mcks_mode
        self.mode = mode

    def fit(self, netlist: Netlist, grid, env: SerModel | None = None):
        check_netlist(netlist)
        self.grid_ = check_grid(grid)
        self.netlist_ = netlist
        self.env_ = env or SerModel(netlist, jfp_trials=self.jfp_trials, seed=self.seed)
        self.report_ = self.env_.circuit_ser(None, self.mode)
        return self

    def transform(self, placement: Placement) -> Placement:
        check_is_fitted(self, "env_")
        check_placement(placement, self.netlist_, legal=True)
        self.result_ = run_detailed(self.netlist_, placement, self.env_, self.grid_,
                                    self.report_.sensitive,
                                    DetailedConfig(**_subset(self, DetailedConfig)))
        return self.result_.placement

    def fit_transform(self, netlist, grid, placement, env=None) -> Placement:
        return self.fit(netlist, grid, env).transform(placement)


class PlacementEvaluator(BaseEstimator):
    """Scores placements; ``evaluate`` returns the full report."""

    def __init__(self, trials=100_000, oval_ax=2.0, oval_ay=0.4, seed=0):
        self.trials = trials
        self.oval_ax = oval_ax
        self.oval_ay = oval_ay
        self.seed = seed

    def fit(self, netlist: Netlist, grid=None, env: SerModel | None = None):
        check_netlist(netlist)
        self.netlist_ = netlist
        self.grid_ = grid if grid is None else check_grid(grid)
        self.env_ = env or SerModel(netlist, seed=self.seed)
        return self

    def evaluate(self, placement: Placement, provenance: dict | None = None):
        check_is_fitted(self, "env_")
        check_placement(placement, self.netlist_, legal=True)
        sm = StrikeModel(self.trials, self.oval_ax, self.oval_ay, self.seed)
        return evaluate(self.netlist_, placement, self.env_, sm, self.grid_, provenance)

    def score(self, placement: Placement) -> float:
        """Negative MET failure probability (higher is better)."""
        return -self.evaluate(placement).met_fp
