"""Variation-aware, soft-error-aware standard cell placement.

A quadratic global placer steers soft-error-sensitive cells away from
low-threshold regions of a within-die variation map, and a detailed placer
moves pairs of related cells close enough for a single strike to make their
transients cancel.
"""
from .detailedplace import DetailedConfig, DetailedResult, run_detailed
from .estimators import (PlacementEvaluator, SeaPlaceD, SeaPlaceG, SerEstimator,
                         VariationMapGenerator)
from .evalkit import EvalReport, StrikeModel, compare, evaluate, met_failure_probability
from .globalplace import GlobalConfig, GlobalResult, run_global, wirelength_placement
from .netlist import Netlist, parse_netlist, read_netlist
from .placement import Die, InfeasiblePlacementError, Placement, legalize
from .sermodel import DelayModel, SerModel, SerReport
from .synthetic import random_circuit
from .variation import VariationGrid, VariationParams, build_rmap, classify_regions, gen_map

__version__ = "0.1.0"

__all__ = [
    "DelayModel", "DetailedConfig", "DetailedResult", "Die", "EvalReport", "GlobalConfig",
    "GlobalResult", "InfeasiblePlacementError", "Netlist", "Placement", "PlacementEvaluator",
    "SeaPlaceD", "SeaPlaceG", "SerEstimator", "SerModel", "SerReport", "StrikeModel",
    "VariationGrid", "VariationMapGenerator", "VariationParams", "build_rmap",
    "classify_regions", "compare", "evaluate", "gen_map", "legalize", "met_failure_probability",
    "parse_netlist", "random_circuit", "read_netlist", "run_detailed", "run_global",
    "wirelength_placement",
]
