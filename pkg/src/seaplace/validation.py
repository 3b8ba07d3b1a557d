"""Input checks shared by the estimators and the command line."""
from __future__ import annotations

import numpy as np

from .netlist import Netlist
from .placement import Placement
from .variation import VariationGrid


def check_netlist(n) -> Netlist:
    if not isinstance(n, Netlist):
        raise TypeError(f"expected a Netlist, got {type(n).__name__}")
    if len(n) == 0:
        raise ValueError("netlist has no cells")
    return n


def check_grid(g) -> VariationGrid:
    if not isinstance(g, VariationGrid):
        raise TypeError(f"expected a VariationGrid, got {type(g).__name__}")
    if not np.all(np.isfinite(g.values)):
        raise ValueError("variation map contains non-finite values")
    if np.any(g.values <= 0) or np.any(g.values >= g.params.vdd):
        raise ValueError("threshold voltages must lie in (0, vdd)")
    return g


def check_placement(p, n: Netlist, legal: bool = False) -> Placement:
    if not isinstance(p, Placement):
        raise TypeError(f"expected a Placement, got {type(p).__name__}")
    if tuple(p.cell_ids) != tuple(n.cell_ids):
        raise ValueError("placement cells do not match the netlist")
    if not (np.all(np.isfinite(p.x)) and np.all(np.isfinite(p.y))):
        raise ValueError("placement has non-finite coordinates")
    d = p.die
    if np.any(p.x < 0) or np.any(p.x > d.width) or np.any(p.y < 0) or np.any(p.y > d.height):
        raise ValueError("placement has cells outside the die")
    if legal and not p.is_legal():
        raise ValueError("placement is not legal")
    return p


def check_fraction(x: float, name: str) -> float:
    x = float(x)
    if not np.isfinite(x) or x < 0:
        raise ValueError(f"{name} must be a nonnegative number")
    return x
