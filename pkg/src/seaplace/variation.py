"""Within-die threshold-voltage maps and their rectangular region decomposition.

The die is split into an N x N grid of fragments. The threshold voltage of a
fragment is the nominal value plus a spatially correlated (systematic)
Gaussian field with a spherical correlogram plus an i.i.d. (random) Gaussian
component of equal variance.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

HVT, LVT = "HVT", "LVT"
EXACT_MAX_N = 64
REGULARIZATION = 1e-10
HVT_SIGMA_FACTOR = 1.3


class VariationError(ArithmeticError):
    """Covariance factorization failed (matrix not numerically PSD)."""


@dataclass(frozen=True)
class VariationParams:
    mu: float = 0.22
    sigma: float = 0.55 * 0.22 / 3.0
    phi: float = 0.5
    grid_n: int = 32
    seed: int = 0
    vdd: float = 1.1
    alpha: float = 1.3

    def __post_init__(self):
        if not 0 < self.mu < self.vdd:
            raise ValueError(f"need 0 < mu < vdd, got mu={self.mu}, vdd={self.vdd}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0 < self.phi <= 1:
            raise ValueError("phi must lie in (0, 1]")
        if self.grid_n < 2:
            raise ValueError("grid_n must be >= 2")


@dataclass
class VariationGrid:
    n: int
    values: np.ndarray
    params: VariationParams

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.n, self.n):
            raise ValueError(f"values must be {self.n}x{self.n}, got {self.values.shape}")


def correlogram(r, phi: float):
    """Spherical correlation at distance ``r`` (chip-length units)."""
    if phi <= 0:
        raise ValueError("phi must be > 0")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("distance must be >= 0")
    t = r / phi
    rho = np.where(t <= 1.0, 1.0 - 1.5 * t + 0.5 * t ** 3, 0.0)
    return float(rho) if rho.ndim == 0 else rho


def _centres(n: int) -> np.ndarray:
    ax = (np.arange(n) + 0.5) / n
    yy, xx = np.meshgrid(ax, ax, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


@lru_cache(maxsize=2)
def _unit_factor(n: int, phi: float) -> np.ndarray:
    pts = _centres(n)
    cov = correlogram(cdist(pts, pts), phi)
    cov[np.diag_indices_from(cov)] += REGULARIZATION
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise VariationError(f"correlation matrix for n={n}, phi={phi} is not PSD") from exc


def _exact_field(n: int, phi: float, rng: np.random.Generator) -> np.ndarray:
    return (_unit_factor(n, phi) @ rng.standard_normal(n * n)).reshape(n, n)


def _interpolated_field(n: int, phi: float, rng: np.random.Generator) -> np.ndarray:
    m = EXACT_MAX_N
    coarse = _exact_field(m, phi, rng)
    # fine centres in coarse-lattice coordinates, clamped to the lattice hull
    u = np.clip((np.arange(n) + 0.5) / n * m - 0.5, 0.0, m - 1.0)
    i0 = np.minimum(np.floor(u).astype(int), m - 2)
    f = u - i0
    iy, ix = np.meshgrid(i0, i0, indexing="ij")
    fy, fx = np.meshgrid(f, f, indexing="ij")
    w = [(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx]
    corners = [(iy, ix), (iy, ix + 1), (iy + 1, ix), (iy + 1, ix + 1)]
    field_ = sum(wk * coarse[c] for wk, c in zip(w, corners))
    # restore unit marginal variance lost to interpolation
    h = 1.0 / m
    offs = [(0, 0), (0, h), (h, 0), (h, h)]
    var = np.zeros_like(fx)
    for a, oa in zip(w, offs):
        for b, ob in zip(w, offs):
            var += a * b * correlogram(np.hypot(oa[0] - ob[0], oa[1] - ob[1]), phi)
    resid = np.sqrt(np.clip(1.0 - var, 0.0, None))
    return field_ + resid * rng.standard_normal((n, n))


def _systematic(p: VariationParams, sigma_sys: float, rng: np.random.Generator) -> VariationGrid:
    n = p.grid_n
    if n <= EXACT_MAX_N:
        z = _exact_field(n, p.phi, rng)
    else:
        z = _interpolated_field(n, p.phi, rng)
    return VariationGrid(n, sigma_sys * z, p)


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    sys_ss, rand_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(sys_ss), np.random.default_rng(rand_ss)


def gen_systematic(p: VariationParams, sigma_sys: float | None = None) -> VariationGrid:
    """Zero-mean spatially correlated field; std defaults to sigma / sqrt(2)."""
    sigma_sys = p.sigma / np.sqrt(2.0) if sigma_sys is None else sigma_sys
    return _systematic(p, sigma_sys, _streams(p.seed)[0])


def gen_map(p: VariationParams) -> VariationGrid:
    """Threshold-voltage map: nominal + systematic + random, clamped to [0.05, 0.9] * vdd."""
    s = p.sigma / np.sqrt(2.0)
    rng_sys, rng_rand = _streams(p.seed)
    sys_ = _systematic(p, s, rng_sys).values
    rand = s * rng_rand.standard_normal((p.grid_n, p.grid_n))
    values = np.clip(p.mu + sys_ + rand, 0.05 * p.vdd, 0.9 * p.vdd)
    return VariationGrid(p.grid_n, values, p)


def classify_regions(g: VariationGrid) -> np.ndarray:
    """LH-map: 1 marks an HVT fragment, 0 an LVT fragment (ties go to LVT)."""
    thr = g.params.mu + HVT_SIGMA_FACTOR * g.params.sigma
    return (g.values > thr).astype(np.int8)


def leff_from_vth(vth, p: VariationParams):
    """Effective channel length relative to nominal."""
    if np.any(np.asarray(vth) <= 0):
        raise ValueError("vth must be > 0")
    return 1.0 + (vth - p.mu) / (2.0 * p.mu)


@dataclass(frozen=True)
class RegionBlock:
    lx: int
    ux: int
    ly: int
    uy: int
    cls: str

    def __post_init__(self):
        if self.lx > self.ux or self.ly > self.uy:
            raise ValueError(f"empty block {self}")
        if self.cls not in (HVT, LVT):
            raise ValueError(f"block class must be HVT or LVT, got {self.cls!r}")

    @property
    def area(self) -> int:
        return (self.ux - self.lx + 1) * (self.uy - self.ly + 1)

    def fragments(self):
        for y in range(self.ly, self.uy + 1):
            for x in range(self.lx, self.ux + 1):
                yield y, x


@dataclass
class RMap:
    blocks: list[RegionBlock]
    n: int
    meta: dict = field(default_factory=dict)

    def class_matrix(self) -> np.ndarray:
        lh = np.full((self.n, self.n), -1, dtype=np.int8)
        for b in self.blocks:
            lh[b.ly:b.uy + 1, b.lx:b.ux + 1] = 1 if b.cls == HVT else 0
        return lh

    def of_class(self, cls: str) -> list[RegionBlock]:
        return [b for b in self.blocks if b.cls == cls]

    def lvt_fraction(self) -> float:
        return sum(b.area for b in self.of_class(LVT)) / float(self.n * self.n)


def build_rmap(lh: np.ndarray) -> RMap:
    """Decompose a binary class matrix into homogeneous rectangles.

    Row-major greedy sweep: from the first unassigned fragment take the widest
    homogeneous unassigned run to the right, then extend it downward while
    every fragment of the run stays homogeneous and unassigned.
    """
    lh = np.asarray(lh)
    n_rows, n_cols = lh.shape
    if n_rows != n_cols:
        raise ValueError("class matrix must be square")
    taken = np.zeros(lh.shape, dtype=bool)
    blocks = []
    for y in range(n_rows):
        for x in range(n_cols):
            if taken[y, x]:
                continue
            v = lh[y, x]
            ux = x
            while ux + 1 < n_cols and not taken[y, ux + 1] and lh[y, ux + 1] == v:
                ux += 1
            uy = y
            while uy + 1 < n_rows and np.all(lh[uy + 1, x:ux + 1] == v) \
                    and not taken[uy + 1, x:ux + 1].any():
                uy += 1
            taken[y:uy + 1, x:ux + 1] = True
            blocks.append(RegionBlock(x, ux, y, uy, HVT if v == 1 else LVT))
    return RMap(blocks, n_rows)


def _lvt_sides(b: RegionBlock, lh: np.ndarray) -> int:
    n = lh.shape[0]
    sides = 0
    if b.lx > 0 and np.all(lh[b.ly:b.uy + 1, b.lx - 1] == 0):
        sides += 1
    if b.ux < n - 1 and np.all(lh[b.ly:b.uy + 1, b.ux + 1] == 0):
        sides += 1
    if b.ly > 0 and np.all(lh[b.ly - 1, b.lx:b.ux + 1] == 0):
        sides += 1
    if b.uy < n - 1 and np.all(lh[b.uy + 1, b.lx:b.ux + 1] == 0):
        sides += 1
    return sides


def filter_blocks(m: RMap, min_area: int = 0, bridge_area: int = 0) -> RMap:
    """Drop scattered LVT blocks and absorb thin HVT bridges into LVT.

    LVT blocks smaller than ``min_area`` fragments become HVT. HVT blocks
    smaller than ``bridge_area`` that touch LVT on at least three sides become
    LVT. Side tests use the unfiltered classes; a die edge is not LVT.
    Block geometry is unchanged, so the result stays disjoint and covering.
    """
    lh = m.class_matrix()
    out = []
    for b in m.blocks:
        if b.cls == LVT and b.area < min_area:
            b = replace(b, cls=HVT)
        elif b.cls == HVT and b.area < bridge_area and _lvt_sides(b, lh) >= 3:
            b = replace(b, cls=LVT)
        out.append(b)
    return RMap(out, m.n, dict(m.meta))


# -- file formats ---------------------------------------------------------

def dumps_map(g: VariationGrid, meta: dict | None = None) -> str:
    """JSON header line (parameters plus ``meta``), then one CSV line per fragment row."""
    p = g.params
    header = dict(meta or {})
    header.update({"n": g.n, "mu": p.mu, "sigma": p.sigma, "phi": p.phi, "seed": p.seed,
                   "vdd": p.vdd, "alpha": p.alpha})
    lines = [json.dumps(header, sort_keys=True)]
    lines += [",".join(repr(float(v)) for v in row) for row in g.values]
    return "\n".join(lines) + "\n"


def loads_map(text: str) -> VariationGrid:
    first, _, body = text.partition("\n")
    h = json.loads(first)
    rows = [[float(v) for v in line.split(",")] for line in body.splitlines() if line.strip()]
    params = VariationParams(mu=h["mu"], sigma=h["sigma"], phi=h["phi"], grid_n=h["n"],
                             seed=h["seed"], vdd=h["vdd"], alpha=h["alpha"])
    return VariationGrid(h["n"], np.array(rows), params)


def write_map(path: str | Path, g: VariationGrid, meta: dict | None = None) -> None:
    Path(path).write_text(dumps_map(g, meta))


def read_map(path: str | Path) -> VariationGrid:
    return loads_map(Path(path).read_text())


def dumps_rmap(m: RMap, meta: dict | None = None) -> str:
    """Optional ``# {json}`` comment line, then CSV rows ``lx,ux,ly,uy,cls``."""
    buf = io.StringIO()
    buf.write("# " + json.dumps(dict(meta or {}, n=m.n), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lx", "ux", "ly", "uy", "cls"])
    for b in m.blocks:
        w.writerow([b.lx, b.ux, b.ly, b.uy, b.cls])
    return buf.getvalue()


def loads_rmap(text: str) -> RMap:
    meta = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            meta.update(json.loads(line[1:]))
        elif line.strip():
            body.append(line)
    rows = list(csv.DictReader(body))
    blocks = [RegionBlock(int(r["lx"]), int(r["ux"]), int(r["ly"]), int(r["uy"]), r["cls"])
              for r in rows]
    n = int(meta.pop("n", max((max(b.ux, b.uy) for b in blocks), default=-1) + 1))
    return RMap(blocks, n, meta)


def write_rmap(path: str | Path, m: RMap, meta: dict | None = None) -> None:
    Path(path).write_text(dumps_rmap(m, meta))


def read_rmap(path: str | Path) -> RMap:
    return loads_rmap(Path(path).read_text())


def params_dict(p: VariationParams) -> dict:
    return asdict(p)
