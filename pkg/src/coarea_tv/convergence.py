"""Rasterized reference sets and convergence tables of J_h towards its limit.

Limit values always come from :mod:`coarea_tv.anisotropy`; nothing here
recomputes them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .anisotropy import (
    AnisotropyDensity,
    PolyhedralSet,
    box_perimeter,
    halfspace_perimeter,
    polyhedral_perimeter,
)
from .exceptions import PreconditionError
from .lattice import GridDomain, GridFunction, GridSet, eval_Jh, eval_Jh_set
from .stencil import StencilPotential

KINDS = ("halfspace", "polygon", "function_tv")


def default_schedule(k_min: int = 3, k_max: int = 8) -> list:
    return [2.0 ** -k for k in range(k_min, k_max + 1)]


@dataclass
class ConvergenceRow:
    h: float
    Jh: float
    limit: float
    abs_err: float
    err_over_h: float

    @staticmethod
    def columns():
        return ["h", "Jh", "limit", "abs_err", "err_over_h"]

    def astuple(self):
        return (self.h, self.Jh, self.limit, self.abs_err, self.err_over_h)

    @property
    def rel_err(self) -> float:
        return self.abs_err / abs(self.limit) if self.limit else self.abs_err


@dataclass
class ConvergenceExperiment:
    """One experiment: geometry, window, mesh schedule and potential.

    ``layers`` (for ``function_tv``) is a list of ``(weight, PolyhedralSet)``
    with positive weights whose polygons are pairwise nested or disjoint;
    the function is ``base + sum weight * chi_polygon``.
    """

    kind: str
    potential: StencilPotential
    h_schedule: Sequence[float] = field(default_factory=default_schedule)
    window_lo: Optional[Sequence[float]] = None
    window_hi: Optional[Sequence[float]] = None
    nu: Optional[Sequence[float]] = None
    offset: float = 0.0
    polygon: Optional[PolyhedralSet] = None
    layers: list = field(default_factory=list)
    base: float = 0.0
    shift: Optional[Sequence[float]] = None  # fraction of h added to sample points

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PreconditionError(f"unknown experiment kind {self.kind!r}")
        hs = list(self.h_schedule)
        if not hs or any(b >= a for a, b in zip(hs, hs[1:])) or hs[-1] <= 0:
            raise PreconditionError("h_schedule must be positive and strictly decreasing")
        self.h_schedule = hs
        N = self.potential.stencil.dim
        if self.window_lo is None:
            if self.kind == "halfspace":
                self.window_lo, self.window_hi = [-0.5] * N, [0.5] * N
            else:
                self.window_lo, self.window_hi = [0.0] * N, [1.0] * N
        size = min(np.subtract(self.window_hi, self.window_lo))
        if self.potential.stencil.radius * hs[0] >= size:
            raise PreconditionError("h too large for the window")

    @property
    def density(self) -> AnisotropyDensity:
        return AnisotropyDensity(self.potential)


def _sample_points(dom: GridDomain, shift) -> np.ndarray:
    pts = dom.cell_centers()
    if shift is not None:
        pts = dom.node_coords() + dom.h * np.asarray(shift, dtype=float)
    return pts


def rasterize_halfspace(nu, dom: GridDomain, offset: float = 0.0, shift=None) -> GridSet:
    """Cells whose centre ``c`` satisfies ``c . nu > offset``."""
    nu = np.asarray(nu, dtype=float)
    if abs(np.linalg.norm(nu) - 1.0) > 1e-12:
        raise PreconditionError("nu must be a unit vector")
    pts = _sample_points(dom, shift)
    # elementwise products: a BLAS dot may fuse multiply-adds and break exact ties on the interface
    return GridSet(dom, np.sum(pts * nu, axis=-1) > offset)


def rasterize_polygon(poly: PolyhedralSet, dom: GridDomain, shift=None) -> GridSet:
    """Cells whose centre (or shifted node, if ``shift`` is given) lies in the polygon."""
    return GridSet(dom, poly.contains(_sample_points(dom, shift)))


def _row(h, jh, limit) -> ConvergenceRow:
    err = abs(jh - limit)
    return ConvergenceRow(h, jh, limit, err, err / h)


def run_halfspace_experiment(exp: ConvergenceExperiment) -> list:
    if exp.kind != "halfspace" or exp.nu is None:
        raise PreconditionError("half-space experiment needs kind='halfspace' and nu")
    nu = np.asarray(exp.nu, dtype=float)
    nu = nu / np.linalg.norm(nu)
    limit = halfspace_perimeter(exp.density, nu, exp.offset, exp.window_lo, exp.window_hi)
    rows = []
    for h in exp.h_schedule:
        dom = GridDomain.box(exp.window_lo, exp.window_hi, h)
        E = rasterize_halfspace(nu, dom, exp.offset, exp.shift)
        rows.append(_row(h, eval_Jh_set(E, exp.potential), limit))
    return rows


def _check_margin(poly: PolyhedralSet, exp: ConvergenceExperiment):
    need = exp.potential.stencil.radius * max(exp.h_schedule)
    if poly.distance_to_window_boundary() <= need:
        raise PreconditionError("polygon touches the window margin")


def _with_window(poly: PolyhedralSet, exp: ConvergenceExperiment) -> PolyhedralSet:
    return PolyhedralSet(poly.vertices, tuple(exp.window_lo), tuple(exp.window_hi))


def run_polygon_experiment(exp: ConvergenceExperiment) -> list:
    if exp.kind != "polygon" or exp.polygon is None:
        raise PreconditionError("polygon experiment needs kind='polygon' and a polygon")
    poly = _with_window(exp.polygon, exp)
    _check_margin(poly, exp)
    limit = polyhedral_perimeter(exp.density, poly).total
    rows = []
    for h in exp.h_schedule:
        dom = GridDomain.box(exp.window_lo, exp.window_hi, h)
        E = rasterize_polygon(poly, dom, exp.shift)
        rows.append(_row(h, eval_Jh_set(E, exp.potential), limit))
    return rows


def _interior_point(P: PolyhedralSet) -> np.ndarray:
    c = P.vertices.mean(axis=0)
    if P.contains(c[None])[0]:
        return c
    scale = 1e-6 * float(np.ptp(P.vertices))
    for a, b in zip(P.vertices, np.roll(P.vertices, -1, axis=0)):
        t = (b - a) / np.linalg.norm(b - a)
        q = 0.5 * (a + b) + scale * np.array([-t[1], t[0]])
        if P.contains(q[None])[0]:
            return q
    raise PreconditionError("cannot find an interior point of a layer polygon")


def _contains_layer(Q: PolyhedralSet, P: PolyhedralSet) -> bool:
    return abs(Q.area) > abs(P.area) and bool(Q.contains(_interior_point(P)[None])[0])


def _layer_depths(layers):
    """For each layer, the summed weight of itself and every layer containing it."""
    return [
        w + sum(wj for j, (wj, Q) in enumerate(layers) if j != i and _contains_layer(Q, P))
        for i, (w, P) in enumerate(layers)
    ]


def coarea_limit(density: AnisotropyDensity, layers, window_lo, window_hi) -> float:
    """Limit value ``sum over level gaps of gap * Per({u > s})`` for a layered function."""
    if any(w <= 0 for w, _ in layers):
        raise PreconditionError("layer weights must be positive")
    depth = _layer_depths(layers)
    levels = sorted({0.0, *depth})
    total = []
    for lo_s, hi_s in zip(levels, levels[1:]):
        s = 0.5 * (lo_s + hi_s)
        # the level set {u > s} is the union of the outermost layers deeper than s
        members = [i for i in range(len(layers)) if depth[i] > s]
        outer = [
            i for i in members
            if not any(j != i and _contains_layer(layers[j][1], layers[i][1]) for j in members)
        ]
        per = math.fsum(
            polyhedral_perimeter(
                density, PolyhedralSet(layers[i][1].vertices, tuple(window_lo), tuple(window_hi))
            ).total
            for i in outer
        )
        total.append((hi_s - lo_s) * per)
    return math.fsum(total)


def rasterize_layers(layers, base: float, dom: GridDomain, shift=None) -> GridFunction:
    vals = np.full(dom.shape, float(base))
    for w, P in layers:
        vals += w * rasterize_polygon(P, dom, shift).member
    return GridFunction(dom, vals)


def run_function_tv_experiment(exp: ConvergenceExperiment) -> list:
    if exp.kind != "function_tv":
        raise PreconditionError("function experiment needs kind='function_tv'")
    layers = [(float(w), _with_window(P, exp)) for w, P in exp.layers]
    for _, P in layers:
        _check_margin(P, exp)
    limit = coarea_limit(exp.density, layers, exp.window_lo, exp.window_hi) if layers else 0.0
    rows = []
    for h in exp.h_schedule:
        dom = GridDomain.box(exp.window_lo, exp.window_hi, h)
        u = rasterize_layers(layers, exp.base, dom, exp.shift)
        rows.append(_row(h, eval_Jh(u, exp.potential), limit))
    return rows


def run_experiment(exp: ConvergenceExperiment) -> list:
    return {
        "halfspace": run_halfspace_experiment,
        "polygon": run_polygon_experiment,
        "function_tv": run_function_tv_experiment,
    }[exp.kind](exp)


def axis_box_limit(potential: StencilPotential, box_lo, box_hi, window_lo, window_hi) -> float:
    """Limit perimeter of an axis box in any dimension; thin wrapper for experiments in 3D."""
    return box_perimeter(AnisotropyDensity(potential), box_lo, box_hi, window_lo, window_hi)


def square(center, side, window_lo=(0.0, 0.0), window_hi=(1.0, 1.0)) -> PolyhedralSet:
    cx, cy = center
    a = side / 2
    v = [(cx - a, cy - a), (cx + a, cy - a), (cx + a, cy + a), (cx - a, cy + a)]
    return PolyhedralSet(np.array(v), tuple(window_lo), tuple(window_hi))


def diamond(center, half_diagonal, window_lo=(0.0, 0.0), window_hi=(1.0, 1.0)) -> PolyhedralSet:
    """Square rotated by 45 degrees; its side is ``half_diagonal * sqrt(2)``."""
    cx, cy = center
    a = half_diagonal
    v = [(cx + a, cy), (cx, cy + a), (cx - a, cy), (cx, cy - a)]
    return PolyhedralSet(np.array(v), tuple(window_lo), tuple(window_hi))
