"""Limit surface density ``phi(nu) = F(nu . sigma)`` and polyhedral perimeters."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import CoercivityError, PreconditionError
from .stencil import StencilPotential, lovasz_extend_rows


@dataclass(frozen=True, eq=False)
class AnisotropyDensity:
    potential: StencilPotential

    @property
    def dim(self) -> int:
        return self.potential.stencil.dim

    def __call__(self, nu) -> float:
        return phi(self, nu)

    def many(self, nus) -> np.ndarray:
        """Density at each row of ``nus``."""
        nus = np.atleast_2d(np.asarray(nus, dtype=float))
        if nus.shape[1] != self.dim:
            raise PreconditionError(f"directions must have {self.dim} components")
        return lovasz_extend_rows(self.potential.values, nus @ self.potential.stencil.array.T)


def phi(density: AnisotropyDensity, nu) -> float:
    nu = np.asarray(nu, dtype=float).reshape(-1)
    if nu.size != density.dim:
        raise PreconditionError(f"direction must have {density.dim} components")
    if not np.all(np.isfinite(nu)):
        raise PreconditionError("direction must be finite")
    return float(density.many(nu[None, :])[0])


def sphere_directions(dim: int, n: int) -> np.ndarray:
    """Unit directions: equal angles on the circle, a Fibonacci lattice on the sphere."""
    if dim == 2:
        t = 2 * np.pi * np.arange(n) / n
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    if dim == 3:
        i = np.arange(n) + 0.5
        z = 1 - 2 * i / n
        r = np.sqrt(1 - z * z)
        a = np.pi * (1 + 5 ** 0.5) * i
        return np.stack([r * np.cos(a), r * np.sin(a), z], axis=1)
    raise PreconditionError("direction sampling supports dim 2 or 3")


@dataclass
class FrankDiagram:
    theta: np.ndarray
    phi: np.ndarray
    points: np.ndarray

    def rows(self):
        for t, f, p in zip(self.theta, self.phi, self.points):
            yield (*t, f, *p)

    def columns(self):
        d = self.theta.shape[1]
        ax = "xyz"[:d]
        return [f"theta_{a}" for a in ax] + ["phi"] + [f"p_{a}" for a in ax]


def frank_diagram(density: AnisotropyDensity, n_samples: int = 360) -> FrankDiagram:
    """Boundary points ``theta / phi(theta)`` of the set ``{p : phi(p) <= 1}``."""
    theta = sphere_directions(density.dim, n_samples)
    vals = density.many(theta)
    if np.any(vals <= 0):
        k = int(np.argmin(vals))
        raise CoercivityError(
            f"phi vanishes at direction {theta[k].tolist()}; the potential is not coercive"
        )
    return FrankDiagram(theta, vals, theta / vals[:, None])


# ---------------------------------------------------------------------------
# polygons (2D)

def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True, eq=False)
class PolyhedralSet:
    """Simple polygon in the plane, stored counter-clockwise, and a clip window."""

    vertices: np.ndarray
    window_lo: tuple = (0.0, 0.0)
    window_hi: tuple = (1.0, 1.0)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise PreconditionError("polygon needs at least three 2-D vertices")
        if _signed_area(v) < 0:
            v = v[::-1].copy()
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "window_lo", tuple(float(a) for a in self.window_lo))
        object.__setattr__(self, "window_hi", tuple(float(a) for a in self.window_hi))

    @property
    def area(self) -> float:
        return _signed_area(self.vertices)

    def contains(self, pts) -> np.ndarray:
        """Even-odd test for an ``(..., 2)`` array of points."""
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        inside = np.zeros(x.shape, dtype=bool)
        v = self.vertices
        for (x1, y1), (x2, y2) in zip(v, np.roll(v, -1, axis=0)):
            crosses = (y1 > y) != (y2 > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            inside ^= crosses & (x < xint)
        return inside

    def distance_to_window_boundary(self) -> float:
        lo, hi = np.array(self.window_lo), np.array(self.window_hi)
        v = self.vertices
        return float(min(np.min(v - lo), np.min(hi - v)))


def _clip_halfplane(poly, axis, bound, keep_above):
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        pin = p[axis] >= bound if keep_above else p[axis] <= bound
        qin = q[axis] >= bound if keep_above else q[axis] <= bound
        if pin:
            out.append(p)
        if pin != qin:
            t = (bound - p[axis]) / (q[axis] - p[axis])
            r = p + t * (q - p)
            r[axis] = bound
            out.append(r)
    return out


def clip_to_window(E: PolyhedralSet) -> np.ndarray:
    """Sutherland-Hodgman clip of the polygon to its closed window rectangle."""
    poly = [np.array(p) for p in E.vertices]
    for axis in (0, 1):
        poly = _clip_halfplane(poly, axis, E.window_lo[axis], True) if poly else poly
        poly = _clip_halfplane(poly, axis, E.window_hi[axis], False) if poly else poly
    return np.array(poly).reshape(-1, 2)


@dataclass
class EdgeContribution:
    index: int
    length: float
    normal: tuple
    phi: float

    @property
    def contrib(self) -> float:
        return self.length * self.phi


@dataclass
class PerimeterReport:
    total: float
    edges: list = field(default_factory=list)

    def rows(self):
        for e in self.edges:
            yield (e.index, e.length, e.normal[0], e.normal[1], e.phi, e.contrib)

    @staticmethod
    def columns():
        return ["edge_index", "len", "nu_x", "nu_y", "phi", "contrib"]


def polyhedral_perimeter(density: AnisotropyDensity, E: PolyhedralSet) -> PerimeterReport:
    """Sum over clipped edges of ``length * phi(inner unit normal)``.

    Edges lying on the window boundary contribute nothing, zero-length edges are
    dropped.
    """
    if density.dim != 2:
        raise PreconditionError("polygon perimeters are implemented in 2D")
    pts = clip_to_window(E)
    lo, hi = np.array(E.window_lo), np.array(E.window_hi)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(np.concatenate([lo, hi])))))
    edges = []
    n = len(pts)
    for i in range(n):
        p, q = pts[i], pts[(i + 1) % n]
        d = q - p
        length = math.hypot(d[0], d[1])
        if length <= tol:
            continue
        on_boundary = any(
            (abs(p[a] - b) <= tol and abs(q[a] - b) <= tol) for a in (0, 1) for b in (lo[a], hi[a])
        )
        if on_boundary:
            continue
        nu = (-d[1] / length, d[0] / length)  # left normal points inside for CCW order
        edges.append(EdgeContribution(len(edges), length, nu, phi(density, nu)))
    return PerimeterReport(math.fsum(e.contrib for e in edges), edges)


def halfplane_polygon(nu, offset: float, window_lo, window_hi) -> PolyhedralSet:
    """The set ``{x : x . nu > offset}`` as a large polygon clipped by the window."""
    nu = np.asarray(nu, dtype=float)
    nu = nu / np.linalg.norm(nu)
    lo, hi = np.asarray(window_lo, float), np.asarray(window_hi, float)
    centre = 0.5 * (lo + hi)
    R = 4.0 * float(np.linalg.norm(hi - lo)) + abs(offset) + float(np.linalg.norm(centre))
    t = np.array([-nu[1], nu[0]])
    base = nu * offset + t * np.dot(centre, t)
    verts = [base - R * t, base + R * t, base + R * t + 2 * R * nu, base - R * t + 2 * R * nu]
    return PolyhedralSet(np.array(verts), tuple(lo), tuple(hi))


def halfspace_perimeter(density: AnisotropyDensity, nu, offset: float, window_lo, window_hi) -> float:
    """Limit perimeter of ``{x . nu > offset}`` inside an axis box.

    General directions in 2D; in other dimensions only coordinate directions,
    where the interface is a face of the box.
    """
    nu = np.asarray(nu, dtype=float)
    if density.dim == 2:
        return polyhedral_perimeter(density, halfplane_polygon(nu, offset, window_lo, window_hi)).total
    lo, hi = np.asarray(window_lo, float), np.asarray(window_hi, float)
    nz = np.flatnonzero(nu)
    if len(nz) != 1:
        raise PreconditionError("half-spaces in dim != 2 must be orthogonal to a coordinate axis")
    a = int(nz[0])
    unit = np.sign(nu[a]) * np.eye(density.dim)[a]
    level = offset / abs(nu[a]) * np.sign(nu[a])
    if not lo[a] < level < hi[a]:
        return 0.0
    area = float(np.prod(np.delete(hi - lo, a)))
    return area * phi(density, unit)


def box_perimeter(density: AnisotropyDensity, box_lo, box_hi, window_lo, window_hi) -> float:
    """Limit perimeter of an axis box in any dimension (faces on the window boundary excluded)."""
    blo, bhi = np.asarray(box_lo, float), np.asarray(box_hi, float)
    wlo, whi = np.asarray(window_lo, float), np.asarray(window_hi, float)
    clo, chi = np.maximum(blo, wlo), np.minimum(bhi, whi)
    if np.any(clo >= chi):
        return 0.0
    total = 0.0
    N = density.dim
    for a in range(N):
        area = float(np.prod(np.delete(chi - clo, a)))
        e = np.eye(N)[a]
        if wlo[a] < clo[a] < whi[a]:
            total += area * phi(density, e)
        if wlo[a] < chi[a] < whi[a]:
            total += area * phi(density, -e)
    return total
