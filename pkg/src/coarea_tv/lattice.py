"""Piecewise-constant functions on ``h Z^N`` and the discrete functional J_h.

Cells are ``Q_x = x + h[0,1)^N`` for nodes ``x = h * k``.  A domain is an
axis-aligned box of cells, starting at integer index ``start``, plus a boolean
mask saying which cells belong to the open set.  Every sample point
``x + h*y`` (``y`` in the stencil) is itself a node, so its cell is the cell
with index ``k + y``; it belongs to the domain iff that cell is marked.
For domains that are not unions of cells this is an approximation.

All sums over nodes use :func:`math.fsum`, so results do not depend on the
summation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exceptions import PreconditionError
from .stencil import Stencil, StencilPotential, lovasz_extend_rows, upper_pair_constant

_SNAP = 1e-9


def shifted(arr: np.ndarray, offset, fill=0) -> np.ndarray:
    """``out[k] = arr[k + offset]`` where defined, ``fill`` elsewhere."""
    out = np.full_like(arr, fill)
    src, dst = [], []
    for n, o in zip(arr.shape, offset):
        o = int(o)
        if abs(o) >= n:
            return out
        if o >= 0:
            src.append(slice(o, n))
            dst.append(slice(0, n - o))
        else:
            src.append(slice(0, n + o))
            dst.append(slice(-o, n))
    out[tuple(dst)] = arr[tuple(src)]
    return out


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Cells ``start + index`` of the lattice ``h Z^N`` with an inside mask."""

    h: float
    start: tuple
    inside: np.ndarray

    def __post_init__(self):
        if not self.h > 0:
            raise PreconditionError("mesh size must be positive")
        inside = np.array(self.inside, dtype=bool)
        if inside.ndim == 0:
            raise PreconditionError("domain must have at least one axis")
        start = tuple(int(s) for s in self.start)
        if len(start) != inside.ndim:
            raise PreconditionError("start index has the wrong dimension")
        inside.setflags(write=False)
        object.__setattr__(self, "inside", inside)
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "h", float(self.h))

    @classmethod
    def box(cls, lo, hi, h: float) -> "GridDomain":
        """Cells whose centre lies in the open box ``(lo, hi)``."""
        return cls.from_predicate(lo, hi, h, None)

    @classmethod
    def from_predicate(cls, lo, hi, h: float, predicate: Optional[Callable] = None):
        """Cells of the bounding box ``(lo, hi)`` whose centre satisfies ``predicate``.

        ``predicate`` receives an ``(..., N)`` array of centres and returns a mask.
        """
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise PreconditionError("box requires lo < hi componentwise")
        if not h > 0:
            raise PreconditionError("mesh size must be positive")
        k0 = np.floor(lo / h + _SNAP).astype(int)
        k1 = np.ceil(hi / h - _SNAP).astype(int)
        shape = tuple(int(s) for s in np.maximum(k1 - k0, 1))
        dom = cls(h, tuple(k0), np.ones(shape, dtype=bool))
        c = dom.cell_centers()
        mask = np.all((c > lo) & (c < hi), axis=-1)
        if predicate is not None:
            mask &= np.asarray(predicate(c), dtype=bool)
        return cls(h, tuple(k0), mask)

    @property
    def dim(self) -> int:
        return self.inside.ndim

    @property
    def shape(self) -> tuple:
        return self.inside.shape

    @property
    def box_lo(self) -> np.ndarray:
        return self.h * np.asarray(self.start, dtype=float)

    @property
    def box_hi(self) -> np.ndarray:
        return self.h * (np.asarray(self.start) + np.asarray(self.shape)).astype(float)

    @property
    def n_cells(self) -> int:
        return int(self.inside.sum())

    def node_coords(self, index=None) -> np.ndarray:
        """Coordinates ``h * (start + index)``; all nodes of the box if ``index`` is None."""
        if index is None:
            grids = np.meshgrid(*[np.arange(n) for n in self.shape], indexing="ij")
            index = np.stack(grids, axis=-1)
        return self.h * (np.asarray(index) + np.asarray(self.start))

    def cell_centers(self) -> np.ndarray:
        return self.node_coords() + 0.5 * self.h

    def index_of(self, x) -> tuple:
        """Box index of the cell containing point ``x``."""
        k = np.floor(np.asarray(x, dtype=float) / self.h + _SNAP).astype(int)
        return tuple(int(v) for v in k - np.asarray(self.start))

    def same_as(self, other: "GridDomain") -> bool:
        return (
            self is other
            or (
                self.h == other.h
                and self.start == other.start
                and np.array_equal(self.inside, other.inside)
            )
        )

    def interior_mask(self, sigma: Stencil) -> np.ndarray:
        """Nodes ``x`` with every ``x + h*y`` in a cell of the domain."""
        if sigma.dim != self.dim:
            raise PreconditionError(f"stencil dim {sigma.dim} != domain dim {self.dim}")
        mask = np.ones(self.shape, dtype=bool)
        for y in sigma.offsets:
            mask &= shifted(self.inside, y, False)
        return mask


def interior_nodes(dom: GridDomain, sigma: Stencil) -> np.ndarray:
    """Box indices of the interior nodes, in lexicographic order (one row per node)."""
    return np.argwhere(dom.interior_mask(sigma))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """``u = sum_x u(x) chi_{Q_x}``; entries outside the domain are held at zero."""

    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.domain.shape:
            raise PreconditionError(f"values shape {v.shape} != domain shape {self.domain.shape}")
        v[~self.domain.inside] = 0.0
        if not np.all(np.isfinite(v)):
            raise PreconditionError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, dom: GridDomain, f: Callable, at: str = "node") -> "GridFunction":
        """Sample ``f`` at each cell's node (lower corner) or centre."""
        pts = dom.node_coords() if at == "node" else dom.cell_centers()
        return cls(dom, np.asarray(f(pts), dtype=float).reshape(dom.shape))

    @classmethod
    def constant(cls, dom: GridDomain, c: float) -> "GridFunction":
        return cls(dom, np.full(dom.shape, float(c)))

    def cell_values(self) -> np.ndarray:
        return self.values[self.domain.inside]

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.domain, values)

    def level_set(self, s: float) -> "GridSet":
        return GridSet(self.domain, self.values > s)

    def sup_norm(self) -> float:
        v = self.cell_values()
        return float(np.max(np.abs(v))) if v.size else 0.0


@dataclass(frozen=True, eq=False)
class GridSet:
    """Union of cells of the domain (its characteristic function ``chi_E``)."""

    domain: GridDomain
    member: np.ndarray

    def __post_init__(self):
        m = np.array(self.member, dtype=bool)
        if m.shape != self.domain.shape:
            raise PreconditionError(f"member shape {m.shape} != domain shape {self.domain.shape}")
        m &= self.domain.inside
        m.setflags(write=False)
        object.__setattr__(self, "member", m)

    def indicator(self) -> GridFunction:
        return GridFunction(self.domain, self.member.astype(float))

    def complement(self) -> "GridSet":
        return GridSet(self.domain, self.domain.inside & ~self.member)

    def __and__(self, other):
        return GridSet(self.domain, self.member & other.member)

    def __or__(self, other):
        return GridSet(self.domain, self.member | other.member)

    def __len__(self):
        return int(self.member.sum())


def _check_dims(dom: GridDomain, F: StencilPotential):
    if F.stencil.dim != dom.dim:
        raise PreconditionError(f"stencil dim {F.stencil.dim} != domain dim {dom.dim}")


def gather(u: GridFunction, x, sigma: Stencil) -> np.ndarray:
    """Stencil vector ``(u(x + h y))_y`` at the interior node with box index ``x``."""
    k = tuple(int(c) for c in x)
    dom = u.domain
    if len(k) != dom.dim or sigma.dim != dom.dim:
        raise PreconditionError("dimension mismatch")
    if any(not 0 <= c < n for c, n in zip(k, dom.shape)) or not dom.interior_mask(sigma)[k]:
        raise PreconditionError(f"node {k} is not an interior node")
    return np.array([u.values[tuple(np.add(k, y))] for y in sigma.offsets])


def stencil_rows(values: np.ndarray, node_mask: np.ndarray, sigma: Stencil) -> np.ndarray:
    """``(n_nodes, |sigma|)`` array of gathered values, nodes in lexicographic order."""
    cols = [shifted(values, y)[node_mask] for y in sigma.offsets]
    return np.stack(cols, axis=1)


def node_masks(member: np.ndarray, node_mask: np.ndarray, sigma: Stencil) -> np.ndarray:
    """Table index of ``chi_E[x + h sigma]`` for every interior node."""
    out = np.zeros(int(node_mask.sum()), dtype=np.int64)
    m = member.astype(np.int64)
    for j, y in enumerate(sigma.offsets):
        out |= shifted(m, y)[node_mask] << j
    return out


def node_terms(u: GridFunction, F: StencilPotential) -> np.ndarray:
    """Per-node extension values ``F(u[x + h sigma])`` (without the ``h^{N-1}`` factor)."""
    _check_dims(u.domain, F)
    mask = u.domain.interior_mask(F.stencil)
    return lovasz_extend_rows(F.values, stencil_rows(u.values, mask, F.stencil))


def eval_Jh(u: GridFunction, F: StencilPotential) -> float:
    """``h^{N-1} * sum over interior nodes of F(u[x + h sigma])``."""
    h, N = u.domain.h, u.domain.dim
    return h ** (N - 1) * math.fsum(node_terms(u, F))


def eval_Jh_set(E: GridSet, F: StencilPotential) -> float:
    """Discrete perimeter of a set by table lookup (no sorting)."""
    _check_dims(E.domain, F)
    dom = E.domain
    mask = dom.interior_mask(F.stencil)
    terms = F.values[node_masks(E.member, mask, F.stencil)]
    return dom.h ** (dom.dim - 1) * math.fsum(terms)


@dataclass
class CoareaReport:
    lhs: float
    rhs: float
    gap: float
    levels: int


def coarea_check(u: GridFunction, F: StencilPotential) -> CoareaReport:
    """Compare ``J_h(u)`` with the exact integral of ``J_h(chi_{u > s})`` over ``s``."""
    lhs = eval_Jh(u, F)
    levels = np.unique(u.cell_values())[::-1]
    terms = [
        (levels[j] - levels[j + 1]) * eval_Jh_set(u.level_set(levels[j + 1]), F)
        for j in range(len(levels) - 1)
    ]
    rhs = math.fsum(terms)
    return CoareaReport(lhs, rhs, abs(lhs - rhs), len(levels))


@dataclass
class InequalityReport:
    lhs: float
    rhs: float
    ok: bool
    details: dict

    def __bool__(self):
        return self.ok


def submodularity_of_Jh_check(E1: GridSet, E2: GridSet, F: StencilPotential, tol=1e-10):
    """``J(E1 & E2) + J(E1 | E2) <= J(E1) + J(E2) + tol``."""
    if not E1.domain.same_as(E2.domain):
        raise PreconditionError("sets live on different domains")
    lhs = eval_Jh_set(E1 & E2, F) + eval_Jh_set(E1 | E2, F)
    rhs = eval_Jh_set(E1, F) + eval_Jh_set(E2, F)
    ok = lhs <= rhs + tol
    details = {} if ok else {"E1": E1.member.copy(), "E2": E2.member.copy()}
    return InequalityReport(lhs, rhs, ok, details)


def _erode(mask: np.ndarray, cells: int) -> np.ndarray:
    out = mask.copy()
    for _ in range(cells):
        nxt = out.copy()
        for ax in range(mask.ndim):
            for s in (-1, 1):
                e = [0] * mask.ndim
                e[ax] = s
                nxt &= shifted(out, e, False)
        out = nxt
    return out


@dataclass
class TVBoundsReport:
    c: float
    tv_inner: float  # nearest-neighbour discrete TV over the inner window
    jh_outer: float  # J_h over the whole domain
    C2: float
    tv_stencil: float  # sum over interior nodes and offsets of |u(x+hy) - u(x)|, times h^{N-1}
    lower_ok: bool
    upper_ok: bool

    @property
    def ok(self) -> bool:
        return self.lower_ok and self.upper_ok


def total_variation_bounds_check(u: GridFunction, F: StencilPotential, margin: int = 1, rtol=1e-12):
    """Check ``c * TV_1(u, A) <= J_h(u, B) <= C2 * TV_sigma(u, B)``.

    ``B`` is the whole domain, ``A`` is the set of interior nodes eroded by
    ``margin`` cells.  ``c`` is the coercivity constant and ``C2`` the pair
    constant of :func:`coarea_tv.stencil.upper_pair_constant`.
    """
    c = F.coercivity_c
    if c <= 0:
        raise PreconditionError("total variation bounds need a coercive potential")
    dom = u.domain
    st = F.stencil
    hN1 = dom.h ** (dom.dim - 1)
    interior = dom.interior_mask(st)
    inner = _erode(interior, margin)
    rows = stencil_rows(u.values, inner, st)
    o = st.origin_index
    tv1 = hN1 * math.fsum(np.abs(rows[:, list(st.basis_indices)] - rows[:, [o]]).ravel())
    jh = eval_Jh(u, F)
    rows_all = stencil_rows(u.values, interior, st)
    tvs = hN1 * math.fsum(np.abs(rows_all - rows_all[:, [o]]).ravel())
    C2 = upper_pair_constant(F)
    scale = max(abs(jh), 1e-300)
    lower_ok = c * tv1 <= jh + rtol * scale
    upper_ok = jh <= C2 * tvs + rtol * scale
    return TVBoundsReport(c, tv1, jh, C2, tvs, bool(lower_ok), bool(upper_ok))
