"""Denoising with the discrete anisotropic total variation as regularizer.

Solves ``min_u J_h(u) + lam * h^N * sum_x (u(x) - g(x))^2`` over piecewise
constant ``u``.  Two exact oracles for tiny grids and a first-order solver for
real images:

* ``solve_oracle`` restricts ``u`` to a finite level grid ``L_0 < ... < L_m``.
  Writing ``u = L_0 + sum_j (L_j - L_{j-1}) chi_{E_j}`` splits the energy into
  independent set problems ``J_h(E) + lam h^N sum_{x in E} 2 (t_j - g(x))``
  with ``t_j`` the midpoint of ``L_{j-1}`` and ``L_j``.  Each is solved by
  enumerating all subsets; a second, fully exhaustive search over level-valued
  functions cross-checks the energy.
* ``solve_first_order`` runs an accelerated primal-dual iteration on
  ``J_h(u) = h^{N-1} sum_x max_v <w_v, u[x + h sigma]>``, where ``w_v`` are the
  greedy (sort-based) subgradients of the potential, and reports the
  primal-dual gap as a certified residual.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import MonotonicityError, PreconditionError
from .lattice import GridDomain, GridFunction, GridSet, eval_Jh, node_masks, shifted
from .stencil import (
    StencilPotential,
    base_vertices,
    check_submodular,
    load_potential,
    lovasz_extend_rows,
)

ORACLE_MAX_CELLS = 20
ORACLE_B_MAX_ASSIGNMENTS = 1 << 24
_CHUNK = 1 << 18


def default_level_grid(g: GridFunction) -> np.ndarray:
    """Distinct values of ``g`` and the midpoints between consecutive ones."""
    vals = np.unique(g.cell_values())
    mids = 0.5 * (vals[:-1] + vals[1:])
    return np.unique(np.concatenate([vals, mids]))


@dataclass
class DenoiseProblem:
    g: GridFunction
    potential: StencilPotential
    fidelity_weight: float = 1.0
    level_grid: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.fidelity_weight > 0:
            raise PreconditionError("fidelity weight must be positive")
        if self.potential.stencil.dim != self.g.domain.dim:
            raise PreconditionError("potential and datum have different dimensions")
        if self.level_grid is None:
            self.level_grid = default_level_grid(self.g)
        lv = np.asarray(self.level_grid, dtype=float)
        if lv.ndim != 1 or lv.size == 0 or np.any(np.diff(lv) <= 0):
            raise PreconditionError("level grid must be strictly increasing")
        gv = self.g.cell_values()
        if gv.size and (lv[0] > gv.min() or lv[-1] < gv.max()):
            raise PreconditionError("level grid must cover [min g, max g]")
        self.level_grid = lv

    @property
    def domain(self) -> GridDomain:
        return self.g.domain

    @property
    def cell_weight(self) -> float:
        """``lam * h^N``: fidelity weight times the cell volume."""
        d = self.domain
        return self.fidelity_weight * d.h ** d.dim


@dataclass
class DenoiseResult:
    u: GridFunction
    energy: float
    solver: str
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True
    trace: list = field(default_factory=list)  # (iter, energy, residual) checkpoints
    level_sets: Optional[list] = None
    oracle_b_energy: Optional[float] = None

    def report(self) -> str:
        return f"energy={self.energy!r}, iters={self.iterations}, residual={self.residual!r}"


def energy(prob: DenoiseProblem, u: GridFunction) -> float:
    if not u.domain.same_as(prob.domain):
        raise PreconditionError("u and g live on different domains")
    diff = u.cell_values() - prob.g.cell_values()
    return eval_Jh(u, prob.potential) + prob.cell_weight * math.fsum(diff * diff)


# ---------------------------------------------------------------------------
# index bookkeeping shared by the solvers

@dataclass
class _Layout:
    cells: np.ndarray  # flat box indices of the domain cells
    node_cells: np.ndarray  # (n_nodes, |sigma|) positions into the cell vector
    hN1: float

    @classmethod
    def build(cls, dom: GridDomain, F: StencilPotential) -> "_Layout":
        pos = np.full(dom.shape, -1, dtype=np.int64)
        cells = np.flatnonzero(dom.inside)
        pos.reshape(-1)[cells] = np.arange(cells.size)
        node_mask = dom.interior_mask(F.stencil)
        cols = [shifted(pos, y, -1)[node_mask] for y in F.stencil.offsets]
        nc = np.stack(cols, axis=1) if cols else np.zeros((0, 0), dtype=np.int64)
        return cls(cells, nc, dom.h ** (dom.dim - 1))

    @property
    def n(self) -> int:
        return self.cells.size

    def to_function(self, dom: GridDomain, vec) -> GridFunction:
        vals = np.zeros(dom.shape)
        vals.reshape(-1)[self.cells] = vec
        return GridFunction(dom, vals)


def _largest_minimizer(obj: np.ndarray, sizes: np.ndarray) -> int:
    best = obj.min()
    tol = 1e-12 * max(1.0, float(np.max(np.abs(obj))))
    cand = np.flatnonzero(obj <= best + tol)
    return int(cand[np.argmax(sizes[cand])])


def _all_set_perimeters(F: StencilPotential, lay: _Layout) -> np.ndarray:
    n = lay.n
    out = np.empty(1 << n)
    for start in range(0, 1 << n, _CHUNK):
        masks = np.arange(start, min(start + _CHUNK, 1 << n), dtype=np.int64)
        acc = np.zeros(masks.size)
        for row in lay.node_cells:
            idx = np.zeros(masks.size, dtype=np.int64)
            for j, c in enumerate(row):
                idx |= ((masks >> c) & 1) << j
            acc += F.values[idx]
        out[start:start + masks.size] = lay.hN1 * acc
    return out


def _exhaustive_levels(prob: DenoiseProblem, lay: _Layout):
    """Minimum energy over all functions with values in the level grid."""
    F = prob.potential
    L = prob.level_grid
    m, n, S = L.size, lay.n, F.size
    combos = np.arange(m ** S)
    digits = (combos[:, None] // m ** np.arange(S)) % m
    node_table = lay.hN1 * lovasz_extend_rows(F.values, L[digits])
    gv = prob.g.cell_values()
    fid = prob.cell_weight * (L[None, :] - gv[:, None]) ** 2  # (n, m)
    powers_cells = m ** np.arange(n, dtype=np.int64)
    powers_sigma = m ** np.arange(S, dtype=np.int64)
    best_e, best_idx = np.inf, -1
    total = m ** n
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        dig = (idx[:, None] // powers_cells) % m
        e = fid[np.arange(n), dig].sum(axis=1)
        for row in lay.node_cells:
            e += node_table[dig[:, row] @ powers_sigma]
        k = int(np.argmin(e))
        if e[k] < best_e:
            best_e, best_idx = float(e[k]), int(idx[k])
    dig = (best_idx // powers_cells) % m
    return L[dig]


def solve_oracle(prob: DenoiseProblem, run_exhaustive: Optional[bool] = None) -> DenoiseResult:
    """Exact minimizer over level-grid-valued functions, by level-set decomposition.

    Ties in each set problem go to the largest minimizer, which keeps the level
    sets nested for submodular potentials.  Unless disabled, or infeasible
    (more than 2**24 assignments), the energy is cross-checked against a brute
    force search over all level-valued functions.
    """
    dom = prob.domain
    F = prob.potential
    lay = _Layout.build(dom, F)
    n = lay.n
    if n > ORACLE_MAX_CELLS:
        raise PreconditionError(f"oracle limited to {ORACLE_MAX_CELLS} cells, got {n}")
    L = prob.level_grid
    gv = prob.g.cell_values()
    perims = _all_set_perimeters(F, lay)
    masks = np.arange(1 << n, dtype=np.int64)
    member = ((masks[:, None] >> np.arange(n)) & 1).astype(bool)
    sizes = member.sum(axis=1)
    g_sum = member @ gv
    a = prob.cell_weight

    sets = []
    for j in range(1, L.size):
        t = 0.5 * (L[j - 1] + L[j])
        obj = perims + 2 * a * (t * sizes - g_sum)
        sets.append(int(masks[_largest_minimizer(obj, sizes)]))
    for j in range(1, len(sets)):
        if sets[j] & ~sets[j - 1]:
            raise MonotonicityError(
                f"level set {j + 1} is not contained in level set {j}; potential not submodular?"
            )
    vec = np.full(n, L[0])
    for j, s in enumerate(sets, start=1):
        vec[member[s]] = L[j]
    u = lay.to_function(dom, vec)
    e = energy(prob, u)

    level_sets = [GridSet(dom, lay.to_function(dom, member[s].astype(float)).values > 0.5) for s in sets]
    result = DenoiseResult(u, e, "oracle", level_sets=level_sets)
    if run_exhaustive is None:
        run_exhaustive = L.size ** n <= ORACLE_B_MAX_ASSIGNMENTS
    if run_exhaustive:
        eb = energy(prob, lay.to_function(dom, _exhaustive_levels(prob, lay)))
        result.oracle_b_energy = eb
        if abs(eb - e) > 1e-9:
            raise RuntimeError(f"oracle disagreement: level-set {e!r} vs exhaustive {eb!r}")
    return result


# ---------------------------------------------------------------------------
# first-order solver

def _project_scaled_simplex(P: np.ndarray, radius: float) -> np.ndarray:
    """Row-wise Euclidean projection onto ``{p >= 0, sum p = radius}``."""
    V = P.shape[1]
    srt = -np.sort(-P, axis=1)
    css = np.cumsum(srt, axis=1) - radius
    k = np.arange(1, V + 1)
    cond = srt - css / k > 0
    rho = V - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(P.shape[0]), rho] / (rho + 1)
    return np.maximum(P - theta[:, None], 0.0)


def _greedy_rows(F: StencilPotential, Ug: np.ndarray) -> np.ndarray:
    order = np.argsort(-Ug, axis=1, kind="stable")
    top = np.cumsum(np.left_shift(1, order), axis=1)
    prev = np.concatenate([np.zeros((Ug.shape[0], 1), dtype=np.int64), top[:, :-1]], axis=1)
    W = np.empty_like(Ug)
    np.put_along_axis(W, order, F.values[top] - F.values[prev], axis=1)
    return W


class _Objective:
    def __init__(self, prob: DenoiseProblem, lay: _Layout):
        self.F = prob.potential
        self.lay = lay
        self.a = prob.cell_weight
        self.g = prob.g.cell_values()

    def primal(self, u) -> float:
        Ug = u[self.lay.node_cells]
        J = self.lay.hN1 * float(lovasz_extend_rows(self.F.values, Ug).sum()) if Ug.size else 0.0
        return J + self.a * float(np.sum((u - self.g) ** 2))

    def adjoint(self, rows) -> np.ndarray:
        """Scatter per-node stencil vectors back onto cells."""
        nc = self.lay.node_cells
        return np.bincount(nc.ravel(), weights=rows.ravel(), minlength=self.lay.n)

    def dual(self, q, lo, hi) -> float:
        """``min over u in [lo, hi] of <q, u> + a |u - g|^2``."""
        u = np.clip(self.g - q / (2 * self.a), lo, hi)
        return float(np.sum(q * u + self.a * (u - self.g) ** 2))


def _initial_point(g, init, rng_seed, lo, hi):
    if init == "datum":
        return g.copy()
    if init == "mean":
        return np.full_like(g, g.mean())
    if init == "random":
        rng = np.random.default_rng(rng_seed)
        return rng.uniform(lo, hi, size=g.shape)
    raise PreconditionError(f"unknown init {init!r}")


def solve_first_order(
    prob: DenoiseProblem,
    max_iter: int = 5000,
    tol: float = 1e-7,
    method: str = "pdhg",
    init: str = "datum",
    rng_seed: Optional[int] = None,
    check_every: int = 10,
    step_a: Optional[float] = None,
    step_b: float = 1.0,
) -> DenoiseResult:
    """Minimize the denoising energy with a first-order method.

    Parameters
    ----------
    method : {"pdhg", "subgradient"}
        ``pdhg`` is the accelerated primal-dual scheme (needs at most 8 stencil
        offsets); ``residual`` is then the relative primal-dual gap.
        ``subgradient`` is a proximal subgradient scheme with steps
        ``step_a / (k + step_b)``; ``residual`` is the relative energy decrease
        over the last window of checkpoints.
    tol : float
        Stop once the residual drops below ``tol``.

    Iterates are kept in ``[min g, max g]`` (truncation never increases the
    energy).  The returned iterate is the best one seen at a checkpoint, so the
    energies in ``trace`` are nonincreasing.
    """
    F = prob.potential
    if not check_submodular(F).ok:
        raise PreconditionError("first-order solver needs a submodular potential")
    dom = prob.domain
    lay = _Layout.build(dom, F)
    obj = _Objective(prob, lay)
    g = obj.g
    if g.size == 0:
        return DenoiseResult(prob.g, 0.0, "first_order")
    lo, hi = float(g.min()), float(g.max())
    if method == "pdhg" and F.size > 8:
        warnings.warn("stencil too large for vertex enumeration; using subgradient steps", RuntimeWarning)
        method = "subgradient"
    u = np.clip(_initial_point(g, init, rng_seed, lo, hi), lo, hi)
    if method == "pdhg":
        run = _pdhg
    elif method == "subgradient":
        run = _subgradient
    else:
        raise PreconditionError(f"unknown method {method!r}")
    u_best, it, residual, trace = run(
        obj, u, lo, hi, max_iter, tol, check_every, step_a=step_a, step_b=step_b
    )
    converged = residual <= tol
    if not converged:
        warnings.warn(
            f"first-order solver stopped after {it} iterations with residual {residual:.3g}",
            RuntimeWarning,
        )
    uf = lay.to_function(dom, u_best)
    return DenoiseResult(uf, energy(prob, uf), "first_order", it, residual, converged, trace)


def _pdhg(obj: _Objective, u, lo, hi, max_iter, tol, check_every, **_):
    F, lay, a, g = obj.F, obj.lay, obj.a, obj.g
    W = base_vertices(F)
    nc = lay.node_cells
    hN1 = lay.hN1
    n_nodes = nc.shape[0]
    mult = np.bincount(nc.ravel(), minlength=lay.n).max() if n_nodes else 1
    Lk = np.linalg.norm(W, 2) * math.sqrt(mult) or 1.0
    tau = sigma = 1.0 / Lk
    gamma = 2.0 * a

    Ku = u[nc] @ W.T if n_nodes else np.zeros((0, len(W)))
    p = np.zeros_like(Ku)
    if n_nodes:
        p[np.arange(n_nodes), np.argmax(Ku, axis=1)] = hN1
    u_bar = u.copy()
    best_p, best_d = obj.primal(u), -np.inf
    u_best = u.copy()
    trace = [(0, best_p, np.inf)]
    residual = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        if n_nodes:
            p = _project_scaled_simplex(p + sigma * (u_bar[nc] @ W.T), hN1)
            q = obj.adjoint(p @ W)
        else:
            q = np.zeros_like(u)
        u_new = np.clip((u - tau * q + 2 * tau * a * g) / (1 + 2 * tau * a), lo, hi)
        theta = 1.0 / math.sqrt(1.0 + 2.0 * gamma * tau)
        tau *= theta
        sigma /= theta
        u_bar = u_new + theta * (u_new - u)
        u = u_new
        if it % check_every == 0 or it == max_iter:
            e = obj.primal(u)
            if e < best_p:
                best_p, u_best = e, u.copy()
            best_d = max(best_d, obj.dual(q, lo, hi))
            gap = max(best_p - best_d, 0.0)
            residual = gap / max(abs(best_p), 1e-300) if gap > 1e-15 else 0.0
            trace.append((it, best_p, residual))
            if residual <= tol:
                break
    return u_best, it, residual, trace


def _subgradient(obj: _Objective, u, lo, hi, max_iter, tol, check_every, step_a=None, step_b=1.0):
    F, lay, a, g = obj.F, obj.lay, obj.a, obj.g
    nc = lay.node_cells
    step_a = step_a if step_a is not None else 1.0 / (2.0 * a)
    best = obj.primal(u)
    u_best = u.copy()
    trace = [(0, best, np.inf)]
    residual = np.inf
    window = 10
    it = 0
    for it in range(1, max_iter + 1):
        t = step_a / (it + step_b)
        s = lay.hN1 * obj.adjoint(_greedy_rows(F, u[nc])) if nc.size else np.zeros_like(u)
        u = np.clip((u - t * s + 2 * t * a * g) / (1 + 2 * t * a), lo, hi)
        if it % check_every == 0 or it == max_iter:
            e = obj.primal(u)
            if e < best:
                best, u_best = e, u.copy()
            if len(trace) > window:
                old = trace[-window][1]
                residual = (old - best) / max(abs(best), 1e-300)
            trace.append((it, best, residual))
            if residual <= tol:
                break
    return u_best, it, residual, trace


# ---------------------------------------------------------------------------
# diagnostics

@dataclass
class LevelSetReport:
    worst_violation: float
    n_violations: int
    worst_threshold: Optional[float] = None
    worst_cell: Optional[tuple] = None

    @property
    def ok(self) -> bool:
        return self.n_violations == 0


def flip_gains(prob: DenoiseProblem, E: GridSet, s: float) -> np.ndarray:
    """Change of ``J_h(E) + lam h^N sum_E 2(s - g)`` when each single cell is flipped."""
    dom = prob.domain
    F = prob.potential
    st = F.stencil
    interior = dom.interior_mask(st)
    B = np.zeros(dom.shape, dtype=np.int64)
    B[interior] = node_masks(E.member, interior, st)
    base = np.where(interior, F.values[B], 0.0)
    dJ = np.zeros(dom.shape)
    for j, y in enumerate(st.offsets):
        d_node = np.where(interior, F.values[B ^ (1 << j)], 0.0) - base
        dJ += shifted(d_node, tuple(-c for c in y), 0.0)
    dJ *= dom.h ** (dom.dim - 1)
    sign = np.where(E.member, -1.0, 1.0)
    dfid = sign * 2.0 * prob.cell_weight * (s - prob.g.values)
    out = dJ + dfid
    out[~dom.inside] = np.inf
    return out


def level_set_consistency_check(prob: DenoiseProblem, u: GridFunction, thresholds, tol=1e-9):
    """Check that no single-cell flip improves any level set ``{u > s}``."""
    worst, count, where, at = 0.0, 0, None, None
    for s in thresholds:
        d = flip_gains(prob, u.level_set(s), float(s))
        bad = d < -tol
        count += int(bad.sum())
        k = np.unravel_index(int(np.argmin(d)), d.shape)
        if -d[k] > worst:
            worst, where, at = float(-d[k]), tuple(int(i) for i in k), float(s)
    return LevelSetReport(worst, count, at, where)


def midpoint_thresholds(levels) -> np.ndarray:
    lv = np.asarray(levels, dtype=float)
    return 0.5 * (lv[:-1] + lv[1:])


# ---------------------------------------------------------------------------
# estimator

def _resolve_potential(potential) -> StencilPotential:
    if isinstance(potential, StencilPotential):
        return potential
    return load_potential(potential)


class AnisotropicTVDenoiser(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` validates the potential, ``transform`` denoises an image.

    Parameters
    ----------
    potential : str or StencilPotential
        Built-in name, path to a potential file, or a potential object.
    fidelity_weight : float
        Weight ``lam`` of the quadratic fidelity term.
    h : float
        Mesh size of the pixel grid.
    solver : {"first_order", "oracle"}
    method : {"pdhg", "subgradient"}
        First-order scheme.
    max_iter, tol : first-order stopping rule.
    """

    def __init__(
        self,
        potential="nearest_neighbor",
        fidelity_weight=1.0,
        h=1.0,
        solver="first_order",
        method="pdhg",
        max_iter=5000,
        tol=1e-7,
    ):
        self.potential = potential
        self.fidelity_weight = fidelity_weight
        self.h = h
        self.solver = solver
        self.method = method
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None):
        X = check_array(X, ensure_2d=False, allow_nd=True, dtype=float)
        F = _resolve_potential(self.potential)
        if F.stencil.dim != X.ndim:
            raise ValueError(f"potential is {F.stencil.dim}-D but X has {X.ndim} axes")
        if not check_submodular(F).ok:
            raise ValueError("potential is not submodular")
        if not self.fidelity_weight > 0 or not self.h > 0:
            raise ValueError("fidelity_weight and h must be positive")
        if self.solver not in ("first_order", "oracle"):
            raise ValueError(f"unknown solver {self.solver!r}")
        self.potential_ = F
        self.shape_ = X.shape
        return self

    def _problem(self, X) -> DenoiseProblem:
        check_is_fitted(self, "potential_")
        X = check_array(X, ensure_2d=False, allow_nd=True, dtype=float)
        if X.ndim != self.potential_.stencil.dim:
            raise ValueError("X dimension does not match the potential")
        dom = GridDomain(self.h, (0,) * X.ndim, np.ones(X.shape, dtype=bool))
        return DenoiseProblem(GridFunction(dom, X), self.potential_, self.fidelity_weight)

    def denoise(self, X) -> DenoiseResult:
        prob = self._problem(X)
        if self.solver == "oracle":
            return solve_oracle(prob)
        return solve_first_order(prob, max_iter=self.max_iter, tol=self.tol, method=self.method)

    def transform(self, X):
        return np.array(self.denoise(X).u.values)

    def score(self, X, y=None):
        """Negative energy of the denoised image (higher is better)."""
        return -self.denoise(X).energy
