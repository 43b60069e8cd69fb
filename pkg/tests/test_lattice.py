import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coarea_tv.exceptions import PreconditionError
from coarea_tv.lattice import (
    GridDomain,
    GridFunction,
    GridSet,
    coarea_check,
    eval_Jh,
    eval_Jh_set,
    gather,
    interior_nodes,
    shifted,
    submodularity_of_Jh_check,
    total_variation_bounds_check,
)
from coarea_tv.stencil import (
    Stencil,
    StencilPotential,
    binary_euclidean_potential,
    diagonal_pairs_potential,
    nearest_neighbor_potential,
)
from oracles import brute_Jh


def unit_square(h):
    return GridDomain.box((0, 0), (1, 1), h)


def random_function(rng, dom, n_levels):
    levels = rng.normal(size=n_levels)
    return GridFunction(dom, levels[rng.integers(0, n_levels, size=dom.shape)])


# ---------------------------------------------------------------------------
# domains

def test_box_cells_and_coordinates():
    dom = unit_square(0.25)
    assert dom.shape == (4, 4) and dom.n_cells == 16
    assert np.allclose(dom.box_lo, 0) and np.allclose(dom.box_hi, 1)
    assert np.allclose(dom.cell_centers()[0, 0], (0.125, 0.125))
    assert dom.index_of((0.3, 0.9)) == (1, 3)


def test_box_with_negative_corner():
    dom = GridDomain.box((-0.5, -0.5), (0.5, 0.5), 0.25)
    assert dom.start == (-2, -2) and dom.n_cells == 16


def test_from_predicate_disk():
    dom = GridDomain.from_predicate((0, 0), (1, 1), 0.1, lambda c: ((c - 0.5) ** 2).sum(-1) < 0.16)
    c = dom.cell_centers()[dom.inside]
    assert np.all(((c - 0.5) ** 2).sum(-1) < 0.16)
    assert 0 < dom.n_cells < 100


@pytest.mark.parametrize("lo,hi,h", [((0, 0), (0, 1), 0.1), ((0, 0), (1, 1), 0.0), ((0,), (1, 1), 0.1)])
def test_box_rejects_bad_input(lo, hi, h):
    with pytest.raises(PreconditionError):
        GridDomain.box(lo, hi, h)


def test_shifted_reads_forward():
    a = np.arange(12).reshape(3, 4)
    s = shifted(a, (1, 0), fill=-1)
    assert s[0, 0] == a[1, 0] and np.all(s[2] == -1)
    assert np.array_equal(shifted(a, (0, -1), fill=-1)[:, 1:], a[:, :-1])


# ---------------------------------------------------------------------------
# interior nodes

def test_interior_nodes_three_by_three_block(nn):
    nodes = interior_nodes(unit_square(0.25), nn.stencil)
    expected = [(i, j) for i in range(3) for j in range(3)]
    assert [tuple(r) for r in nodes] == expected


def test_interior_nodes_origin_stencil():
    dom = GridDomain.from_predicate((0, 0), (1, 1), 0.125, lambda c: c[..., 0] < c[..., 1])
    nodes = interior_nodes(dom, Stencil(((0, 0),)))
    assert [tuple(r) for r in nodes] == [tuple(r) for r in np.argwhere(dom.inside)]


def test_interior_nodes_empty(nn):
    dom = GridDomain.box((0, 0), (0.1, 1), 0.25)  # a single column of cells
    assert len(interior_nodes(dom, nn.stencil)) == 0


def test_interior_nodes_dimension_mismatch(nn):
    with pytest.raises(PreconditionError):
        interior_nodes(GridDomain.box((0,), (1,), 0.25), nn.stencil)


# ---------------------------------------------------------------------------
# gather

def test_gather_constant(nn):
    u = GridFunction.constant(unit_square(0.25), 5.0)
    assert np.array_equal(gather(u, (1, 1), nn.stencil), [5.0, 5.0, 5.0])


def test_gather_first_coordinate(nn):
    u = GridFunction.from_callable(unit_square(0.25), lambda p: p[..., 0])
    assert np.array_equal(gather(u, (0, 0), nn.stencil), [0.0, 0.25, 0.0])


def test_gather_indicator(dp, rng):
    dom = unit_square(0.125)
    E = GridSet(dom, rng.random(dom.shape) < 0.5)
    v = gather(E.indicator(), (2, 5), dp.stencil)
    expected = [E.member[2 + y[0], 5 + y[1]] for y in dp.stencil.offsets]
    assert np.array_equal(v, np.array(expected, dtype=float))


def test_gather_rejects_boundary_node(nn):
    u = GridFunction.constant(unit_square(0.25), 1.0)
    with pytest.raises(PreconditionError):
        gather(u, (3, 0), nn.stencil)


# ---------------------------------------------------------------------------
# J_h

def test_Jh_constant_is_zero(bundled):
    assert eval_Jh(GridFunction.constant(unit_square(0.125), 2.5), bundled) == 0.0


def test_Jh_half_plane_regression(nn):
    dom = unit_square(0.125)
    E = GridSet(dom, dom.cell_centers()[..., 0] < 0.5)
    # seven nodes of the column i = 3 straddle the interface, each with F = 1
    assert brute_Jh(E.indicator().values, dom, nn) == pytest.approx(0.875, abs=1e-15)
    assert eval_Jh_set(E, nn) == 0.875
    assert eval_Jh(E.indicator(), nn) == 0.875


@pytest.mark.parametrize("h", [0.25, 0.125, 0.1, 1 / 32])
def test_single_cell_perimeter(nn, h):
    dom = unit_square(h)
    m = np.zeros(dom.shape, dtype=bool)
    m[dom.shape[0] // 2, dom.shape[1] // 2] = True
    assert eval_Jh_set(GridSet(dom, m), nn) == pytest.approx(4 * h, abs=1e-15)


def test_empty_and_full_sets(bundled):
    dom = unit_square(0.125)
    assert eval_Jh_set(GridSet(dom, np.zeros(dom.shape, bool)), bundled) == 0.0
    assert eval_Jh_set(GridSet(dom, dom.inside), bundled) == 0.0


def test_Jh_set_matches_sorted_path(bundled, rng):
    dom = unit_square(1 / 16)
    for _ in range(10):
        E = GridSet(dom, rng.random(dom.shape) < 0.4)
        assert eval_Jh_set(E, bundled) == eval_Jh(E.indicator(), bundled)


@pytest.mark.parametrize("F", [nearest_neighbor_potential(), binary_euclidean_potential(), diagonal_pairs_potential()])
def test_Jh_matches_coordinate_oracle(F):
    rng = np.random.default_rng(7)
    dom = GridDomain.from_predicate((0, 0), (1, 1), 1 / 8, lambda c: ((c - 0.5) ** 2).sum(-1) < 0.2)
    u = random_function(rng, dom, 5)
    assert eval_Jh(u, F) == pytest.approx(brute_Jh(u.values, dom, F), rel=1e-12)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_Jh_matches_oracle_in_each_dimension(dim):
    rng = np.random.default_rng(dim)
    F = nearest_neighbor_potential(dim)
    dom = GridDomain.box((0,) * dim, (1,) * dim, 0.25 if dim == 3 else 1 / 8)
    u = GridFunction(dom, rng.normal(size=dom.shape))
    assert eval_Jh(u, F) == pytest.approx(brute_Jh(u.values, dom, F), rel=1e-12)


def test_Jh_one_dimensional_is_total_variation():
    F = nearest_neighbor_potential(1)
    dom = GridDomain.box((0,), (1,), 0.125)
    vals = np.array([0, 1, 3, 2, 2, 5, 4, 4], dtype=float)
    assert eval_Jh(GridFunction(dom, vals), F) == np.abs(np.diff(vals)).sum()


def test_Jh_three_dimensional_cube_perimeter():
    F = nearest_neighbor_potential(3)
    h = 0.125
    dom = GridDomain.box((0, 0, 0), (1, 1, 1), h)
    c = dom.cell_centers()
    E = GridSet(dom, np.all((c > 0.25) & (c < 0.75), axis=-1))
    assert eval_Jh_set(E, F) == pytest.approx(6 * 0.5 ** 2, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 10), st.floats(-5, 5), st.integers(0, 10_000))
def test_Jh_homogeneous_and_shift_invariant(lam, c, seed):
    F = binary_euclidean_potential()
    rng = np.random.default_rng(seed)
    u = GridFunction(unit_square(1 / 8), rng.normal(size=(8, 8)))
    base = eval_Jh(u, F)
    assert eval_Jh(u.with_values(lam * u.values), F) == pytest.approx(lam * base, rel=1e-9)
    assert eval_Jh(u.with_values(u.values + c), F) == pytest.approx(base, rel=1e-9, abs=1e-12)


def test_complement_symmetry(be, rng):
    dom = unit_square(1 / 16)
    for _ in range(5):
        E = GridSet(dom, rng.random(dom.shape) < 0.5)
        assert eval_Jh_set(E, be) == pytest.approx(eval_Jh_set(E.complement(), be), abs=1e-13)


def test_locality_far_cells_do_not_interact(dp):
    dom = unit_square(1 / 16)
    a = np.zeros(dom.shape, bool)
    b = np.zeros(dom.shape, bool)
    a[2:4, 2:4] = True
    b[10:13, 11:14] = True
    E1, E2 = GridSet(dom, a), GridSet(dom, b)
    assert eval_Jh_set(E1 | E2, dp) == pytest.approx(eval_Jh_set(E1, dp) + eval_Jh_set(E2, dp), abs=1e-14)


# ---------------------------------------------------------------------------
# coarea

def test_coarea_binary_exact(bundled, rng):
    dom = unit_square(1 / 8)
    rep = coarea_check(GridSet(dom, rng.random(dom.shape) < 0.5).indicator(), bundled)
    assert rep.gap == 0.0


def test_coarea_random_eight_by_eight(nn, rng):
    u = random_function(rng, unit_square(1 / 8), 5)
    rep = coarea_check(u, nn)
    assert rep.levels <= 5
    assert rep.gap <= 1e-10 * rep.lhs


def test_coarea_constant(bundled):
    rep = coarea_check(GridFunction.constant(unit_square(1 / 8), 1.5), bundled)
    assert rep.lhs == rep.rhs == 0.0


# ---------------------------------------------------------------------------
# submodularity of J_h

def test_nested_sets_give_equality(nn, rng):
    dom = unit_square(1 / 16)
    big = rng.random(dom.shape) < 0.6
    E1 = GridSet(dom, big)
    E2 = GridSet(dom, big & (rng.random(dom.shape) < 0.5))
    rep = submodularity_of_Jh_check(E1, E2, nn)
    assert rep.ok and rep.lhs == pytest.approx(rep.rhs, abs=1e-14)


def test_random_pairs_submodular(nn, rng):
    dom = unit_square(1 / 16)
    for _ in range(500):
        E1 = GridSet(dom, rng.random(dom.shape) < rng.random())
        E2 = GridSet(dom, rng.random(dom.shape) < rng.random())
        assert submodularity_of_Jh_check(E1, E2, nn).ok


def test_disjoint_far_sets_equality(be):
    dom = unit_square(1 / 16)
    a = np.zeros(dom.shape, bool)
    b = np.zeros(dom.shape, bool)
    a[1:4, 1:5] = True
    b[9:14, 10:15] = True
    rep = submodularity_of_Jh_check(GridSet(dom, a), GridSet(dom, b), be)
    assert rep.ok and rep.lhs == pytest.approx(rep.rhs, abs=1e-14)


def test_non_submodular_potential_detected():
    vals = np.zeros(8)
    vals[0b001], vals[0b010], vals[0b011] = 1.0, 1.0, 3.0
    F = StencilPotential(Stencil(((0, 0), (1, 0), (0, 1))), vals)
    dom = unit_square(1 / 4)
    a = np.zeros(dom.shape, bool)
    b = np.zeros(dom.shape, bool)
    a[1, 1] = True  # origin of node (1, 1)
    b[2, 1] = True  # its e1 neighbour
    rep = submodularity_of_Jh_check(GridSet(dom, a), GridSet(dom, b), F)
    assert not rep.ok and "E1" in rep.details


# ---------------------------------------------------------------------------
# total variation bounds

def test_tv_bounds_constant(nn):
    rep = total_variation_bounds_check(GridFunction.constant(unit_square(1 / 8), 3.0), nn)
    assert rep.ok and rep.jh_outer == 0.0 and rep.tv_inner == 0.0


def test_tv_bounds_tight_for_half_plane(nn):
    dom = unit_square(1 / 16)
    u = GridSet(dom, dom.cell_centers()[..., 0] < 0.5).indicator()
    rep = total_variation_bounds_check(u, nn, margin=0)
    assert rep.ok and rep.c == 1.0
    assert rep.tv_inner == pytest.approx(rep.jh_outer, abs=1e-15)


def test_tv_bounds_random_binary_euclidean(be, rng):
    dom = GridDomain.box((0, 0), (1, 1), 1 / 12)
    for _ in range(20):
        rep = total_variation_bounds_check(GridFunction(dom, rng.normal(size=dom.shape)), be)
        assert rep.lower_ok and rep.upper_ok


def test_tv_bounds_need_coercivity():
    from coarea_tv.stencil import zero_potential

    with pytest.raises(PreconditionError):
        total_variation_bounds_check(GridFunction.constant(unit_square(0.25), 0.0), zero_potential())


# ---------------------------------------------------------------------------
# containers

def test_grid_function_zero_outside_and_finite():
    dom = GridDomain.from_predicate((0, 0), (1, 1), 0.25, lambda c: c[..., 0] < 0.5)
    u = GridFunction(dom, np.ones(dom.shape))
    assert u.values[~dom.inside].sum() == 0 and u.cell_values().size == dom.n_cells
    with pytest.raises(PreconditionError):
        GridFunction(dom, np.full(dom.shape, np.nan))
    with pytest.raises(PreconditionError):
        GridFunction(dom, np.ones((3, 3)))


def test_grid_set_operations():
    dom = unit_square(0.25)
    a = GridSet(dom, np.eye(4, dtype=bool))
    b = GridSet(dom, np.ones((4, 4), bool))
    assert len(a & b) == 4 and len(a | b) == 16 and len(a.complement()) == 12
    assert math.isclose(GridFunction(dom, np.arange(16.0).reshape(4, 4)).sup_norm(), 15.0)
