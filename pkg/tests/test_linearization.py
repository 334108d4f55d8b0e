import numpy as np
import pytest

from semidtn.dtn import bump_trace, dtn_apply, normal_derivative
from semidtn.forward_solver import harmonic_extension, solve_linear, stencil_laplacian
from semidtn.geometry import arc_mask, make_grid
from semidtn.linearization import (BELL, PartitionTable, measured_linearized_flux,
                                   mixed_divided_difference, nonlinearity_derivative,
                                   partitions, run_cascade)
from semidtn.potential import PotentialSeries


def const_series(grid, **fields):
    return PotentialSeries.from_coefficients(
        grid, {int(k[1:]): np.full(grid.num_nodes, v) for k, v in fields.items()})


def brute_force_partitions(elems):
    """Independent oracle: grow partitions by inserting one element at a time."""
    elems = list(elems)
    parts = [[]]
    for e in elems:
        grown = []
        for p in parts:
            for i in range(len(p)):
                grown.append([b + [e] if i == j else list(b) for j, b in enumerate(p)])
            grown.append([list(b) for b in p] + [[e]])
        parts = grown
    return {frozenset(frozenset(b) for b in p) for p in parts}


# ---------- partitions ----------

def test_partitions_singleton():
    assert partitions([1]) == [((1,),)]


def test_partitions_pair():
    got = partitions([1, 2])
    assert len(got) == 2
    assert ((1, 2),) in got
    assert ((1,), (2,)) in got


def test_partition_counts_match_bell_numbers():
    for size in range(1, 6):
        assert len(partitions(range(size))) == BELL[size]


def test_partitions_match_brute_force_oracle():
    got = {frozenset(frozenset(b) for b in p) for p in partitions(range(4))}
    assert got == brute_force_partitions(range(4))
    assert len(got) == 15


def test_partitions_deterministic_order():
    assert partitions((3, 1, 2)) == partitions([1, 2, 3])


def test_partitions_guard():
    with pytest.raises(ValueError):
        partitions(range(9))
    with pytest.raises(ValueError):
        partitions([])


def test_partition_table():
    table = PartitionTable.build(5)
    for size in range(1, 6):
        assert len(table.of_size(size)) == BELL[size]


# ---------- nonlinearity derivative ----------

def test_pair_derivative_is_quadratic_coefficient_times_product():
    g = make_grid(8)
    rng = np.random.default_rng(0)
    P = PotentialSeries.from_coefficients(g, {2: rng.normal(size=g.num_nodes)})
    v1, v2 = rng.normal(size=g.num_nodes), rng.normal(size=g.num_nodes)
    derivs = {(0,): v1, (1,): v2}
    got = nonlinearity_derivative(P, (0, 1), derivs)
    assert np.allclose(got, P.coefficient(2) * v1 * v2, atol=1e-14)


def test_triple_derivative_shape_with_quadratic_only():
    # with only the quadratic coefficient, the 3-slot derivative is the sum of
    # the three (singleton, pair) splittings
    g = make_grid(8)
    rng = np.random.default_rng(1)
    c2 = rng.normal(size=g.num_nodes)
    P = PotentialSeries.from_coefficients(g, {2: c2})
    v = [rng.normal(size=g.num_nodes) for _ in range(3)]
    w = {(0, 1): rng.normal(size=g.num_nodes),
         (0, 2): rng.normal(size=g.num_nodes),
         (1, 2): rng.normal(size=g.num_nodes)}
    derivs = {(0,): v[0], (1,): v[1], (2,): v[2], **w}
    got = nonlinearity_derivative(P, (0, 1, 2), derivs)
    expected = c2 * (v[0] * w[(1, 2)] + v[1] * w[(0, 2)] + v[2] * w[(0, 1)])
    assert np.allclose(got, expected, atol=1e-13)


def test_derivative_zero_potential():
    g = make_grid(8)
    rng = np.random.default_rng(2)
    derivs = {(0,): rng.normal(size=g.num_nodes), (1,): rng.normal(size=g.num_nodes)}
    got = nonlinearity_derivative(PotentialSeries.zero(g), (0, 1), derivs)
    assert not got.any()


def test_derivative_requires_lower_orders():
    g = make_grid(8)
    P = const_series(g, k2=1.0)
    with pytest.raises(KeyError):
        nonlinearity_derivative(P, (0, 1), {(0,): np.ones(g.num_nodes)})


# ---------- cascade ----------

def test_cascade_pair_solves_stated_equation():
    # the pair field w satisfies -Lap w + V2 v1 v2 = 0 with w = 0 on the boundary
    g = make_grid(16)
    x, _ = g.node_coords()
    P = PotentialSeries.from_coefficients(g, {2: 1.0 + x})
    f1 = bump_trace(g, 0.4, 0.25, 1.0)
    f2 = bump_trace(g, 1.4, 0.25, 1.0)
    state = run_cascade(P, [f1, f2], g)
    w = state.field((0, 1))
    assert not w[g.boundary_nodes].any()
    v1v2 = state.field([0]) * state.field([1])
    res = stencil_laplacian(w, g) + (P.coefficient(2) * v1v2).reshape(17, 17)[1:-1, 1:-1].ravel()
    assert g.h * np.linalg.norm(res) <= 1e-9


def test_cascade_zero_potential_pair_is_zero():
    g = make_grid(8)
    f = bump_trace(g, 0.5, 0.3, 1.0)
    state = run_cascade(PotentialSeries.zero(g), [f, f], g)
    assert not state.field((0, 1)).any()


def test_cascade_cubic_only_bookkeeping():
    # with the quadratic coefficient zero, pair fields vanish and the triple
    # field solves -Lap w = -c v1 v2 v3
    g = make_grid(16)
    P = const_series(g, k3=2.0)
    fs = [bump_trace(g, 0.3 + 0.5 * i, 0.2, 1.0) for i in range(3)]
    state = run_cascade(P, fs, g)
    assert not state.field((0, 1)).any()
    assert not state.field((0, 2)).any()
    v123 = state.field([0]) * state.field([1]) * state.field([2])
    direct = solve_linear(None, -(2.0 * v123), np.zeros(g.num_boundary), g)
    assert np.max(np.abs(state.field((0, 1, 2)) - direct)) <= 1e-12


def test_cascade_singletons_are_harmonic_with_given_trace():
    g = make_grid(16)
    f = bump_trace(g, 0.7, 0.3, 1.0)
    state = run_cascade(const_series(g, k2=1.0), [f], g)
    v = state.field([0])
    assert np.allclose(v[g.boundary_nodes], f, atol=1e-14)
    assert g.h * np.linalg.norm(stencil_laplacian(v, g)) <= 1e-9


def test_cascade_multi_slot_fields_vanish_on_boundary():
    g = make_grid(16)
    x, _ = g.node_coords()
    P = PotentialSeries.from_coefficients(g, {2: 1.0 + x, 3: np.full(g.num_nodes, 0.5)})
    fs = [bump_trace(g, 0.3 + 0.45 * i, 0.2, 1.0) for i in range(3)]
    state = run_cascade(P, fs, g)
    for subset, field in state.derivs.items():
        if len(subset) >= 2:
            assert not field[g.boundary_nodes].any()


def test_cascade_permutation_symmetry():
    g = make_grid(16)
    x, _ = g.node_coords()
    P = PotentialSeries.from_coefficients(g, {2: 1.0 + x, 3: np.full(g.num_nodes, 0.5)})
    fs = [bump_trace(g, 0.3 + 0.45 * i, 0.2, 1.0) for i in range(3)]
    state = run_cascade(P, fs, g)
    perm = [2, 0, 1]
    state_p = run_cascade(P, [fs[i] for i in perm], g)
    # derivs of the permuted state at relabeled subsets match the original
    inv = {new: old for new, old in enumerate(perm)}
    for subset, field in state.derivs.items():
        relabeled = tuple(sorted(k for k, v in inv.items() if v in subset))
        assert np.allclose(state_p.derivs[relabeled], field, atol=1e-12)


def test_cascade_slot_cap():
    g = make_grid(8)
    f = bump_trace(g, 0.5, 0.2, 1.0)
    with pytest.raises(ValueError):
        run_cascade(PotentialSeries.zero(g), [f] * 7, g)


# ---------- divided differences ----------

def test_divided_difference_zero_potential_pair():
    g = make_grid(16)
    mask = arc_mask(g, 0.0, 2.0)
    f1 = bump_trace(g, 0.5, 0.3, 1.0)
    f2 = bump_trace(g, 1.5, 0.3, 1.0)
    dd = mixed_divided_difference(PotentialSeries.zero(g), [f1, f2], 1e-2, mask, g)
    assert np.max(np.abs(dd)) <= 1e-6  # solver noise / eps^2


def test_single_slot_matches_cascade():
    g = make_grid(32)
    mask = arc_mask(g, 0.0, 2.0)
    x, _ = g.node_coords()
    P = PotentialSeries.from_coefficients(g, {2: 1.0 + x})
    f = bump_trace(g, 0.8, 0.3, 1.0)
    dd = mixed_divided_difference(P, [f], 1e-2, mask, g)
    flux = normal_derivative(harmonic_extension(f, g), g)
    flux[~mask.flags] = 0.0
    gap = np.max(np.abs(dd - flux)) / np.max(np.abs(flux))
    assert gap <= 1e-3


def test_pair_cross_validates_cascade():
    # the module's core check: numerical mixed divided differences against
    # the analytic cascade flux
    g = make_grid(32)
    mask = arc_mask(g, 0.0, 2.0)
    x, _ = g.node_coords()
    P = PotentialSeries.from_coefficients(g, {2: 1.0 + x})
    f1 = bump_trace(g, 0.5, 0.3, 1.0)
    f2 = bump_trace(g, 1.5, 0.3, 1.0)
    dd = mixed_divided_difference(P, [f1, f2], 1e-2, mask, g)
    state = run_cascade(P, [f1, f2], g)
    flux = normal_derivative(state.field((0, 1)), g)
    flux[~mask.flags] = 0.0
    gap = np.max(np.abs(dd - flux)[mask.flags]) / np.max(np.abs(flux[mask.flags]))
    assert gap <= 1e-3


def test_divided_difference_eps_order():
    # gap to the cascade flux shrinks at observed order ~2 in eps
    g = make_grid(16)
    mask = arc_mask(g, 0.0, 2.0)
    P = const_series(g, k2=1.0, k3=1.0)
    f1 = bump_trace(g, 0.6, 0.3, 1.0)
    f2 = bump_trace(g, 1.4, 0.3, 1.0)
    state = run_cascade(P, [f1, f2], g)
    flux = normal_derivative(state.field((0, 1)), g)
    flux[~mask.flags] = 0.0
    gaps = []
    for eps in (4e-2, 2e-2, 1e-2):
        dd = mixed_divided_difference(P, [f1, f2], eps, mask, g)
        gaps.append(np.max(np.abs(dd - flux)[mask.flags]))
    orders = [np.log2(gaps[i] / gaps[i + 1]) for i in range(2)]
    assert all(1.5 <= o <= 2.6 for o in orders)


def test_multilinearity_in_each_slot():
    g = make_grid(16)
    mask = arc_mask(g, 0.0, 2.0)
    P = const_series(g, k2=1.0)
    f1 = bump_trace(g, 0.6, 0.3, 0.7)
    f2 = bump_trace(g, 1.4, 0.3, 0.7)
    a = 2.0
    d1 = mixed_divided_difference(P, [f1, f2], 1e-2, mask, g)
    d2 = mixed_divided_difference(P, [a * f1, f2], 1e-2, mask, g)
    assert np.max(np.abs(d2 - a * d1)) <= 1e-6 * a


def test_divided_difference_gate():
    g = make_grid(8)
    mask = arc_mask(g, 0.0, 2.0)
    P = const_series(g, k2=1.0)
    f = bump_trace(g, 1.0, 0.4, 1.0)
    with pytest.raises(ValueError):
        mixed_divided_difference(P, [f, f], 6e-2, mask, g)  # 2 * 0.06 > 0.1
    with pytest.raises(ValueError):
        mixed_divided_difference(P, [f], -1e-2, mask, g)


def test_measured_flux_equals_simulator_composition():
    g = make_grid(16)
    mask = arc_mask(g, 0.0, 2.0)
    x, _ = g.node_coords()
    P = PotentialSeries.from_coefficients(g, {2: 1.0 + x})
    fs = [bump_trace(g, 0.6, 0.3, 1.0), bump_trace(g, 1.4, 0.3, 1.0)]
    direct = mixed_divided_difference(P, fs, 1e-2, mask, g)
    via_measure = measured_linearized_flux(
        lambda tr: dtn_apply(P, tr, mask, g), fs, 1e-2, mask, g)
    assert np.array_equal(direct, via_measure)


def test_measured_flux_with_degenerate_noise_is_identical():
    from semidtn.cli import add_noise
    from semidtn.dtn import DtnSample
    g = make_grid(16)
    mask = arc_mask(g, 0.0, 2.0)
    P = const_series(g, k2=1.0)
    fs = [bump_trace(g, 0.6, 0.3, 1.0), bump_trace(g, 1.4, 0.3, 1.0)]
    rng = np.random.default_rng(0)

    def noisy_measure(trace):
        sample = dtn_apply(P, trace, mask, g)
        return DtnSample(sample.f, add_noise(sample.output, 0.0, rng), sample.report)

    clean = measured_linearized_flux(lambda tr: dtn_apply(P, tr, mask, g),
                                     fs, 1e-2, mask, g)
    wrapped = measured_linearized_flux(noisy_measure, fs, 1e-2, mask, g)
    assert np.array_equal(clean, wrapped)


def test_measured_flux_identical_for_matching_series():
    # two ground-truth series with the same coefficient fields produce the
    # same linearized flux (the uniqueness hypothesis, discretized)
    g = make_grid(16)
    mask = arc_mask(g, 0.0, 2.0)
    x, _ = g.node_coords()
    P1 = PotentialSeries.from_coefficients(g, {2: 1.0 + x})
    P2 = PotentialSeries.from_coefficients(g, {2: (1.0 + x).copy(), 3: np.zeros(g.num_nodes)})
    fs = [bump_trace(g, 0.6, 0.3, 1.0), bump_trace(g, 1.4, 0.3, 1.0)]
    out1 = measured_linearized_flux(lambda tr: dtn_apply(P1, tr, mask, g), fs, 1e-2, mask, g)
    out2 = measured_linearized_flux(lambda tr: dtn_apply(P2, tr, mask, g), fs, 1e-2, mask, g)
    assert np.max(np.abs(out1 - out2)) <= 1e-10


def test_cascade_state_accessor():
    g = make_grid(8)
    f = bump_trace(g, 0.5, 0.3, 1.0)
    state = run_cascade(PotentialSeries.zero(g), [f, f], g)
    assert state.m == 2
    assert np.array_equal(state.field([1, 0]), state.field((0, 1)))
