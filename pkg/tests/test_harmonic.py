import numpy as np
import pytest

from semidtn.forward_solver import stencil_laplacian
from semidtn.geometry import arc_mask, boundary_integral, full_mask, make_grid
from semidtn.harmonic import (arc_supported_family, polynomial_family,
                              triple_product_gram, family_to_csv)


def test_single_member_centered_in_arc():
    g = make_grid(16)
    mask = arc_mask(g, 0.0, 1.0)
    fam = arc_supported_family(mask, 1, g)
    assert len(fam) == 1
    trace = fam[0].trace
    s = g.boundary_s
    peak = s[np.argmax(trace)]
    assert peak == pytest.approx(0.5, abs=g.h)
    assert not trace[(s >= 1.0)].any()


def test_members_are_discrete_harmonic():
    g = make_grid(16)
    mask = arc_mask(g, 0.5, 2.5)
    fam = arc_supported_family(mask, 6, g)
    for member in fam.members:
        res = stencil_laplacian(member.field, g)
        assert g.h * np.linalg.norm(res) <= 1e-9


def test_traces_vanish_off_arc_exactly():
    g = make_grid(32)
    mask = arc_mask(g, 1.0, 3.0)
    fam = arc_supported_family(mask, 8, g)
    for member in fam.members:
        assert not member.trace[~mask.flags].any()


def test_requested_count_and_deterministic_order():
    g = make_grid(16)
    mask = arc_mask(g, 0.0, 2.0)
    fam1 = arc_supported_family(mask, 5, g)
    fam2 = arc_supported_family(mask, 5, g)
    assert len(fam1) == 5
    for a, b in zip(fam1.members, fam2.members):
        assert a.provenance == b.provenance
        assert np.array_equal(a.field, b.field)


def test_disjoint_bump_traces_are_orthogonal():
    g = make_grid(32)
    mask = arc_mask(g, 0.0, 2.0)
    fam = arc_supported_family(mask, 8, g)
    s = g.boundary_s
    supports = [set(np.nonzero(m.trace)[0]) for m in fam.members]
    found = False
    for i in range(len(fam)):
        for j in range(i + 1, len(fam)):
            if not supports[i] & supports[j]:
                found = True
                prod = fam[i].trace * fam[j].trace
                assert boundary_integral(prod, full_mask(g), g) == 0.0
    assert found, "family should contain at least one disjoint pair"


def test_arc_too_small_rejected():
    g = make_grid(8)
    tiny = arc_mask(g, 0.0, 0.3)
    with pytest.raises(ValueError):
        arc_supported_family(tiny, 2, g)


def test_polynomial_family_members():
    g = make_grid(16)
    fam = polynomial_family(3, g)
    assert len(fam) == 7  # 1 + 2 * 3
    x, y = g.node_coords()
    assert np.allclose(fam[0].field, 1.0)
    deg2 = {m.provenance: m.field for m in fam.members if "d=2" in m.provenance}
    re2 = next(v for k, v in deg2.items() if ",re" in k)
    im2 = next(v for k, v in deg2.items() if ",im" in k)
    assert np.allclose(re2, x * x - y * y, atol=1e-13)
    assert np.allclose(im2, 2 * x * y, atol=1e-13)


def test_polynomial_cubic_expansion_and_residual_order():
    # d=3 real part is x^3 - 3 x y^2; stencil residual shrinks at O(h^2)
    res_norms = []
    for n in (16, 32):
        g = make_grid(n)
        x, y = g.node_coords()
        fam = polynomial_family(3, g)
        cubic = next(m.field for m in fam.members
                     if m.provenance.startswith("poly(d=3,re"))
        assert np.allclose(cubic, x ** 3 - 3 * x * y ** 2, atol=1e-12)
        res_norms.append(np.max(np.abs(stencil_laplacian(cubic, g))))
    assert res_norms[1] <= 0.3 * res_norms[0]


def test_polynomial_degree_cap():
    g = make_grid(8)
    with pytest.raises(ValueError):
        polynomial_family(7, g)


def test_low_degree_polynomials_stencil_exact():
    g = make_grid(8)
    fam = polynomial_family(2, g)
    for member in fam.members:
        assert np.max(np.abs(stencil_laplacian(member.field, g))) <= 1e-9
        assert "stencil-exact" in member.provenance


def test_triple_product_gram_rank_grows_with_family():
    g = make_grid(16)
    mask = arc_mask(g, 0.0, 2.0)
    ranks = []
    for count in (3, 6):
        fam = arc_supported_family(mask, count, g)
        G = triple_product_gram(fam, g)
        ranks.append(np.linalg.matrix_rank(G, tol=1e-12 * np.linalg.norm(G)))
    assert ranks[1] > ranks[0]


def test_mean_value_identity_from_harmonicity():
    # the stencil identity: each interior value equals the average of its four
    # neighbors, a restatement of discrete harmonicity
    g = make_grid(16)
    mask = arc_mask(g, 0.0, 2.0)
    fam = arc_supported_family(mask, 2, g)
    u = fam[0].field.reshape(17, 17)
    avg = (u[:-2, 1:-1] + u[2:, 1:-1] + u[1:-1, :-2] + u[1:-1, 2:]) / 4.0
    assert np.max(np.abs(u[1:-1, 1:-1] - avg)) <= 1e-10


def test_family_csv_dump(tmp_path):
    g = make_grid(8)
    mask = arc_mask(g, 0.0, 2.0)
    fam = arc_supported_family(mask, 2, g)
    path = tmp_path / "family.csv"
    family_to_csv(fam, g, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "member,x,y,value"
    assert len(lines) == 1 + 2 * g.num_nodes
