from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qhmft.lattice import BOUNDARY, INTRA, NN, NNN, build_cluster, fold_external_site


def pairs(geometry, kind, rng):
    return {(b.i, b.j): b.weight for b in geometry.bonds(kind, rng)}


def test_two_by_two_intra_bonds(geo2):
    # ring 0-1-3-2 in row-major numbering plus both diagonals
    assert set(pairs(geo2, INTRA, NN)) == {(0, 1), (0, 2), (1, 3), (2, 3)}
    assert set(pairs(geo2, INTRA, NNN)) == {(0, 3), (1, 2)}
    assert all(b.weight == 1 for b in geo2.intra_bonds)


def test_two_by_two_boundary_coefficients(geo2):
    # every NN pair is also reached once across the boundary (two directed pairs, halved)
    assert pairs(geo2, BOUNDARY, NN) == {p: Fraction(1) for p in [(0, 1), (0, 2), (1, 3), (2, 3)]}
    # each diagonal pair collects three external images
    assert pairs(geo2, BOUNDARY, NNN) == {(0, 3): Fraction(3), (1, 2): Fraction(3)}


def test_four_by_four_boundary_listing(geo4):
    nn = pairs(geo4, BOUNDARY, NN)
    nnn = pairs(geo4, BOUNDARY, NNN)
    assert len(nn) == 8 and len(nnn) == 14
    assert all(w == 1 for w in nn.values()) and all(w == 1 for w in nnn.values())
    # horizontal row wraps and vertical column wraps
    assert set(nn) == {(0, 3), (4, 7), (8, 11), (12, 15), (0, 12), (1, 13), (2, 14), (3, 15)}
    assert (4, 3) not in nnn and (3, 4) in nnn  # (3,0)+(1,1) folds onto (0,1) = site 4
    assert (0, 15) in nnn and (3, 12) in nnn  # corner diagonals


@pytest.mark.parametrize("L", [2, 4, 6, 8])
def test_bond_counts(L):
    g = build_cluster(L)
    N = L * L
    assert len(list(g.bonds(INTRA, NN))) == 2 * L * (L - 1)
    assert len(list(g.bonds(INTRA, NNN))) == 2 * (L - 1) ** 2
    # 4 NN and 4 NNN directed partners per site; those not inside the cluster cross the
    # boundary, and each folded unordered pair carries half its directed count
    assert sum(b.weight for b in g.bonds(BOUNDARY, NN)) == 2 * L
    assert sum(b.weight for b in g.bonds(BOUNDARY, NNN)) == 2 * N - 2 * (L - 1) ** 2


@pytest.mark.parametrize("L", [2, 4, 6])
def test_neel_sign_alternates_on_nn_bonds(L):
    g = build_cluster(L)
    for b in g.bonds(INTRA, NN):
        assert g.neel_sign[b.i] == -g.neel_sign[b.j]


@pytest.mark.parametrize("bad", [0, 1, 3, -2, 5])
def test_rejects_odd_or_nonpositive(bad):
    with pytest.raises(ValueError):
        build_cluster(bad)


def test_rejects_non_integer():
    with pytest.raises(TypeError):
        build_cluster(2.0)


def test_fold_examples():
    assert fold_external_site((2, 0), 2).coord == (0, 0)
    assert fold_external_site((-1, 0), 4).coord == (3, 0)
    s = fold_external_site((4, 3), 4)
    assert s.coord == (0, 3) and s.id == 12
    with pytest.raises(ValueError):
        fold_external_site((9, 0), 4)


@given(st.sampled_from([2, 4, 6]), st.integers(-6, 11), st.integers(-6, 11))
def test_fold_is_modular(L, x, y):
    if not (-L <= x < 2 * L and -L <= y < 2 * L):
        with pytest.raises(ValueError):
            fold_external_site((x, y), L)
        return
    s = fold_external_site((x, y), L)
    assert s.coord == (x % L, y % L)
    assert s.id == (y % L) * L + x % L


def test_site_numbering_is_row_major(geo4):
    for s in geo4.sites:
        x, y = s.coord
        assert s.id == y * 4 + x == geo4.site_id(x, y)
    with pytest.raises(ValueError):
        geo4.site_id(4, 0)


def test_bonds_sorted_and_deterministic():
    a, b = build_cluster(4), build_cluster(4)
    assert a.to_json() == b.to_json()
    keys = [x.sort_key for x in a.intra_bonds + a.boundary_bonds]
    assert keys == sorted(keys)
