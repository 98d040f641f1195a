import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qhmft.circuit import XY, Z, ZZ, CompiledCircuit, apply_circuit, apply_inverse, build_circuit, build_macro_layer
from qhmft.lattice import INTRA, NN, build_cluster
from qhmft.statevector import SectorState, apply_xy, init_neel, random_state, sector_basis


@pytest.mark.parametrize("L,m,depth", [(2, 1, 5), (2, 3, 15), (4, 1, 9), (4, 2, 18), (6, 1, 9)])
def test_depth(L, m, depth):
    assert build_circuit(L, m).depth == depth


@pytest.mark.parametrize("L,m,tied,n", [(2, 2, True, 12), (2, 2, False, 24), (4, 2, False, 128), (4, 1, False, 64)])
def test_parameter_counts(L, m, tied, n):
    assert build_circuit(L, m, tied).n_params == n


@pytest.mark.parametrize("L", [2, 4, 6])
def test_layers_disjoint_and_bonds_covered(L):
    geo = build_cluster(L)
    nn = {frozenset((b.i, b.j)) for b in geo.bonds(INTRA, NN)}
    for family in (XY, ZZ):
        covered = []
        for fam, gates in build_macro_layer(geo):
            if fam != family:
                continue
            sites = [s for g in gates for s in g]
            assert len(sites) == len(set(sites))
            covered += [frozenset(g) for g in gates]
        assert sorted(map(sorted, covered)) == sorted(map(sorted, nn))
        assert len(covered) == len(nn)
    fam, gates = build_macro_layer(geo)[-1]
    assert fam == Z and sorted(g[0] for g in gates) == list(range(geo.N))


def test_layer_order():
    families = [f for f, _ in build_macro_layer(4)]
    assert families == [XY] * 4 + [ZZ] * 4 + [Z]


def test_tied_rejected_off_two_by_two():
    with pytest.raises(ValueError):
        build_circuit(4, 2, tied=True)
    with pytest.raises(ValueError):
        build_circuit(2, 0)


def test_tie_classes():
    spec = build_circuit(2, 2, tied=True)
    angles = spec.slot_angles(np.arange(12.0))
    for s in spec.slots:
        t = angles[s.param_slot]
        base = 6 * (s.layer_index // 5)
        if s.family == XY:
            assert t == base
        elif s.family == ZZ:
            assert t == base + 1
        else:
            assert t == base + 2 + s.sites[0]


def test_wrong_parameter_length():
    with pytest.raises(ValueError):
        build_circuit(2, 1).slot_angles(np.zeros(3))


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_inverse_round_trip(seed, tied):
    rng = np.random.default_rng(seed)
    spec = build_circuit(2, 2, tied)
    psi = random_state(sector_basis(4, 2), rng)
    p = rng.uniform(-np.pi, np.pi, spec.n_params)
    back = apply_inverse(spec, p, apply_circuit(spec, p, psi.copy()))
    np.testing.assert_allclose(back.amplitudes, psi.amplitudes, atol=1e-12)


@given(st.floats(-10, 10, allow_nan=False))
def test_xy_inverse_is_negative_angle(theta):
    s = random_state(sector_basis(4, 2), np.random.default_rng(0))
    a = apply_xy(s.copy(), 0, 1, theta)
    b = apply_xy(s.copy(), 0, 1, -theta)
    back = apply_xy(a.copy(), 0, 1, -theta)
    np.testing.assert_allclose(back.amplitudes, s.amplitudes, atol=1e-13)
    # hermitian conjugate of the (real) gate equals the negative-angle gate
    assert abs(np.vdot(b.amplitudes, s.amplitudes) - np.vdot(s.amplitudes, a.amplitudes)) < 1e-13


@pytest.mark.parametrize("L,m,tied", [(2, 2, True), (2, 3, False), (4, 1, False)])
def test_compiled_matches_reference(L, m, tied):
    rng = np.random.default_rng(L * 10 + m)
    geo = build_cluster(L)
    spec = build_circuit(L, m, tied)
    p = rng.uniform(-np.pi, np.pi, spec.n_params)
    ref = apply_circuit(spec, p, init_neel(geo))
    comp = CompiledCircuit(spec, ref.basis)
    out = comp.forward(spec.slot_angles(p))
    np.testing.assert_allclose(out, ref.amplitudes, atol=1e-12)
    np.testing.assert_array_equal(comp.initial_state(), init_neel(geo).amplitudes)


def test_zero_parameters_leave_neel_fixed(geo2):
    spec = build_circuit(2, 2)
    out = apply_circuit(spec, np.zeros(spec.n_params), init_neel(geo2))
    np.testing.assert_array_equal(out.amplitudes, init_neel(geo2).amplitudes)


def test_circuit_size_mismatch():
    with pytest.raises(ValueError):
        apply_circuit(build_circuit(2, 1), np.zeros(12), SectorState(sector_basis(6, 3), np.ones(20)))


def test_json_export():
    spec = build_circuit(2, 2, tied=True)
    d = json.loads(spec.to_json())
    assert d["n_params"] == 12 and d["depth"] == 10
    assert len(d["slots"]) == spec.n_slots == 24
    assert sum(len(layer) for layer in d["layers"]) == 24
    assert d["tie_map"][0] == 0
    assert json.loads(build_circuit(4, 1).to_json())["tie_map"] is None
