import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import fullspace as fs
from qhmft.lattice import build_cluster
from qhmft.statevector import (
    SectorState,
    apply_xy,
    apply_z,
    apply_zz,
    dump_amplitudes,
    expect_flip,
    expect_heisenberg,
    expect_sz,
    expect_sz_all,
    full_space_reference,
    init_neel,
    load_amplitudes,
    random_state,
    sector_basis,
)

angles = st.floats(-4 * np.pi, 4 * np.pi, allow_nan=False)


def two_site(bits):
    """State on 2 qubits (k=1) from a label like '01' = site 0 up, site 1 down."""
    basis = sector_basis(2, 1)
    amps = np.zeros(len(basis), complex)
    amps[basis.index_of(int(bits[1]) << 1 | int(bits[0]))] = 1
    return SectorState(basis, amps)


def amp(state, bits):
    return state.amplitudes[state.basis.index_of(int(bits[1]) << 1 | int(bits[0]))]


def test_basis_dimensions():
    assert len(sector_basis(4, 2)) == 6
    assert len(sector_basis(16, 8)) == 12870
    states = sector_basis(6, 3).states
    assert np.all(np.diff(states) > 0)
    assert all(bin(s).count("1") == 3 for s in states)
    with pytest.raises(ValueError):
        sector_basis(38, 19)


def test_index_of_rejects_foreign_bitstring():
    with pytest.raises(KeyError):
        sector_basis(4, 2).index_of(0b0111)


def test_neel_two_by_two(geo2):
    psi = init_neel(geo2)
    assert np.count_nonzero(psi.amplitudes) == 1
    # (0,0) and (1,1) up; (1,0) and (0,1) down
    assert psi.basis.states[np.argmax(np.abs(psi.amplitudes))] == 0b0110
    assert expect_sz(psi, geo2.site_id(0, 0)) == 0.5
    assert expect_sz(psi, geo2.site_id(1, 0)) == -0.5


def test_neel_four_by_four_is_balanced(geo4):
    m = expect_sz_all(init_neel(geo4))
    assert m.sum() == 0
    np.testing.assert_array_equal(m, 0.5 * geo4.neel_sign)


def test_xy_singlet():
    s = apply_xy(two_site("01"), 0, 1, np.pi / 2)
    assert amp(s, "01") == pytest.approx(1 / np.sqrt(2), abs=1e-15)
    assert amp(s, "10") == pytest.approx(-1 / np.sqrt(2), abs=1e-15)
    assert expect_heisenberg(s, 0, 1) == pytest.approx(-0.75, abs=1e-14)
    assert expect_sz(s, 0) == pytest.approx(0, abs=1e-15)


def test_xy_pi_swaps_with_sign():
    s = apply_xy(two_site("01"), 0, 1, np.pi)
    assert amp(s, "10") == pytest.approx(-1, abs=1e-15)
    assert abs(amp(s, "01")) < 1e-15


def test_xy_two_pi_negates_odd_parity(rng):
    basis = sector_basis(4, 2)
    psi = random_state(basis, rng)
    out = apply_xy(psi.copy(), 0, 2, 2 * np.pi)
    odd = basis.parity(0, 2) == -1
    np.testing.assert_allclose(out.amplitudes[odd], -psi.amplitudes[odd], atol=1e-15)
    np.testing.assert_allclose(out.amplitudes[~odd], psi.amplitudes[~odd], atol=1e-15)


def test_zz_examples():
    basis = sector_basis(2, 1)
    plus = SectorState(basis, np.full(2, 1 / np.sqrt(2)))
    out = apply_zz(plus.copy(), 0, 1, np.pi / 2)
    np.testing.assert_allclose(out.amplitudes, 1j * plus.amplitudes, atol=1e-15)
    out = apply_zz(plus.copy(), 0, 1, np.pi)
    np.testing.assert_allclose(out.amplitudes, -plus.amplitudes, atol=1e-15)


def test_z_relative_phase_and_identity(rng):
    psi = two_site("01")
    psi.amplitudes[:] = 1 / np.sqrt(2)
    out = apply_z(psi.copy(), 0, 0.3)
    # site 0 up in |01>, down in |10>: relative phase exp(-2i theta)
    assert out.amplitudes[psi.basis.index_of(0b10)] / out.amplitudes[psi.basis.index_of(0b01)] == pytest.approx(
        np.exp(-2j * 0.3)
    )
    basis = sector_basis(6, 3)
    s = random_state(basis, rng)
    np.testing.assert_array_equal(apply_z(s.copy(), 2, 0.0).amplitudes, s.amplitudes)


@given(angles, angles)
def test_z_composition(t1, t2):
    basis = sector_basis(4, 2)
    s = random_state(basis, np.random.default_rng(0))
    a = apply_z(apply_z(s.copy(), 1, t1), 1, t2)
    b = apply_z(s.copy(), 1, t1 + t2)
    np.testing.assert_allclose(a.amplitudes, b.amplitudes, atol=1e-12)


@given(angles)
def test_xy_zero_and_inverse(theta):
    basis = sector_basis(6, 3)
    s = random_state(basis, np.random.default_rng(1))
    np.testing.assert_array_equal(apply_xy(s.copy(), 1, 4, 0.0).amplitudes, s.amplitudes)
    back = apply_xy(apply_xy(s.copy(), 1, 4, theta), 1, 4, -theta)
    np.testing.assert_allclose(back.amplitudes, s.amplitudes, atol=1e-13)


@given(st.lists(st.tuples(st.sampled_from("xy zz z".split()), st.integers(0, 5), st.integers(0, 5), angles),
                min_size=1, max_size=30))
def test_gates_match_full_space(gates):
    N = 6
    basis = sector_basis(N, 3)
    s = random_state(basis, np.random.default_rng(7))
    full = full_space_reference(s)
    for kind, i, j, t in gates:
        if kind != "z" and i == j:
            continue
        if kind == "xy":
            apply_xy(s, i, j, t)
            full = fs.xy_matrix(N, i, j, t) @ full
        elif kind == "zz":
            apply_zz(s, i, j, t)
            full = fs.zz_matrix(N, i, j, t) @ full
        else:
            apply_z(s, j, t)
            full = fs.z_matrix(N, j, t) @ full
    np.testing.assert_allclose(full_space_reference(s), full, atol=1e-12)


def test_thousand_random_gates_preserve_norm_and_sector(rng):
    N = 8
    s = random_state(sector_basis(N, 4), rng)
    for _ in range(1000):
        i, j = (int(v) for v in rng.choice(N, 2, replace=False))
        t = rng.uniform(-2 * np.pi, 2 * np.pi)
        [apply_xy, apply_zz][rng.integers(2)](s, i, j, t)
        apply_z(s, j, -t)
    assert abs(s.norm() - 1) <= 1e-12
    full = full_space_reference(s)
    weights = np.array([bin(b).count("1") for b in range(1 << N)])
    assert np.sum(np.abs(full[weights != 4]) ** 2) == 0.0


def test_observables_match_full_space(rng):
    N = 6
    s = random_state(sector_basis(N, 3), rng)
    for _ in range(20):
        i, j = (int(v) for v in rng.choice(N, 2, replace=False))
        apply_xy(s, i, j, rng.uniform(-3, 3))
        apply_zz(s, i, j, rng.uniform(-3, 3))
    full = full_space_reference(s)
    for j in range(N):
        ref = np.vdot(full, fs.sz(N, j) @ full)
        assert abs(ref.imag) < 1e-12
        assert expect_sz(s, j) == pytest.approx(ref.real, abs=1e-12)
    for i, j in [(0, 1), (2, 5), (4, 3)]:
        ref = np.vdot(full, fs.heisenberg(N, i, j) @ full)
        assert expect_heisenberg(s, i, j) == pytest.approx(ref.real, abs=1e-12)
        assert -0.75 - 1e-12 <= expect_heisenberg(s, i, j) <= 0.25 + 1e-12


def test_neel_nn_correlation(geo2):
    psi = init_neel(geo2)
    assert expect_heisenberg(psi, 0, 1) == -0.25
    assert expect_flip(psi, 0, 1) == 0.0


def test_full_space_embedding():
    basis = sector_basis(4, 2)
    s = random_state(basis, np.random.default_rng(3))
    full = full_space_reference(s)
    assert full.shape == (16,) and np.count_nonzero(full == 0) == 10
    assert np.linalg.norm(full) == pytest.approx(1)
    with pytest.raises(ValueError):
        full_space_reference(SectorState(sector_basis(18, 9), np.ones(len(sector_basis(18, 9)))))


def test_site_range_errors():
    s = random_state(sector_basis(4, 2), np.random.default_rng(0))
    with pytest.raises(IndexError):
        apply_xy(s, 0, 4, 0.1)
    with pytest.raises(IndexError):
        apply_z(s, -1, 0.1)
    with pytest.raises(ValueError):
        apply_zz(s, 2, 2, 0.1)


def test_dump_round_trip(rng):
    s = random_state(sector_basis(6, 3), rng)
    buf = io.BytesIO()
    dump_amplitudes(s, buf)
    raw = buf.getvalue()
    assert raw[:4] == b"QHSV" and len(raw) == 20 + 16 * 20
    back = load_amplitudes(io.BytesIO(raw))
    np.testing.assert_array_equal(back.amplitudes, s.amplitudes)
    with pytest.raises(ValueError):
        load_amplitudes(io.BytesIO(b"XXXX" + raw[4:]))
    with pytest.raises(ValueError):
        load_amplitudes(io.BytesIO(raw[:-8]))
