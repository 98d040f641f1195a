import numpy as np
import pytest
import scipy.sparse as sp

import fullspace as fs
from qhmft.ed_oracle import (
    EigensolverError,
    ScfConfig,
    ScfNotConverged,
    build_hamiltonian,
    hmft_best,
    hmft_reference,
    initial_fields,
    lowest_eigenpair,
    self_consistent_hmft,
)
from qhmft.hamiltonian import ModelParams
from qhmft.lattice import BOUNDARY, INTRA, build_cluster
from qhmft.statevector import SectorState, full_space_reference, sector_basis
from qhmft.sweep import detect_transitions

E_2x2_J0 = -0.58405338
E_2x2_J1 = -0.56265790


def full_space_hamiltonian(geo, model, fields):
    """Dense 2^N effective Hamiltonian with field terms, Sz not restricted."""
    N = geo.N
    H = np.zeros((1 << N, 1 << N), complex)
    for b in geo.bonds(INTRA):
        H += model.coupling(b.range) * fs.heisenberg(N, b.i, b.j)
    for b in geo.bonds(BOUNDARY):
        c = b.weight * model.coupling(b.range)
        H += c * (fields[b.j] * fs.sz(N, b.i) + fields[b.i] * fs.sz(N, b.j))
    return H


def sz0_projector(N):
    return np.array([bin(b).count("1") == N // 2 for b in range(1 << N)])


def test_zero_field_ring_energy(geo2):
    H = build_hamiltonian(geo2, ModelParams(1.0, 0.0), np.zeros(4))
    assert H.dim == 6
    e, _ = lowest_eigenpair(H)
    full = full_space_hamiltonian(geo2, ModelParams(1.0, 0.0), np.zeros(4))
    assert e == pytest.approx(np.linalg.eigvalsh(full).min(), abs=1e-12)
    assert e == pytest.approx(-2.0, abs=1e-12)  # 4-site Heisenberg ring


@pytest.mark.parametrize("J2", [0.0, 0.3, 0.8])
def test_sector_matches_full_space_with_fields(geo2, J2):
    rng = np.random.default_rng(int(10 * J2))
    fields = rng.uniform(-0.5, 0.5, 4)
    model = ModelParams(1.0, J2)
    H = build_hamiltonian(geo2, model, fields)
    e, v = lowest_eigenpair(H)
    full = full_space_hamiltonian(geo2, model, fields)
    keep = sz0_projector(4)
    ref = np.linalg.eigvalsh(full[np.ix_(keep, keep)]).min()
    assert e == pytest.approx(ref, abs=1e-10)
    vf = full_space_reference(SectorState(H.basis, v.astype(complex)))
    assert np.linalg.norm(full @ vf - e * vf) <= 1e-10


def test_neel_field_diagonal_shifts(geo2):
    """Field terms are J * m_partner * S^z for each external partner, summed with weights."""
    fields = initial_fields(geo2, "neel")
    model = ModelParams(1.0, 0.0)
    H0 = build_hamiltonian(geo2, model, np.zeros(4)).dense()
    H = build_hamiltonian(geo2, model, fields).dense()
    shift = np.diag(H - H0)
    assert np.count_nonzero(H - H0 - np.diag(shift)) == 0
    basis = sector_basis(4, 2)
    # each site has two external NN partners of opposite sublattice: field -J * 2 * (1/2) * sign
    h = np.array([-1.0 * geo2.neel_sign[j] for j in range(4)])
    np.testing.assert_allclose(shift, basis.sz @ h, atol=1e-15)


def test_hermiticity(geo4):
    H = build_hamiltonian(geo4, ModelParams(1.0, 0.55), np.random.default_rng(0).uniform(-0.5, 0.5, 16)).matrix
    assert abs(H - H.T).max() == 0
    assert H.dtype == np.float64


def test_action_lists_column(geo2):
    H = build_hamiltonian(geo2, ModelParams(1.0, 0.0), np.zeros(4))
    col = H.action(0)
    dense = H.dense()
    assert col == sorted((i, dense[i, 0]) for i in np.flatnonzero(dense[:, 0]))


def test_two_site_singlet():
    basis = sector_basis(2, 1)
    from qhmft.hamiltonian import bond_matrix
    from qhmft.lattice import Bond

    H = bond_matrix(basis, [Bond(0, 1, INTRA, "NN", 1)])
    e, v = lowest_eigenpair(H.toarray())
    assert e == pytest.approx(-0.75, abs=1e-14)
    assert abs(v[0]) == pytest.approx(abs(v[1]))


def test_dense_vs_krylov(geo2):
    H = build_hamiltonian(geo2, ModelParams(1.0, 0.4), initial_fields(geo2, "random", seed=3))
    e_d, v_d = lowest_eigenpair(H, method="dense")
    e_k, v_k = lowest_eigenpair(H, method="krylov")
    assert e_d == pytest.approx(e_k, abs=1e-10)
    assert abs(abs(np.vdot(v_d, v_k)) - 1) <= 1e-10
    with pytest.raises(ValueError):
        lowest_eigenpair(H, method="power")


def test_residual_guard():
    A = np.diag([1.0, 2.0])
    with pytest.raises(EigensolverError):
        lowest_eigenpair(sp.csr_matrix(A), residual_tolerance=-1)


def test_neel_fixed_point(geo2):
    res = self_consistent_hmft(geo2, ModelParams(1.0, 0.0))
    assert res.converged
    assert res.energy == pytest.approx(E_2x2_J0, abs=1e-8)
    assert res.order.m_neel > 0.3
    # fixed-point verification
    H = build_hamiltonian(geo2, ModelParams(1.0, 0.0), res.fields)
    _, v = lowest_eigenpair(H)
    m_new = np.abs(v) ** 2 @ H.basis.sz
    assert np.max(np.abs(m_new - res.fields)) <= 1e-9
    # energy is reassembled, not the raw eigenvalue
    assert res.energy != pytest.approx(res.eigenvalue / 4, abs=1e-3)


def test_caf_fixed_point(geo2):
    res = hmft_best(geo2, ModelParams(1.0, 1.0))
    assert res.converged and res.energy == pytest.approx(E_2x2_J1, abs=1e-8)
    assert res.order.m_caf > 0.3 and res.order.m_neel < 1e-8


def test_zero_seed_gives_paramagnet(geo2):
    res = self_consistent_hmft(geo2, ModelParams(1.0, 0.5), ScfConfig(initial_field_pattern="zero"))
    assert res.converged
    np.testing.assert_allclose(res.fields, 0, atol=1e-12)
    assert res.order.m_neel < 1e-12 and res.order.m_caf < 1e-12


def test_paramagnet_energy_formula(geo2):
    for J2 in (0.45, 0.6):
        res = self_consistent_hmft(geo2, ModelParams(1.0, J2), ScfConfig(initial_field_pattern="zero"))
        assert res.energy == pytest.approx(-0.5 + 0.125 * J2, abs=1e-10)


def test_four_by_four_reference_values(geo4):
    assert hmft_best(geo4, ModelParams(1.0, 0.0)).energy == pytest.approx(-0.62439984, abs=1e-7)


def test_strict_non_convergence(geo2):
    with pytest.raises(ScfNotConverged, match="damping"):
        self_consistent_hmft(geo2, ModelParams(1.0, 0.0), ScfConfig(max_outer_iterations=1), strict=True)


@pytest.mark.parametrize("kwargs", [dict(field_tolerance=0), dict(damping=0), dict(damping=1.5),
                                    dict(initial_field_pattern="stripe"), dict(max_outer_iterations=0)])
def test_scf_config_validation(kwargs):
    with pytest.raises(ValueError):
        ScfConfig(**kwargs)


def test_initial_fields(geo4):
    assert np.sum(initial_fields(geo4, "neel")) == 0
    assert np.sum(initial_fields(geo4, "caf")) == 0
    r = initial_fields(geo4, "random", seed=1)
    assert abs(r.sum()) < 1e-12 and np.array_equal(r, initial_fields(geo4, "random", seed=1))


def test_reference_sweep_transitions(geo2):
    grid = np.round(np.arange(0.3, 0.8001, 0.01), 10)
    recs = hmft_reference(geo2, grid)
    assert all(r.status == "converged" for r in recs)
    found = detect_transitions(recs)
    kinds = {round(t.location, 2): t.kind for t in found.transitions}
    assert any(abs(j - 0.42) <= 0.03 for j in kinds)
    assert any(abs(j - 0.68) <= 0.03 and k == "first_order" for j, k in kinds.items())
