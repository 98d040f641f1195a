"""Sector matrices of the J1-J2 cluster Hamiltonian and the mean-field couplings."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .lattice import BOUNDARY, INTRA, NN, NNN, ClusterGeometry
from .statevector import SectorBasis


@dataclass(frozen=True)
class ModelParams:
    J1: float = 1.0
    J2: float = 0.0

    def __post_init__(self) -> None:
        if not self.J1 > 0:
            raise ValueError(f"J1 must be positive, got {self.J1}")
        if self.J2 < 0:
            raise ValueError(f"J2 must be non-negative, got {self.J2}")

    def coupling(self, rng: str) -> float:
        return self.J1 if rng == NN else self.J2


def bond_matrix(basis: SectorBasis, bonds) -> sp.csr_matrix:
    """Real symmetric sector matrix of ``sum_b S_i . S_j`` over unit-weight bonds."""
    dim = len(basis)
    sz = basis.sz
    diag = np.zeros(dim)
    rows, cols = [], []
    for b in bonds:
        diag += sz[:, b.i] * sz[:, b.j]
        idx01, idx10 = basis.pair_table(b.i, b.j)
        rows += [idx01, idx10]
        cols += [idx10, idx01]
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        off = sp.coo_matrix((np.full(r.size, 0.5), (r, c)), shape=(dim, dim))
    else:
        off = sp.coo_matrix((dim, dim))
    return (off + sp.diags(diag)).tocsr()


def intra_matrices(geometry: ClusterGeometry, basis: SectorBasis) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Intra-cluster NN and NNN Heisenberg sums as separate sector matrices."""
    return (
        bond_matrix(basis, geometry.bonds(INTRA, NN)),
        bond_matrix(basis, geometry.bonds(INTRA, NNN)),
    )


@dataclass(frozen=True)
class BoundaryCouplings:
    """Folded boundary pairs as arrays, with ``coef = weight * J``."""

    i: np.ndarray
    j: np.ndarray
    coef: np.ndarray

    def energy(self, m: np.ndarray) -> float:
        """``sum_b coef_b m_i m_j`` (the 1/2 is already inside the weights)."""
        return float(np.sum(self.coef * m[self.i] * m[self.j]))

    def fields(self, m: np.ndarray, N: int) -> np.ndarray:
        """Effective field on each site, the gradient of :meth:`energy` in ``m``."""
        h = np.zeros(N)
        np.add.at(h, self.i, self.coef * m[self.j])
        np.add.at(h, self.j, self.coef * m[self.i])
        return h


def boundary_couplings(geometry: ClusterGeometry, model: ModelParams, rng: str | None = None) -> BoundaryCouplings:
    bonds = list(geometry.bonds(BOUNDARY, rng))
    return BoundaryCouplings(
        np.array([b.i for b in bonds], dtype=np.intp),
        np.array([b.j for b in bonds], dtype=np.intp),
        np.array([float(b.weight) * model.coupling(b.range) for b in bonds]),
    )


def unit_boundary(geometry: ClusterGeometry, rng: str) -> BoundaryCouplings:
    """Boundary pairs of one range with ``coef = weight`` (coupling stripped)."""
    bonds = list(geometry.bonds(BOUNDARY, rng))
    return BoundaryCouplings(
        np.array([b.i for b in bonds], dtype=np.intp),
        np.array([b.j for b in bonds], dtype=np.intp),
        np.array([float(b.weight) for b in bonds]),
    )


def matvec(H: sp.csr_matrix, psi: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(psi):
        return H @ psi.real + 1j * (H @ psi.imag)
    return H @ psi
