"""Statevectors restricted to a fixed-Hamming-weight (fixed S^z) sector.

Bit ``j`` of a basis integer is the state of site ``j``; ``|0> = up`` and
``|1> = down`` so ``S^z_j = 1/2 - bit_j``. Basis states are ordered by
increasing integer value. All gates act in place on ``SectorState.amplitudes``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from math import comb
from typing import BinaryIO

import numpy as np

from .lattice import ClusterGeometry

MAX_SECTOR_QUBITS = 36
MAX_FULL_SPACE_QUBITS = 16
_DUMP_MAGIC = b"QHSV"


@dataclass(frozen=True, eq=False)
class SectorBasis:
    N: int
    k: int
    states: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.states)

    def index_of(self, bits: int | np.ndarray) -> int | np.ndarray:
        idx = np.searchsorted(self.states, bits)
        ok = (idx < len(self.states)) & (self.states[np.minimum(idx, len(self.states) - 1)] == bits)
        if not np.all(ok):
            raise KeyError(f"bitstring(s) {bits!r} not in the weight-{self.k} sector of {self.N} qubits")
        return int(idx) if np.ndim(idx) == 0 else idx

    def check_site(self, *sites: int) -> None:
        for s in sites:
            if not 0 <= s < self.N:
                raise IndexError(f"site {s} out of range for {self.N} qubits")

    @property
    def occupation(self) -> np.ndarray:
        """``(dim, N)`` array of bit values."""
        return _occupation(self)

    @property
    def sz(self) -> np.ndarray:
        """``(dim, N)`` array of S^z eigenvalues (+-1/2)."""
        return _sz(self)

    def pair_table(self, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Indices of basis states with ``(bit_i, bit_j) = (0, 1)`` and their (1, 0) partners."""
        self.check_site(i, j)
        if i == j:
            raise ValueError("two-site operation needs distinct sites")
        return _pair_table(self, i, j)

    def parity(self, i: int, j: int) -> np.ndarray:
        """Eigenvalue of ``Z_i Z_j`` on every basis state."""
        occ = self.occupation
        return 1 - 2 * (occ[:, i] ^ occ[:, j])


@lru_cache(maxsize=None)
def sector_basis(N: int, k: int) -> SectorBasis:
    if N > MAX_SECTOR_QUBITS:
        raise ValueError(f"sector simulation supports at most {MAX_SECTOR_QUBITS} qubits, got {N}")
    if not 0 <= k <= N:
        raise ValueError(f"Hamming weight {k} invalid for {N} qubits")
    states = np.fromiter(
        (sum(1 << b for b in c) for c in combinations(range(N), k)), dtype=np.int64, count=comb(N, k)
    )
    states.sort()
    states.setflags(write=False)
    return SectorBasis(N, k, states)


@lru_cache(maxsize=None)
def _occupation(basis: SectorBasis) -> np.ndarray:
    occ = ((basis.states[:, None] >> np.arange(basis.N)) & 1).astype(np.int8)
    occ.setflags(write=False)
    return occ


@lru_cache(maxsize=None)
def _sz(basis: SectorBasis) -> np.ndarray:
    sz = 0.5 - _occupation(basis).astype(float)
    sz.setflags(write=False)
    return sz


@lru_cache(maxsize=None)
def _pair_table(basis: SectorBasis, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    occ = basis.occupation
    idx01 = np.flatnonzero((occ[:, i] == 0) & (occ[:, j] == 1))
    partners = basis.states[idx01] ^ ((1 << i) | (1 << j))
    idx10 = np.searchsorted(basis.states, partners)
    idx01.setflags(write=False)
    idx10.setflags(write=False)
    return idx01, idx10


@dataclass
class SectorState:
    basis: SectorBasis
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (len(self.basis),):
            raise ValueError(f"expected {len(self.basis)} amplitudes, got shape {self.amplitudes.shape}")

    def copy(self) -> SectorState:
        return SectorState(self.basis, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def neel_bits(geometry: ClusterGeometry) -> int:
    """Checkerboard product state: bit_j = (x_j + y_j) mod 2."""
    return sum(1 << s.id for s in geometry.sites if (s.coord[0] + s.coord[1]) % 2)


def init_neel(geometry: ClusterGeometry) -> SectorState:
    basis = sector_basis(geometry.N, geometry.N // 2)
    amps = np.zeros(len(basis), dtype=complex)
    amps[basis.index_of(neel_bits(geometry))] = 1.0
    return SectorState(basis, amps)


def random_state(basis: SectorBasis, rng: np.random.Generator) -> SectorState:
    v = rng.normal(size=len(basis)) + 1j * rng.normal(size=len(basis))
    return SectorState(basis, v / np.linalg.norm(v))


# -- gates -------------------------------------------------------------------


def apply_xy(state: SectorState, i: int, j: int, theta: float) -> SectorState:
    """Real XY (Givens) rotation in the odd-parity subspace of sites i, j.

    ``|01> -> cos(t/2)|01> - sin(t/2)|10>`` and ``|10> -> cos(t/2)|10> + sin(t/2)|01>``,
    where the first bit refers to site ``i``.
    """
    idx01, idx10 = state.basis.pair_table(i, j)
    c, s = np.cos(0.5 * theta), np.sin(0.5 * theta)
    psi = state.amplitudes
    a = psi[idx01]
    b = psi[idx10]
    psi[idx01] = c * a + s * b
    psi[idx10] = c * b - s * a
    return state


def apply_zz(state: SectorState, i: int, j: int, theta: float) -> SectorState:
    """``exp(-i theta Z_i Z_j)``."""
    state.basis.check_site(i, j)
    if i == j:
        raise ValueError("two-site operation needs distinct sites")
    state.amplitudes *= np.exp(-1j * theta * state.basis.parity(i, j))
    return state


def apply_z(state: SectorState, j: int, theta: float) -> SectorState:
    """``exp(-i theta Z_j)``."""
    state.basis.check_site(j)
    z = 1 - 2 * state.basis.occupation[:, j]
    state.amplitudes *= np.exp(-1j * theta * z)
    return state


# -- observables -------------------------------------------------------------


def expect_sz(state: SectorState, j: int) -> float:
    state.basis.check_site(j)
    return float(state.probabilities @ state.basis.sz[:, j])


def expect_sz_all(state: SectorState) -> np.ndarray:
    return state.probabilities @ state.basis.sz


def expect_flip(state: SectorState, i: int, j: int) -> float:
    """``<S^x_i S^x_j + S^y_i S^y_j>``."""
    idx01, idx10 = state.basis.pair_table(i, j)
    psi = state.amplitudes
    return float(np.real(np.vdot(psi[idx01], psi[idx10])))


def expect_heisenberg(state: SectorState, i: int, j: int) -> float:
    """``<S_i . S_j>``."""
    sz = state.basis.sz
    zz = float(state.probabilities @ (sz[:, i] * sz[:, j]))
    return zz + expect_flip(state, i, j)


# -- full-space reference ----------------------------------------------------


def full_space_reference(state: SectorState) -> np.ndarray:
    """Embed the sector amplitudes into the full ``2**N`` computational basis."""
    N = state.basis.N
    if N > MAX_FULL_SPACE_QUBITS:
        raise ValueError(f"full-space reference limited to {MAX_FULL_SPACE_QUBITS} qubits, got {N}")
    full = np.zeros(1 << N, dtype=complex)
    full[state.basis.states] = state.amplitudes
    return full


# -- binary dump -------------------------------------------------------------
# header: magic b"QHSV", then little-endian uint32 N, uint32 k, uint64 length;
# body: length pairs of float64 (re, im), little-endian.


def dump_amplitudes(state: SectorState, fh: BinaryIO) -> None:
    n = len(state.amplitudes)
    fh.write(_DUMP_MAGIC + struct.pack("<IIQ", state.basis.N, state.basis.k, n))
    body = np.empty(2 * n, dtype="<f8")
    body[0::2] = state.amplitudes.real
    body[1::2] = state.amplitudes.imag
    fh.write(body.tobytes())


def load_amplitudes(fh: BinaryIO) -> SectorState:
    head = fh.read(4 + 16)
    if head[:4] != _DUMP_MAGIC:
        raise ValueError("not an amplitude dump (bad magic)")
    N, k, n = struct.unpack("<IIQ", head[4:])
    basis = sector_basis(N, k)
    if n != len(basis):
        raise ValueError(f"dump length {n} does not match sector dimension {len(basis)}")
    body = np.frombuffer(fh.read(16 * n), dtype="<f8")
    if body.size != 2 * n:
        raise ValueError("truncated amplitude dump")
    return SectorState(basis, body[0::2] + 1j * body[1::2])
