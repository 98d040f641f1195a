"""Classical cluster mean-field reference (HMFT) by self-consistent exact diagonalization.

The cluster Hamiltonian with open boundaries is diagonalized in the S^z = 0
sector with the boundary spins replaced by static fields, and the fields are
iterated to a fixed point. Energies are reassembled from the converged
eigenvector with the 1/2-weighted quadratic mean-field term, never read off
the eigenvalue.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .hamiltonian import ModelParams, boundary_couplings, intra_matrices, matvec, unit_boundary
from .lattice import NNN, ClusterGeometry
from .objective import OrderParameters, order_parameters
from .optimizer import CONVERGED
from .statevector import MAX_SECTOR_QUBITS, SectorBasis, SectorState, sector_basis
from .sweep import DOWN, FAILED, UP, SweepRecord, envelope, fill_grid_derivative

log = logging.getLogger(__name__)

DENSE_LIMIT = 512
PATTERNS = ("neel", "caf", "zero", "random")


class EigensolverError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class ScfNotConverged(RuntimeError):
    pass


@dataclass(frozen=True)
class ScfConfig:
    field_tolerance: float = 1e-10
    max_outer_iterations: int = 500
    damping: float = 0.7
    initial_field_pattern: str = "neel"
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.field_tolerance > 0:
            raise ValueError("field_tolerance must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if self.initial_field_pattern not in PATTERNS:
            raise ValueError(f"unknown initial field pattern {self.initial_field_pattern!r}")
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be >= 1")


@dataclass
class SectorHamiltonian:
    basis: SectorBasis
    matrix: sp.csr_matrix

    @property
    def dim(self) -> int:
        return len(self.basis)

    def action(self, index: int) -> list[tuple[int, float]]:
        """Nonzero ``(target, coefficient)`` pairs of column ``index``."""
        col = self.matrix.getcol(index).tocoo()
        return sorted(zip(col.row.tolist(), col.data.tolist()))

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass
class HMFTResult:
    energy: float
    e_intra: float
    e_mf: float
    fields: np.ndarray
    order: OrderParameters
    eigenvalue: float
    vector: np.ndarray = field(repr=False)
    iterations: int = 0
    converged: bool = True
    field_change: float = 0.0
    pattern: str = ""


def initial_fields(geometry: ClusterGeometry, pattern: str, seed: int = 0, amplitude: float = 0.5) -> np.ndarray:
    coords = geometry.coords()
    if pattern == "neel":
        return amplitude * geometry.neel_sign.astype(float)
    if pattern == "caf":
        return amplitude * (-1.0) ** coords[:, 0]
    if pattern == "zero":
        return np.zeros(geometry.N)
    if pattern == "random":
        m = np.random.default_rng(seed).uniform(-amplitude, amplitude, geometry.N)
        return m - m.mean()
    raise ValueError(f"unknown initial field pattern {pattern!r}")


class _Cache:
    """Per-geometry sector matrices, reused across SCF iterations and J2 points."""

    def __init__(self, geometry: ClusterGeometry):
        if geometry.N > MAX_SECTOR_QUBITS:
            raise ValueError(f"cluster of {geometry.N} sites exceeds the {MAX_SECTOR_QUBITS}-qubit guard")
        self.geometry = geometry
        self.basis = sector_basis(geometry.N, geometry.N // 2)
        self.h_nn, self.h_nnn = intra_matrices(geometry, self.basis)


_caches: dict[int, _Cache] = {}


def _cache(geometry: ClusterGeometry) -> _Cache:
    c = _caches.get(geometry.L)
    if c is None:
        c = _caches[geometry.L] = _Cache(geometry)
    return c


def build_hamiltonian(geometry: ClusterGeometry, model: ModelParams, fields) -> SectorHamiltonian:
    """Open-cluster Hamiltonian plus diagonal boundary-field terms.

    Each folded boundary pair ``(i, j)`` with weight ``w`` adds
    ``w J (m_j S^z_i + m_i S^z_j)``.
    """
    m = np.asarray(fields, dtype=float)
    if m.shape != (geometry.N,) or not np.all(np.isfinite(m)):
        raise ValueError("fields must be a finite vector with one entry per site")
    c = _cache(geometry)
    h = boundary_couplings(geometry, model).fields(m, geometry.N)
    matrix = model.J1 * c.h_nn + model.J2 * c.h_nnn + sp.diags(c.basis.sz @ h)
    return SectorHamiltonian(c.basis, matrix.tocsr())


def lowest_eigenpair(
    H: SectorHamiltonian | sp.spmatrix | np.ndarray,
    v0: np.ndarray | None = None,
    method: str = "auto",
    residual_tolerance: float = 1e-8,
) -> tuple[float, np.ndarray]:
    """Ground eigenpair; dense LAPACK for small sectors, Lanczos (ARPACK) otherwise."""
    A = H.matrix if isinstance(H, SectorHamiltonian) else H
    dim = A.shape[0]
    if method == "auto":
        method = "dense" if dim <= DENSE_LIMIT else "krylov"
    if method == "dense":
        dense = A.toarray() if sp.issparse(A) else np.asarray(A)
        w, v = scipy.linalg.eigh(dense, subset_by_index=[0, 0])
        energy, vec = float(w[0]), v[:, 0]
    elif method == "krylov":
        try:
            w, v = spla.eigsh(A, k=1, which="SA", v0=v0, tol=1e-13, maxiter=20 * dim)
        except spla.ArpackNoConvergence as exc:
            raise EigensolverError("Lanczos did not converge", float("nan")) from exc
        energy, vec = float(w[0]), v[:, 0]
    else:
        raise ValueError(f"unknown eigensolver method {method!r}")
    vec = vec / np.linalg.norm(vec)
    residual = float(np.linalg.norm(A @ vec - energy * vec))
    if residual > residual_tolerance:
        raise EigensolverError("eigenpair residual above tolerance", residual)
    return energy, vec


def embedded_energy(geometry: ClusterGeometry, model: ModelParams, vector: np.ndarray) -> tuple[float, float, np.ndarray]:
    """``(e_intra, e_mf, <S^z>)`` per spin for a cluster state."""
    c = _cache(geometry)
    N = geometry.N
    m = np.abs(vector) ** 2 @ c.basis.sz
    H = model.J1 * c.h_nn + model.J2 * c.h_nnn
    e_intra = float(np.real(np.vdot(vector, matvec(H, vector)))) / N
    e_mf = boundary_couplings(geometry, model).energy(m) / N
    return e_intra, e_mf, m


def self_consistent_hmft(
    geometry: ClusterGeometry,
    model: ModelParams,
    scf: ScfConfig = ScfConfig(),
    fields: np.ndarray | None = None,
    strict: bool = False,
) -> HMFTResult:
    """Damped fixed-point iteration ``m <- (1 - g) m + g m_new`` of the boundary fields.

    ``fields`` overrides the configured initial pattern (used for warm starts).
    With ``strict`` a non-converged loop raises :class:`ScfNotConverged`.
    """
    c = _cache(geometry)
    m = initial_fields(geometry, scf.initial_field_pattern, scf.seed) if fields is None else np.array(fields, float)
    v = None
    change = np.inf
    it = 0
    for it in range(1, scf.max_outer_iterations + 1):
        H = build_hamiltonian(geometry, model, m)
        _, v = lowest_eigenpair(H, v0=v)
        m_new = np.abs(v) ** 2 @ c.basis.sz
        change = float(np.max(np.abs(m_new - m)))
        if change <= scf.field_tolerance:
            m = m_new
            break
        m = (1 - scf.damping) * m + scf.damping * m_new
    converged = change <= scf.field_tolerance
    if not converged:
        msg = (
            f"SCF not converged after {it} iterations at J2={model.J2:g} "
            f"(field change {change:.2e}); try a smaller damping factor"
        )
        if strict:
            raise ScfNotConverged(msg)
        log.warning(msg)
    # final diagonalization at the fixed point, energy reassembled from the vector
    H = build_hamiltonian(geometry, model, m)
    eig, v = lowest_eigenpair(H, v0=v)
    e_intra, e_mf, m_out = embedded_energy(geometry, model, v)
    state = SectorState(c.basis, v.astype(complex))
    return HMFTResult(
        energy=e_intra + e_mf,
        e_intra=e_intra,
        e_mf=e_mf,
        fields=m_out,
        order=order_parameters(geometry, state),
        eigenvalue=eig,
        vector=v,
        iterations=it,
        converged=converged,
        field_change=float(np.max(np.abs(m_out - m))) if converged else change,
        pattern=scf.initial_field_pattern if fields is None else "warm",
    )


def hmft_best(
    geometry: ClusterGeometry,
    model: ModelParams,
    scf: ScfConfig = ScfConfig(),
    patterns=PATTERNS,
    extra_fields=(),
) -> HMFTResult:
    """Lowest-energy fixed point over several initial field patterns."""
    results = [
        self_consistent_hmft(geometry, model, ScfConfig(
            scf.field_tolerance, scf.max_outer_iterations, scf.damping, p, scf.seed
        ))
        for p in patterns
    ]
    results += [self_consistent_hmft(geometry, model, scf, fields=f) for f in extra_fields]
    return min(results, key=lambda r: (not r.converged, r.energy))


def hellmann_feynman_dj2(geometry: ClusterGeometry, vector: np.ndarray) -> float:
    """dE/dJ2 of the embedded energy for a fixed cluster state."""
    c = _cache(geometry)
    m = np.abs(vector) ** 2 @ c.basis.sz
    intra = float(np.real(np.vdot(vector, matvec(c.h_nnn, vector))))
    return (intra + unit_boundary(geometry, NNN).energy(m)) / geometry.N


def _to_record(geometry: ClusterGeometry, j2: float, res: HMFTResult, direction: str) -> SweepRecord:
    o = res.order
    return SweepRecord(
        j2=float(j2),
        energy=res.energy,
        dE_dJ2=hellmann_feynman_dj2(geometry, res.vector),
        dE_dJ2_grid=float("nan"),
        m_neel=o.m_neel,
        m_caf_x=o.m_caf_x,
        m_caf_y=o.m_caf_y,
        d_x=o.d_x,
        d_y=o.d_y,
        iterations=res.iterations,
        status=CONVERGED if res.converged else "scf_not_converged",
        direction=direction,
        seed=PATTERNS.index(res.pattern) if res.pattern in PATTERNS else -1,
    )


def hmft_sweep(
    geometry: ClusterGeometry,
    grid,
    scf: ScfConfig = ScfConfig(),
    directions: str = "both",
    J1: float = 1.0,
) -> list[SweepRecord]:
    """Warm-started SCF chains over J2 in the sweep-record schema.

    Each chain starts from the best of the standard field patterns at its
    first point and then feeds the converged fields forward.
    """
    grid = np.asarray(sorted(grid), dtype=float)
    dirs = [UP, DOWN] if directions == "both" else [directions]
    out: list[SweepRecord] = []
    for d in dirs:
        ordered = grid if d == UP else grid[::-1]
        chain = []
        fields = None
        for j2 in ordered:
            model = ModelParams(J1, float(j2))
            try:
                res = hmft_best(geometry, model, scf) if fields is None else self_consistent_hmft(
                    geometry, model, scf, fields=fields
                )
            except EigensolverError as exc:
                log.warning("HMFT point J2=%g failed: %s", j2, exc)
                chain.append(SweepRecord(float(j2), *[float("nan")] * 8, 0, FAILED, d, -1))
                continue
            fields = res.fields
            chain.append(_to_record(geometry, j2, res, d))
        chain.sort(key=lambda r: r.j2)
        fill_grid_derivative([r for r in chain if r.status != FAILED])
        out += chain
    return out


def hmft_reference(geometry: ClusterGeometry, grid, scf: ScfConfig = ScfConfig(), J1: float = 1.0) -> list[SweepRecord]:
    """Lowest HMFT energy per J2 over both warm-start chains and fresh multi-pattern starts."""
    chains = hmft_sweep(geometry, grid, scf, "both", J1)
    fresh = [
        _to_record(geometry, j2, hmft_best(geometry, ModelParams(J1, float(j2)), scf), "fresh")
        for j2 in sorted(grid)
    ]
    return envelope(chains + fresh)
