"""Mean-field-embedded energy per spin, its gradients, and order parameters."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .circuit import CircuitSpec, CompiledCircuit
from .hamiltonian import ModelParams, boundary_couplings, intra_matrices, matvec, unit_boundary
from .lattice import INTRA, NN, NNN, ClusterGeometry
from .statevector import SectorState, expect_heisenberg, expect_sz_all, sector_basis

NEEL_K = (np.pi, np.pi)
CAF_X_K = (np.pi, 0.0)
CAF_Y_K = (0.0, np.pi)


@dataclass
class EnergyReport:
    e_intra: float
    e_mf: float
    e_total: float
    mean_fields: np.ndarray
    gradient: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class OrderParameters:
    m_neel: float
    m_caf_x: float
    m_caf_y: float
    d_x: float
    d_y: float

    @property
    def m_caf(self) -> float:
        return max(self.m_caf_x, self.m_caf_y)

    def as_dict(self) -> dict[str, float]:
        return {
            "m_neel": self.m_neel,
            "m_caf": self.m_caf,
            "m_caf_x": self.m_caf_x,
            "m_caf_y": self.m_caf_y,
            "d_x": self.d_x,
            "d_y": self.d_y,
        }


def magnetization(geometry: ClusterGeometry, state: SectorState | np.ndarray, k) -> complex:
    """``(1/N) sum_j exp(-i r_j . k) <S^z_j>``.

    ``state`` may also be the vector of per-site ``<S^z_j>`` directly.
    """
    m = expect_sz_all(state) if isinstance(state, SectorState) else np.asarray(state, dtype=float)
    phase = np.exp(-1j * (geometry.coords() @ np.asarray(k, dtype=float)))
    return complex(phase @ m / geometry.N)


def dimer(geometry: ClusterGeometry, state: SectorState, axis: str) -> float:
    """Staggered NN bond energy along ``axis``, over intra-cluster bonds, divided by L."""
    if axis not in ("x", "y"):
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    a = 0 if axis == "x" else 1
    coords = geometry.coords()
    total = 0.0
    for b in geometry.bonds(INTRA, NN):
        if coords[b.j][a] - coords[b.i][a] != 1:
            continue
        sign = -1.0 if coords[b.i][a] % 2 else 1.0
        total += sign * expect_heisenberg(state, b.i, b.j)
    return total / geometry.L


def order_parameters(geometry: ClusterGeometry, state: SectorState) -> OrderParameters:
    m = expect_sz_all(state)
    return OrderParameters(
        m_neel=abs(magnetization(geometry, m, NEEL_K)),
        m_caf_x=abs(magnetization(geometry, m, CAF_X_K)),
        m_caf_y=abs(magnetization(geometry, m, CAF_Y_K)),
        d_x=dimer(geometry, state, "x"),
        d_y=dimer(geometry, state, "y"),
    )


class Objective:
    """Energy per spin of the embedded cluster as a function of circuit parameters.

    Holds precomputed sector matrices and the compiled circuit; calls do not
    share mutable buffers, so one instance may serve several threads.
    """

    def __init__(self, geometry: ClusterGeometry, model: ModelParams, spec: CircuitSpec):
        if spec.L != geometry.L:
            raise ValueError(f"circuit built for L={spec.L}, geometry has L={geometry.L}")
        self.geometry = geometry
        self.spec = spec
        self.basis = sector_basis(geometry.N, geometry.N // 2)
        self.compiled = CompiledCircuit(spec, self.basis)
        self._h_nn, self._h_nnn = intra_matrices(geometry, self.basis)
        self._nnn_boundary = unit_boundary(geometry, NNN)
        self.model = model

    @property
    def model(self) -> ModelParams:
        return self._model

    @model.setter
    def model(self, model: ModelParams) -> None:
        self._model = model
        self._h = (model.J1 * self._h_nn + model.J2 * self._h_nnn).tocsr()
        self._boundary = boundary_couplings(self.geometry, model)

    def with_model(self, model: ModelParams) -> Objective:
        other = object.__new__(Objective)
        other.__dict__.update(self.__dict__)
        other.model = model
        return other

    @property
    def n_params(self) -> int:
        return self.spec.n_params

    def state(self, params) -> SectorState:
        angles = self.spec.slot_angles(params)
        return SectorState(self.basis, self.compiled.forward(angles))

    def _evaluate(self, params, with_gradient: bool) -> EnergyReport:
        N = self.geometry.N
        angles = self.spec.slot_angles(params)
        psi = self.compiled.forward(angles)
        m = np.abs(psi) ** 2 @ self.basis.sz
        hpsi = matvec(self._h, psi)
        e_intra = float(np.real(np.vdot(psi, hpsi))) / N
        e_mf = self._boundary.energy(m) / N
        report = EnergyReport(e_intra, e_mf, e_intra + e_mf, m)
        if with_gradient:
            lam = hpsi + (self.basis.sz @ self._boundary.fields(m, N)) * psi
            slot_grad = self.compiled.adjoint_gradient(angles, psi, lam) / N
            report.gradient = self.spec.reduce_gradient(slot_grad)
        return report

    def energy(self, params) -> EnergyReport:
        return self._evaluate(params, with_gradient=False)

    def __call__(self, params) -> float:
        return self._evaluate(params, with_gradient=False).e_total

    def value_and_grad(self, params) -> tuple[float, np.ndarray]:
        r = self._evaluate(params, with_gradient=True)
        return r.e_total, r.gradient

    def gradient_adjoint(self, params) -> np.ndarray:
        return self._evaluate(params, with_gradient=True).gradient

    def gradient_fd(self, params, scheme: str = "central", delta: float = 1e-6) -> np.ndarray:
        if not delta > 0:
            raise ValueError(f"finite-difference step must be positive, got {delta}")
        if scheme not in ("forward", "central"):
            raise ValueError(f"unknown finite-difference scheme {scheme!r}")
        x = np.array(params, dtype=float)
        grad = np.empty(x.size)
        f0 = self(x) if scheme == "forward" else None
        for k in range(x.size):
            xp = x.copy()
            xp[k] += delta
            if scheme == "forward":
                grad[k] = (self(xp) - f0) / delta
            else:
                xm = x.copy()
                xm[k] -= delta
                grad[k] = (self(xp) - self(xm)) / (2 * delta)
        return grad

    def value_and_grad_fd(self, params, scheme: str, delta: float) -> tuple[float, np.ndarray]:
        return self(params), self.gradient_fd(params, scheme, delta)

    def dE_dJ2(self, params) -> float:
        """Hellmann-Feynman derivative: expectation of the NNN part of the embedded energy."""
        psi = self.compiled.forward(self.spec.slot_angles(params))
        m = np.abs(psi) ** 2 @ self.basis.sz
        intra = float(np.real(np.vdot(psi, matvec(self._h_nnn, psi))))
        return (intra + self._nnn_boundary.energy(m)) / self.geometry.N

    def order_parameters(self, params) -> OrderParameters:
        return order_parameters(self.geometry, self.state(params))


# -- functional surface --------------------------------------------------------


def energy(geometry: ClusterGeometry, model: ModelParams, spec: CircuitSpec, params) -> EnergyReport:
    return Objective(geometry, model, spec).energy(params)


def gradient_adjoint(geometry: ClusterGeometry, model: ModelParams, spec: CircuitSpec, params) -> np.ndarray:
    return Objective(geometry, model, spec).gradient_adjoint(params)


def gradient_fd(
    geometry: ClusterGeometry,
    model: ModelParams,
    spec: CircuitSpec,
    params,
    scheme: str = "central",
    delta: float = 1e-6,
) -> np.ndarray:
    return Objective(geometry, model, spec).gradient_fd(params, scheme, delta)


def dE_dJ2(geometry: ClusterGeometry, model: ModelParams, spec: CircuitSpec, params) -> float:
    return Objective(geometry, model, spec).dE_dJ2(params)


def fd_noise_warning(adjoint: np.ndarray, fd: np.ndarray, threshold: float = 1e-6) -> float:
    """Warn when a finite-difference gradient deviates from the exact one by more than ``threshold``."""
    err = float(np.max(np.abs(np.asarray(adjoint) - np.asarray(fd))))
    if err >= threshold:
        warnings.warn(
            f"finite-difference gradient deviates from adjoint by {err:.2e} (floating-point noise)",
            RuntimeWarning,
            stacklevel=2,
        )
    return err
