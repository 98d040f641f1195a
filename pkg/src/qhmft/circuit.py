"""U(1)-preserving XY-ZZ-Z macro-layer circuits on L x L clusters."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .lattice import ClusterGeometry, build_cluster
from .statevector import SectorBasis, SectorState, apply_xy, apply_z, apply_zz

XY = "XY"
ZZ = "ZZ"
Z = "Z"


@dataclass(frozen=True)
class GateSlot:
    family: str
    sites: tuple[int, ...]
    param_slot: int
    layer_index: int


def _dimer_layer(geometry: ClusterGeometry, axis: str, start: int) -> list[tuple[int, int]]:
    L = geometry.L
    gates = []
    for y in range(L):
        for x in range(L):
            along = x if axis == "x" else y
            if along < start or (along - start) % 2 or along + 1 >= L:
                continue
            nx, ny = (x + 1, y) if axis == "x" else (x, y + 1)
            gates.append((geometry.site_id(x, y), geometry.site_id(nx, ny)))
    return gates


def build_macro_layer(L: int | ClusterGeometry) -> list[tuple[str, list[tuple[int, ...]]]]:
    """Ordered ``(family, gate supports)`` layers of one macro-layer.

    Two-qubit families cover columnar x-dimers, columnar y-dimers and their
    one-site translations, in that order; empty translated layers (L = 2)
    are dropped. A single-qubit Z layer closes the block.
    """
    geometry = L if isinstance(L, ClusterGeometry) else build_cluster(L)
    patterns = [("x", 0), ("y", 0), ("x", 1), ("y", 1)]
    layers: list[tuple[str, list[tuple[int, ...]]]] = []
    for family in (XY, ZZ):
        for axis, start in patterns:
            gates = _dimer_layer(geometry, axis, start)
            if gates:
                layers.append((family, gates))
    layers.append((Z, [(s.id,) for s in geometry.sites]))
    return layers


@dataclass(frozen=True, eq=False)
class CircuitSpec:
    L: int
    m: int
    slots: tuple[GateSlot, ...]
    depth: int
    tie_map: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_slots(self) -> int:
        return len(self.slots)

    @property
    def n_params(self) -> int:
        if self.tie_map is None:
            return self.n_slots
        return int(self.tie_map.max()) + 1

    @property
    def tied(self) -> bool:
        return self.tie_map is not None

    @property
    def n_params_per_layer(self) -> int:
        return self.n_params // self.m

    def slot_angles(self, params) -> np.ndarray:
        """Expand a parameter vector to one angle per gate slot."""
        params = np.asarray(params, dtype=float)
        if params.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {params.shape}")
        return params if self.tie_map is None else params[self.tie_map]

    def reduce_gradient(self, slot_grad: np.ndarray) -> np.ndarray:
        """Chain rule from per-slot derivatives to the parameter vector."""
        if self.tie_map is None:
            return slot_grad
        return np.bincount(self.tie_map, weights=slot_grad, minlength=self.n_params)

    def layers(self) -> list[list[GateSlot]]:
        out: list[list[GateSlot]] = [[] for _ in range(self.depth)]
        for s in self.slots:
            out[s.layer_index].append(s)
        return out

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "m": self.m,
            "n_params": self.n_params,
            "depth": self.depth,
            "slots": [
                {"family": s.family, "sites": list(s.sites), "param_slot": s.param_slot, "layer": s.layer_index}
                for s in self.slots
            ],
            "layers": [[s.param_slot for s in layer] for layer in self.layers()],
            "tie_map": None if self.tie_map is None else [int(t) for t in self.tie_map],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def build_circuit(L: int, m: int, tied: bool = False) -> CircuitSpec:
    if m < 1:
        raise ValueError(f"need at least one macro-layer, got m={m}")
    if tied and L != 2:
        raise ValueError("tied parameters are only defined for the 2x2 cluster")
    macro = build_macro_layer(L)
    slots: list[GateSlot] = []
    ties: list[int] = []
    layer = 0
    for rep in range(m):
        class_offset = 6 * rep
        for family, gates in macro:
            for g in gates:
                slots.append(GateSlot(family, g, len(slots), layer))
                if family == XY:
                    ties.append(class_offset)
                elif family == ZZ:
                    ties.append(class_offset + 1)
                else:
                    ties.append(class_offset + 2 + g[0])
            layer += 1
    tie_map = None
    if tied:
        tie_map = np.array(ties, dtype=np.intp)
        tie_map.setflags(write=False)
    return CircuitSpec(L, m, tuple(slots), layer, tie_map)


# -- reference application via the single-gate kernels ------------------------


def _apply_slot(state: SectorState, slot: GateSlot, theta: float) -> None:
    if slot.family == XY:
        apply_xy(state, *slot.sites, theta)
    elif slot.family == ZZ:
        apply_zz(state, *slot.sites, theta)
    else:
        apply_z(state, slot.sites[0], theta)


def _check_state(spec: CircuitSpec, state: SectorState) -> None:
    if state.basis.N != spec.L * spec.L:
        raise ValueError(f"state has {state.basis.N} qubits, circuit expects {spec.L * spec.L}")


def apply_circuit(spec: CircuitSpec, params, state: SectorState) -> SectorState:
    angles = spec.slot_angles(params)
    _check_state(spec, state)
    for slot in spec.slots:
        _apply_slot(state, slot, angles[slot.param_slot])
    return state


def apply_inverse(spec: CircuitSpec, params, state: SectorState) -> SectorState:
    angles = spec.slot_angles(params)
    _check_state(spec, state)
    for slot in reversed(spec.slots):
        _apply_slot(state, slot, -angles[slot.param_slot])
    return state


# -- compiled kernels for the objective ---------------------------------------


class CompiledCircuit:
    """Circuit bound to a sector basis, with runs of diagonal gates fused.

    ZZ and Z gates commute, so each maximal run of them becomes one phase
    multiplication and its derivatives share a single inner product.
    """

    def __init__(self, spec: CircuitSpec, basis: SectorBasis):
        if basis.N != spec.L * spec.L:
            raise ValueError("basis and circuit sizes disagree")
        self.spec = spec
        self.basis = basis
        self.ops: list[tuple] = []
        occ = basis.occupation
        run: list[GateSlot] = []

        def flush() -> None:
            if not run:
                return
            rows = []
            for s in run:
                if s.family == ZZ:
                    rows.append(1 - 2 * (occ[:, s.sites[0]] ^ occ[:, s.sites[1]]))
                else:
                    rows.append(1 - 2 * occ[:, s.sites[0]])
            eig = np.array(rows, dtype=float)
            self.ops.append(("diag", np.array([s.param_slot for s in run]), eig))
            run.clear()

        for s in spec.slots:
            if s.family == XY:
                flush()
                idx01, idx10 = basis.pair_table(*s.sites)
                self.ops.append(("xy", s.param_slot, idx01, idx10))
            else:
                run.append(s)
        flush()

    @cached_property
    def neel_index(self) -> int:
        return self.basis.index_of(sum(1 << s for s in range(self.basis.N) if self._neel_bit(s)))

    def _neel_bit(self, site: int) -> int:
        L = self.spec.L
        return (site % L + site // L) % 2

    def initial_state(self) -> np.ndarray:
        psi = np.zeros(len(self.basis), dtype=complex)
        psi[self.neel_index] = 1.0
        return psi

    def forward(self, angles: np.ndarray, psi: np.ndarray | None = None) -> np.ndarray:
        psi = self.initial_state() if psi is None else psi
        for op in self.ops:
            if op[0] == "xy":
                _, k, i01, i10 = op
                c, s = np.cos(0.5 * angles[k]), np.sin(0.5 * angles[k])
                a = psi[i01]
                b = psi[i10]
                psi[i01] = c * a + s * b
                psi[i10] = c * b - s * a
            else:
                _, ks, eig = op
                psi *= np.exp(-1j * (angles[ks] @ eig))
        return psi

    def adjoint_gradient(self, angles: np.ndarray, psi: np.ndarray, lam: np.ndarray) -> np.ndarray:
        """Per-slot derivatives of ``<psi|A|psi>`` given ``lam = A psi``.

        ``psi`` must be the forward output for ``angles``. Both arrays are
        consumed (overwritten).
        """
        grad = np.zeros(self.spec.n_slots)
        for op in reversed(self.ops):
            if op[0] == "xy":
                _, k, i01, i10 = op
                p01, p10 = psi[i01], psi[i10]
                l01, l10 = lam[i01], lam[i10]
                grad[k] = np.real(np.vdot(l01, p10) - np.vdot(l10, p01))
                c, s = np.cos(0.5 * angles[k]), np.sin(0.5 * angles[k])
                psi[i01] = c * p01 - s * p10
                psi[i10] = c * p10 + s * p01
                lam[i01] = c * l01 - s * l10
                lam[i10] = c * l10 + s * l01
            else:
                _, ks, eig = op
                grad[ks] = 2.0 * (eig @ np.imag(np.conj(lam) * psi))
                phase = np.exp(1j * (angles[ks] @ eig))
                psi *= phase
                lam *= phase
        return grad
