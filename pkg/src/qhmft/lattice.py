"""L x L square-lattice clusters with folded mean-field boundary bonds.

Sites are numbered row-major from the bottom-left corner, ``id = y * L + x``.
Bonds leaving the cluster are folded back inside by translating the external
partner with superlattice vectors ``(L, 0)`` and ``(0, L)``; the folded pairs
carry the 1/2 double-counting factor of the embedded energy in their weight.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

import numpy as np

INTRA = "intra"
BOUNDARY = "boundary"
NN = "NN"
NNN = "NNN"

_NN_VECTORS = ((1, 0), (-1, 0), (0, 1), (0, -1))
_NNN_VECTORS = ((1, 1), (-1, -1), (1, -1), (-1, 1))
_KIND_ORDER = {INTRA: 0, BOUNDARY: 1}
_RANGE_ORDER = {NN: 0, NNN: 1}


@dataclass(frozen=True)
class SiteIndex:
    id: int
    coord: tuple[int, int]


@dataclass(frozen=True)
class Bond:
    i: int
    j: int
    kind: str
    range: str
    weight: Fraction = Fraction(1)

    @property
    def sort_key(self) -> tuple[int, int, int, int]:
        return (_KIND_ORDER[self.kind], _RANGE_ORDER[self.range], min(self.i, self.j), max(self.i, self.j))


@dataclass(frozen=True)
class ClusterGeometry:
    L: int
    sites: tuple[SiteIndex, ...]
    intra_bonds: tuple[Bond, ...]
    boundary_bonds: tuple[Bond, ...]
    neel_sign: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.L * self.L

    def coords(self) -> np.ndarray:
        """Site coordinates as an ``(N, 2)`` integer array ordered by id."""
        return np.array([s.coord for s in self.sites], dtype=int)

    def site_id(self, x: int, y: int) -> int:
        if not (0 <= x < self.L and 0 <= y < self.L):
            raise ValueError(f"coordinate ({x}, {y}) lies outside the {self.L}x{self.L} cluster")
        return y * self.L + x

    def bonds(self, kind: str | None = None, range: str | None = None) -> Iterator[Bond]:
        for b in self.intra_bonds + self.boundary_bonds:
            if kind is not None and b.kind != kind:
                continue
            if range is not None and b.range != range:
                continue
            yield b

    def to_dict(self) -> dict:
        def bond_dict(b: Bond) -> dict:
            return {
                "i": b.i,
                "j": b.j,
                "kind": b.kind,
                "range": b.range,
                "weight": str(b.weight),
            }

        return {
            "L": self.L,
            "sites": [{"id": s.id, "x": s.coord[0], "y": s.coord[1]} for s in self.sites],
            "intra_bonds": [bond_dict(b) for b in self.intra_bonds],
            "boundary_bonds": [bond_dict(b) for b in self.boundary_bonds],
            "neel_sign": [int(v) for v in self.neel_sign],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def fold_external_site(coord: tuple[int, int], L: int) -> SiteIndex:
    """Map a coordinate outside the cluster to its periodic image inside it.

    The coordinate must be reachable from a cluster site by at most one
    superlattice translation along each axis.
    """
    x, y = coord
    if not (-L <= x < 2 * L and -L <= y < 2 * L):
        raise ValueError(f"coordinate {coord} is not a superlattice image of a {L}x{L} cluster site")
    fx, fy = x % L, y % L
    return SiteIndex(fy * L + fx, (fx, fy))


def build_cluster(L: int) -> ClusterGeometry:
    if not isinstance(L, (int, np.integer)) or isinstance(L, bool):
        raise TypeError(f"L must be an integer, got {type(L).__name__}")
    if L < 2 or L % 2:
        raise ValueError(f"cluster side L must be an even integer >= 2, got {L}")
    L = int(L)

    sites = tuple(SiteIndex(y * L + x, (x, y)) for y in range(L) for x in range(L))
    intra: list[Bond] = []
    # directed inter-cluster pairs, counted per folded unordered pair
    external: dict[str, Counter] = {NN: Counter(), NNN: Counter()}

    for rng_name, vectors in ((NN, _NN_VECTORS), (NNN, _NNN_VECTORS)):
        for s in sites:
            x, y = s.coord
            for dx, dy in vectors:
                nx, ny = x + dx, y + dy
                if 0 <= nx < L and 0 <= ny < L:
                    j = ny * L + nx
                    if s.id < j:
                        intra.append(Bond(s.id, j, INTRA, rng_name))
                else:
                    j = fold_external_site((nx, ny), L).id
                    external[rng_name][(min(s.id, j), max(s.id, j))] += 1

    boundary = [
        Bond(i, j, BOUNDARY, rng_name, Fraction(count, 2))
        for rng_name, counter in external.items()
        for (i, j), count in counter.items()
    ]
    intra.sort(key=lambda b: b.sort_key)
    boundary.sort(key=lambda b: b.sort_key)
    neel = np.array([(-1) ** (x + y) for x, y in (s.coord for s in sites)], dtype=int)
    neel.setflags(write=False)
    return ClusterGeometry(L, sites, tuple(intra), tuple(boundary), neel)
