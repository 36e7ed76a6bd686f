"""Periodic square and triangular clusters.

A cluster is the quotient of the infinite lattice by two integer cell
vectors T1, T2 (tilted cells allowed).  Site coordinates are stored in
integer lattice-vector units: (x, y) on the square lattice, and
(m, n) meaning m*a1 + n*a2 with a1 = (1, 0), a2 = (1/2, sqrt(3)/2) on
the triangular lattice.  Allowed momenta are kept as exact rational
pairs (u1, u2) in the reciprocal basis of the unit cell, so membership
tests are exact; conversion to Cartesian floats happens only when a
measurement needs phases.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import MissingPoint, RejectedCell, UnknownPreset

SQUARE = "square"
TRIANGULAR = "triangular"

GAMMA = "Gamma"
M_POINT = "M"
K_POINT = "K"
MINUS_K_POINT = "-K"

# Canonical simulation cells.  All satisfy aspect ratio 1, the sublattice
# compatibility constraints, and (for square) even N / (triangular) N % 3 == 0.
SQUARE_PRESETS = {
    8: ((2, 2), (2, -2)),
    10: ((3, 1), (-1, 3)),
    16: ((4, 0), (0, 4)),
    18: ((3, 3), (3, -3)),
    20: ((4, 2), (-2, 4)),
    26: ((5, 1), (-1, 5)),
}
TRIANGULAR_PRESETS = {
    9: ((3, 0), (0, 3)),
    12: ((2, 2), (-2, 4)),
    21: ((4, 1), (-1, 5)),
    24: ((4, 1), (4, -5)),
    27: ((3, 3), (-3, 6)),
    36: ((6, 0), (0, 6)),
    48: ((4, 4), (-4, 8)),
}

_FORWARD_OFFSETS = {SQUARE: ((1, 0), (0, 1)), TRIANGULAR: ((1, 0), (0, 1), (1, -1))}
_COORDINATION = {SQUARE: 4, TRIANGULAR: 6}
_N_SUBLATTICES = {SQUARE: 2, TRIANGULAR: 3}


@dataclass(frozen=True)
class LatticeCluster:
    """Immutable periodic cluster: sites, bonds, sublattices, momenta."""

    geometry: str
    cell_vectors: tuple  # ((t1x, t1y), (t2x, t2y)) in lattice-vector units
    sites: tuple  # integer coordinate pairs, lexicographic order
    bonds: tuple  # (i, j) index pairs, i < j, each nearest-neighbor bond once
    sublattice_of: tuple  # site index -> sublattice index
    momenta: tuple = field(default=())  # (u1, u2) Fraction pairs, reciprocal basis

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def n_sublattices(self) -> int:
        return _N_SUBLATTICES[self.geometry]

    def sublattice_sites(self, c: int):
        return tuple(i for i, s in enumerate(self.sublattice_of) if s == c)

    def positions(self) -> np.ndarray:
        """Cartesian site positions, shape (N, 2), lattice constant = 1."""
        coords = np.array(self.sites, dtype=float)
        if self.geometry == TRIANGULAR:
            a1 = np.array([1.0, 0.0])
            a2 = np.array([0.5, math.sqrt(3.0) / 2.0])
            return coords[:, :1] * a1 + coords[:, 1:] * a2
        return coords

    def momentum_cartesian(self, u) -> np.ndarray:
        """Convert an exact momentum (u1, u2) to Cartesian components."""
        u1, u2 = float(u[0]), float(u[1])
        if self.geometry == TRIANGULAR:
            b1 = np.array([1.0, -1.0 / math.sqrt(3.0)])
            b2 = np.array([0.0, 2.0 / math.sqrt(3.0)])
        else:
            b1 = np.array([1.0, 0.0])
            b2 = np.array([0.0, 1.0])
        return 2.0 * math.pi * (u1 * b1 + u2 * b2)

    def momentum_phases(self, u) -> np.ndarray:
        """exp(-i k.r_i) for all sites, with k = (u1, u2) in reciprocal units."""
        coords = np.array(self.sites, dtype=float)
        arg = float(u[0]) * coords[:, 0] + float(u[1]) * coords[:, 1]
        return np.exp(-2j * math.pi * arg)

    def to_json(self) -> dict:
        return {
            "geometry": self.geometry,
            "cell_vectors": [list(v) for v in self.cell_vectors],
            "n_sites": self.n_sites,
            "sites": [list(s) for s in self.sites],
            "bonds": [list(b) for b in self.bonds],
            "sublattice_of": list(self.sublattice_of),
        }

    def json_str(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"))


def _reduce(p, t1, t2, det):
    """Representative of p in the fundamental parallelogram of (t1, t2)."""
    f1 = Fraction(t2[1] * p[0] - t2[0] * p[1], det)
    f2 = Fraction(-t1[1] * p[0] + t1[0] * p[1], det)
    f1 -= math.floor(f1)
    f2 -= math.floor(f2)
    qx = f1 * t1[0] + f2 * t2[0]
    qy = f1 * t1[1] + f2 * t2[1]
    return (int(qx), int(qy))


def _length_sq(geometry, v):
    if geometry == TRIANGULAR:
        return v[0] * v[0] + v[1] * v[1] + v[0] * v[1]
    return v[0] * v[0] + v[1] * v[1]


def _sublattice_color(geometry, p):
    if geometry == TRIANGULAR:
        return (p[0] - p[1]) % 3
    return (p[0] + p[1]) % 2


def build_cluster(geometry: str, cell_vectors) -> LatticeCluster:
    """Construct a periodic cluster from two integer cell vectors.

    Raises RejectedCell when |det| has the wrong parity / mod-3 residue for
    the geometry, the vectors have unequal length (aspect ratio != 1), the
    sublattice coloring is not periodic under the cell, or the cell is so
    small that bonds degenerate.
    """
    if geometry not in (_FORWARD_OFFSETS):
        raise RejectedCell(f"unknown geometry {geometry!r}")
    t1 = (int(cell_vectors[0][0]), int(cell_vectors[0][1]))
    t2 = (int(cell_vectors[1][0]), int(cell_vectors[1][1]))
    det = t1[0] * t2[1] - t1[1] * t2[0]
    if det == 0:
        raise RejectedCell("cell vectors are collinear")
    n_sites = abs(det)

    if geometry == SQUARE and n_sites % 2 != 0:
        raise RejectedCell(f"square cluster requires even N, got N={n_sites}")
    if geometry == TRIANGULAR and n_sites % 3 != 0:
        raise RejectedCell(f"triangular cluster requires N % 3 == 0, got N={n_sites}")
    if _length_sq(geometry, t1) != _length_sq(geometry, t2):
        raise RejectedCell("cell vectors have unequal length (aspect ratio != 1)")

    color_shift1 = _sublattice_color(geometry, t1)
    color_shift2 = _sublattice_color(geometry, t2)
    if color_shift1 != 0 or color_shift2 != 0:
        raise RejectedCell("cell is incompatible with the sublattice coloring")

    # Enumerate one representative per residue class.
    reach = abs(t1[0]) + abs(t1[1]) + abs(t2[0]) + abs(t2[1]) + 1
    found = set()
    for x in range(-reach, reach + 1):
        for y in range(-reach, reach + 1):
            found.add(_reduce((x, y), t1, t2, det))
    sites = tuple(sorted(found))
    if len(sites) != n_sites:
        raise RejectedCell(f"site enumeration found {len(sites)} != |det| = {n_sites}")
    index = {s: i for i, s in enumerate(sites)}

    bonds = set()
    for s in sites:
        for dx, dy in _FORWARD_OFFSETS[geometry]:
            t = _reduce((s[0] + dx, s[1] + dy), t1, t2, det)
            i, j = index[s], index[t]
            if i == j:
                raise RejectedCell("cell too small: bond connects a site to itself")
            bond = (min(i, j), max(i, j))
            if bond in bonds:
                raise RejectedCell("cell too small: duplicate bond under wrapping")
            bonds.add(bond)
    bonds = tuple(sorted(bonds))

    coordination = _COORDINATION[geometry]
    degree = [0] * n_sites
    for i, j in bonds:
        degree[i] += 1
        degree[j] += 1
    if any(d != coordination for d in degree):
        raise RejectedCell("wrapped cell does not reproduce the bulk coordination")

    sublattice_of = tuple(_sublattice_color(geometry, s) for s in sites)
    for i, j in bonds:
        if sublattice_of[i] == sublattice_of[j]:
            raise RejectedCell("sublattice coloring frustrated by the cell")

    momenta = _allowed_momenta(t1, t2, det)
    return LatticeCluster(
        geometry=geometry,
        cell_vectors=(t1, t2),
        sites=sites,
        bonds=bonds,
        sublattice_of=sublattice_of,
        momenta=momenta,
    )


def _allowed_momenta(t1, t2, det):
    """The N momenta u with u.T1, u.T2 integer, as exact (u1, u2) mod 1."""
    momenta = set()
    n = abs(det)
    for m in range(n):
        for l in range(n):
            u1 = Fraction(t2[1] * m - t1[1] * l, det)
            u2 = Fraction(-t2[0] * m + t1[0] * l, det)
            momenta.add((u1 - math.floor(u1), u2 - math.floor(u2)))
    assert len(momenta) == n
    return tuple(sorted(momenta))


def preset_cluster(geometry: str, n_sites: int) -> LatticeCluster:
    """Canonical cluster for the tabulated sizes; deterministic across runs."""
    table = SQUARE_PRESETS if geometry == SQUARE else TRIANGULAR_PRESETS
    if geometry not in (SQUARE, TRIANGULAR) or n_sites not in table:
        raise UnknownPreset(f"no preset for geometry={geometry!r}, N={n_sites}")
    return build_cluster(geometry, table[n_sites])


def special_points(cluster: LatticeCluster) -> dict:
    """Ordering momenta: Gamma always; M on square; K and -K on triangular.

    Each returned point is verified to be an allowed cluster momentum,
    otherwise the cluster cannot host the corresponding order and
    MissingPoint is raised.
    """
    half = Fraction(1, 2)
    third = Fraction(1, 3)
    if cluster.geometry == SQUARE:
        wanted = {GAMMA: (Fraction(0), Fraction(0)), M_POINT: (half, half)}
    else:
        wanted = {
            GAMMA: (Fraction(0), Fraction(0)),
            K_POINT: (2 * third, third),
            MINUS_K_POINT: (third, 2 * third),
        }
    allowed = set(cluster.momenta)
    for label, u in wanted.items():
        if u not in allowed:
            raise MissingPoint(f"{label} = {u} is not an allowed momentum of this cluster")
    return wanted
