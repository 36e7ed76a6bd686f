import numpy as np
import pytest

from cavityed.lattice import LatticeCluster


def make_pair_cluster() -> LatticeCluster:
    """Two sites, one bond; bypasses the torus constructors for oracle tests."""
    return LatticeCluster(
        geometry="square",
        cell_vectors=((1, 0), (0, 1)),
        sites=((0, 0), (1, 0)),
        bonds=((0, 1),),
        sublattice_of=(0, 1),
        momenta=(),
    )


def make_plaquette_cluster() -> LatticeCluster:
    """Four sites on a plaquette with an open-pair bond list (2x2 PBC would
    double every bond, so the torus constructor rejects it)."""
    return LatticeCluster(
        geometry="square",
        cell_vectors=((2, 0), (0, 2)),
        sites=((0, 0), (1, 0), (0, 1), (1, 1)),
        bonds=((0, 1), (0, 2), (1, 3), (2, 3)),
        sublattice_of=(0, 1, 1, 0),
        momenta=(),
    )


def make_chain_cluster(n: int) -> LatticeCluster:
    """Open chain of n sites; handy for small dense oracles."""
    return LatticeCluster(
        geometry="square",
        cell_vectors=((1, 0), (0, 1)),
        sites=tuple((i, 0) for i in range(n)),
        bonds=tuple((i, i + 1) for i in range(n - 1)),
        sublattice_of=tuple(i % 2 for i in range(n)),
        momenta=(),
    )


def make_single_site_cluster() -> LatticeCluster:
    return LatticeCluster(
        geometry="square",
        cell_vectors=((1, 0), (0, 1)),
        sites=((0, 0),),
        bonds=(),
        sublattice_of=(0,),
        momenta=(),
    )


def kron_full_hamiltonian(params) -> np.ndarray:
    """Dense full-model matrix built independently via Kronecker products.

    Uses the same basis convention as the package (index = photon * 2^N +
    spin bits, bit i = 1 meaning sigma_x^i = +1) but a completely separate
    construction path, so it serves as the oracle for matvec and spectra.
    """
    cluster = params.cluster
    n = cluster.n_sites
    dim_s = 1 << n
    n_ph = params.n_ph_max + 1
    a = np.diag(np.sqrt(np.arange(1, n_ph)), 1)
    sx_site = []
    sz_site = []
    for i in range(n):
        diag = np.array([1.0 if (s >> i) & 1 else -1.0 for s in range(dim_s)])
        sx_site.append(np.diag(diag))
        flip = np.zeros((dim_s, dim_s))
        for s in range(dim_s):
            flip[s ^ (1 << i), s] = 1.0
        sz_site.append(flip)
    big_sx = sum(sx_site) / 2.0
    big_sz = sum(sz_site) / 2.0
    ising = np.zeros((dim_s, dim_s))
    for i, j in cluster.bonds:
        ising += (params.J / 4.0) * sx_site[i] @ sx_site[j]
    eye_ph = np.eye(n_ph)
    eye_s = np.eye(dim_s)
    return (params.omega_c * np.kron(a.T @ a, eye_s)
            + params.g * np.kron(a + a.T, big_sx)
            + (params.g**2 / params.omega_c) * np.kron(eye_ph, big_sx @ big_sx)
            + params.omega_d * np.kron(eye_ph, big_sz)
            + np.kron(eye_ph, ising))


def kron_spin_model(cluster, coupling, h_z, j_c) -> np.ndarray:
    """Dense effective-spin-model matrix from explicit Pauli algebra."""
    n = cluster.n_sites
    dim_s = 1 << n
    sx_site, sy_site, sz_site = [], [], []
    for i in range(n):
        diag = np.array([1.0 if (s >> i) & 1 else -1.0 for s in range(dim_s)])
        sx_site.append(np.diag(diag).astype(complex))
        flip = np.zeros((dim_s, dim_s), dtype=complex)
        y = np.zeros((dim_s, dim_s), dtype=complex)
        for s in range(dim_s):
            flip[s ^ (1 << i), s] = 1.0
            y[s ^ (1 << i), s] = -1j * diag[s]
        sz_site.append(flip)
        sy_site.append(y)
    big = [sum(ops) / 2.0 for ops in (sx_site, sy_site, sz_site)]
    s_squared = sum(b @ b for b in big)
    ising = np.zeros((dim_s, dim_s), dtype=complex)
    for i, j in cluster.bonds:
        ising += (coupling / 4.0) * sx_site[i] @ sx_site[j]
    h = ising + h_z * big[2] - j_c * (s_squared - big[0] @ big[0])
    assert np.abs(h.imag).max() < 1e-12
    return h.real


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
