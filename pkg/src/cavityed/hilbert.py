"""Composite spin (x) photon basis, parity sectors, and state containers.

Spins are stored in the sigma_x eigenbasis: an N-bit integer s encodes a
configuration where bit i = 1 means sigma_x^i = +1.  The composite index is

    index = photon_occupation * 2**N + s,

so photon blocks are contiguous and a vector reshapes to
(n_ph_max + 1, 2**N) for photon-structured operations.  In this encoding
every Ising / S_x / order-parameter term is diagonal; sigma_z^i is the
bit-flip of bit i (no sign), so omega_d S_z is the only spin-off-diagonal
term of the full model.

The Z2 symmetry operator P = exp(-i pi (a^dag a + S_z)) maps
|n, s> -> (-1)^n (-i)^N |n, ~s| with ~s the bitwise complement of s.  Its
eigenvalues are +-1 for even N and +-i for odd N (P^2 = (-1)^N).  We label
the +1 (+i for odd N) eigenspace "even".  Parity eigenstates pair a
representative s < 2**(N-1) with its complement 2**N - 1 - s, so a sector
vector has length dim/2 and embeds into the full space by two strided
copies.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionOverflow, WrongFrame

FRAME_STANDARD = "standard"
FRAME_POLARON = "polaron"
FRAME_SPIN_ONLY = "spin_only"
FRAME_OBD = "obd_manifold"

PARITY_EVEN = "even"
PARITY_ODD = "odd"
PARITY_BOTH = "both"

PHOTON_FRAMES = (FRAME_STANDARD, FRAME_POLARON)

# Default budget: one complex128 vector of the full space must fit in 16 GiB.
DEFAULT_MEMORY_BUDGET = 16 * 2**30


@dataclass(frozen=True)
class BasisDescriptor:
    """Shape of the composite Hilbert space (and optional parity restriction)."""

    n_sites: int
    n_ph_max: int
    frame: str = FRAME_STANDARD
    parity: str = PARITY_BOTH
    manifold_dim: int = 0  # used by the obd_manifold frame only

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError("need at least one site")
        if self.n_ph_max < 0:
            raise ValueError("photon cutoff must be >= 0")
        if self.frame not in (FRAME_STANDARD, FRAME_POLARON, FRAME_SPIN_ONLY, FRAME_OBD):
            raise ValueError(f"unknown frame {self.frame!r}")
        if self.parity not in (PARITY_EVEN, PARITY_ODD, PARITY_BOTH):
            raise ValueError(f"unknown parity {self.parity!r}")
        if self.frame == FRAME_OBD and self.manifold_dim < 1:
            raise ValueError("obd_manifold frame needs a positive manifold_dim")

    @property
    def spin_dim(self) -> int:
        return 1 << self.n_sites

    @property
    def n_photon_states(self) -> int:
        return self.n_ph_max + 1 if self.frame in PHOTON_FRAMES else 1

    @property
    def full_dim(self) -> int:
        """Dimension ignoring any parity restriction."""
        if self.frame == FRAME_OBD:
            return self.manifold_dim
        return self.spin_dim * self.n_photon_states

    @property
    def dim(self) -> int:
        if self.parity == PARITY_BOTH:
            return self.full_dim
        return self.full_dim // 2

    def index_of(self, photon: int, spin_bits: int) -> int:
        return photon * self.spin_dim + spin_bits

    def config_of(self, index: int):
        """(photon occupation, spin bits) of a full-space index."""
        return divmod(index, self.spin_dim)

    def sector_representatives(self) -> np.ndarray:
        """Full-space indices (n, s) with s < 2**(N-1), one per parity pair.

        Parity eigenstates are (|n, s> +- |n, ~s>)/sqrt(2); this list
        enumerates the pairs, in both sectors alike.
        """
        half = self.spin_dim // 2
        reps = np.arange(half, dtype=np.int64)
        blocks = np.arange(self.n_photon_states, dtype=np.int64) * self.spin_dim
        return (blocks[:, None] + reps[None, :]).ravel()

    def parity_eigenvalue_even(self) -> complex:
        """Our "even" label: +1 for even N, +i for odd N."""
        return 1.0 + 0.0j if self.n_sites % 2 == 0 else 1.0j

    def sector_phases(self, parity: str) -> np.ndarray:
        """Relative phase c_n of |n, ~s> in the sector eigenstates, per photon n.

        The eigenstate with P-eigenvalue lam is (|n,s> + c_n |n,~s>)/sqrt(2)
        with c_n = lam * conj(phi_n), phi_n = (-1)^n (-i)^N; c_n is always +-1.
        """
        lam = self.parity_eigenvalue_even()
        if parity == PARITY_ODD:
            lam = -lam
        n = np.arange(self.n_photon_states)
        phi = (-1.0) ** n * (-1.0j) ** self.n_sites
        c = lam * np.conj(phi)
        assert np.allclose(c.imag, 0.0)
        return np.real(c)

    def validate_budget(self, budget_bytes: int = DEFAULT_MEMORY_BUDGET):
        if self.full_dim * 16 > budget_bytes:
            raise DimensionOverflow(
                f"dim = {self.full_dim} needs {self.full_dim * 16} bytes per complex "
                f"vector, budget is {budget_bytes}"
            )
        return self

    def to_json(self) -> dict:
        return {
            "n_sites": self.n_sites,
            "n_ph_max": self.n_ph_max,
            "frame": self.frame,
            "parity": self.parity,
            "dim": self.dim,
        }


def build_basis(
    n_sites: int,
    n_ph_max: int,
    frame: str = FRAME_STANDARD,
    parity: str = PARITY_BOTH,
    budget_bytes: int = DEFAULT_MEMORY_BUDGET,
) -> BasisDescriptor:
    """Descriptor for the composite basis; raises DimensionOverflow over budget."""
    return BasisDescriptor(n_sites, n_ph_max, frame, parity).validate_budget(budget_bytes)


def sx_values(n_sites: int) -> np.ndarray:
    """S_x eigenvalue (n_plus - n_minus)/2 for every spin configuration."""
    bits = np.arange(1 << n_sites, dtype=np.uint64)
    popcount = np.bitwise_count(bits).astype(np.float64)
    return popcount - n_sites / 2.0


def sx_eigenvalue(descriptor: BasisDescriptor, index: int) -> float:
    """Exact S_x eigenvalue of a full-space basis index (half-integer)."""
    _, spin_bits = descriptor.config_of(index)
    return int(spin_bits).bit_count() - descriptor.n_sites / 2.0


@dataclass
class QuantumState:
    """Normalized vector over the full composite basis of its descriptor.

    States from the obd_manifold frame additionally carry the spin
    configuration (bit pattern) of each basis entry in `configs`.
    """

    descriptor: BasisDescriptor
    amplitudes: np.ndarray
    configs: np.ndarray | None = None

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes)
        expected = self.descriptor.full_dim
        if self.amplitudes.shape != (expected,):
            raise ValueError(
                f"amplitude vector has shape {self.amplitudes.shape}, "
                f"descriptor requires ({expected},)"
            )
        norm = np.linalg.norm(self.amplitudes)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state is not normalized: |norm - 1| = {abs(norm - 1.0):.3e}")

    @property
    def as_blocks(self) -> np.ndarray:
        """View shaped (photon states, spin configs)."""
        d = self.descriptor
        return self.amplitudes.reshape(d.n_photon_states, d.spin_dim)

    def spin_weights(self):
        """(spin configs, probability weights) marginalized over photons."""
        d = self.descriptor
        if d.frame == FRAME_OBD:
            return self.configs, np.abs(self.amplitudes) ** 2
        weights = np.sum(np.abs(self.as_blocks) ** 2, axis=0)
        return np.arange(d.spin_dim, dtype=np.uint64), weights

    def spin_marginal(self) -> np.ndarray:
        """Probability weight of each spin configuration (length 2**N)."""
        return np.sum(np.abs(self.as_blocks) ** 2, axis=0)

    def photon_marginal(self) -> np.ndarray:
        """Probability weight of each Fock occupation."""
        if self.descriptor.frame not in PHOTON_FRAMES:
            raise WrongFrame(f"no photon register in frame {self.descriptor.frame!r}")
        return np.sum(np.abs(self.as_blocks) ** 2, axis=1)


def normalized_state(descriptor: BasisDescriptor, amplitudes: np.ndarray,
                     configs=None) -> QuantumState:
    amps = np.asarray(amplitudes, dtype=np.complex128)
    return QuantumState(descriptor, amps / np.linalg.norm(amps), configs)


def parity_matvec(descriptor: BasisDescriptor, vec: np.ndarray) -> np.ndarray:
    """Raw linear action of P = exp(-i pi (a^dag a + S_z)) on a vector."""
    if descriptor.frame not in PHOTON_FRAMES:
        raise WrongFrame("parity is defined for standard/polaron frames")
    blocks = vec.reshape(descriptor.n_photon_states, descriptor.spin_dim)
    phase = (-1.0 + 0.0j) ** np.arange(descriptor.n_photon_states) \
        * (-1.0j) ** descriptor.n_sites
    # complement of s is spin_dim - 1 - s: a reversed slice along the spin axis
    return (phase[:, None] * blocks[:, ::-1]).ravel()


def apply_parity(state: QuantumState) -> QuantumState:
    """Apply P = exp(-i pi (a^dag a + S_z)):  |n, s> -> (-1)^n (-i)^N |n, ~s>.

    P^2 = (-1)^N times the identity; the (-i)^N branch of exp(-i pi S_z)
    is our fixed convention and only global phases depend on it.
    """
    return QuantumState(state.descriptor,
                        parity_matvec(state.descriptor, state.amplitudes))


def embed_sector(descriptor: BasisDescriptor, parity: str, sector_vec: np.ndarray) -> np.ndarray:
    """Sector-basis coefficients -> full-space vector.

    sector_vec has one entry per (photon, representative spin s < 2**(N-1));
    the output is sum_j v_j (|n,s> + c_n |n,~s>)/sqrt(2).
    """
    half = descriptor.spin_dim // 2
    c = descriptor.sector_phases(parity)
    v = sector_vec.reshape(descriptor.n_photon_states, half)
    out = np.empty((descriptor.n_photon_states, descriptor.spin_dim), dtype=sector_vec.dtype)
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    out[:, :half] = v * inv_sqrt2
    out[:, half:] = (c[:, None] * inv_sqrt2) * v[:, ::-1]
    return out.ravel()


def restrict_sector(descriptor: BasisDescriptor, parity: str, full_vec: np.ndarray) -> np.ndarray:
    """Adjoint of embed_sector: full-space vector -> sector coefficients."""
    half = descriptor.spin_dim // 2
    c = descriptor.sector_phases(parity)
    blocks = full_vec.reshape(descriptor.n_photon_states, descriptor.spin_dim)
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    v = blocks[:, :half] * inv_sqrt2 + (c[:, None] * inv_sqrt2) * blocks[:, half:][:, ::-1]
    return v.ravel()


def save_state(path, state: QuantumState):
    """Persist amplitudes as .npy next to a JSON header with a checksum."""
    path = str(path)
    amps = np.ascontiguousarray(state.amplitudes, dtype=np.complex128)
    np.save(path + ".npy", amps)
    header = {
        "descriptor": state.descriptor.to_json(),
        "norm": float(np.linalg.norm(amps)),
        "sha256": hashlib.sha256(amps.tobytes()).hexdigest(),
    }
    with open(path + ".json", "w") as fh:
        json.dump(header, fh, indent=1)


def load_state(path) -> QuantumState:
    path = str(path)
    with open(path + ".json") as fh:
        header = json.load(fh)
    amps = np.load(path + ".npy")
    digest = hashlib.sha256(np.ascontiguousarray(amps).tobytes()).hexdigest()
    if digest != header["sha256"]:
        raise ValueError("state file checksum mismatch")
    meta = header["descriptor"]
    descriptor = BasisDescriptor(
        meta["n_sites"], meta["n_ph_max"], meta["frame"], meta["parity"]
    )
    return QuantumState(descriptor, amps)
