"""Ground-state solvers: Lanczos for large spaces, dense diagonalization as oracle.

The Lanczos iteration keeps the whole Krylov basis and reorthogonalizes
every new vector against it (twice); desk-scale Krylov spaces stay small,
and ghost eigenvalues would silently corrupt fluctuation observables.
Residuals ||H psi - E psi|| are always verified on the assembled Ritz
vectors before a pair is reported converged.

Operators are real-symmetric in the chosen encoding, so the iteration runs
in float64; states are converted to complex128 at the QuantumState boundary.
The start vector is pseudo-random from numpy's PCG64 with the caller's seed
(an equal-amplitude start would be parity-pure and can miss sectors on the
unsplit space, so it is deliberately not offered).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import DimensionOverflow, NoConvergence
from .hamiltonian import ObdOp, SectorOp
from .hilbert import PARITY_EVEN, PARITY_ODD, QuantumState

DEFAULT_TOL = 1e-10
DEFAULT_DENSE_BUDGET = 8192
DEGENERACY_TOL = 1e-8


@dataclass
class SolveReport:
    """Converged low-lying eigenpairs of one operator (or one parity sector)."""

    energies: np.ndarray  # ascending
    states: list
    residuals: np.ndarray
    iterations: int
    seed: int | None
    metadata: dict = field(default_factory=dict)

    @property
    def ground_energy(self) -> float:
        return float(self.energies[0])

    @property
    def ground_state(self) -> QuantumState:
        return self.states[0]

    def degenerate_levels(self, tol: float = DEGENERACY_TOL):
        """Indices of levels within tol of the ground level."""
        return [i for i, e in enumerate(self.energies) if e - self.energies[0] <= tol]

    def to_json(self, include_states: bool = False) -> dict:
        out = {
            "energies": [float(e) for e in self.energies],
            "residuals": [float(r) for r in self.residuals],
            "iterations": self.iterations,
            "seed": self.seed,
            "metadata": self.metadata,
        }
        if include_states:
            out["states"] = [s.amplitudes.tolist() for s in self.states]
        return out


def _as_state(op, vec: np.ndarray) -> QuantumState:
    amps = np.asarray(vec, dtype=np.complex128)
    amps = amps / np.linalg.norm(amps)
    if isinstance(op, SectorOp):
        return QuantumState(op.descriptor, op.embed(amps))
    if isinstance(op, ObdOp):
        return QuantumState(op.descriptor, amps, configs=op.manifold)
    return QuantumState(op.descriptor, amps)


def lanczos_ground(op, k_states: int = 1, tol: float = DEFAULT_TOL,
                   max_iter: int = 600, seed: int = 0,
                   check_every: int = 5) -> SolveReport:
    """Lowest k_states eigenpairs with ||H x - E x|| <= tol * max(1, |E|).

    Deterministic for fixed (op, seed, tol).  Raises NoConvergence carrying
    the best Ritz pair if max_iter Krylov vectors are not enough.
    """
    dim = op.dim
    if k_states < 1 or k_states > dim:
        raise ValueError("k_states out of range")
    rng = np.random.default_rng(np.random.PCG64(seed))

    cap = min(max(max_iter, k_states), dim)
    basis = np.empty((min(64, cap), dim), dtype=np.float64)

    def ensure_capacity(rows):
        nonlocal basis
        if rows > basis.shape[0]:
            grown = np.empty((min(cap, max(rows, 2 * basis.shape[0])), dim))
            grown[: basis.shape[0]] = basis
            basis = grown

    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    basis[0] = v
    alphas: list[float] = []
    betas: list[float] = []
    used = 1
    last_beta = 0.0
    exhausted = False

    def ritz(n_vec):
        # stev is slower than the default stemr but does not fail on the
        # tightly clustered Ritz values that deep-phase spectra produce
        evals, evecs = eigh_tridiagonal(np.asarray(alphas[:n_vec]),
                                        np.asarray(betas[: n_vec - 1]),
                                        lapack_driver="stev")
        return evals, evecs

    def assemble(n_vec, evecs, columns):
        return basis[:n_vec].T @ evecs[:, columns]

    result = None
    while used <= cap:
        w = op.matvec(basis[used - 1])
        alpha = float(basis[used - 1] @ w)
        alphas.append(alpha)
        w -= alpha * basis[used - 1]
        if used > 1:
            w -= last_beta * basis[used - 2]
        # full reorthogonalization, twice
        for _ in range(2):
            w -= basis[:used].T @ (basis[:used] @ w)
        beta = float(np.linalg.norm(w))

        converged = False
        if used >= k_states and (used % check_every == 0 or beta < 1e-13 or used == cap):
            evals, evecs = ritz(used)
            vectors = assemble(used, evecs, list(range(k_states)))
            energies = evals[:k_states]
            residuals = np.empty(k_states)
            for i in range(k_states):
                x = vectors[:, i]
                x /= np.linalg.norm(x)
                vectors[:, i] = x
                residuals[i] = np.linalg.norm(op.matvec(x) - energies[i] * x)
            bounds = tol * np.maximum(1.0, np.abs(energies))
            converged = bool(np.all(residuals <= bounds))
            if converged or used == cap:
                result = (energies, vectors, residuals, used)
                if converged:
                    break
        if used == cap:
            break

        if beta < 1e-13:
            if used == dim:
                exhausted = True
                evals, evecs = ritz(used)
                k = min(k_states, used)
                vectors = assemble(used, evecs, list(range(k)))
                energies = evals[:k]
                residuals = np.array([
                    np.linalg.norm(op.matvec(vectors[:, i]) - energies[i] * vectors[:, i])
                    for i in range(k)
                ])
                result = (energies, vectors, residuals, used)
                break
            # invariant subspace: deflate with a fresh orthogonalized direction
            w = rng.standard_normal(dim)
            for _ in range(2):
                w -= basis[:used].T @ (basis[:used] @ w)
            beta = 0.0
            w /= np.linalg.norm(w)
            ensure_capacity(used + 1)
            basis[used] = w
        else:
            ensure_capacity(used + 1)
            basis[used] = w / beta
        betas.append(beta)
        last_beta = beta
        used += 1

    if result is None:
        raise NoConvergence(f"no Ritz pair assembled within max_iter={max_iter}")
    energies, vectors, residuals, iterations = result
    bounds = tol * np.maximum(1.0, np.abs(energies))
    if not (exhausted or np.all(residuals <= bounds)):
        raise NoConvergence(
            f"Lanczos did not reach tol={tol} in {iterations} iterations "
            f"(best residuals {residuals})",
            energy=float(energies[0]),
            state=_as_state(op, vectors[:, 0]),
            residual=float(residuals[0]),
        )
    states = [_as_state(op, vectors[:, i]) for i in range(vectors.shape[1])]
    return SolveReport(
        energies=np.asarray(energies, dtype=np.float64),
        states=states,
        residuals=residuals,
        iterations=iterations,
        seed=seed,
        metadata={"method": "lanczos", "tol": tol, "op": op.provenance()},
    )


def dense_solve(op, dense_budget: int = DEFAULT_DENSE_BUDGET) -> SolveReport:
    """Full spectrum by dense Hermitian diagonalization (oracle path)."""
    dim = op.dim
    if dim > dense_budget:
        raise DimensionOverflow(f"dense solve of dim {dim} exceeds budget {dense_budget}")
    matrix = np.empty((dim, dim), dtype=np.float64)
    probe = np.zeros(dim)
    for j in range(dim):
        probe[j] = 1.0
        matrix[:, j] = op.matvec(probe)
        probe[j] = 0.0
    evals, evecs = np.linalg.eigh(matrix)
    residuals = np.linalg.norm(matrix @ evecs - evecs * evals[None, :], axis=0)
    states = [_as_state(op, evecs[:, i]) for i in range(dim)]
    return SolveReport(
        energies=evals,
        states=states,
        residuals=residuals,
        iterations=dim,
        seed=None,
        metadata={"method": "dense", "op": op.provenance()},
    )


@dataclass
class ParityResolvedReport:
    """Ground data per Z2 sector plus the global minimum."""

    even: SolveReport
    odd: SolveReport
    ground_sector: str
    gap: float  # E_min(odd) - E_min(even); the finite-size doublet splitting

    @property
    def ground(self) -> SolveReport:
        return self.even if self.ground_sector == PARITY_EVEN else self.odd

    @property
    def ground_energy(self) -> float:
        return self.ground.ground_energy

    def is_degenerate(self, tol: float = DEGENERACY_TOL) -> bool:
        return abs(self.gap) <= tol


def solve_both_parities(op, tol: float = DEFAULT_TOL, k_states: int = 1,
                        max_iter: int = 600, seed: int = 0,
                        dense_budget: int = 0) -> ParityResolvedReport:
    """Ground state of each Z2 sector; global ground is the sector minimum.

    dense_budget > 0 switches sectors of at most that dimension to the
    dense oracle path.
    """
    reports = {}
    for offset, parity in enumerate((PARITY_EVEN, PARITY_ODD)):
        sector_op = op.sector(parity)
        if dense_budget and sector_op.dim <= dense_budget:
            rep = dense_solve(sector_op, dense_budget)
        else:
            rep = lanczos_ground(sector_op, k_states=k_states, tol=tol,
                                 max_iter=max_iter, seed=2 * seed + offset)
        reports[parity] = rep
    gap = reports[PARITY_ODD].ground_energy - reports[PARITY_EVEN].ground_energy
    sector = PARITY_EVEN if gap >= 0 else PARITY_ODD
    return ParityResolvedReport(
        even=reports[PARITY_EVEN],
        odd=reports[PARITY_ODD],
        ground_sector=sector,
        gap=gap,
    )
