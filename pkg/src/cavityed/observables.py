"""Ground-state measurements: photon statistics, correlators, histograms.

Every spin observable used here (S_x, sublattice polarizations, Ising
correlators, the complex three-sublattice order parameter) is diagonal in
the sigma_x-bit encoding, so expectation values reduce to sums over the
spin marginal in one O(dim) pass.  Only photon cross terms such as
<(a^dag + a) S_x> need strided ladder passes over the state vector.

Structure factors are reference-site averaged,
    Sigma_x(k) = (1/N^2) sum_ij e^{-i k.(r_i - r_j)} <x_i x_j>
               = <|f_k|^2> / N^2,   f_k(s) = sum_i e^{-i k.r_i} x_i(s),
which coincides with the fixed-reference definition for translation
invariant states and is better conditioned for degenerate ones; the
deviation from the fixed-site value is available as a diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingPoint, WrongFrame, WrongGeometry
from .hilbert import (FRAME_POLARON, FRAME_SPIN_ONLY, FRAME_STANDARD,
                      PHOTON_FRAMES, QuantumState)
from .lattice import (GAMMA, K_POINT, M_POINT, MINUS_K_POINT, SQUARE, TRIANGULAR,
                      LatticeCluster, special_points)

HIST_POLARIZATION = "polarization_sx"
HIST_PHOTON = "photon_number"
HIST_COMPLEX_3SL = "complex_3sl"

FLUCTUATION_KINDS = ("p", "abs_p", "p_stag", "abs_p_stag", "abs_p3sl", "photon")


# ---------------------------------------------------------------------------
# diagonal helpers over spin configurations


def _weighted_configs(state: QuantumState):
    configs, weights = state.spin_weights()
    return np.asarray(configs, dtype=np.uint64), weights


def _config_field(configs: np.ndarray, coefficients: np.ndarray) -> np.ndarray:
    """sum_i c_i x_i per configuration, with x_i = +-1 read off the bits."""
    total = np.zeros(len(configs), dtype=coefficients.dtype)
    for i, c in enumerate(coefficients):
        bit = ((configs >> np.uint64(i)) & np.uint64(1)).astype(np.float64)
        total = total + c * bit
    return 2.0 * total - coefficients.sum()


def _sx_of_configs(configs: np.ndarray, n_sites: int) -> np.ndarray:
    return np.bitwise_count(configs).astype(np.float64) - n_sites / 2.0


def _sublattice_polarizations(configs, cluster: LatticeCluster):
    """p_I(s) = sum_{i in I} x_i / 2 for each sublattice, shape (n_sub, len(configs))."""
    out = []
    for c in range(cluster.n_sublattices):
        mask = np.uint64(0)
        for i in cluster.sublattice_sites(c):
            mask |= np.uint64(1 << i)
        members = int(mask).bit_count()
        pop = np.bitwise_count(configs & mask).astype(np.float64)
        out.append(pop - members / 2.0)
    return np.array(out)


def _complex_3sl_values(configs, cluster: LatticeCluster) -> np.ndarray:
    if cluster.geometry != TRIANGULAR:
        raise WrongGeometry("the three-sublattice order parameter needs a triangular cluster")
    p_a, p_b, p_c = _sublattice_polarizations(configs, cluster)
    w = np.exp(-4j * math.pi / 3.0)
    return p_a + w * p_b + np.conj(w) * p_c


# ---------------------------------------------------------------------------
# structure factor and order correlations


def structure_factor(state: QuantumState, cluster: LatticeCluster, k) -> float:
    """Reference-site-averaged Sigma_x(k); k as an exact (u1, u2) pair."""
    if tuple(k) not in set(cluster.momenta):
        raise MissingPoint(f"{k} is not an allowed momentum of the cluster")
    configs, weights = _weighted_configs(state)
    f_k = _config_field(configs, cluster.momentum_phases(k))
    n = cluster.n_sites
    return float(np.sum(weights * np.abs(f_k) ** 2)) / n**2


def structure_factor_fixed_site_deviation(state, cluster, k) -> float:
    """|averaged - fixed-reference| Sigma_x(k), a finite-size diagnostic."""
    configs, weights = _weighted_configs(state)
    phases = cluster.momentum_phases(k)
    f_k = _config_field(configs, phases)
    x0 = _config_field(configs, np.eye(cluster.n_sites, dtype=np.complex128)[0])
    fixed = np.sum(weights * f_k * x0) * np.conj(phases[0]) / cluster.n_sites
    averaged = np.sum(weights * np.abs(f_k) ** 2) / cluster.n_sites**2
    return float(abs(averaged - fixed))


def structure_factor_sum(state: QuantumState, cluster: LatticeCluster) -> float:
    """sum_k Sigma_x(k); equals 1 exactly by completeness."""
    return float(sum(structure_factor(state, cluster, k) for k in cluster.momenta))


def order_correlations(state: QuantumState, cluster: LatticeCluster) -> dict:
    """Normalized ordering correlators at the geometry's ordering momenta.

    Square: ferro at Gamma and staggered at M.  Triangular: ferro at Gamma
    and three-sublattice order averaged over K and -K.
    """
    points = special_points(cluster)
    out = {"corr_ferro": structure_factor(state, cluster, points[GAMMA])}
    if cluster.geometry == SQUARE:
        out["corr_stag"] = structure_factor(state, cluster, points[M_POINT])
    else:
        k_val = structure_factor(state, cluster, points[K_POINT])
        mk_val = structure_factor(state, cluster, points[MINUS_K_POINT])
        out["corr_3sl"] = 0.5 * (k_val + mk_val)
    return out


# ---------------------------------------------------------------------------
# photon observables


def _require_photon_frame(state: QuantumState):
    if state.descriptor.frame not in PHOTON_FRAMES:
        raise WrongFrame(f"state in frame {state.descriptor.frame!r} has no photon register")


def _beta(params) -> float:
    return params.g / params.omega_c


def _displaced_ladder_cross(state: QuantumState) -> float:
    """<(a^dag + a) S_x> via one strided ladder pass."""
    blocks = state.as_blocks
    n_ph = blocks.shape[0]
    if n_ph < 2:
        return 0.0
    sx = _sx_of_configs(np.arange(blocks.shape[1], dtype=np.uint64),
                        state.descriptor.n_sites)
    ladder = np.sqrt(np.arange(1, n_ph, dtype=np.float64))
    overlap = np.sum(ladder[:, None] * np.conj(blocks[1:, :]) * (sx[None, :] * blocks[:-1, :]))
    return float(2.0 * np.real(overlap))


def _own_frame_photon_moments(state: QuantumState):
    marginal = state.photon_marginal()
    n = np.arange(len(marginal), dtype=np.float64)
    return float(np.sum(n * marginal)), float(np.sum(n**2 * marginal))


def _sx_moments(state: QuantumState):
    configs, weights = _weighted_configs(state)
    sx = _sx_of_configs(configs, state.descriptor.n_sites)
    return float(np.sum(weights * sx)), float(np.sum(weights * sx**2))


def photon_number(state: QuantumState, params=None) -> float:
    """<a^dag a> in the standard (lab) frame.

    For polaron-frame states the lab-frame operator is the displaced
    (a^dag - beta S_x)(a - beta S_x), evaluated with one ladder pass.
    """
    _require_photon_frame(state)
    if state.descriptor.frame == FRAME_STANDARD:
        value, _ = _own_frame_photon_moments(state)
        return value
    if params is None:
        raise ValueError("polaron-frame states need params to undisplace the photon number")
    value, _ = _own_frame_photon_moments(state)
    beta = _beta(params)
    _, sx2 = _sx_moments(state)
    value = value - beta * _displaced_ladder_cross(state) + beta**2 * sx2
    assert value > -1e-10
    return max(value, 0.0)


def polaron_photon_number(state: QuantumState, params) -> float:
    """<(a^dag - alpha)(a - alpha)> with operator alpha = (g/omega_c) S_x.

    Plain <a^dag a> for polaron-frame states; the displaced expression for
    standard-frame states.  Zero in the electrostatic limit omega_d = 0.
    """
    _require_photon_frame(state)
    if state.descriptor.frame == FRAME_POLARON:
        value, _ = _own_frame_photon_moments(state)
        return value
    value, _ = _own_frame_photon_moments(state)
    beta = _beta(params)
    _, sx2 = _sx_moments(state)
    value = value - beta * _displaced_ladder_cross(state) + beta**2 * sx2
    assert value > -1e-10
    return max(value, 0.0)


def photon_fluctuations(state: QuantumState, params=None) -> float:
    """Variance of the lab-frame photon number."""
    _require_photon_frame(state)
    if state.descriptor.frame == FRAME_STANDARD:
        first, second = _own_frame_photon_moments(state)
        return second - first**2
    if params is None:
        raise ValueError("polaron-frame states need params for lab-frame fluctuations")
    # A = a - beta S_x; var = ||A^dag A psi||^2 - ||A psi||^4
    beta = _beta(params)
    blocks = state.as_blocks
    n_ph, spin_dim = blocks.shape
    sx = _sx_of_configs(np.arange(spin_dim, dtype=np.uint64), state.descriptor.n_sites)
    ladder = np.sqrt(np.arange(1, n_ph, dtype=np.float64))

    def apply_a(vec):
        out = -beta * sx[None, :] * vec
        out[:-1, :] += ladder[:, None] * vec[1:, :]
        return out

    def apply_adag(vec):
        out = -beta * sx[None, :] * vec
        out[1:, :] += ladder[:, None] * vec[:-1, :]
        return out

    w = apply_a(blocks.astype(np.complex128))
    v = apply_adag(w)
    first = float(np.real(np.vdot(w, w)))
    second = float(np.real(np.vdot(v, v)))
    return second - first**2


# ---------------------------------------------------------------------------
# histograms


@dataclass
class Histogram:
    """Exact marginal distribution of a diagonal quantity."""

    kind: str
    support: np.ndarray  # bin centers; for complex_3sl: (re_centers, im_centers)
    weights: np.ndarray  # 1-d, or 2-d (re, im) for complex_3sl
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        total = float(np.sum(self.weights))
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"histogram weights sum to {total}, expected 1")
        if np.min(self.weights) < 0:
            raise ValueError("negative histogram weight")

    def moment(self, order: int = 1) -> float:
        if self.weights.ndim != 1:
            raise ValueError("moments are defined for 1-d histograms")
        return float(np.sum(self.support**order * self.weights))

    def csv_rows(self):
        if self.weights.ndim == 1:
            yield ("value", "weight")
            for value, weight in zip(self.support, self.weights):
                yield (repr(float(value)), repr(float(weight)))
        else:
            yield ("re_center", "im_center", "weight")
            re_c, im_c = self.support
            for a, re in enumerate(re_c):
                for b, im in enumerate(im_c):
                    yield (repr(float(re)), repr(float(im)), repr(float(self.weights[a, b])))

    def to_json(self) -> dict:
        out = {"kind": self.kind, "metadata": self.metadata}
        if self.weights.ndim == 1:
            out["support"] = [float(v) for v in self.support]
            out["weights"] = [float(w) for w in self.weights]
        else:
            out["re_centers"] = [float(v) for v in self.support[0]]
            out["im_centers"] = [float(v) for v in self.support[1]]
            out["weights"] = [[float(w) for w in row] for row in self.weights]
        return out


def polarization_histogram(state: QuantumState) -> Histogram:
    """Exact distribution of S_x over {-N/2, ..., +N/2}."""
    n = state.descriptor.n_sites
    configs, weights = _weighted_configs(state)
    popcount = np.bitwise_count(configs).astype(np.int64)
    dist = np.bincount(popcount, weights=weights, minlength=n + 1)
    support = np.arange(n + 1, dtype=np.float64) - n / 2.0
    return Histogram(HIST_POLARIZATION, support, dist, {"n_sites": n})


def photon_histogram(state: QuantumState) -> Histogram:
    """Fock occupation distribution in the state's own frame."""
    marginal = state.photon_marginal()
    support = np.arange(len(marginal), dtype=np.float64)
    return Histogram(HIST_PHOTON, support, marginal,
                     {"frame": state.descriptor.frame})


def complex_3sl_histogram(state: QuantumState, cluster: LatticeCluster,
                          bins: int = 121) -> Histogram:
    """2-d distribution of p_A + p_B e^{-i 4pi/3} + p_C e^{i 4pi/3}.

    Binned uniformly over the bounding box of the order parameter's
    hexagonal support (vertices at radius N/3, edge midpoints at
    sqrt(3) N / 6).
    """
    configs, weights = _weighted_configs(state)
    values = _complex_3sl_values(configs, cluster)
    n = cluster.n_sites
    x_max = n / 3.0
    y_max = math.sqrt(3.0) * n / 6.0
    assert np.abs(values.real).max() <= x_max + 1e-9
    assert np.abs(values.imag).max() <= y_max + 1e-9
    # extreme patterns land exactly on the support boundary; clamp the
    # rounding slack so they stay in the outermost bin
    re_vals = np.clip(values.real, -x_max, x_max)
    im_vals = np.clip(values.imag, -y_max, y_max)
    hist, re_edges, im_edges = np.histogram2d(
        re_vals, im_vals, bins=bins,
        range=[[-x_max, x_max], [-y_max, y_max]], weights=weights)
    re_centers = 0.5 * (re_edges[:-1] + re_edges[1:])
    im_centers = 0.5 * (im_edges[:-1] + im_edges[1:])
    total = hist.sum()
    assert abs(total - 1.0) < 1e-9
    return Histogram(
        HIST_COMPLEX_3SL,
        np.array([re_centers, im_centers]),
        hist / total,
        {"bins": bins, "x_max": x_max, "y_max": y_max, "n_sites": n},
    )


def histogram_peaks(histogram: Histogram, rel_threshold: float = 0.5):
    """Local maxima of a complex-plane histogram, strongest first.

    Returns tuples (re, im, weight, radius, angle) for bins that dominate
    their 8-neighborhood and carry at least rel_threshold of the global
    maximum.
    """
    if histogram.weights.ndim != 2:
        raise ValueError("peak extraction applies to 2-d histograms")
    w = histogram.weights
    padded = np.pad(w, 1, constant_values=-1.0)
    is_max = np.ones_like(w, dtype=bool)
    for da in (-1, 0, 1):
        for db in (-1, 0, 1):
            if da == 0 and db == 0:
                continue
            neighbor = padded[1 + da: 1 + da + w.shape[0], 1 + db: 1 + db + w.shape[1]]
            is_max &= w >= neighbor
    is_max &= w >= rel_threshold * w.max()
    re_centers, im_centers = histogram.support
    peaks = []
    for a, b in zip(*np.nonzero(is_max)):
        re, im = re_centers[a], im_centers[b]
        peaks.append((float(re), float(im), float(w[a, b]),
                      float(math.hypot(re, im)), float(math.atan2(im, re))))
    peaks.sort(key=lambda p: -p[2])
    return peaks


# ---------------------------------------------------------------------------
# fluctuations and total spin


def fluctuations(state: QuantumState, which: str, cluster: LatticeCluster = None,
                 params=None) -> float:
    """Variance of an order parameter (or its modulus), or of the photon number.

    The |.|-variants take the absolute value / modulus of the diagonal
    quantity per basis state before computing the variance; these are the
    peak-bearing transition estimators.
    """
    if which == "photon":
        return photon_fluctuations(state, params)
    configs, weights = _weighted_configs(state)
    n = state.descriptor.n_sites
    if which in ("p", "abs_p"):
        values = _sx_of_configs(configs, n)
    elif which in ("p_stag", "abs_p_stag"):
        if cluster is None or cluster.geometry != SQUARE:
            raise WrongGeometry("staggered polarization needs a square cluster")
        p_a, p_b = _sublattice_polarizations(configs, cluster)
        values = p_a - p_b
    elif which == "abs_p3sl":
        values = np.abs(_complex_3sl_values(configs, cluster))
    else:
        raise ValueError(f"unknown fluctuation kind {which!r}; one of {FLUCTUATION_KINDS}")
    if which.startswith("abs_"):
        values = np.abs(values)
    mean = float(np.sum(weights * values))
    second = float(np.sum(weights * values**2))
    return second - mean**2


def total_spin(state: QuantumState) -> float:
    """<S^2> = <S_x^2> + <S_y^2 + S_z^2>, the latter via (R^dag R + R R^dag)/2."""
    if state.descriptor.frame not in (*PHOTON_FRAMES, FRAME_SPIN_ONLY):
        raise WrongFrame("total spin needs a full spin register")
    blocks = state.as_blocks
    n = state.descriptor.n_sites
    raised = np.zeros_like(blocks)
    lowered = np.zeros_like(blocks)
    spin_dim = blocks.shape[1]
    for i in range(n):
        lo = 1 << i
        v = blocks.reshape(blocks.shape[0], spin_dim // (2 * lo), 2, lo)
        raised.reshape(v.shape)[:, :, 1, :] += v[:, :, 0, :]
        lowered.reshape(v.shape)[:, :, 0, :] += v[:, :, 1, :]
    perp = 0.5 * (np.linalg.norm(raised) ** 2 + np.linalg.norm(lowered) ** 2)
    _, sx2 = _sx_moments(state)
    return float(sx2 + perp)


# ---------------------------------------------------------------------------
# bundled measurement


@dataclass
class ObservableSet:
    """All scalar observables of one ground state, plus sector metadata."""

    energy: float
    photon_number: float | None
    polaron_photon_number: float | None
    corr_ferro: float
    corr_stag: float | None
    corr_3sl: float | None
    fluct_p: float
    fluct_abs_p: float
    fluct_p_stag: float | None
    fluct_abs_p_stag: float | None
    fluct_abs_p3sl: float | None
    fluct_photon: float | None
    total_spin: float
    sector: str | None = None
    parity_gap: float | None = None
    degenerate: bool = False
    diagnostics: dict = field(default_factory=dict)

    COLUMNS = (
        "energy", "photon_number", "polaron_photon_number", "corr_ferro",
        "corr_stag", "corr_3sl", "fluct_p", "fluct_abs_p", "fluct_p_stag",
        "fluct_abs_p_stag", "fluct_abs_p3sl", "fluct_photon", "total_spin",
        "parity_gap",
    )

    def column_values(self) -> dict:
        return {name: getattr(self, name) for name in self.COLUMNS}

    def to_json(self) -> dict:
        out = self.column_values()
        out.update(sector=self.sector, degenerate=self.degenerate,
                   diagnostics=self.diagnostics)
        return out


def measure(state: QuantumState, params, energy: float,
            sector: str | None = None, parity_gap: float | None = None,
            degenerate: bool = False) -> ObservableSet:
    """Evaluate the full observable set on one state."""
    cluster = params.cluster
    corr = order_correlations(state, cluster)
    has_photons = state.descriptor.frame in PHOTON_FRAMES
    square = cluster.geometry == SQUARE
    return ObservableSet(
        energy=energy,
        photon_number=photon_number(state, params) if has_photons else None,
        polaron_photon_number=polaron_photon_number(state, params) if has_photons else None,
        corr_ferro=corr["corr_ferro"],
        corr_stag=corr.get("corr_stag"),
        corr_3sl=corr.get("corr_3sl"),
        fluct_p=fluctuations(state, "p"),
        fluct_abs_p=fluctuations(state, "abs_p"),
        fluct_p_stag=fluctuations(state, "p_stag", cluster) if square else None,
        fluct_abs_p_stag=fluctuations(state, "abs_p_stag", cluster) if square else None,
        fluct_abs_p3sl=fluctuations(state, "abs_p3sl", cluster) if not square else None,
        fluct_photon=photon_fluctuations(state, params) if has_photons else None,
        total_spin=total_spin(state),
        sector=sector,
        parity_gap=parity_gap,
        degenerate=degenerate,
        diagnostics={
            "sum_rule_deviation": abs(structure_factor_sum(state, cluster) - 1.0),
        },
    )
