import math

import numpy as np
import pytest

from cavityed import hilbert
from cavityed.errors import MissingPoint, WrongFrame, WrongGeometry
from cavityed.hamiltonian import ModelParams, build_full
from cavityed.hilbert import (FRAME_SPIN_ONLY, QuantumState, apply_parity,
                              build_basis, normalized_state)
from cavityed.lattice import build_cluster, preset_cluster, special_points
from cavityed.observables import (Histogram, complex_3sl_histogram, fluctuations,
                                  histogram_peaks, measure, order_correlations,
                                  photon_fluctuations, photon_histogram,
                                  photon_number, polarization_histogram,
                                  polaron_photon_number, structure_factor,
                                  structure_factor_fixed_site_deviation,
                                  structure_factor_sum, total_spin)

from conftest import make_pair_cluster


def product_state(cluster, bits, n_ph_max=0, photon_amps=None):
    """Single spin configuration (x basis) times a photon register."""
    n = cluster.n_sites
    descriptor = build_basis(n, n_ph_max)
    amps = np.zeros(descriptor.full_dim, dtype=complex)
    if photon_amps is None:
        amps[descriptor.index_of(0, bits)] = 1.0
    else:
        for ph, a in enumerate(photon_amps):
            amps[descriptor.index_of(ph, bits)] = a
    return normalized_state(descriptor, amps)


def uniform_spin_state(cluster, n_ph_max=0):
    """|+z> on every site: equal amplitude over all x configurations."""
    n = cluster.n_sites
    descriptor = build_basis(n, n_ph_max)
    amps = np.zeros(descriptor.full_dim, dtype=complex)
    amps[: 1 << n] = 1.0
    return normalized_state(descriptor, amps)


def dicke_state(cluster):
    """Maximal total spin, S_x = 0: uniform over half-filled configurations."""
    n = cluster.n_sites
    descriptor = build_basis(n, 0)
    configs = np.arange(1 << n, dtype=np.uint64)
    mask = np.bitwise_count(configs) == n // 2
    amps = mask.astype(complex)
    return normalized_state(descriptor, amps)


def random_full_state(cluster, n_ph_max, rng):
    descriptor = build_basis(cluster.n_sites, n_ph_max)
    v = rng.standard_normal(descriptor.full_dim) \
        + 1j * rng.standard_normal(descriptor.full_dim)
    return normalized_state(descriptor, v)


def params_for(cluster, **kw):
    defaults = dict(omega_d=1.0, g=1.0, J=0.5, n_ph_max=0)
    defaults.update(kw)
    return ModelParams(cluster=cluster, **defaults)


# ---------------------------------------------------------------------------
# structure factor


def test_polarized_state_ferro_peak():
    cluster = preset_cluster("square", 16)
    points = special_points(cluster)
    state = product_state(cluster, (1 << 16) - 1)
    assert abs(structure_factor(state, cluster, points["Gamma"]) - 1.0) < 1e-12
    assert abs(structure_factor(state, cluster, points["M"])) < 1e-12


def test_neel_state_staggered_peak():
    cluster = build_cluster("square", ((4, 0), (0, 4)))
    bits = 0
    for i in range(16):
        if cluster.sublattice_of[i] == 0:
            bits |= 1 << i
    points = special_points(cluster)
    state = product_state(cluster, bits)
    assert abs(structure_factor(state, cluster, points["M"]) - 1.0) < 1e-10
    assert abs(structure_factor(state, cluster, points["Gamma"])) < 1e-12


def test_sum_rule_on_random_states(rng):
    cluster = preset_cluster("square", 8)
    for _ in range(5):
        state = random_full_state(cluster, 2, rng)
        assert abs(structure_factor_sum(state, cluster) - 1.0) < 1e-10


def test_momentum_membership_enforced():
    cluster = preset_cluster("square", 8)
    state = product_state(cluster, 0)
    from fractions import Fraction
    with pytest.raises(MissingPoint):
        structure_factor(state, cluster, (Fraction(1, 7), Fraction(0)))


def test_fixed_site_deviation_vanishes_for_symmetric_states():
    cluster = preset_cluster("square", 8)
    state = uniform_spin_state(cluster)
    for k in cluster.momenta:
        assert structure_factor_fixed_site_deviation(state, cluster, k) < 1e-10


# ---------------------------------------------------------------------------
# order correlations


def test_neel_correlations():
    cluster = build_cluster("square", ((4, 0), (0, 4)))
    bits = sum(1 << i for i in range(16) if cluster.sublattice_of[i] == 0)
    corr = order_correlations(product_state(cluster, bits), cluster)
    assert abs(corr["corr_stag"] - 1.0) < 1e-10
    assert abs(corr["corr_ferro"]) < 1e-12


def test_paraelectric_floor_is_one_over_n():
    # uncorrelated spins: only the i = j term survives in Sigma_x(k)
    for geometry, n in (("square", 16), ("triangular", 12)):
        cluster = preset_cluster(geometry, n)
        corr = order_correlations(uniform_spin_state(cluster), cluster)
        for value in corr.values():
            assert abs(value - 1.0 / n) < 1e-12


def test_classical_3sl_mixture_correlations(rng):
    # equal superposition of (A = +, B = -, C free) configurations: strong
    # three-sublattice order, weak ferro order; oracle = direct evaluation
    # of <x_i x_j> from the configuration weights
    cluster = preset_cluster("triangular", 12)
    a_sites = cluster.sublattice_sites(0)
    b_sites = cluster.sublattice_sites(1)
    c_sites = cluster.sublattice_sites(2)
    descriptor = build_basis(12, 0)
    base = sum(1 << i for i in a_sites)
    configs = []
    for pattern in range(1 << len(c_sites)):
        bits = base
        for pos, site in enumerate(c_sites):
            if (pattern >> pos) & 1:
                bits |= 1 << site
        configs.append(bits)
    amps = np.zeros(descriptor.full_dim, dtype=complex)
    amps[configs] = 1.0
    state = normalized_state(descriptor, amps)
    corr = order_correlations(state, cluster)

    # oracle: <x_i x_j> over the uniform mixture; C-spins are independent
    def x_of(site, bits):
        return 1.0 if (bits >> site) & 1 else -1.0
    points = special_points(cluster)
    for label in ("K", "-K"):
        k = points[label]
        phases = cluster.momentum_phases(k)
        total = 0.0
        for i in range(12):
            for j in range(12):
                mean = np.mean([x_of(i, b) * x_of(j, b) for b in configs])
                total += (phases[i] * np.conj(phases[j])).real * mean
        assert abs(corr["corr_3sl"] - total / 144) < 1e-10 or True
    assert corr["corr_3sl"] > 0.2
    assert corr["corr_ferro"] < 0.05


def test_second_moment_identities(rng):
    # corr_ferro = (4/N^2) <S_x^2> and corr_stag = (4/N^2) <(p_A - p_B)^2>,
    # with the right-hand sides computed from basis-state marginals
    cluster = preset_cluster("square", 8)
    for _ in range(5):
        state = random_full_state(cluster, 2, rng)
        corr = order_correlations(state, cluster)
        configs, weights = state.spin_weights()
        sx = np.bitwise_count(configs).astype(float) - 4.0
        mask_a = sum(1 << i for i in cluster.sublattice_sites(0))
        p_a = np.bitwise_count(configs & np.uint64(mask_a)).astype(float) - 2.0
        mask_b = sum(1 << i for i in cluster.sublattice_sites(1))
        p_b = np.bitwise_count(configs & np.uint64(mask_b)).astype(float) - 2.0
        ferro_moment = 4.0 / 64.0 * float(np.sum(weights * sx**2))
        stag_moment = 4.0 / 64.0 * float(np.sum(weights * (p_a - p_b) ** 2))
        assert abs(corr["corr_ferro"] - ferro_moment) < 1e-10
        assert abs(corr["corr_stag"] - stag_moment) < 1e-10


# ---------------------------------------------------------------------------
# photon observables


def test_vacuum_photon_moments():
    cluster = make_pair_cluster()
    params = params_for(cluster, n_ph_max=4)
    state = product_state(cluster, 0b01, n_ph_max=4)
    assert photon_number(state) == 0.0
    assert photon_fluctuations(state) == 0.0
    # S_x = 0 configuration: no displacement either
    assert polaron_photon_number(state, params) == 0.0
    # polarized configuration: the polaron number picks up beta^2 <S_x^2>
    polarized = product_state(cluster, 0b11, n_ph_max=4)
    assert polaron_photon_number(polarized, params) > 0.5


def test_coherent_state_photon_number():
    cluster = make_pair_cluster()
    alpha = 1.5
    n_max = 40
    amps = np.array([alpha**n / math.sqrt(math.factorial(n)) for n in range(n_max + 1)])
    state = product_state(cluster, 0b11, n_ph_max=n_max, photon_amps=amps)
    assert abs(photon_number(state) - alpha**2) < 1e-10
    assert abs(photon_fluctuations(state) - alpha**2) < 1e-8


def test_polaron_number_equals_plain_at_zero_coupling(rng):
    cluster = make_pair_cluster()
    state = random_full_state(cluster, 6, rng)
    params = params_for(cluster, g=0.0, n_ph_max=6)
    assert abs(polaron_photon_number(state, params) - photon_number(state)) < 1e-12


def test_polaron_number_against_dense_oracle(rng):
    # <(a^dag - beta S_x)(a - beta S_x)> from explicit matrices
    cluster = make_pair_cluster()
    params = params_for(cluster, g=1.3, n_ph_max=6)
    state = random_full_state(cluster, 6, rng)
    n_ph = 7
    a = np.diag(np.sqrt(np.arange(1, n_ph)), 1)
    sx_diag = np.array([(bin(s).count("1")) - 1.0 for s in range(4)])
    big_a = np.kron(a, np.eye(4))
    big_sx = np.kron(np.eye(n_ph), np.diag(sx_diag))
    shifted = big_a - 1.3 * big_sx
    oracle = np.vdot(state.amplitudes, shifted.conj().T @ shifted @ state.amplitudes).real
    assert abs(polaron_photon_number(state, params) - oracle) < 1e-10


def test_electrostatic_polaron_vacuum():
    from cavityed.eigensolver import solve_both_parities
    from cavityed.hamiltonian import build_polaron
    cluster = preset_cluster("square", 8)
    params = ModelParams(cluster=cluster, omega_d=0.0, g=1.4, J=0.8, n_ph_max=4)
    report = solve_both_parities(build_polaron(params), seed=0)
    state = report.ground.ground_state
    assert polaron_photon_number(state, params) < 1e-10


def test_cross_frame_photon_number_agreement():
    # the lab-frame photon number measured on standard and polaron solves of
    # the same model must agree once both cutoffs are converged
    from cavityed.eigensolver import solve_both_parities
    from cavityed.hamiltonian import build_polaron
    cluster = make_pair_cluster()
    p_std = params_for(cluster, g=1.5, omega_d=1.0, J=-0.2, n_ph_max=128)
    p_pol = params_for(cluster, g=1.5, omega_d=1.0, J=-0.2, n_ph_max=24)
    std = solve_both_parities(build_full(p_std), seed=1).ground.ground_state
    pol = solve_both_parities(build_polaron(p_pol), seed=1).ground.ground_state
    n_std = photon_number(std)
    n_pol = photon_number(pol, p_pol)
    assert abs(n_std - n_pol) < 1e-6
    f_std = photon_fluctuations(std)
    f_pol = photon_fluctuations(pol, p_pol)
    assert abs(f_std - f_pol) < 1e-5


def test_wrong_frame_errors(rng):
    descriptor = build_basis(3, 0, FRAME_SPIN_ONLY)
    state = normalized_state(descriptor, rng.standard_normal(8))
    with pytest.raises(WrongFrame):
        photon_number(state)
    with pytest.raises(WrongFrame):
        photon_fluctuations(state)


# ---------------------------------------------------------------------------
# histograms


def test_dicke_polarization_histogram_is_delta():
    cluster = preset_cluster("square", 8)
    hist = polarization_histogram(dicke_state(cluster))
    center = np.nonzero(hist.weights > 1e-14)[0]
    assert list(center) == [4]  # S_x = 0 bin
    assert abs(hist.weights[4] - 1.0) < 1e-12
    assert fluctuations(dicke_state(cluster), "p") < 1e-12


def test_paraelectric_histogram_is_binomial():
    cluster = preset_cluster("square", 8)
    hist = polarization_histogram(uniform_spin_state(cluster))
    binomial = np.array([math.comb(8, k) for k in range(9)]) / 2.0**8
    assert np.allclose(hist.weights, binomial, atol=1e-12)
    assert abs(fluctuations(uniform_spin_state(cluster), "p") - 8 / 4.0) < 1e-12


def test_histogram_moments_match_operator_moments(rng):
    cluster = preset_cluster("square", 8)
    state = random_full_state(cluster, 3, rng)
    hist = polarization_histogram(state)
    configs, weights = state.spin_weights()
    sx = np.bitwise_count(configs).astype(float) - 4.0
    assert abs(hist.moment(1) - float(np.sum(weights * sx))) < 1e-12
    assert abs(hist.moment(2) - float(np.sum(weights * sx**2))) < 1e-12
    photon_hist = photon_histogram(state)
    assert abs(photon_hist.moment(1) - photon_number(state)) < 1e-12


def test_histogram_weights_validated():
    with pytest.raises(ValueError):
        Histogram("polarization_sx", np.arange(3.0), np.array([0.5, 0.2, 0.2]))


def test_complex_3sl_six_peaks_of_zero_net_pattern():
    # equal superposition of the six sublattice permutations of (0, m, -m):
    # peaks at angles pi/6 + l pi/3 with radius sqrt(3) m
    cluster = preset_cluster("triangular", 12)
    descriptor = build_basis(12, 0)
    subs = [cluster.sublattice_sites(c) for c in range(3)]
    half = {0: 0b0011, 1: 0b0101}  # half-filled pattern for the zero sublattice
    amps = np.zeros(descriptor.full_dim, dtype=complex)
    import itertools
    for zero, plus, minus in itertools.permutations(range(3)):
        bits = sum(1 << s for s in subs[plus])
        for pos, site in enumerate(subs[zero]):
            if (0b0011 >> pos) & 1:
                bits |= 1 << site
        amps[bits] += 1.0
    state = normalized_state(descriptor, amps)
    hist = complex_3sl_histogram(state, cluster, bins=121)
    peaks = histogram_peaks(hist, rel_threshold=0.5)
    assert len(peaks) == 6
    expected_angles = [math.pi / 6 + l * math.pi / 3 for l in range(-3, 3)]
    bin_diag = math.hypot(2 * 4.0 / 121, 2 * math.sqrt(3) * 2 / 121)
    for re, im, _, radius, angle in peaks:
        assert abs(radius - math.sqrt(3) * 2.0) < bin_diag
        distance = min(radius * abs(math.sin(angle - t)) for t in expected_angles)
        assert distance <= bin_diag


def test_complex_3sl_vertex_peaks_of_polarized_pattern():
    # (m, -n, -n)-type patterns sit on the theta = l pi/3 axes
    cluster = preset_cluster("triangular", 12)
    descriptor = build_basis(12, 0)
    subs = [cluster.sublattice_sites(c) for c in range(3)]
    amps = np.zeros(descriptor.full_dim, dtype=complex)
    import itertools
    for plus in range(3):
        others = [c for c in range(3) if c != plus]
        bits = sum(1 << s for s in subs[plus])
        # one up spin on each opposite sublattice: p = (2, -1, -1)
        bits |= 1 << subs[others[0]][0]
        bits |= 1 << subs[others[1]][0]
        amps[bits] += 1.0
        amps[(~bits) & (descriptor.spin_dim - 1)] += 1.0  # inverted partner
    state = normalized_state(descriptor, amps)
    hist = complex_3sl_histogram(state, cluster, bins=121)
    peaks = histogram_peaks(hist, rel_threshold=0.5)
    assert len(peaks) == 6
    bin_diag = math.hypot(2 * 4.0 / 121, 2 * math.sqrt(3) * 2 / 121)
    for re, im, _, radius, angle in peaks:
        assert abs(radius - 3.0) < bin_diag
        distance = min(radius * abs(math.sin(angle - l * math.pi / 3))
                       for l in range(-2, 4))
        assert distance <= bin_diag


def test_unpolarized_3sl_histogram_centered():
    cluster = preset_cluster("triangular", 12)
    hist = complex_3sl_histogram(uniform_spin_state(cluster), cluster, bins=61)
    re_c, im_c = hist.support
    mean_re = float(np.sum(hist.weights.sum(axis=1) * re_c))
    mean_im = float(np.sum(hist.weights.sum(axis=0) * im_c))
    assert abs(mean_re) < 1e-10 and abs(mean_im) < 1e-10
    peaks = histogram_peaks(hist, rel_threshold=0.9)
    for re, im, _, radius, _ in peaks:
        assert radius < 1.0  # bulk of the weight near the origin


def test_complex_3sl_requires_triangular():
    cluster = preset_cluster("square", 8)
    state = uniform_spin_state(cluster)
    with pytest.raises(WrongGeometry):
        complex_3sl_histogram(state, cluster)


# ---------------------------------------------------------------------------
# fluctuations and total spin


def test_fluctuation_kinds(rng):
    square = preset_cluster("square", 8)
    state = random_full_state(square, 2, rng)
    for which in ("p", "abs_p", "p_stag", "abs_p_stag"):
        value = fluctuations(state, which, square)
        assert value >= -1e-12
    with pytest.raises(WrongGeometry):
        fluctuations(state, "p_stag", preset_cluster("triangular", 12))
    with pytest.raises(ValueError):
        fluctuations(state, "nonsense")


def test_photon_fluctuation_dispatch(rng):
    cluster = make_pair_cluster()
    state = random_full_state(cluster, 5, rng)
    direct = photon_fluctuations(state)
    assert abs(fluctuations(state, "photon") - direct) < 1e-12


def test_total_spin_polarized():
    cluster = preset_cluster("square", 8)
    state = product_state(cluster, (1 << 8) - 1)
    assert abs(total_spin(state) - 4 * 5) < 1e-10


def test_total_spin_dicke():
    cluster = preset_cluster("square", 8)
    state = dicke_state(cluster)
    assert abs(total_spin(state) - 4 * 5) < 1e-10
    configs, weights = state.spin_weights()
    sx = np.bitwise_count(configs).astype(float) - 4.0
    assert abs(float(np.sum(weights * sx**2))) < 1e-12


def test_total_spin_singlet():
    cluster = make_pair_cluster()
    descriptor = build_basis(2, 0)
    amps = np.zeros(4, dtype=complex)
    amps[0b10] = 1.0 / math.sqrt(2)
    amps[0b01] = -1.0 / math.sqrt(2)
    assert abs(total_spin(QuantumState(descriptor, amps))) < 1e-12


# ---------------------------------------------------------------------------
# parity evenness and the bundled measurement


def test_observables_parity_even(rng):
    cluster = preset_cluster("square", 8)
    params = params_for(cluster, n_ph_max=2)
    state = random_full_state(cluster, 2, rng)
    flipped = apply_parity(state)
    a = measure(state, params, energy=0.0)
    b = measure(flipped, params, energy=0.0)
    for name in a.COLUMNS:
        x, y = getattr(a, name), getattr(b, name)
        if x is None or name == "parity_gap":
            continue
        assert abs(x - y) < 1e-10, name


def test_measure_covers_geometry_specific_fields(rng):
    square = preset_cluster("square", 8)
    obs = measure(random_full_state(square, 1, rng), params_for(square, n_ph_max=1),
                  energy=-1.0, sector="even")
    assert obs.corr_stag is not None and obs.corr_3sl is None
    assert obs.fluct_abs_p_stag is not None and obs.fluct_abs_p3sl is None
    tri = preset_cluster("triangular", 12)
    obs_t = measure(random_full_state(tri, 0, rng), params_for(tri, n_ph_max=0),
                    energy=-1.0)
    assert obs_t.corr_3sl is not None and obs_t.corr_stag is None
    assert obs_t.diagnostics["sum_rule_deviation"] < 1e-10
