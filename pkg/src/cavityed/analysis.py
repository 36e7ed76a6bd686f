"""Parameter sweeps, boundary estimators, cutoff convergence, curve collapse.

Boundary values are always reported together with (N, grid, estimator)
provenance; no extrapolation in N is attempted, since the single-mode
model has no conventional thermodynamic limit and the finite-size
dependence is part of the result.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar

from . import __version__
from .eigensolver import lanczos_ground, solve_both_parities
from .errors import BudgetExceeded, ConfigError, DimensionOverflow, NoInteriorPeak
from .hamiltonian import (ModelParams, build_effective_spin, build_full,
                          build_obd, build_polaron, exchange_adjacency,
                          ising_diagonal, obd_sx_max)
from .lattice import TRIANGULAR, build_cluster, preset_cluster
from .observables import ObservableSet, measure

KIND_FULL = "full"
KIND_POLARON = "polaron"
KIND_EFFECTIVE_SPIN = "effective_spin"

AXES = ("g_over_omega_c", "J_over_omega_d", "jc_over_j")

_BUILDERS = {KIND_FULL: build_full, KIND_POLARON: build_polaron}


@dataclass(frozen=True)
class CutoffPolicy:
    """Photon cutoff selection: pinned value or the doubling protocol."""

    mode: str = "fixed"  # "fixed" | "auto"
    n_ph_max: int = 0
    rtol: float = 1e-6
    atol: float = 1e-6
    n_start: int = 8
    n_max: int = 4096

    def __post_init__(self):
        if self.mode not in ("fixed", "auto"):
            raise ConfigError(f"unknown cutoff mode {self.mode!r}")

    def to_json(self) -> dict:
        if self.mode == "fixed":
            return {"mode": "fixed", "n_ph_max": self.n_ph_max}
        return {"mode": "auto", "rtol": self.rtol, "atol": self.atol,
                "n_start": self.n_start, "n_max": self.n_max}


@dataclass(frozen=True)
class SweepSpec:
    """One 1-d cut through parameter space."""

    kind: str
    geometry: str
    n_sites: int
    axis: str
    grid_min: float
    grid_max: float
    grid_count: int
    spacing: str = "linear"
    omega_d: float = 1.0  # in units of omega_c
    g: float = 0.0  # g / omega_c
    J: float = 0.0  # J / omega_d
    cutoff: CutoffPolicy = field(default_factory=CutoffPolicy)
    cell_vectors: tuple | None = None
    override_hz: float | None = None
    override_jc: float | None = None
    observables: tuple = ()  # CSV column subset; empty = all
    seed: int = 0
    tol: float = 1e-10
    max_iter: int = 600

    def __post_init__(self):
        if self.kind not in (KIND_FULL, KIND_POLARON, KIND_EFFECTIVE_SPIN):
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.axis not in AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}")
        if self.grid_count < 3:
            raise ConfigError("grid needs at least 3 points")
        if not self.grid_min < self.grid_max:
            raise ConfigError("grid_min must be below grid_max")
        if self.spacing not in ("linear", "log"):
            raise ConfigError(f"unknown spacing {self.spacing!r}")
        if self.spacing == "log" and self.grid_min <= 0:
            raise ConfigError("log spacing needs a positive grid_min")
        if self.axis == "jc_over_j" and self.kind != KIND_EFFECTIVE_SPIN:
            raise ConfigError("the jc_over_j axis applies to the effective spin model")

    def grid(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.grid_min, self.grid_max, self.grid_count)
        return np.linspace(self.grid_min, self.grid_max, self.grid_count)

    def cluster(self):
        if self.cell_vectors is not None:
            return build_cluster(self.geometry, self.cell_vectors)
        return preset_cluster(self.geometry, self.n_sites)

    def params_at(self, value: float, cluster, n_ph_max: int) -> ModelParams:
        g = value if self.axis == "g_over_omega_c" else self.g
        j_ratio = value if self.axis == "J_over_omega_d" else self.J
        return ModelParams(cluster=cluster, omega_d=self.omega_d, g=g,
                           J=j_ratio * self.omega_d, n_ph_max=n_ph_max)

    def to_json(self) -> dict:
        out = {
            "kind": self.kind, "geometry": self.geometry, "n_sites": self.n_sites,
            "axis": self.axis, "grid_min": self.grid_min, "grid_max": self.grid_max,
            "grid_count": self.grid_count, "spacing": self.spacing,
            "omega_d": self.omega_d, "g": self.g, "J": self.J,
            "cutoff": self.cutoff.to_json(),
            "cell_vectors": None if self.cell_vectors is None
            else [list(v) for v in self.cell_vectors],
            "override_hz": self.override_hz, "override_jc": self.override_jc,
            "observables": list(self.observables), "seed": self.seed,
            "tol": self.tol, "max_iter": self.max_iter,
        }
        return out


@dataclass
class SweepRow:
    axis_value: float
    observables: ObservableSet | None
    n_ph_used: int | None
    solver_meta: dict = field(default_factory=dict)
    error: str | None = None


@dataclass
class SweepTable:
    spec: SweepSpec
    rows: list
    cluster_json: dict
    provenance: dict

    @property
    def axis_values(self) -> np.ndarray:
        return np.array([row.axis_value for row in self.rows])

    def column(self, name: str) -> np.ndarray:
        out = np.full(len(self.rows), np.nan)
        for i, row in enumerate(self.rows):
            if row.observables is not None:
                value = getattr(row.observables, name)
                if value is not None:
                    out[i] = value
        return out

    @property
    def failed_rows(self):
        return [row for row in self.rows if row.error is not None]

    def csv_columns(self):
        names = self.spec.observables or ObservableSet.COLUMNS
        return tuple(n for n in names if n in ObservableSet.COLUMNS)

    def csv_rows(self):
        columns = self.csv_columns()
        yield (self.spec.axis,) + columns + ("n_ph_max", "sector", "error")
        for row in self.rows:
            cells = [repr(float(row.axis_value))]
            for name in columns:
                value = None if row.observables is None else getattr(row.observables, name)
                cells.append("" if value is None else repr(float(value)))
            cells.append("" if row.n_ph_used is None else str(row.n_ph_used))
            cells.append("" if row.observables is None else str(row.observables.sector))
            cells.append("" if row.error is None else row.error)
            yield tuple(cells)

    def to_json(self) -> dict:
        return {
            "spec": self.spec.to_json(),
            "cluster": self.cluster_json,
            "provenance": self.provenance,
            "rows": [
                {
                    "axis_value": row.axis_value,
                    "observables": None if row.observables is None
                    else row.observables.to_json(),
                    "n_ph_used": row.n_ph_used,
                    "solver_meta": row.solver_meta,
                    "error": row.error,
                }
                for row in self.rows
            ],
        }


def provenance_hash(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def sweep_provenance(spec: SweepSpec) -> dict:
    payload = {"spec": spec.to_json(), "version": __version__}
    return {"hash": provenance_hash(payload), "version": __version__}


def _point_seed(base_seed: int, index: int) -> int:
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(index,))
    return int(ss.generate_state(1)[0])


def _solve_point(spec: SweepSpec, cluster, value: float, index: int) -> SweepRow:
    seed = _point_seed(spec.seed, index)
    if spec.kind == KIND_EFFECTIVE_SPIN:
        params = spec.params_at(value, cluster, 0)
        hz = spec.override_hz
        jc = spec.override_jc
        if spec.axis == "jc_over_j":
            jc = value * params.J
        op = build_effective_spin(params, override_hz=hz, override_jc=jc)
        n_used = 0
    elif spec.cutoff.mode == "fixed":
        params = spec.params_at(value, cluster, spec.cutoff.n_ph_max)
        op = _BUILDERS[spec.kind](params)
        n_used = spec.cutoff.n_ph_max
    else:
        params0 = spec.params_at(value, cluster, spec.cutoff.n_start)
        n_used, _trace = converge_cutoff(
            params0, spec.kind, observables=("energy", "photon_number"),
            rtol=spec.cutoff.rtol, atol=spec.cutoff.atol,
            n_start=spec.cutoff.n_start, n_max=spec.cutoff.n_max,
            tol=spec.tol, max_iter=spec.max_iter, seed=seed)
        params = spec.params_at(value, cluster, n_used)
        op = _BUILDERS[spec.kind](params)
    report = solve_both_parities(op, tol=spec.tol, max_iter=spec.max_iter, seed=seed)
    ground = report.ground
    obs = measure(ground.ground_state, op.params, ground.ground_energy,
                  sector=report.ground_sector, parity_gap=report.gap,
                  degenerate=report.is_degenerate())
    meta = {
        "seed": seed,
        "iterations": {"even": report.even.iterations, "odd": report.odd.iterations},
        "max_residual": float(max(report.even.residuals.max(),
                                  report.odd.residuals.max())),
    }
    return SweepRow(axis_value=float(value), observables=obs,
                    n_ph_used=n_used, solver_meta=meta)


def run_sweep(spec: SweepSpec, threads: int = 1, progress=None,
              known_rows: dict | None = None) -> SweepTable:
    """Solve the ground state at every grid point; failures are recorded rows.

    Points are independent tasks; the table is assembled in axis order so
    the output does not depend on completion order.  known_rows maps grid
    indices to already-computed SweepRow objects (resume support); those
    points are not re-solved.
    """
    cluster = spec.cluster()
    grid = spec.grid()
    known_rows = known_rows or {}

    def solve(index):
        if index in known_rows:
            return known_rows[index]
        value = grid[index]
        try:
            row = _solve_point(spec, cluster, value, index)
        except Exception as exc:  # per-point failure stays in the table
            row = SweepRow(axis_value=float(value), observables=None,
                           n_ph_used=None, error=f"{type(exc).__name__}: {exc}")
        if progress is not None:
            progress(index, row)
        return row

    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(solve, range(len(grid))))
    else:
        rows = [solve(i) for i in range(len(grid))]
    return SweepTable(spec=spec, rows=rows, cluster_json=cluster.to_json(),
                      provenance=sweep_provenance(spec))


def sweep_row_to_json(row: SweepRow) -> dict:
    return {
        "axis_value": row.axis_value,
        "observables": None if row.observables is None else row.observables.to_json(),
        "n_ph_used": row.n_ph_used,
        "solver_meta": row.solver_meta,
        "error": row.error,
    }


def sweep_row_from_json(payload: dict) -> SweepRow:
    obs = None
    if payload.get("observables") is not None:
        data = dict(payload["observables"])
        obs = ObservableSet(
            **{k: data.get(k) for k in ObservableSet.COLUMNS},
            sector=data.get("sector"),
            degenerate=bool(data.get("degenerate", False)),
            diagnostics=data.get("diagnostics", {}),
        )
    return SweepRow(
        axis_value=float(payload["axis_value"]),
        observables=obs,
        n_ph_used=payload.get("n_ph_used"),
        solver_meta=payload.get("solver_meta", {}),
        error=payload.get("error"),
    )


# ---------------------------------------------------------------------------
# cutoff-doubling convergence


def converge_cutoff(params: ModelParams, kind: str = KIND_FULL,
                    observables=("energy", "photon_number"),
                    rtol: float = 1e-6, atol: float = 1e-6,
                    n_start: int = 8, n_max: int = 4096,
                    tol: float = 1e-10, max_iter: int = 600, seed: int = 0):
    """Double the photon cutoff until the tracked observables stop moving.

    Accepts the cutoff n once every observable changes by less than
    max(rtol * |value|, atol) between the solves at n and 2n; the absolute
    floor keeps exactly-zero observables convergeable.  Returns
    (accepted n, trace of per-level values); raises BudgetExceeded with the
    trace when 2n would pass n_max.
    """
    if n_start < 1:
        raise ValueError("n_start must be >= 1")
    builder = _BUILDERS[kind]

    def level(n_ph):
        p = replace(params, n_ph_max=n_ph)
        op = builder(p)
        rep = solve_both_parities(op, tol=tol, max_iter=max_iter, seed=seed)
        obs = measure(rep.ground.ground_state, p, rep.ground_energy,
                      sector=rep.ground_sector, parity_gap=rep.gap)
        values = {}
        for name in observables:
            value = getattr(obs, name)
            values[name] = float("nan") if value is None else float(value)
        return values

    trace = []
    n = n_start
    current = level(n)
    trace.append({"n_ph_max": n, "values": current})
    while True:
        if 2 * n > n_max:
            raise BudgetExceeded(
                f"cutoff {2 * n} exceeds n_max = {n_max} before convergence",
                trace=trace)
        doubled = level(2 * n)
        trace.append({"n_ph_max": 2 * n, "values": doubled})
        converged = all(
            abs(doubled[name] - current[name])
            <= max(rtol * abs(doubled[name]), atol)
            for name in doubled
        )
        if converged:
            return n, trace
        n *= 2
        current = doubled


# ---------------------------------------------------------------------------
# peak estimators


@dataclass
class PeakReport:
    axis_value: float
    height: float
    width: float  # FWHM; NaN when the curve does not drop to half height
    estimator: str
    provenance: dict = field(default_factory=dict)


def _parabola_vertex(x, y):
    """Vertex of the parabola through three points; exact on quadratics."""
    x0, x1, x2 = x
    y0, y1, y2 = y
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
    if a == 0:
        return x1, y1
    xv = -b / (2 * a)
    c = y1 - a * x1**2 - b * x1
    return xv, a * xv**2 + b * xv + c


def _fwhm(x, y, i_max, height):
    half = height / 2.0
    left = np.nan
    for i in range(i_max, 0, -1):
        if y[i - 1] <= half <= y[i]:
            left = x[i - 1] + (half - y[i - 1]) * (x[i] - x[i - 1]) / (y[i] - y[i - 1])
            break
    right = np.nan
    for i in range(i_max, len(y) - 1):
        if y[i + 1] <= half <= y[i]:
            right = x[i] + (y[i] - half) * (x[i + 1] - x[i]) / (y[i] - y[i + 1])
            break
    return right - left


def _interior_peak(x, y, estimator: str) -> PeakReport:
    finite = np.isfinite(y)
    if not finite.all():
        raise NoInteriorPeak("curve contains failed points")
    i_max = int(np.argmax(y))
    if i_max == 0 or i_max == len(y) - 1:
        raise NoInteriorPeak(f"maximum of {estimator} sits on the grid edge")
    xv, yv = _parabola_vertex(x[i_max - 1: i_max + 2], y[i_max - 1: i_max + 2])
    if not (x[i_max - 1] <= xv <= x[i_max + 1]):
        xv, yv = x[i_max], y[i_max]
    return PeakReport(axis_value=float(xv), height=float(yv),
                      width=float(_fwhm(x, y, i_max, yv)), estimator=estimator)


def fluctuation_peak(table: SweepTable, which: str = "fluct_abs_p_stag") -> PeakReport:
    """Interpolated maximum of a fluctuation column; the finite-size boundary."""
    report = _interior_peak(table.axis_values, table.column(which), which)
    report.provenance = {"n_sites": table.spec.n_sites, "axis": table.spec.axis,
                         "grid_count": table.spec.grid_count,
                         **table.provenance}
    return report


def crossover_polaron_peak(table: SweepTable) -> PeakReport:
    """Crossover locator: maximum of the polaron photon number along g/omega_c.

    The plain photon number is not used here: near the superradiant phase
    (J < 0) it grows monotonically and hides the crossover feature, while
    the polaron variant stays peaked.
    """
    if table.spec.axis != "g_over_omega_c":
        raise ConfigError("crossover estimator expects a g/omega_c sweep")
    report = _interior_peak(table.axis_values, table.column("polaron_photon_number"),
                            "polaron_photon_number")
    report.provenance = {"n_sites": table.spec.n_sites, **table.provenance}
    return report


def crossover_gradient_drop(table: SweepTable, which: str = "fluct_abs_p") -> PeakReport:
    """Crossover locator: peak of -d<Delta|p|>/d(g/omega_c)."""
    if table.spec.axis != "g_over_omega_c":
        raise ConfigError("crossover estimator expects a g/omega_c sweep")
    x = table.axis_values
    y = table.column(which)
    if not np.isfinite(y).all():
        raise NoInteriorPeak("curve contains failed points")
    neg_grad = -np.gradient(y, x)
    # differentiating a flat curve leaves rounding dust; demand a gradient
    # clearly above that floor before calling it a drop
    noise_floor = 1e-12 * max(1.0, float(np.abs(y).max()) / (x[-1] - x[0]))
    if np.max(neg_grad[1:-1]) <= noise_floor:
        raise NoInteriorPeak("no decreasing segment in the curve")
    report = _interior_peak(x, neg_grad, f"-d({which})/dx")
    report.provenance = {"n_sites": table.spec.n_sites, **table.provenance}
    return report


# ---------------------------------------------------------------------------
# rescaled collapse


@dataclass
class CollapseCurve:
    scaled_axis: np.ndarray  # alpha * (J - J*) / omega_d
    scaled_values: np.ndarray  # value / peak height
    alpha: float
    peak: PeakReport
    residual: float


@dataclass
class CollapseReport:
    curves: list
    reference_index: int
    which: str

    def to_json(self) -> dict:
        return {
            "which": self.which,
            "reference_index": self.reference_index,
            "alphas": [c.alpha for c in self.curves],
            "residuals": [c.residual for c in self.curves],
            "peaks": [{"axis_value": c.peak.axis_value, "height": c.peak.height,
                       "width": c.peak.width} for c in self.curves],
        }


def rescale_collapse(tables, reference_index: int = 0,
                     which: str = "fluct_abs_p_stag") -> CollapseReport:
    """Peak-normalize each curve and fit one stretch factor per curve.

    Every curve is mapped to (alpha * (x - x_peak), y / y_peak); alpha is
    chosen by least squares so the curve lands on the reference curve over
    their common support (the reference keeps alpha = 1).  The mean squared
    mismatch at the optimum is the collapse quality.
    """
    if len(tables) < 2:
        raise ConfigError("collapse needs at least two tables")
    peaks = [fluctuation_peak(t, which) for t in tables]
    shifted = []
    for table, peak in zip(tables, peaks):
        u = table.axis_values - peak.axis_value
        y = table.column(which) / peak.height
        shifted.append((u, y))
    u_ref, y_ref = shifted[reference_index]

    def misfit(alpha, u, y):
        scaled = alpha * u
        inside = (scaled >= u_ref[0]) & (scaled <= u_ref[-1])
        if inside.sum() < 3:
            return 1e6
        ref_vals = np.interp(scaled[inside], u_ref, y_ref)
        return float(np.mean((y[inside] - ref_vals) ** 2))

    curves = []
    for idx, (u, y) in enumerate(shifted):
        if idx == reference_index:
            alpha, residual = 1.0, 0.0
        else:
            result = minimize_scalar(lambda lg: misfit(math.exp(lg), u, y),
                                     bounds=(math.log(1 / 16), math.log(16)),
                                     method="bounded",
                                     options={"xatol": 1e-7})
            alpha = math.exp(result.x)
            residual = misfit(alpha, u, y)
        curves.append(CollapseCurve(scaled_axis=alpha * u, scaled_values=y,
                                    alpha=alpha, peak=peaks[idx],
                                    residual=residual))
    return CollapseReport(curves=curves, reference_index=reference_index, which=which)


# ---------------------------------------------------------------------------
# order-by-disorder cascade


@dataclass
class CascadeReport:
    jc_over_j: np.ndarray
    sx_abs: np.ndarray
    step_locations: list
    sector_energies: dict  # |S_x| -> energies along the grid (units of J)
    manifold_sx_max: float

    def csv_rows(self):
        yield ("jc_over_j", "sx_abs")
        for jc, sx in zip(self.jc_over_j, self.sx_abs):
            yield (repr(float(jc)), repr(float(sx)))


def obd_cascade(cluster, jc_over_j_grid, dense_budget: int = 4096) -> CascadeReport:
    """Ground-sector |S_x| of H_S(h_z = 0) versus J_c/J on a triangular cluster.

    Solved exactly per S_x sector of the full spin space (dense, so N is
    limited by the largest binomial sector).  Energies are in units of J.
    The J_c/J -> 0 limit reproduces the manifold-projected ground sector.
    """
    if cluster.geometry != TRIANGULAR:
        raise ConfigError("the cascade is defined on triangular clusters")
    n = cluster.n_sites
    grid = np.asarray(jc_over_j_grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2 or np.any(grid <= 0):
        raise ConfigError("jc_over_j_grid must be a positive 1-d grid")
    all_configs = np.arange(1 << n, dtype=np.uint64)
    popcount = np.bitwise_count(all_configs).astype(np.int64)
    ising = ising_diagonal(cluster, 1.0)  # units of J

    sector_energy_rows = {}
    for twice_sx in range(n % 2, n + 1, 2):
        k = (twice_sx + n) // 2
        sector = all_configs[popcount == k]
        if len(sector) > dense_budget:
            raise DimensionOverflow(
                f"S_x sector of dim {len(sector)} exceeds dense budget {dense_budget}")
        diag = ising[popcount == k]
        if len(sector) == 1:
            coupling = np.zeros((1, 1))
        else:
            coupling = exchange_adjacency(sector, n).toarray()
        coupling += (n / 2.0) * np.eye(len(sector))  # S^2 - S_x^2 within the sector
        base = np.diag(diag)
        energies = np.empty(len(grid))
        for idx, jc in enumerate(grid):
            energies[idx] = np.linalg.eigvalsh(base - jc * coupling)[0]
        sector_energy_rows[twice_sx / 2.0] = energies

    sx_keys = sorted(sector_energy_rows)
    stacked = np.array([sector_energy_rows[k] for k in sx_keys])
    ground_idx = np.argmin(stacked, axis=0)
    sx_abs = np.array([sx_keys[i] for i in ground_idx])
    steps = [
        (float(grid[i]), float(sx_abs[i - 1]), float(sx_abs[i]))
        for i in range(1, len(grid)) if sx_abs[i] != sx_abs[i - 1]
    ]
    return CascadeReport(
        jc_over_j=grid,
        sx_abs=sx_abs,
        step_locations=steps,
        sector_energies={k: v.tolist() for k, v in sector_energy_rows.items()},
        manifold_sx_max=obd_sx_max(cluster).sx_max,
    )
