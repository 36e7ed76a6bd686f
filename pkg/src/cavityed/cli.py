"""Config-driven command line front end.

Subcommands: ground, sweep, cutoff-scan, obd, hist, presets.  Runs are
described by a JSON config validated against a strict schema (unknown keys
are a hard error); every run writes the fully-resolved config, CSV/JSON
results carrying a provenance hash of (config, code version), and, unless
--no-figures is given, rendered figures next to the delimited output.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, plotting
from .analysis import (AXES, KIND_EFFECTIVE_SPIN, KIND_FULL, KIND_POLARON,
                       CutoffPolicy, SweepSpec, converge_cutoff,
                       crossover_gradient_drop, crossover_polaron_peak,
                       fluctuation_peak, obd_cascade, provenance_hash, run_sweep,
                       sweep_row_from_json, sweep_row_to_json)
from .eigensolver import solve_both_parities
from .errors import CavityEdError, ConfigError
from .hamiltonian import (ModelParams, build_effective_spin, build_full,
                          build_obd, build_polaron, obd_sx_max)
from .lattice import (SQUARE, SQUARE_PRESETS, TRIANGULAR, TRIANGULAR_PRESETS,
                      build_cluster, preset_cluster)
from .observables import (complex_3sl_histogram, histogram_peaks, measure,
                          photon_histogram, polarization_histogram)

MODEL_KINDS = (KIND_FULL, KIND_POLARON, KIND_EFFECTIVE_SPIN)
HISTOGRAM_KINDS = ("polarization", "photon", "complex_3sl")
EXTRACTORS = ("fluctuation_peak", "crossover_polaron_peak", "crossover_gradient_drop")


# ---------------------------------------------------------------------------
# config schema


class _Key:
    def __init__(self, default, check, describe):
        self.default = default
        self.check = check
        self.describe = describe


_REQUIRED = object()


def _typed(kind, allow_none=False):
    def check(v):
        if v is None and allow_none:
            return True
        if kind is float:
            return isinstance(v, (int, float)) and not isinstance(v, bool)
        if kind is int:
            return isinstance(v, int) and not isinstance(v, bool)
        return isinstance(v, kind)
    return check


def _choice(*options):
    return lambda v: v in options


_MODEL_SCHEMA = {
    "model": _Key("full", _choice(*MODEL_KINDS), "|".join(MODEL_KINDS)),
    "geometry": _Key(_REQUIRED, _choice(SQUARE, TRIANGULAR), "square|triangular"),
    "n_sites": _Key(None, _typed(int, allow_none=True), "preset cluster size"),
    "cell_vectors": _Key(None, _typed(list, allow_none=True),
                         "[[t1x,t1y],[t2x,t2y]] integer cell"),
    "omega_d_over_omega_c": _Key(1.0, _typed(float), "dipole frequency ratio"),
    "g_over_omega_c": _Key(0.0, _typed(float), "single-dipole coupling ratio"),
    "J_over_omega_d": _Key(0.0, _typed(float), "nearest-neighbor Ising ratio"),
    "cutoff": _Key({"mode": "fixed", "n_ph_max": 16}, _typed(dict),
                   "fixed or auto photon cutoff"),
    "override_hz": _Key(None, _typed(float, allow_none=True),
                        "pin h_z of the effective spin model"),
    "override_jc": _Key(None, _typed(float, allow_none=True),
                        "pin J_c of the effective spin model"),
    "tol": _Key(1e-10, _typed(float), "relative eigensolver tolerance"),
    "max_iter": _Key(600, _typed(int), "Lanczos iteration cap"),
    "seed": _Key(0, _typed(int), "start-vector RNG seed"),
}

_CUTOFF_SCHEMA = {
    "mode": _Key(_REQUIRED, _choice("fixed", "auto"), "fixed|auto"),
    "n_ph_max": _Key(16, _typed(int), "fixed cutoff"),
    "rtol": _Key(1e-6, _typed(float), "relative convergence threshold"),
    "atol": _Key(1e-6, _typed(float), "absolute floor for near-zero observables"),
    "n_start": _Key(8, _typed(int), "first cutoff of the doubling ladder"),
    "n_max": _Key(4096, _typed(int), "doubling budget"),
}

_GRID_SCHEMA = {
    "min": _Key(_REQUIRED, _typed(float), "axis start"),
    "max": _Key(_REQUIRED, _typed(float), "axis end"),
    "count": _Key(_REQUIRED, _typed(int), "grid points (>= 3)"),
    "spacing": _Key("linear", _choice("linear", "log"), "linear|log"),
}

_COMMAND_SCHEMAS = {
    "ground": {
        **_MODEL_SCHEMA,
        "histograms": _Key([], _typed(list), f"subset of {HISTOGRAM_KINDS}"),
        "bins": _Key(121, _typed(int), "complex-plane histogram bins per axis"),
    },
    "sweep": {
        **_MODEL_SCHEMA,
        "axis": _Key(_REQUIRED, _choice(*AXES), "|".join(AXES)),
        "grid": _Key(_REQUIRED, _typed(dict), "axis grid"),
        "observables": _Key([], _typed(list), "CSV column subset"),
        "extract": _Key([], _typed(list), f"subset of {EXTRACTORS}"),
        "extract_column": _Key("fluct_abs_p_stag", _typed(str),
                               "column for fluctuation_peak"),
    },
    "cutoff-scan": {
        **_MODEL_SCHEMA,
        "track": _Key(["energy", "photon_number"], _typed(list),
                      "observables the doubling protocol must converge"),
    },
    "obd": {
        "geometry": _Key(TRIANGULAR, _choice(TRIANGULAR), "triangular"),
        "n_sites": _Key(None, _typed(int, allow_none=True), "preset cluster size"),
        "n_list": _Key(None, _typed(list, allow_none=True),
                       "several preset sizes in one table"),
        "cell_vectors": _Key(None, _typed(list, allow_none=True), "explicit cell"),
        "manifold_budget": _Key(80_000_000, _typed(int), "manifold size budget"),
        "cascade_grid": _Key(None, _typed(dict, allow_none=True),
                             "J_c/J grid for the ground-sector cascade"),
        "seed": _Key(7, _typed(int), "ARPACK start-vector seed"),
    },
    "hist": {
        **_MODEL_SCHEMA,
        "which": _Key(list(HISTOGRAM_KINDS), _typed(list),
                      f"subset of {HISTOGRAM_KINDS}"),
        "bins": _Key(121, _typed(int), "complex-plane histogram bins per axis"),
        "peak_threshold": _Key(0.5, _typed(float),
                               "relative weight floor for reported peaks"),
    },
    "presets": {},
}


def _validate(config: dict, schema: dict, context: str) -> dict:
    unknown = set(config) - set(schema)
    if unknown:
        raise ConfigError(f"unknown {context} keys: {sorted(unknown)}")
    resolved = {}
    for key, spec in schema.items():
        if key in config:
            value = config[key]
        elif spec.default is _REQUIRED:
            raise ConfigError(f"missing required {context} key {key!r}")
        else:
            value = spec.default
        if not spec.check(value):
            raise ConfigError(f"bad value for {context} key {key!r}: {value!r} "
                              f"(expected {spec.describe})")
        resolved[key] = value
    return resolved


def resolve_config(command: str, config: dict) -> dict:
    resolved = _validate(config, _COMMAND_SCHEMAS[command], command)
    if "cutoff" in resolved:
        resolved["cutoff"] = _validate(resolved["cutoff"], _CUTOFF_SCHEMA, "cutoff")
    if "grid" in resolved and resolved.get("grid") is not None:
        resolved["grid"] = _validate(resolved["grid"], _GRID_SCHEMA, "grid")
    if "cascade_grid" in resolved and resolved["cascade_grid"] is not None:
        resolved["cascade_grid"] = _validate(resolved["cascade_grid"], _GRID_SCHEMA,
                                             "cascade_grid")
    if "n_sites" in resolved and resolved.get("n_sites") is None \
            and resolved.get("cell_vectors") is None \
            and resolved.get("n_list") is None:
        raise ConfigError("one of n_sites / cell_vectors is required")
    return resolved


# ---------------------------------------------------------------------------
# shared helpers


def _cluster_from(resolved):
    if resolved.get("cell_vectors") is not None:
        return build_cluster(resolved["geometry"], resolved["cell_vectors"])
    return preset_cluster(resolved["geometry"], resolved["n_sites"])


def _cutoff_policy(resolved) -> CutoffPolicy:
    c = resolved["cutoff"]
    if c["mode"] == "fixed":
        return CutoffPolicy(mode="fixed", n_ph_max=c["n_ph_max"])
    return CutoffPolicy(mode="auto", rtol=c["rtol"], atol=c["atol"],
                        n_start=c["n_start"], n_max=c["n_max"])


def _build_point_op(resolved, cluster, n_ph_max):
    params = ModelParams(
        cluster=cluster,
        omega_d=resolved["omega_d_over_omega_c"],
        g=resolved["g_over_omega_c"],
        J=resolved["J_over_omega_d"] * resolved["omega_d_over_omega_c"],
        n_ph_max=n_ph_max,
    )
    kind = resolved["model"]
    if kind == KIND_FULL:
        return build_full(params), params
    if kind == KIND_POLARON:
        return build_polaron(params), params
    op = build_effective_spin(params, override_hz=resolved["override_hz"],
                              override_jc=resolved["override_jc"])
    return op, params


def _solve_single_point(resolved):
    cluster = _cluster_from(resolved)
    policy = _cutoff_policy(resolved)
    trace = None
    if resolved["model"] == KIND_EFFECTIVE_SPIN:
        n_used = 0
    elif policy.mode == "fixed":
        n_used = policy.n_ph_max
    else:
        params0 = ModelParams(
            cluster=cluster, omega_d=resolved["omega_d_over_omega_c"],
            g=resolved["g_over_omega_c"],
            J=resolved["J_over_omega_d"] * resolved["omega_d_over_omega_c"],
            n_ph_max=policy.n_start)
        n_used, trace = converge_cutoff(
            params0, resolved["model"], rtol=policy.rtol, atol=policy.atol,
            n_start=policy.n_start, n_max=policy.n_max, tol=resolved["tol"],
            max_iter=resolved["max_iter"], seed=resolved["seed"])
    op, params = _build_point_op(resolved, cluster, n_used)
    report = solve_both_parities(op, tol=resolved["tol"],
                                 max_iter=resolved["max_iter"],
                                 seed=resolved["seed"])
    ground = report.ground
    observables = measure(ground.ground_state, params, ground.ground_energy,
                          sector=report.ground_sector, parity_gap=report.gap,
                          degenerate=report.is_degenerate())
    return cluster, params, report, observables, n_used, trace


def _sanitize(obj):
    """NaN/inf have no JSON encoding; write them as null."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _write_json(path: Path, payload):
    with open(path, "w") as fh:
        json.dump(_sanitize(payload), fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in rows:
            writer.writerow(row)


def _emit_resolved(outdir: Path, command: str, resolved: dict) -> dict:
    payload = {"command": command, "config": resolved, "version": __version__}
    provenance = {"hash": provenance_hash(payload), "version": __version__}
    _write_json(outdir / "resolved_config.json", payload)
    return provenance


# ---------------------------------------------------------------------------
# subcommands


def cmd_ground(resolved, outdir: Path, args) -> int:
    provenance = _emit_resolved(outdir, "ground", resolved)
    cluster, params, report, observables, n_used, _ = _solve_single_point(resolved)
    _write_json(outdir / "solve_report.json", {
        "provenance": provenance,
        "n_ph_used": n_used,
        "even": report.even.to_json(),
        "odd": report.odd.to_json(),
        "ground_sector": report.ground_sector,
        "parity_gap": report.gap,
    })
    _write_json(outdir / "observables.json", {
        "provenance": provenance,
        "cluster": cluster.to_json(),
        "observables": observables.to_json(),
    })
    state = report.ground.ground_state
    figures = []
    for kind in resolved["histograms"]:
        if kind == "polarization":
            hist = polarization_histogram(state)
        elif kind == "photon":
            hist = photon_histogram(state)
        else:
            hist = complex_3sl_histogram(state, cluster, bins=resolved["bins"])
        _write_csv(outdir / f"hist_{kind}.csv", hist.csv_rows())
        if not args.no_figures:
            figures += plotting.render_histogram(hist, str(outdir / f"hist_{kind}.png"))
    print(f"ground: E = {observables.energy:.12g} (sector {observables.sector}), "
          f"outputs in {outdir}")
    return 0


def _sweep_spec(resolved) -> SweepSpec:
    grid = resolved["grid"]
    return SweepSpec(
        kind=resolved["model"],
        geometry=resolved["geometry"],
        n_sites=resolved["n_sites"] or 0,
        cell_vectors=None if resolved["cell_vectors"] is None
        else tuple(tuple(v) for v in resolved["cell_vectors"]),
        axis=resolved["axis"],
        grid_min=grid["min"], grid_max=grid["max"], grid_count=grid["count"],
        spacing=grid["spacing"],
        omega_d=resolved["omega_d_over_omega_c"],
        g=resolved["g_over_omega_c"],
        J=resolved["J_over_omega_d"],
        cutoff=_cutoff_policy(resolved),
        override_hz=resolved["override_hz"],
        override_jc=resolved["override_jc"],
        observables=tuple(resolved["observables"]),
        seed=resolved["seed"],
        tol=resolved["tol"],
        max_iter=resolved["max_iter"],
    )


def cmd_sweep(resolved, outdir: Path, args) -> int:
    provenance = _emit_resolved(outdir, "sweep", resolved)
    spec = _sweep_spec(resolved)
    points_path = outdir / "points.jsonl"
    known = {}
    if args.resume and points_path.exists():
        with open(points_path) as fh:
            for line in fh:
                record = json.loads(line)
                if record.get("hash") == provenance["hash"]:
                    known[record["index"]] = sweep_row_from_json(record["row"])
    log = open(points_path, "a" if args.resume else "w")

    def progress(index, row):
        record = {"hash": provenance["hash"], "index": index,
                  "row": sweep_row_to_json(row)}
        log.write(json.dumps(record, sort_keys=True) + "\n")
        log.flush()

    try:
        table = run_sweep(spec, threads=args.threads, progress=progress,
                          known_rows=known)
    finally:
        log.close()
    _write_csv(outdir / "sweep.csv", table.csv_rows())
    payload = table.to_json()
    payload["provenance"]["config_hash"] = provenance["hash"]
    _write_json(outdir / "sweep.json", payload)
    figures = []
    if not args.no_figures:
        figures = plotting.render_sweep(table, table.csv_columns(),
                                        str(outdir / "sweep"))
    failed = len(table.failed_rows)
    for extractor in resolved["extract"]:
        try:
            if extractor == "fluctuation_peak":
                peak = fluctuation_peak(table, resolved["extract_column"])
            elif extractor == "crossover_polaron_peak":
                peak = crossover_polaron_peak(table)
            else:
                peak = crossover_gradient_drop(table)
            _write_json(outdir / f"extract_{extractor}.json", {
                "provenance": provenance,
                "axis_value": peak.axis_value,
                "height": peak.height,
                "width": peak.width,
                "estimator": peak.estimator,
            })
        except CavityEdError as exc:
            _write_json(outdir / f"extract_{extractor}.json", {
                "provenance": provenance,
                "error": f"{type(exc).__name__}: {exc}",
            })
            failed += 1
    print(f"sweep: {len(table.rows)} points, {failed} failures, outputs in {outdir}")
    return 1 if failed else 0


def cmd_cutoff_scan(resolved, outdir: Path, args) -> int:
    provenance = _emit_resolved(outdir, "cutoff-scan", resolved)
    cluster = _cluster_from(resolved)
    policy = _cutoff_policy(resolved)
    params = ModelParams(
        cluster=cluster, omega_d=resolved["omega_d_over_omega_c"],
        g=resolved["g_over_omega_c"],
        J=resolved["J_over_omega_d"] * resolved["omega_d_over_omega_c"],
        n_ph_max=policy.n_start)
    accepted, trace = converge_cutoff(
        params, resolved["model"], observables=tuple(resolved["track"]),
        rtol=policy.rtol, atol=policy.atol, n_start=policy.n_start,
        n_max=policy.n_max, tol=resolved["tol"], max_iter=resolved["max_iter"],
        seed=resolved["seed"])
    names = list(trace[0]["values"])
    rows = [("n_ph_max", *names)]
    for level in trace:
        rows.append((str(level["n_ph_max"]),
                     *(repr(level["values"][n]) for n in names)))
    _write_csv(outdir / "cutoff_trace.csv", rows)
    _write_json(outdir / "cutoff_trace.json", {
        "provenance": provenance,
        "accepted_n_ph_max": accepted,
        "trace": trace,
    })
    if not args.no_figures:
        plotting.render_cutoff_trace(trace, str(outdir / "cutoff_trace.png"))
    print(f"cutoff-scan: accepted n_ph_max = {accepted}, outputs in {outdir}")
    return 0


def cmd_obd(resolved, outdir: Path, args) -> int:
    provenance = _emit_resolved(outdir, "obd", resolved)
    sizes = resolved["n_list"] or [resolved["n_sites"]]
    rows = [("n_sites", "manifold_dim", "entropy_per_site", "sx_max", "degenerate_sx")]
    spectra = []
    for n in sizes:
        if resolved["cell_vectors"] is not None:
            cluster = build_cluster(TRIANGULAR, resolved["cell_vectors"])
        else:
            cluster = preset_cluster(TRIANGULAR, n)
        spectrum = obd_sx_max(cluster, budget=resolved["manifold_budget"],
                              seed=resolved["seed"])
        spectra.append((cluster, spectrum))
        rows.append((str(cluster.n_sites), str(spectrum.manifold_dim),
                     repr(float(np.log(spectrum.manifold_dim) / cluster.n_sites)),
                     repr(spectrum.sx_max), repr(list(spectrum.degenerate_sx))))
    _write_csv(outdir / "obd_sectors.csv", rows)
    _write_json(outdir / "obd_sectors.json", {
        "provenance": provenance,
        "results": [
            {"n_sites": c.n_sites, "manifold_dim": s.manifold_dim,
             "sector_energies": {str(k): v for k, v in s.sector_energies.items()},
             "sector_dims": {str(k): v for k, v in s.sector_dims.items()},
             "sx_max": s.sx_max, "degenerate_sx": list(s.degenerate_sx)}
            for c, s in spectra
        ],
    })
    if not args.no_figures:
        for cluster, spectrum in spectra:
            plotting.render_obd_sectors(
                spectrum, str(outdir / f"obd_sectors_N{cluster.n_sites}.png"))
    if resolved["cascade_grid"] is not None:
        grid_spec = resolved["cascade_grid"]
        grid = (np.geomspace if grid_spec["spacing"] == "log" else np.linspace)(
            grid_spec["min"], grid_spec["max"], grid_spec["count"])
        cluster, _ = spectra[-1]
        cascade = obd_cascade(cluster, grid)
        _write_csv(outdir / "cascade.csv", cascade.csv_rows())
        _write_json(outdir / "cascade.json", {
            "provenance": provenance,
            "steps": cascade.step_locations,
            "manifold_sx_max": cascade.manifold_sx_max,
        })
        if not args.no_figures:
            plotting.render_cascade(cascade, str(outdir / "cascade.png"))
    print(f"obd: {len(sizes)} cluster(s), outputs in {outdir}")
    return 0


def cmd_hist(resolved, outdir: Path, args) -> int:
    provenance = _emit_resolved(outdir, "hist", resolved)
    cluster, params, report, observables, n_used, _ = _solve_single_point(resolved)
    state = report.ground.ground_state
    peaks_payload = {}
    for kind in resolved["which"]:
        if kind == "polarization":
            hist = polarization_histogram(state)
        elif kind == "photon":
            hist = photon_histogram(state)
        else:
            hist = complex_3sl_histogram(state, cluster, bins=resolved["bins"])
            peaks = histogram_peaks(hist, rel_threshold=resolved["peak_threshold"])
            peaks_payload["complex_3sl"] = [
                {"re": p[0], "im": p[1], "weight": p[2], "radius": p[3], "angle": p[4]}
                for p in peaks
            ]
        _write_csv(outdir / f"hist_{kind}.csv", hist.csv_rows())
        if not args.no_figures:
            plotting.render_histogram(hist, str(outdir / f"hist_{kind}.png"))
    _write_json(outdir / "hist_meta.json", {
        "provenance": provenance,
        "energy": observables.energy,
        "sector": observables.sector,
        "n_ph_used": n_used,
        "peaks": peaks_payload,
    })
    print(f"hist: wrote {len(resolved['which'])} histogram(s) in {outdir}")
    return 0


def cmd_presets(resolved, outdir, args) -> int:
    print("geometry    N  cell vectors          bonds  sublattices")
    for geometry, table in ((SQUARE, SQUARE_PRESETS), (TRIANGULAR, TRIANGULAR_PRESETS)):
        for n, cell in sorted(table.items()):
            cluster = preset_cluster(geometry, n)
            print(f"{geometry:<10} {n:3d}  {str(cell):<20}  {len(cluster.bonds):4d}  "
                  f"{cluster.n_sublattices}")
    return 0


_COMMANDS = {
    "ground": cmd_ground,
    "sweep": cmd_sweep,
    "cutoff-scan": cmd_cutoff_scan,
    "obd": cmd_obd,
    "hist": cmd_hist,
    "presets": cmd_presets,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cavityed",
        description="Exact diagonalization of lattice dipoles coupled to a cavity mode.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        if name != "presets":
            p.add_argument("--config", required=True, help="JSON run configuration")
            p.add_argument("--out", required=True, help="output directory")
            p.add_argument("--seed", type=int, default=None,
                           help="override the config seed")
            p.add_argument("--threads", type=int, default=1,
                           help="concurrent sweep points")
            p.add_argument("--resume", action="store_true",
                           help="skip sweep points already in points.jsonl")
            p.add_argument("--no-figures", action="store_true",
                           help="skip matplotlib rendering")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        return cmd_presets(None, None, args)
    outdir = Path(args.out)
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
        resolved = resolve_config(args.command, raw)
        if args.seed is not None and "seed" in resolved:
            resolved["seed"] = args.seed
        outdir.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](resolved, outdir, args)
    except Exception as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        try:
            outdir.mkdir(parents=True, exist_ok=True)
            _write_json(outdir / "error.json", payload)
        except OSError:
            pass
        print(json.dumps(payload), file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1


if __name__ == "__main__":
    sys.exit(main())
