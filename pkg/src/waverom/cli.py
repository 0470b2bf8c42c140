"""Command-line surface: synthesize | rom | sweep | invert | compare.

Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 IO error.
All commands are deterministic given identical configs and inputs; the
only non-reproducible bytes live in the manifest timestamp field.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, io
from .config import ExperimentConfig, load_config
from .errors import ConfigError, WaveromError
from .forward import synthesize_dataset, synthesize_measurements, symmetrize_and_sample
from .inversion import run_inversion
from .objective import RomResidualSpec, fwi_residual, rom_residual
from .rom import assemble_mass, build_rom


def _reference_dataset(cfg: ExperimentConfig, truth, acq):
    """Synthesize the reference data, on a refined grid when configured.

    With reference.refine > 1 the true model is rebuilt on the finer grid
    (same domain and sensors), breaking the inverse-crime symmetry between
    reference and candidate discretizations.
    """
    factor = cfg.reference_refine
    if factor == 1:
        return acq.dataset(truth)
    fine = cfg.build_model(grid=cfg.refined_grid(factor))
    return acq.dataset(fine)


def _manifest_base(command: str, cfg: ExperimentConfig, args) -> dict:
    import scipy

    return {
        "schema": "waverom-manifest-v1",
        "command": command,
        "config": cfg.to_dict(),
        "seed": args.seed,
        "threads": args.threads,
        "versions": {
            "waverom": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }


# synthesize -------------------------------------------------------------------


def cmd_synthesize(cfg: ExperimentConfig, out: Path, args) -> int:
    truth = cfg.build_model()
    acq = cfg.build_acquisition(truth.grid)
    path_kind = args.path
    if path_kind == "spectral":
        ds = _reference_dataset(cfg, truth, acq)
    else:
        dt = cfg.record_dt(acq.tau)
        rec = synthesize_measurements(truth, acq.array, acq.pulse, cfg.record_t_end(acq.tau), dt)
        if args.traces:
            io.save_traces_csv(out / "traces.csv", rec)
        ds = symmetrize_and_sample(rec, acq.array, truth, acq.tau, acq.n)
    io.save_dataset(out / "dataset.json", ds)
    io.save_velocity(out / "truth.json", truth)
    manifest = _manifest_base("synthesize", cfg, args)
    manifest["artifacts"] = {"dataset": "dataset.json", "truth": "truth.json"}
    manifest["path"] = path_kind
    io.save_manifest(out / "manifest.json", manifest)
    print(f"wrote dataset (m={ds.m}, n={ds.n}, tau={ds.tau:g}) to {out}")
    return 0


# rom --------------------------------------------------------------------------


def cmd_rom(dataset_path: Path, out: Path, args) -> int:
    ds = io.load_dataset(dataset_path)
    mass = assemble_mass(ds)
    rom = build_rom(ds)
    io.save_rom(out / "rom.json", rom)
    cond = float(np.linalg.cond(mass))
    report = {
        "m": ds.m,
        "n": ds.n,
        "mass_condition_number": cond,
        "rom_symmetry": float(
            np.linalg.norm(rom.a_rom - rom.a_rom.T) / max(np.linalg.norm(rom.a_rom), 1e-300)
        ),
    }
    io.save_manifest(out / "rom_report.json", report)
    print(f"wrote ROM (nm={rom.dimension}) to {out}; cond(M) = {cond:.3e}")
    return 0


# sweep ------------------------------------------------------------------------


def local_minima_census(surface: np.ndarray) -> list[dict]:
    """Strict 8-neighbor local minima with plateau merging.

    Cells of equal value are merged into plateaus (8-connected); a
    plateau is a minimum when every neighboring cell outside it has a
    strictly larger value.  Each minimum reports its lowest-index cell
    and whether the plateau touches the grid border.
    """
    ni, nj = surface.shape
    seen = np.zeros(surface.shape, dtype=bool)
    neighbors = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]
    minima = []
    for i0 in range(ni):
        for j0 in range(nj):
            if seen[i0, j0]:
                continue
            value = surface[i0, j0]
            plateau = [(i0, j0)]
            seen[i0, j0] = True
            is_min, on_border = True, False
            head = 0
            while head < len(plateau):
                ci, cj = plateau[head]
                head += 1
                if ci in (0, ni - 1) or cj in (0, nj - 1):
                    on_border = True
                for di, dj in neighbors:
                    xi, xj = ci + di, cj + dj
                    if not (0 <= xi < ni and 0 <= xj < nj):
                        continue
                    other = surface[xi, xj]
                    if other == value:
                        if not seen[xi, xj]:
                            seen[xi, xj] = True
                            plateau.append((xi, xj))
                    elif other < value:
                        is_min = False
            if is_min:
                cell = min(plateau)
                minima.append(
                    {"i": cell[0], "j": cell[1], "value": float(value), "interior": not on_border}
                )
    return sorted(minima, key=lambda rec: (rec["i"], rec["j"]))


def cmd_sweep(cfg: ExperimentConfig, out: Path, args) -> int:
    ax1, ax2 = cfg.sweep_axes()
    truth = cfg.build_model()
    grid = truth.grid
    acq = cfg.build_acquisition(grid)
    ref_ds = _reference_dataset(cfg, truth, acq)
    ref_rom = build_rom(ref_ds)
    d = int(cfg.sweep.get("d") or acq.n)
    k = int(cfg.sweep.get("k") or acq.n)
    spec = RomResidualSpec(d, k, ref_rom)

    v1, v2 = ax1.values(), ax2.values()

    def evaluate(point) -> tuple[float, float]:
        a, b = point
        model_spec = dict(cfg.model, **{ax1.name: a, ax2.name: b})
        candidate_cfg = ExperimentConfig(
            model=model_spec, grid=cfg.grid, acquisition=cfg.acquisition,
            sampling=cfg.sampling, method=cfg.method, base_dir=cfg.base_dir,
        )
        candidate = candidate_cfg.build_model()
        ds = acq.dataset(candidate)  # one synthesis shared by both objectives
        r_rom = rom_residual(build_rom(ds), spec)
        r_fwi = fwi_residual(ds, ref_ds)
        return float(r_rom @ r_rom), float(r_fwi @ r_fwi)

    points = [(a, b) for a in v1 for b in v2]
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(evaluate, points))
    else:
        results = [evaluate(pt) for pt in points]
    obj_rom = np.array([r[0] for r in results]).reshape(ax1.count, ax2.count)
    obj_fwi = np.array([r[1] for r in results]).reshape(ax1.count, ax2.count)

    io.save_sweep_csv(out / "sweep.csv", ax1.name, ax2.name, v1, v2, obj_rom, obj_fwi)
    census = {}
    for tag, surface in (("rom", obj_rom), ("fwi", obj_fwi)):
        minima = local_minima_census(surface)
        for rec in minima:
            rec[ax1.name] = float(v1[rec["i"]])
            rec[ax2.name] = float(v2[rec["j"]])
        census[tag] = {
            "count": len(minima),
            "count_interior": sum(rec["interior"] for rec in minima),
            "minima": minima,
        }
    io.save_manifest(out / "census.json", census)
    manifest = _manifest_base("sweep", cfg, args)
    manifest["artifacts"] = {"sweep": "sweep.csv", "census": "census.json"}
    io.save_manifest(out / "manifest.json", manifest)
    print(
        "sweep done: ROM census %d interior / %d total, FWI census %d interior / %d total"
        % (
            census["rom"]["count_interior"], census["rom"]["count"],
            census["fwi"]["count_interior"], census["fwi"]["count"],
        )
    )
    return 0


# invert -----------------------------------------------------------------------


def cmd_invert(cfg: ExperimentConfig, out: Path, args) -> int:
    truth = cfg.build_model()
    grid = truth.grid
    acq = cfg.build_acquisition(grid)
    ref_ds = _reference_dataset(cfg, truth, acq)
    param = cfg.build_search(grid)
    schedule = cfg.build_schedule()
    gn = cfg.build_gn()

    reference = build_rom(ref_ds) if args.mode == "rom" else ref_ds
    estimate, state = run_inversion(
        reference, param, schedule, gn, acq, mode=args.mode, threads=args.threads
    )

    io.save_velocity(out / "truth.json", truth)
    io.save_velocity(out / "initial.json", param.background)
    io.save_velocity(out / "estimate.json", estimate)
    io.save_dataset(out / "dataset.json", ref_ds)
    io.save_state_csv(out / "state.csv", state)
    io.save_parametrization(out / "parametrization.json", param.with_eta(state.eta), "initial.json")

    initial_error = param.background.rel_l2_error(truth)
    final_error = estimate.rel_l2_error(truth)
    manifest = _manifest_base("invert", cfg, args)
    manifest["mode"] = args.mode
    manifest["artifacts"] = {
        "truth": "truth.json",
        "initial": "initial.json",
        "estimate": "estimate.json",
        "dataset": "dataset.json",
        "state": "state.csv",
        "parametrization": "parametrization.json",
    }
    manifest["metrics"] = {
        "initial_error": initial_error,
        "final_error": final_error,
        "final_objective": state.objective_trace[-1] if state.objective_trace else None,
        "iterations": state.i,
    }
    io.save_manifest(out / "manifest.json", manifest)
    print(
        f"{args.mode} inversion: initial error {initial_error:.4f} -> "
        f"final error {final_error:.4f} after {state.i} iterations"
    )
    return 0


# compare ----------------------------------------------------------------------


def _run_error(manifest: dict, manifest_path: Path) -> tuple[float, float]:
    base = manifest_path.parent
    artifacts = manifest.get("artifacts", {})
    truth = io.load_velocity(base / artifacts["truth"])
    initial_error = manifest.get("metrics", {}).get("initial_error")
    if "estimate" in artifacts:
        est = io.load_velocity(base / artifacts["estimate"])
        if est.grid != truth.grid:
            raise ConfigError("compare: estimate and truth grids differ")
        return (initial_error, est.rel_l2_error(truth))
    # truth-only manifest: the baseline is the initial guess error
    if "initial" in artifacts:
        init = io.load_velocity(base / artifacts["initial"])
        err = init.rel_l2_error(truth)
        return (err, err)
    raise ConfigError("compare: manifest has neither estimate nor initial model")


def cmd_compare(path_a: Path, path_b: Path, out: Path) -> int:
    man_a, man_b = io.load_manifest(path_a), io.load_manifest(path_b)
    ta = io.load_velocity(path_a.parent / man_a["artifacts"]["truth"])
    tb = io.load_velocity(path_b.parent / man_b["artifacts"]["truth"])
    if ta.grid != tb.grid:
        raise ConfigError("compare: runs use different grids")
    if not np.array_equal(ta.c, tb.c):
        raise ConfigError("compare: runs use different true models")
    err_a, err_b = _run_error(man_a, path_a)[1], _run_error(man_b, path_b)[1]
    curves = {}
    for tag, man, path in (("a", man_a, path_a), ("b", man_b, path_b)):
        state_rel = man.get("artifacts", {}).get("state")
        if state_rel:
            curves[tag] = io.load_state_csv(path.parent / state_rel)
    report = {
        "run_a": {"path": str(path_a), "mode": man_a.get("mode"), "final_error": err_a},
        "run_b": {"path": str(path_b), "mode": man_b.get("mode"), "final_error": err_b},
        "winner": "a" if err_a < err_b else ("b" if err_b < err_a else "tie"),
        "error_difference": err_a - err_b,
        "curves": curves,
    }
    io.save_manifest(out / "compare.json", report)
    print(
        f"compare: run_a error {err_a:.4f} vs run_b error {err_b:.4f} "
        f"-> winner {report['winner']}"
    )
    return 0


# entry point --------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="waverom",
        description="Data-driven wave-operator ROM velocity estimation and FWI baseline",
    )
    parser.add_argument("--threads", type=int, default=1, help="worker threads")
    parser.add_argument("--seed", type=int, default=0, help="recorded in manifests")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="synthesize array data for a config")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--path", choices=("spectral", "timedomain"), default="spectral")
    p.add_argument("--traces", action="store_true", help="also export raw traces CSV")

    p = sub.add_parser("rom", help="build the operator ROM from a dataset file")
    p.add_argument("--dataset", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("sweep", help="two-parameter objective landscape sweep")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("invert", help="run the inversion")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--mode", choices=("rom", "fwi"), default="rom")

    p = sub.add_parser("compare", help="compare two inversion runs")
    p.add_argument("--run-a", required=True, type=Path)
    p.add_argument("--run-b", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "compare":
            args.out.mkdir(parents=True, exist_ok=True)
            return cmd_compare(args.run_a, args.run_b, args.out)
        if args.command == "rom":
            args.out.mkdir(parents=True, exist_ok=True)
            return cmd_rom(args.dataset, args.out, args)
        cfg = load_config(args.config)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "synthesize":
            return cmd_synthesize(cfg, args.out, args)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.out, args)
        if args.command == "invert":
            return cmd_invert(cfg, args.out, args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except WaveromError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
