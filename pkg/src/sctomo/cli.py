"""Command line interface: simulate counting runs, reconstruct states from
count files, and drive the sweep studies.

Exit codes: 0 success, 2 malformed or inconsistent input, 3 estimator did
not converge (the result file is still written). Outputs are written
atomically and carry a format version; the tool refuses inputs written by a
newer major version.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, estimate, simulate
from .estimate import OptimizerConfig
from .fileio import FORMAT_VERSION, FormatVersionError, read_json, write_csv, write_json
from .measurements import PROTOCOLS, setting_set_from_dict, setting_set_to_dict

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NOT_CONVERGED = 3


class InputError(ValueError):
    """User-facing input problem; reported on stderr with exit code 2."""


def _load_json(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise InputError(f"{path}: no such file")
    try:
        return read_json(p)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    except FormatVersionError as exc:
        raise InputError(str(exc)) from exc


def _write_manifest(out_dir: Path, command: str, config_path: str | None, seed: int | None) -> None:
    write_json(
        out_dir / "manifest.json",
        {
            "command": command,
            "config_path": config_path,
            "output_dir": str(out_dir),
            "seed": seed,
        },
    )


def _resolve_seed(doc: dict, override: int | None) -> int:
    if override is not None:
        return override
    if doc.get("seed") is not None:
        return int(doc["seed"])
    # No seed anywhere: draw one from OS entropy and record it in the manifest.
    return int(np.random.SeedSequence().entropy % (1 << 63))


def _ensure_out(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _optimizer_from_args(args) -> OptimizerConfig | None:
    kwargs = {}
    if getattr(args, "starts", None) is not None:
        kwargs["n_starts"] = args.starts
    if getattr(args, "max_evals", None) is not None:
        kwargs["max_evals"] = args.max_evals
    if getattr(args, "alpha_grid", None):
        try:
            grid = tuple(float(x) for x in args.alpha_grid.split(","))
        except ValueError as exc:
            raise InputError(f"--alpha-grid: {exc}") from exc
        kwargs["alpha_grid"] = grid
    if not kwargs:
        return None
    try:
        return OptimizerConfig(**kwargs)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def cmd_simulate(args) -> int:
    doc = _load_json(args.config)
    out = _ensure_out(args.out)
    seed = _resolve_seed(doc, args.seed)
    if args.photons is not None:
        doc = dict(doc, photons_per_setting=args.photons)
    try:
        cfg = simulate.config_from_dict(doc, seed_override=seed)
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{args.config}: {exc}") from exc

    if args.batch_14:
        if cfg.setting_set.n_qubits != 1:
            raise InputError("--batch-14 needs a single-qubit setting set")
        index = []
        for src in simulate.fourteen_state_suite():
            run_cfg = simulate.ExperimentConfig(
                src, cfg.setting_set, cfg.true_alphas, cfg.photons_per_setting, seed, cfg.photon_weights
            )
            records = simulate.sample_counts(run_cfg)
            fname = f"counts_{src.label}.csv"
            simulate.write_counts_csv(out / fname, records)
            index.append({"state": src.label, "counts": fname})
        write_json(out / "index.json", {"runs": index, "seed": seed})
    else:
        records = simulate.sample_counts(cfg)
        simulate.write_counts_csv(out / "counts.csv", records)
    write_json(out / "settings.json", setting_set_to_dict(cfg.setting_set))
    write_json(out / "config.json", simulate.config_to_dict(cfg))
    _write_manifest(out, "simulate", args.config, seed)
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    out = _ensure_out(args.out)
    settings_doc = _load_json(args.settings)
    try:
        sset = setting_set_from_dict(settings_doc)
    except ValueError as exc:
        raise InputError(f"{args.settings}: {exc}") from exc
    try:
        records = simulate.read_counts_csv(args.counts)
    except (ValueError, FileNotFoundError, FormatVersionError) as exc:
        raise InputError(f"{args.counts}: {exc}") from exc

    opt = _optimizer_from_args(args)
    try:
        result = estimate.reconstruct_from_records(sset, records, mode=args.mode, opt=opt)
    except (estimate.DegenerateDesignError, ValueError) as exc:
        raise InputError(str(exc)) from exc

    payload = estimate.result_to_dict(result)
    payload["mode"] = args.mode
    if args.mc:
        model = estimate.LikelihoodModel.from_records(sset, records)
        bars = analysis.monte_carlo_errors(
            model, opt, args.mc, ["alpha"] if sset.n_unknowns else ["fidelity"],
            seed=args.seed or 0, reference=result,
        )
        payload["error_bars"] = [
            {
                "quantity": b.quantity,
                "label": b.label,
                "mean": b.mean,
                "std": b.std,
                "n_resamples": b.n_resamples,
                "low_confidence": b.low_confidence,
                "n_failures": b.n_failures,
            }
            for b in bars
        ]
    write_json(out / "result.json", payload)
    _write_manifest(out, "reconstruct", None, args.seed)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def _sources_from(doc, where: str) -> list[simulate.SourceSpec]:
    if doc == "fourteen":
        return list(simulate.fourteen_state_suite())
    if not isinstance(doc, list) or not doc:
        raise InputError(f"{where}: 'states' must be a non-empty list or 'fourteen'")
    try:
        return [simulate.source_from_dict(d) for d in doc]
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{where}: bad source entry: {exc}") from exc


def cmd_sweep(args) -> int:
    doc = _load_json(args.config)
    out = _ensure_out(args.out)
    opt = _optimizer_from_args(args)

    sset = None
    if doc.get("settings") is not None:
        sset = setting_set_from_dict(doc["settings"])
    elif doc.get("protocol"):
        name = str(doc["protocol"])
        if name not in PROTOCOLS:
            raise InputError(f"unknown protocol {name!r}")
        sset = PROTOCOLS[name]()

    if args.kind == "retardance":
        for key in ("states", "alphas"):
            if key not in doc:
                raise InputError(f"{args.config}: missing field {key!r}")
        states = _sources_from(doc["states"], args.config)
        alphas = [float(a) for a in doc["alphas"]]
        photons = float(args.photons if args.photons is not None else doc.get("photons", 1000.0))
        seeds = doc.get("seeds", [0])
        try:
            report = analysis.retardance_sweep(states, alphas, photons, seeds, sset, opt)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        seed_note = None
    else:
        for key in ("state", "alpha", "photon_levels"):
            if key not in doc:
                raise InputError(f"{args.config}: missing field {key!r}")
        levels = [float(x) for x in doc["photon_levels"]]
        if not levels:
            raise InputError(f"{args.config}: photon_levels is empty")
        runs = int(args.runs if args.runs is not None else doc.get("runs_per_level", 100))
        seed = int(args.seed if args.seed is not None else doc.get("seed", 0))
        try:
            state = simulate.source_from_dict(doc["state"])
            report = analysis.noise_sweep(state, float(doc["alpha"]), levels, runs, seed, sset, opt)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        seed_note = seed

    write_csv(out / "cells.csv", analysis.CELL_HEADER, analysis.report_cell_rows(report))
    if args.kind == "noise":
        for point in report.points:
            single = analysis.SweepReport(report.axis, (point,), report.seeds_used)
            rows = analysis.report_histogram_rows(single)
            level = "inf" if math.isinf(point.axis_value) else str(int(point.axis_value))
            write_csv(out / f"hist_photons_{level}.csv", analysis.HISTOGRAM_HEADER, rows)
    write_json(out / "summary.json", analysis.report_summary(report))
    _write_manifest(out, f"sweep:{args.kind}", args.config, seed_note)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sctomo",
        description="Self-calibrating quantum state tomography: simulate, reconstruct, sweep.",
    )
    parser.add_argument("--version", action="version", version=f"sctomo format {FORMAT_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="simulate a counting run from a config JSON")
    p_sim.add_argument("--config", required=True, help="experiment config JSON")
    p_sim.add_argument("--out", default=".", help="output directory")
    p_sim.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_sim.add_argument("--photons", type=float, default=None, help="override photons_per_setting")
    p_sim.add_argument("--batch-14", action="store_true", help="run the 14-state suite instead of the config source")

    p_rec = sub.add_parser("reconstruct", help="reconstruct a state from a counts CSV")
    p_rec.add_argument("--counts", required=True, help="counts CSV")
    p_rec.add_argument("--settings", required=True, help="setting-set JSON")
    p_rec.add_argument("--mode", required=True, choices=["sct", "st"])
    p_rec.add_argument("--out", default=".", help="output directory")
    p_rec.add_argument("--seed", type=int, default=None, help="seed for --mc resampling")
    p_rec.add_argument("--mc", type=int, default=0, metavar="N", help="append N-resample Poisson error bars")
    p_rec.add_argument("--starts", type=int, default=None, help="multi-start budget")
    p_rec.add_argument("--max-evals", type=int, default=None, help="total objective evaluation budget")
    p_rec.add_argument("--alpha-grid", default=None, help="comma-separated initial angles in (0, pi]")

    p_swp = sub.add_parser("sweep", help="run an angle or noise sweep")
    p_swp.add_argument("kind", choices=["retardance", "noise"])
    p_swp.add_argument("--config", required=True, help="sweep config JSON")
    p_swp.add_argument("--out", default=".", help="output directory")
    p_swp.add_argument("--seed", type=int, default=None)
    p_swp.add_argument("--photons", type=float, default=None)
    p_swp.add_argument("--runs", type=int, default=None)
    p_swp.add_argument("--starts", type=int, default=None)
    p_swp.add_argument("--alpha-grid", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"simulate": cmd_simulate, "reconstruct": cmd_reconstruct, "sweep": cmd_sweep}
    try:
        return handlers[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
