"""Command-line front end: ``run``, ``predict-grid`` and ``list-problems``.

Exit codes are 0 on success, 1 on a runtime failure (for example an
ensemble collapse) and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .adaptive import AdaptiveSettings, RunState, run_adaptive
from .benchmarks import PROBLEMS, BenchmarkProblem, get_problem
from .data import Dataset
from .ensemble import EnsembleConfig, ensemble_from_manifest, manifest
from .errors import (
    EnsembleCollapse,
    InsufficientDataError,
    NonFiniteError,
    QuadratureFailure,
    SingularCorrelation,
)
from .kriging import GprSettings, gpr_from_dict, gpr_predict, gpr_to_dict, run_ego
from .numerics import t_ppf

OUTPUT_ENV = "MFRANN_OUTPUT_DIR"
DEFAULT_OUTPUT = "mfrann_runs"
METHODS = ("ensemble", "kriging")
RUNTIME_ERRORS = (
    EnsembleCollapse,
    SingularCorrelation,
    NonFiniteError,
    InsufficientDataError,
    QuadratureFailure,
    np.linalg.LinAlgError,
)


class UsageError(Exception):
    """Invalid configuration detected after argument parsing."""


def parse_seeds(text) -> list[int]:
    """``"0..4"`` (inclusive), ``"0,2,5"``, ``"3"`` or a JSON list of ints."""
    if isinstance(text, (list, tuple)):
        seeds = [int(s) for s in text]
    elif isinstance(text, int):
        seeds = [text]
    else:
        seeds = []
        for part in str(text).split(","):
            part = part.strip()
            if ".." in part:
                lo, hi = (int(v) for v in part.split("..", 1))
                if hi < lo:
                    raise ValueError(f"empty seed range {part!r}")
                seeds.extend(range(lo, hi + 1))
            elif part:
                seeds.append(int(part))
    if not seeds:
        raise ValueError("at least one seed is required")
    return seeds


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write_json(path: Path, doc: dict):
    text = json.dumps(doc, sort_keys=True, indent=1, allow_nan=False, default=_json_default)
    path.write_text(text + "\n", encoding="utf-8")


def _write_csv(path: Path, header: list[str], rows: list[list]):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


# ---------------------------------------------------------------- run


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a JSON object")
    return doc


def _resolve_problem(name: str) -> BenchmarkProblem:
    available = ", ".join(sorted(PROBLEMS))
    try:
        return get_problem(name)
    except KeyError as exc:
        raise UsageError(f"unknown problem {name!r}; available problems: {available}") from exc
    except (ImportError, AttributeError, TypeError, ValueError) as exc:
        raise UsageError(f"cannot load problem {name!r}: {exc}; available problems: {available}") from exc


def build_run_config(args: argparse.Namespace) -> dict:
    """Merge the JSON config file with command-line overrides."""
    cfg = _load_config(args.config)
    for key in ("problem", "method", "seeds", "output_dir", "ei_tolerance", "n_init", "max_iterations"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    cfg.setdefault("method", "ensemble")
    cfg.setdefault("seeds", "0")
    if "problem" not in cfg:
        raise UsageError(f"--problem is required; available problems: {', '.join(sorted(PROBLEMS))}")
    if cfg["method"] not in METHODS:
        raise UsageError(f"unknown method {cfg['method']!r}; choose from {', '.join(METHODS)}")
    try:
        cfg["seeds"] = parse_seeds(cfg["seeds"])
    except ValueError as exc:
        raise UsageError(f"invalid seeds: {exc}") from exc
    cfg["output_dir"] = cfg.get("output_dir") or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT
    return cfg


def _settings(cfg: dict, seed: int) -> tuple[AdaptiveSettings, GprSettings]:
    try:
        ensemble = EnsembleConfig.from_dict(cfg.get("ensemble", {}))
        gpr = GprSettings(**cfg.get("kriging", {}))
        settings = AdaptiveSettings(
            n_init=cfg.get("n_init"),
            ei_tolerance=float(cfg.get("ei_tolerance", 1e-4)),
            max_iterations=cfg.get("max_iterations"),
            seed=seed,
            ensemble_config=ensemble,
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid settings: {exc}") from exc
    return settings, gpr


def _dataset_doc(data: Dataset) -> dict:
    return {"X": data.X.tolist(), "y": data.y.tolist(), "bounds": data.bounds.tolist()}


def _run_manifest(cfg: dict, state: RunState) -> dict:
    doc = {
        "method": state.method,
        "problem": cfg["problem"],
        "seed": state.seed,
        "dataset": _dataset_doc(state.dataset),
        "dataset_fingerprint": state.dataset.fingerprint(),
        "summary": state.summary(),
    }
    if state.method == "ensemble":
        doc["ensemble"] = manifest(state.surrogate)
    else:
        doc["kriging"] = gpr_to_dict(state.surrogate)
    return doc


def cmd_run(args: argparse.Namespace) -> int:
    cfg = build_run_config(args)
    problem = _resolve_problem(cfg["problem"])
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{problem.name}_{cfg['method']}"
    rows = []
    for seed in cfg["seeds"]:
        settings, gpr = _settings(cfg, seed)
        trace = out / f"{stem}_seed{seed}.jsonl"
        if cfg["method"] == "ensemble":
            state = run_adaptive(problem, settings, trace)
        else:
            state = run_ego(problem, settings, trace, gpr)
        _write_json(out / f"{stem}_seed{seed}_manifest.json", _run_manifest(cfg, state))
        summary = state.summary()
        rows.append(
            [
                problem.name,
                cfg["method"],
                seed,
                summary["n_hf_samples"],
                summary["best_y"],
                summary["converged"],
            ]
        )
        print(
            f"{problem.name} {cfg['method']} seed={seed} n_hf={summary['n_hf_samples']} "
            f"best_y={summary['best_y']:.6g} converged={summary['converged']}"
        )
    _write_csv(
        out / f"{stem}_summary.csv",
        ["problem", "method", "seed", "n_hf_samples", "best_y", "converged"],
        rows,
    )
    return 0


# ---------------------------------------------------------------- predict-grid


def _grid(bounds: np.ndarray, points: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, points) for lo, hi in bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.reshape(-1) for m in mesh])


def _read_points(path: str, d: int) -> np.ndarray:
    try:
        X = np.loadtxt(path, delimiter=",", ndmin=2)
    except OSError as exc:
        raise UsageError(f"points file not found: {path}") from exc
    except ValueError as exc:
        raise UsageError(f"points file must be numeric CSV: {exc}") from exc
    if X.shape[1] != d:
        raise UsageError(f"points file has {X.shape[1]} columns, expected {d}")
    return X


def predict_table(doc: dict, X: np.ndarray, level: float = 0.95) -> tuple[list[str], list[list]]:
    """Rows of ``x..., mean, scale, dof, lo, hi`` for the model stored in ``doc``."""
    data = doc["dataset"]
    bounds = np.asarray(data["bounds"], dtype=float)
    z = (2.0 * X - (bounds[:, 0] + bounds[:, 1])) / (bounds[:, 1] - bounds[:, 0])
    if doc["method"] == "ensemble":
        problem = _resolve_problem(doc["problem"])
        ensemble = ensemble_from_manifest(doc["ensemble"], problem.emulators())
        mean, scale, dof = ensemble.predictive(z)
        half = t_ppf(0.5 + 0.5 * level, dof) * scale
        dof_col = [dof] * len(mean)
    else:
        model = gpr_from_dict(doc["kriging"])
        mean, scale = gpr_predict(model, z)
        half = ndtri(0.5 + 0.5 * level) * scale
        dof_col = ["inf"] * len(mean)
    tag = f"{round(100 * level):d}"
    header = [f"x{j + 1}" for j in range(X.shape[1])] + ["mean", "scale", "dof", f"lo{tag}", f"hi{tag}"]
    rows = [
        [*X[i].tolist(), mean[i], scale[i], dof_col[i], mean[i] - half[i], mean[i] + half[i]]
        for i in range(X.shape[0])
    ]
    return header, rows


def cmd_predict_grid(args: argparse.Namespace) -> int:
    path = Path(args.manifest)
    if not path.is_file():
        raise UsageError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"manifest is not valid JSON: {exc}") from exc
    if not 0.0 < args.level < 1.0:
        raise UsageError("--level must lie strictly between 0 and 1")
    bounds = np.asarray(doc["dataset"]["bounds"], dtype=float)
    if args.points_file is not None:
        X = _read_points(args.points_file, bounds.shape[0])
    else:
        if args.points < 2:
            raise UsageError("--points must be at least 2")
        X = _grid(bounds, args.points)
    header, rows = predict_table(doc, X, args.level)
    output = Path(args.output) if args.output else path.with_name(path.stem + "_grid.csv")
    output.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(output, header, rows)
    print(f"wrote {len(rows)} rows to {output}")
    return 0


# ---------------------------------------------------------------- list-problems


def cmd_list_problems(args: argparse.Namespace) -> int:
    for name in sorted(PROBLEMS):
        problem = PROBLEMS[name]()
        lf = ", ".join(n for n, _ in problem.lf_list) or "none"
        print(f"{name}\td={problem.d}\tLF: {lf}\t{problem.description}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfrann",
        description="Adaptive multi-fidelity optimization with emulator-embedded network ensembles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run adaptive optimization for one or more seeds")
    run.add_argument("--problem", help=f"registered name ({', '.join(sorted(PROBLEMS))}) or module:factory")
    run.add_argument("--method", choices=METHODS)
    run.add_argument("--seeds", help="e.g. 0..4 or 0,2,7 (default 0)")
    run.add_argument("--config", help="JSON file with run settings; flags override it")
    run.add_argument("--output-dir", dest="output_dir", help=f"default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT}")
    run.add_argument("--ei-tolerance", dest="ei_tolerance", type=float)
    run.add_argument("--n-init", dest="n_init", type=int)
    run.add_argument("--max-iterations", dest="max_iterations", type=int)
    run.set_defaults(func=cmd_run)

    grid = sub.add_parser("predict-grid", help="tabulate a saved model's predictive on a grid")
    grid.add_argument("manifest", help="manifest JSON written by `run`")
    grid.add_argument("--points", type=int, default=101, help="grid points per dimension")
    grid.add_argument("--points-file", dest="points_file", help="CSV of points instead of a grid")
    grid.add_argument("--level", type=float, default=0.95, help="central interval probability")
    grid.add_argument("--output", help="CSV path (default next to the manifest)")
    grid.set_defaults(func=cmd_predict_grid)

    lst = sub.add_parser("list-problems", help="show the registered benchmark problems")
    lst.set_defaults(func=cmd_list_problems)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mfrann: error: {exc}", file=sys.stderr)
        return 2
    except RUNTIME_ERRORS as exc:
        print(f"mfrann: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
