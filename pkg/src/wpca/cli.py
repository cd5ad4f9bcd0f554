"""Command-line entry point.

Every subcommand accepts ``--config FILE.json`` whose keys are the long flag
names with dashes replaced by underscores; flags given on the command line
override the file.  ``WPCA_SEED`` in the environment overrides ``--seed``.
Each run writes ``meta.json`` (resolved parameters, seed, version) to
``--out``.

Exit status: 0 on success, 1 for invalid input, 2 for numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .adacv import DEFAULT_KCV, DEFAULT_PSTAR, ada_wpca
from .dataio import preprocess_panel, read_panel_csv, reconstruction_eval
from .estimators import estimate_rank, fit_method, rank_ratios
from .exceptions import InputError, NumericalError, ParameterError, ParseError
from .simulate.dgp import DgpConfig, diagonal_setting, equicorr_setting
from .simulate.studies import InferenceSample, run_cv_study, run_estimation_study, run_inference_study
from .weights import ToeplitzWeights, build_grid, grid_from_gammas

log = logging.getLogger("wpca")

# Defaults applied after the config file and the flags are merged.
COMMON_DEFAULTS = {"out": ".", "seed": 0, "threads": None, "log_level": "WARNING"}
DEFAULTS = {
    "fit": {"layout": "time_rows", "max_missing": 0.05, "method": "wpca", "gamma": "1", "r": None},
    "cv-select": {
        "layout": "time_rows",
        "max_missing": 0.05,
        "r": None,
        "ranks": None,
        "grid_K": 1,
        "grid_step": 1.0 / 9.0,
        "grid": None,
        "kcv": DEFAULT_KCV,
        "pstar": DEFAULT_PSTAR,
    },
    "rank": {"layout": "time_rows", "max_missing": 0.05, "rmax": None},
    "sim-estimation": {"cells": None, "reps": 100, "kcv": DEFAULT_KCV, "pstar": DEFAULT_PSTAR},
    "sim-cv": {"cells": None, "reps": 100, "kcv": DEFAULT_KCV, "pstar": DEFAULT_PSTAR},
    "sim-inference": {
        "setting": "equicorr",
        "N": 200,
        "T": 200,
        "rho_off": 0.6,
        "target": "loading",
        "method": "wpca",
        "gamma": "0,1",
        "index": None,
        "reps": 500,
        "bins": 30,
    },
    "eval-reconstruction": {
        "layout": "time_rows",
        "max_missing": 0.05,
        "qtr": 0.7,
        "method": "adawpca",
        "r": 1,
        "reps": 100,
        "kcv": DEFAULT_KCV,
        "pstar": DEFAULT_PSTAR,
    },
    "export-plot-data": {"bins": 30},
}
REQUIRED = {
    "fit": ("input", "r"),
    "cv-select": ("input",),
    "rank": ("input",),
    "eval-reconstruction": ("input",),
    "export-plot-data": ("input",),
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # Every default is None so that "not given" can be told apart from a value.
    common.add_argument("--config", help="JSON file of parameters; flags override it")
    common.add_argument("--out", help="output directory (default: current directory)")
    common.add_argument("--seed", type=int, help="base RNG seed; WPCA_SEED overrides it")
    common.add_argument("--threads", type=int, help="worker processes for studies (default: all cores)")
    common.add_argument("--log-level", dest="log_level", help="logging level")

    def panel_args(p):
        p.add_argument("--input", help="panel CSV (header row, label first column)")
        p.add_argument("--layout", choices=["time_rows", "unit_rows"])
        p.add_argument("--max-missing", dest="max_missing", type=float, help="drop variables above this missing share")

    def sim_args(p):
        p.add_argument("--reps", type=int)
        p.add_argument("--kcv", type=int, help="number of CV mask draws")
        p.add_argument("--pstar", type=float, help="CV retention rate")
        p.add_argument("--setting", choices=["equicorr", "diagonal"], help="single-cell shortcut")
        p.add_argument("--N", type=int)
        p.add_argument("--T", type=int)
        p.add_argument("--rho-off", dest="rho_off", type=float)

    top = argparse.ArgumentParser(prog="wpca", description="Weighted PCA for factor models.")
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("fit", parents=[common], help="fit WPCA, PCA or HeteroPCA to a panel")
    panel_args(p)
    p.add_argument("--method", choices=["wpca", "pca", "heteropca"])
    p.add_argument("--gamma", help="comma-separated Toeplitz weights gamma_0,...,gamma_K")
    p.add_argument("--r", type=int)

    p = sub.add_parser("cv-select", parents=[common], help="choose weights (and rank) by masked CV")
    panel_args(p)
    p.add_argument("--r", type=int)
    p.add_argument("--ranks", help="comma-separated candidate ranks for joint selection")
    p.add_argument("--grid-K", dest="grid_K", type=int, help="largest lag in the simplex grid")
    p.add_argument("--grid-step", dest="grid_step", type=float, help="simplex grid spacing")
    p.add_argument("--kcv", type=int)
    p.add_argument("--pstar", type=float)

    p = sub.add_parser("rank", parents=[common], help="eigenvalue-ratio rank estimate")
    panel_args(p)
    p.add_argument("--rmax", type=int)

    p = sub.add_parser("sim-estimation", parents=[common], help="subspace estimation study")
    sim_args(p)
    p = sub.add_parser("sim-cv", parents=[common], help="CV selection-quality study")
    sim_args(p)

    p = sub.add_parser("sim-inference", parents=[common], help="normality study of standardized errors")
    p.add_argument("--setting", choices=["equicorr", "diagonal"])
    p.add_argument("--N", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--rho-off", dest="rho_off", type=float)
    p.add_argument("--target", choices=["loading", "factor"])
    p.add_argument("--method", choices=["wpca", "pca"])
    p.add_argument("--gamma")
    p.add_argument("--index", type=int, help="zero-based row of Lhat or Fhat")
    p.add_argument("--reps", type=int)
    p.add_argument("--bins", type=int)

    p = sub.add_parser("eval-reconstruction", parents=[common], help="masked reconstruction error")
    panel_args(p)
    p.add_argument("--qtr", type=float, help="training retention rate")
    p.add_argument("--method", choices=["adawpca", "pca", "heteropca"])
    p.add_argument("--r", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--kcv", type=int)
    p.add_argument("--pstar", type=float)

    p = sub.add_parser("export-plot-data", parents=[common], help="QQ and histogram data from a sample CSV")
    p.add_argument("--input", help="samples.csv written by sim-inference")
    p.add_argument("--bins", type=int)
    return top


def resolve(command: str, ns: argparse.Namespace, environ=None) -> dict:
    """Merge defaults, config file, flags and the seed override, in that order."""
    environ = os.environ if environ is None else environ
    cfg = dict(COMMON_DEFAULTS)
    cfg.update(DEFAULTS.get(command, {}))
    if ns.config:
        path = Path(ns.config)
        try:
            file_cfg = json.loads(path.read_text())
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ParseError(f"config {path}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ParseError(f"config {path} must hold a JSON object")
        cfg.update({k.replace("-", "_"): v for k, v in file_cfg.items()})
    for k, v in vars(ns).items():
        if k not in ("command", "config") and v is not None:
            cfg[k] = v
    if environ.get("WPCA_SEED"):
        try:
            cfg["seed"] = int(environ["WPCA_SEED"])
        except ValueError as exc:
            raise ParameterError(f"WPCA_SEED must be an integer, got {environ['WPCA_SEED']!r}") from exc
    if cfg.get("threads") is None:
        cfg["threads"] = os.cpu_count() or 1
    for key in REQUIRED.get(command, ()):
        if cfg.get(key) is None:
            raise ParameterError(f"{command}: --{key.replace('_', '-')} is required")
    cfg["command"] = command
    return cfg


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise ParameterError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text) -> list[int]:
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise ParameterError(f"expected integers, got {text!r}")
    return [int(v) for v in vals]


def _load_panel(cfg):
    src = read_panel_csv(cfg["input"], cfg["layout"])
    return preprocess_panel(src, cfg["max_missing"])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_json_default))


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _cells(cfg) -> list[DgpConfig]:
    """Study cells from the ``cells`` list or the single-cell shortcut flags.

    A cell is ``{"setting": "equicorr"|"diagonal", "N": .., "T": ..}`` plus
    optional ``rho_off`` or any :class:`DgpConfig` field.
    """
    cells = cfg.get("cells")
    if cells is None:
        if cfg.get("N") is None or cfg.get("T") is None:
            raise ParameterError("give --N and --T (and optionally --setting) or a 'cells' list in --config")
        cells = [{"setting": cfg.get("setting") or "equicorr", "N": cfg["N"], "T": cfg["T"]}]
        if cfg.get("rho_off") is not None:
            cells[0]["rho_off"] = cfg["rho_off"]
    out = []
    for c in cells:
        c = dict(c)
        setting = c.pop("setting", "equicorr")
        N, T = int(c.pop("N")), int(c.pop("T"))
        if setting == "equicorr":
            out.append(equicorr_setting(N, T, rho_off=float(c.pop("rho_off", 0.6)), **c))
        elif setting == "diagonal":
            out.append(diagonal_setting(N, T, **c))
        else:
            raise ParameterError(f"unknown setting {setting!r}")
    return out


def cmd_fit(cfg, out: Path) -> dict:
    panel = _load_panel(cfg)
    w = ToeplitzWeights(np.asarray(_floats(cfg["gamma"]))) if cfg["method"] == "wpca" else None
    fit = fit_method(cfg["method"], panel.X, int(cfg["r"]), w)
    fit.save(out / "fit")
    return {"N": panel.N, "T": panel.T, "sigma": fit.sigma.tolist()}


def cmd_cv_select(cfg, out: Path) -> dict:
    panel = _load_panel(cfg)
    if cfg.get("grid") is not None:
        grid = grid_from_gammas(cfg["grid"])
    else:
        grid = build_grid(int(cfg["grid_K"]), float(cfg["grid_step"]))
    ranks = _ints(cfg["ranks"]) if cfg.get("ranks") is not None else None
    if ranks is None and cfg.get("r") is None:
        raise ParameterError("cv-select needs --r or --ranks")
    report, fit = ada_wpca(
        panel.X, grid, None if ranks is not None else int(cfg["r"]),
        K_cv=int(cfg["kcv"]), pstar=float(cfg["pstar"]), seed=int(cfg["seed"]), ranks=ranks,
    )
    (out / "cv_report.json").write_text(report.to_json(indent=2))
    fit.save(out / "fit")
    return {"chosen_gamma": report.chosen_weights.gamma.tolist(), "chosen_rank": report.chosen_rank or fit.r}


def cmd_rank(cfg, out: Path) -> dict:
    panel = _load_panel(cfg)
    rmax = cfg.get("rmax")
    res = {"r_hat": estimate_rank(panel.X, rmax), "ratios": rank_ratios(panel.X, rmax).tolist()}
    _write_json(out / "rank.json", res)
    print(json.dumps(res))
    return {"r_hat": res["r_hat"]}


def cmd_sim_estimation(cfg, out: Path) -> dict:
    res = run_estimation_study(
        _cells(cfg), reps=int(cfg["reps"]), seed=int(cfg["seed"]),
        K_cv=int(cfg["kcv"]), pstar=float(cfg["pstar"]), n_jobs=int(cfg["threads"]),
    )
    res.to_csv(out / "estimation.csv")
    (out / "estimation.json").write_text(res.to_json(indent=2))
    return {"rows": len(res.rows)}


def cmd_sim_cv(cfg, out: Path) -> dict:
    res = run_cv_study(
        _cells(cfg), reps=int(cfg["reps"]), seed=int(cfg["seed"]),
        K_cv=int(cfg["kcv"]), pstar=float(cfg["pstar"]), n_jobs=int(cfg["threads"]),
    )
    res.to_csv(out / "cv_study.csv")
    (out / "cv_study.json").write_text(res.to_json(indent=2))
    return {"rows": len(res.rows)}


def _write_plot_data(sample: InferenceSample, out: Path, bins: int) -> None:
    np.savetxt(out / "qq.csv", sample.qq_points(), delimiter=",", fmt="%.17g",
               header="theoretical,sample", comments="")
    counts, edges = sample.histogram(bins)
    with (out / "histogram.csv").open("w") as fh:
        fh.write("left,right,density\n")
        for a, b, c in zip(edges[:-1], edges[1:], counts):
            fh.write(f"{a!r},{b!r},{c!r}\n")


def cmd_sim_inference(cfg, out: Path) -> dict:
    setting = cfg["setting"]
    N, T = int(cfg["N"]), int(cfg["T"])
    dgp = equicorr_setting(N, T, rho_off=float(cfg["rho_off"])) if setting == "equicorr" else diagonal_setting(N, T)
    w = ToeplitzWeights(np.asarray(_floats(cfg["gamma"])))
    sample = run_inference_study(
        dgp, target=cfg["target"], reps=int(cfg["reps"]), seed=int(cfg["seed"]),
        method=cfg["method"], weights=w, index=cfg.get("index"), n_jobs=int(cfg["threads"]),
    )
    sample.to_csv(out / "samples.csv")
    _write_json(out / "summary.json", sample.summary())
    _write_plot_data(sample, out, int(cfg["bins"]))
    return sample.summary()


def cmd_eval_reconstruction(cfg, out: Path) -> dict:
    panel = _load_panel(cfg)
    res = reconstruction_eval(
        panel.X, float(cfg["qtr"]), cfg["method"], int(cfg["r"]), reps=int(cfg["reps"]),
        seed=int(cfg["seed"]), K_cv=int(cfg["kcv"]), pstar=float(cfg["pstar"]),
    )
    (out / "reconstruction.json").write_text(res.to_json(indent=2))
    print(json.dumps(res.summary()))
    return res.summary()


def cmd_export_plot_data(cfg, out: Path) -> dict:
    path = Path(cfg["input"])
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ParseError(f"cannot read samples from {path}: {exc}") from exc
    if data.shape[0] == 0:
        raise ParameterError(f"{path} holds no samples")
    sample = InferenceSample(data[:, -1], "unknown", -1, "unknown")
    _write_plot_data(sample, out, int(cfg["bins"]))
    return sample.summary()


COMMANDS = {
    "fit": cmd_fit,
    "cv-select": cmd_cv_select,
    "rank": cmd_rank,
    "sim-estimation": cmd_sim_estimation,
    "sim-cv": cmd_sim_cv,
    "sim-inference": cmd_sim_inference,
    "eval-reconstruction": cmd_eval_reconstruction,
    "export-plot-data": cmd_export_plot_data,
}


def dispatch(argv=None, environ=None) -> int:
    parser = _parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in COMMANDS and not argv[0].startswith("-"):
        parser.print_usage(sys.stderr)
        if argv:
            print(f"wpca: unknown command {argv[0]!r}", file=sys.stderr)
        return 1
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help/--version and 2 for bad flags; bad flags are input errors.
        return 0 if exc.code == 0 else 1
    if ns.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        cfg = resolve(ns.command, ns, environ)
        logging.basicConfig(level=str(cfg["log_level"]).upper(), format="%(levelname)s %(name)s: %(message)s")
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        result = COMMANDS[ns.command](cfg, out)
        meta = {"version": __version__, "command": ns.command, "seed": cfg["seed"], "params": cfg, "result": result}
        _write_json(out / "meta.json", meta)
    except InputError as exc:
        print(f"wpca: error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"wpca: numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
