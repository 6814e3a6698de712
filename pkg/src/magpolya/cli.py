"""``magpolya`` command line: run one experiment, write CSV/JSON artifacts and a manifest.

Parameters come from built-in defaults, then an optional ``--config`` file of
flat ``key=value`` lines, then per-key command-line flags (``--flux-ladder
16,32,64``).  Spectral parameters are given in units of ``B``.

Exit status: 0 when every assertion of the experiment passed, 1 when some
assertion failed (artifacts are still written), 2 for usage or configuration
errors, 3 for numerical failures.
"""
from __future__ import annotations

import argparse
import logging
import math
import platform
import sys
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from . import bounds as bd
from . import experiments as ex
from .errors import ConfigurationError, MagPolyaError
from .io import atomic_write_json, read_config, write_csv
from .spectra import write_spectrum

log = logging.getLogger("magpolya")


# -- typed parameters ---------------------------------------------------------

def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.replace(";", ",").split(",") if x.strip()]


def _ints(s: str) -> list[int]:
    return [int(x) for x in s.replace(";", ",").split(",") if x.strip()]


@dataclass(frozen=True)
class Param:
    default: Any
    parse: Callable[[str], Any]
    help: str = ""


EXPERIMENTS: dict[str, dict[str, Param]] = {
    "symbol-table": {
        "B": Param(1.0, float, "field strength"),
        "gammas": Param([0.0, 0.25, 0.5, 1.0, 1.5, 2.0], _floats, "moment orders"),
        "top": Param(8.0, float, "largest lambda, in units of B"),
        "step": Param(0.25, float, "lambda spacing, in units of B"),
    },
    "torus-verify": {
        "B": Param(1.0, float, "field strength"),
        "flux": Param(8, int, "flux quanta through the torus"),
        "h_policy": Param(0.02, float, "resolution policy B h^2 <= h_policy"),
        "n": Param(0, int, "grid points per side (0: from h_policy)"),
        "levels": Param(3, int, "number of Landau levels checked"),
    },
    "dos-scan": {
        "B": Param(1.0, float, "field strength"),
        "lambda": Param(3.5, float, "spectral parameter, in units of B"),
        "flux_ladder": Param([16, 32, 64], _ints, "flux values of the squares"),
        "h_policy": Param(0.02, float, "resolution policy B h^2 <= h_policy"),
        "dos_tol": Param(ex.DOS_TOL, float, "required final ratio"),
    },
    "bc-bracket": {
        "B": Param(1.0, float, "field strength"),
        "fluxes": Param([16, 64], _ints, "flux values of the squares"),
        "lambdas": Param([0.5, 2.0, 3.5, 5.5], _floats, "spectral parameters, in units of B"),
        "h_policy": Param(0.02, float, "resolution policy B h^2 <= h_policy"),
    },
    "bounds-matrix": {
        "Bs": Param([0.5, 1.0, 2.0], _floats, "field strengths"),
        "fluxes": Param([4, 16, 64], _ints, "flux values of the squares"),
        "gammas": Param([0.0, 0.5, 1.0, 1.5], _floats, "moment orders"),
        "top": Param(8.0, float, "largest lambda, in units of B"),
        "step": Param(0.25, float, "lambda spacing, in units of B"),
        "disk_r": Param(1.0, float, "disk radius"),
        "lshape_a": Param(1.0, float, "L-shape arm width"),
        "h_policy": Param(0.02, float, "resolution policy B h^2 <= h_policy"),
        "h_max": Param(0.05, float, "largest mesh width for disk and L-shape"),
        "zero_field": Param(True, _bool, "also run the B = 0 families"),
    },
    "counterexample": {
        "gamma": Param(0.0, float, "moment order in [0, 1)"),
        "B": Param(1.0, float, "field strength"),
        "epsilon": Param(0.4, float, "target is (1 - epsilon) R_gamma"),
        "flux_start": Param(16, int, "first flux value"),
        "max_flux": Param(128, int, "largest flux value tried"),
        "max_seconds": Param(math.inf, float, "wall-clock budget"),
        "flux_res": Param(0.02, float, "resolution policy B h^2 <= flux_res"),
        "deltas": Param([0.2, 0.1, 0.05], _floats, "gamma = 0: lambda = B(1 + delta)"),
    },
    "product-3d": {
        "B": Param(1.0, float, "field strength"),
        "flux": Param(16, int, "flux through the square cross-section"),
        "interval": Param(1.0, float, "interval length"),
        "gammas": Param([0.5, 1.0, 1.5], _floats, "moment orders (>= 1/2)"),
        "h_policy": Param(0.02, float, "resolution policy B h^2 <= h_policy"),
    },
}


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def resolve_params(experiment: str, config: dict[str, str], flags: dict[str, str | None]) -> dict[str, Any]:
    """Merge defaults, config-file values and flags; raise ConfigurationError listing bad fields."""
    spec = EXPERIMENTS[experiment]
    config = dict(config)
    named = config.pop("experiment", None)
    problems = []
    if named is not None and named != experiment:
        problems.append(f"experiment: config names {named!r} but the subcommand is {experiment!r}")
    for key in config:
        if key not in spec and key not in ("seed",):
            problems.append(f"{key}: unknown key for {experiment}")
    params = {k: p.default for k, p in spec.items()}
    for source, values in (("config", config), ("flag", flags)):
        for key, raw in values.items():
            if raw is None or key not in spec:
                continue
            try:
                params[key] = spec[key].parse(raw)
            except ValueError as exc:
                problems.append(f"{key}: bad {source} value {raw!r} ({exc})")
    if problems:
        raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(problems))
    return params


# -- runners --------------------------------------------------------------------

def _run_symbol_table(p, out: Path, seed: int):
    r = ex.symbol_table(p["B"], p["gammas"], tuple(ex.default_lambda_units(p["top"], p["step"])))
    write_csv(out / "symbol_table.csv", r.header, r.rows)
    write_csv(out / "constants.csv", ["gamma", "R_gamma", "rho_gamma_2", "sup_numeric", "sup_closed_form"],
              r.constants)
    return r.assertions, ["symbol_table.csv", "constants.csv"], {}


def _run_torus(p, out: Path, seed: int):
    r = ex.torus_verify(p["B"], p["flux"], p["h_policy"], p["n"] or None, seed=seed, levels=p["levels"])
    rows = []
    for k, c in enumerate(r.clusters):
        level, mult = r.predicted[k] if k < len(r.predicted) else (math.nan, 0)
        rows.append([k, c[0], c[1], c[2], level, mult])
    write_csv(out / "clusters.csv", ["k", "center", "width", "count", "level", "multiplicity"], rows)
    write_spectrum(r.slice, out / "spectrum.csv")
    return r.assertions, ["clusters.csv", "spectrum.csv", "spectrum.json"], {
        "h": r.h, "under_resolved": r.under_resolved}


def _run_dos(p, out: Path, seed: int):
    r = ex.dos_scan(p["B"], p["lambda"] * p["B"], p["flux_ladder"], p["h_policy"], p["dos_tol"])
    write_csv(out / "dos.csv", r.header, r.rows)
    return r.assertions, ["dos.csv"], {}


def _run_bracket(p, out: Path, seed: int):
    lams = ex.lambda_grid(p["B"], p["lambdas"])
    r = ex.bc_bracket(p["B"], p["fluxes"], [float(x) for x in lams], p["h_policy"])
    write_csv(out / "bracket.csv", r.header, r.rows)
    return r.assertions, ["bracket.csv"], {"defect_exponent": r.exponent}


def _run_bounds(p, out: Path, seed: int):
    r = ex.bounds_matrix(p["Bs"], p["fluxes"], p["gammas"], p["top"], p["step"], p["disk_r"], p["lshape_a"],
                         p["h_policy"], p["h_max"], p["zero_field"], seed=seed)
    write_csv(out / "bounds_report.csv", bd.REPORT_HEADER, [x.row() for x in r.reports])
    cases = [{"domain": c.label, "B": c.B, "h": c.h, "area": c.area, "tiling": c.tiling,
              "complete": c.complete, "liyau_min_ratio": c.liyau, "reports": len(c.reports)} for c in r.cases]
    atomic_write_json(out / "bounds_report.json", {
        "c_disc": r.c_disc, "violation_rule": f"ratio > 1 + {bd.VIOLATION_FACTOR} * c_disc * h^2 * lambda",
        "cases": cases})
    flags: dict[str, int] = {}
    for x in r.reports:
        flags[x.flag] = flags.get(x.flag, 0) + 1
    return r.assertions, ["bounds_report.csv", "bounds_report.json"], {"c_disc": r.c_disc, "flags": flags}


def _run_counterexample(p, out: Path, seed: int):
    budget = bd.Budget(max_flux=p["max_flux"], max_seconds=p["max_seconds"])
    r = bd.counterexample_search(p["gamma"], p["B"], p["epsilon"], budget, flux_start=p["flux_start"],
                                 flux_res=p["flux_res"], deltas=p["deltas"], seed=seed, keep_slice=True)
    arts = ["counterexample.json"]
    payload = r.as_dict()
    payload["spectrum_file"] = None
    if r.spectrum is not None:
        write_spectrum(r.spectrum, out / "spectrum.csv")
        payload["spectrum_file"] = "spectrum.csv"
        arts += ["spectrum.csv", "spectrum.json"]
    atomic_write_json(out / "counterexample.json", payload)
    return {"certified": r.certified, "monotone_in_flux": r.monotone}, arts, {"achieved_ratio": r.achieved_ratio}


def _run_product(p, out: Path, seed: int):
    r = ex.product_3d(p["B"], p["flux"], p["interval"], p["gammas"], None, p["h_policy"], seed=seed)
    write_csv(out / "product_3d.csv", r.header, r.rows)
    return r.assertions, ["product_3d.csv"], {}


RUNNERS = {
    "symbol-table": _run_symbol_table,
    "torus-verify": _run_torus,
    "dos-scan": _run_dos,
    "bc-bracket": _run_bracket,
    "bounds-matrix": _run_bounds,
    "counterexample": _run_counterexample,
    "product-3d": _run_product,
}


# -- entry point ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="magpolya", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"magpolya {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key=value file")
    common.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, default=None, help="Lanczos start-vector seed (default 0)")
    common.add_argument("--threads", type=int, default=None, help="BLAS/LAPACK thread limit")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for name, spec in EXPERIMENTS.items():
        sp = sub.add_parser(name, parents=[common], help=f"run the {name} experiment")
        for key, prm in spec.items():
            sp.add_argument(_flag(key), dest=f"p_{key}", metavar="VALUE",
                            help=f"{prm.help} (default: {_show(prm.default)})")
    return parser


def _show(v) -> str:
    if isinstance(v, list):
        return ",".join(str(x) for x in v)
    return str(v)


def run(experiment: str, params: dict[str, Any], out: Path, seed: int = 0) -> int:
    """Execute one experiment and write its manifest; returns the exit status."""
    out.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    assertions, artifacts, extra = RUNNERS[experiment](params, out, seed)
    assertions = {k: bool(v) for k, v in assertions.items()}
    passed = all(assertions.values())
    import scipy

    atomic_write_json(out / "manifest.json", {
        "experiment": experiment,
        "inputs": params,
        "seed": seed,
        "versions": {"magpolya": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "started": started,
        "wall_time_s": round(time.perf_counter() - t0, 3),
        "assertions": assertions,
        "passed": passed,
        "artifacts": artifacts,
        "results": extra,
    })
    for name, ok in assertions.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return 0 if passed else 1


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    flags = {k[2:]: v for k, v in vars(args).items() if k.startswith("p_")}
    try:
        config = read_config(args.config) if args.config else {}
        params = resolve_params(args.experiment, config, flags)
        seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    except (ConfigurationError, ValueError, OSError) as exc:
        parser.error(str(exc))
    limiter = None
    if args.threads:
        from threadpoolctl import threadpool_limits

        limiter = threadpool_limits(limits=args.threads)
    try:
        return run(args.experiment, params, Path(args.out), seed)
    except MagPolyaError as exc:
        print(f"magpolya: error: {exc}", file=sys.stderr)
        return 3 if not isinstance(exc, ValueError) else 2
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
