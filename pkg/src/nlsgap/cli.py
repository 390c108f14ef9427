"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 non-convergence, 4 missing gap or
ambiguous spectral splitting.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .errors import (
    AmbiguousSplitError,
    ConvergenceError,
    DegenerateFiberError,
    EigensolveError,
    EPrimeError,
    GridMismatchError,
    NlsGapError,
    NoGapError,
    ValidationError,
)
from .functional import check_conditions
from .lattice import State, build_grid
from .problem import build_problem
from .solver import GroundStateReport, convergence_study, dedup, ground_state, multistart
from .spectral import bloch_bands, calibrate_zero_edge, find_gap

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_NO_GAP = 0, 2, 3, 4
SUBCOMMANDS = ("bands", "calibrate", "check", "solve", "multistart", "dedup", "convergence-study")


class _Failed(Exception):
    """A subcommand finished and wrote its outputs but reports a failure code."""

    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


# -- output helpers ------------------------------------------------------------


def _dump(payload) -> str:
    # repr-based float formatting round-trips every binary64 value exactly
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _stem(cfg: RunConfig, sub: str) -> Path:
    out = Path(cfg.output["directory"])
    out.mkdir(parents=True, exist_ok=True)
    return out / f"run_{cfg.solve['rng_seed']}_{sub}"


def _envelope(cfg: RunConfig, sub: str, result) -> dict:
    return {"subcommand": sub, "version": __version__, "config": cfg.resolved, "result": result}


def write_json(cfg: RunConfig, sub: str, result) -> Path | None:
    if "json" not in cfg.output["formats"]:
        return None
    path = _stem(cfg, sub).with_suffix(".json")
    path.write_text(_dump(_envelope(cfg, sub, result)))
    return path


def write_state_csv(cfg: RunConfig, sub: str, u: State) -> Path | None:
    if "csv" not in cfg.output["formats"] or u is None:
        return None
    path = _stem(cfg, sub).with_suffix(".csv")
    coords = [c.ravel() for c in u.grid.coordinates()]
    names = ["x", "y"][: u.grid.dim]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + ["u"])
        for i, val in enumerate(u.flat):
            w.writerow([repr(float(c[i])) for c in coords] + [repr(float(val))])
    return path


def read_report(path) -> dict:
    """Load a JSON output file written by this tool."""
    return json.loads(Path(path).read_text())


# -- subcommands -----------------------------------------------------------------


def _problem(cfg: RunConfig, cells=None):
    p = cfg.problem
    return build_problem(
        cfg.potential,
        cfg.nonlinearity,
        dim=p["dim"],
        cells=p["cells"] if cells is None else cells,
        points_per_cell=p["points_per_cell"],
        calibrate=p["calibrate"],
        gap_index=p["gap_index"],
        n_k=p["n_k"],
        laplacian=p["laplacian"],
        eps_split=p["eps_split"],
        beta_floor=p["beta_floor"],
    )


def _bands(cfg: RunConfig):
    b = cfg.bands
    p = cfg.problem
    res = b["cell_resolution"] or max(32, p["points_per_cell"])
    bands = bloch_bands(cfg.potential, b["n_k"], max(b["n_bands"], p["gap_index"] + 2), res, p["dim"], p["laplacian"])
    result = {
        "k_points": bands.k_points.tolist(),
        "bands": bands.bands.tolist(),
        "max_residual": float(np.max(bands.residuals)),
    }
    if b["require_gap"]:
        result["gap"] = find_gap(bands, p["gap_index"]).to_dict()
    write_json(cfg, "bands", result)
    if "csv" in cfg.output["formats"]:
        from .spectral import bands_to_csv

        bands_to_csv(bands, _stem(cfg, "bands").with_suffix(".csv"))
    return result


def _calibrate(cfg: RunConfig):
    p = cfg.problem
    n_k = p["n_k"] or (64 if p["dim"] == 1 else 16)
    spec, gap = calibrate_zero_edge(
        cfg.potential, p["gap_index"], n_k, p["points_per_cell"], p["dim"], p["laplacian"], return_gap=True
    )
    check = find_gap(bloch_bands(spec, n_k, p["gap_index"] + 2, p["points_per_cell"], p["dim"], p["laplacian"]), p["gap_index"])
    result = {"potential": spec.to_dict(), "shift": spec.shift - cfg.potential.shift, "gap": gap.to_dict(), "edge_after": check.left_edge}
    write_json(cfg, "calibrate", result)
    return result


def _check(cfg: RunConfig):
    rep = check_conditions(cfg.nonlinearity)
    result = rep.to_dict()
    write_json(cfg, "check", result)
    if not rep.all_passed:
        failed = [k for k, v in rep.passed.items() if not v]
        raise _Failed(EXIT_INVALID, f"nonlinearity fails {', '.join(failed)}")
    return result


def _report_payload(rep: GroundStateReport) -> dict:
    return rep.to_dict(samples=True)


def _solve(cfg: RunConfig):
    problem = _problem(cfg)
    seed = cfg.solve["rng_seed"]
    try:
        rep = ground_state(problem, seed, cfg.solve_options)
    except ConvergenceError as exc:
        if isinstance(exc.detail, GroundStateReport):
            write_json(cfg, "solve", _report_payload(exc.detail))
            write_state_csv(cfg, "solve", exc.detail.u)
        raise
    result = _report_payload(rep)
    write_json(cfg, "solve", result)
    write_state_csv(cfg, "solve", rep.u)
    return result


def _multistart(cfg: RunConfig, threads: int):
    problem = _problem(cfg)
    reports = multistart(problem, cfg.solve["n_starts"], cfg.solve_options, threads)
    reps = dedup(reports, cfg.solve["tol_orbit"], cfg.nonlinearity.odd, problem.symmetry_step)
    result = {
        "runs": [_report_payload(r) for r in reports],
        "n_converged": sum(r.converged for r in reports),
        "representatives": [{"seed": r.seed, "c_est": r.c_est} for r in reps],
        "ground_level": reps[0].c_est if reps else math.nan,
        "note": "distinct representatives are what the runs found; they are not a count of all solutions",
    }
    write_json(cfg, "multistart", result)
    if reps:
        write_state_csv(cfg, "multistart", reps[0].u)
    else:
        raise _Failed(EXIT_NOT_CONVERGED, "no multistart run converged")
    return result


def _load_reports(directory: Path):
    """Collect ground-state reports (single or multistart) from JSON outputs."""
    found = []
    for path in sorted(directory.glob("*.json")):
        try:
            doc = read_report(path)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        sub = doc.get("subcommand")
        if sub not in ("solve", "multistart"):
            continue
        runs = [doc["result"]] if sub == "solve" else doc["result"]["runs"]
        for run in runs:
            if run.get("u") is None:
                continue
            grid = build_grid(run["dim"], run["cells"], run["points_per_cell"])
            u = State(grid, np.array(run["u"], dtype=float))
            rep = GroundStateReport(
                u, run["c_est"], run["r_u"], run["r_eprime"], run["grad_norm"], run["iterations"], run["cells"],
                run["points_per_cell"], run["dim"], run["decay"], tuple(run["translation"]), run["sign"],
                run["converged"], run["seed"], run["start_mode"],
            )
            found.append((str(path), rep))
    return found


def _dedup(cfg: RunConfig, directory: Path):
    found = _load_reports(directory)
    grids = {rep.u.grid for _, rep in found}
    if len(grids) > 1:
        raise GridMismatchError("reports in the directory live on different grids")
    reps = dedup([rep for _, rep in found], cfg.solve["tol_orbit"], cfg.nonlinearity.odd)
    source = {id(rep): path for path, rep in found}
    result = {
        "n_reports": len(found),
        "representatives": [{"source": source[id(r)], "seed": r.seed, "c_est": r.c_est} for r in reps],
    }
    write_json(cfg, "dedup", result)
    return result


def _study(cfg: RunConfig, threads: int):
    p = cfg.problem
    study = convergence_study(
        cfg.potential,
        cfg.nonlinearity,
        cells=tuple(cfg.solve["cells_list"]),
        points_per_cell=p["points_per_cell"],
        dim=p["dim"],
        calibrate=p["calibrate"],
        opts=cfg.solve_options,
        n_starts=cfg.solve["n_starts"],
        threads=threads,
    )
    result = study.to_dict()
    write_json(cfg, "convergence-study", result)
    if not any(study.converged):
        raise _Failed(EXIT_NOT_CONVERGED, "no box size converged")
    return result


# -- entry point ---------------------------------------------------------------------


class _ArgError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Reports usage errors as exit code 2 through :func:`run` instead of exiting."""

    def error(self, message):
        raise _ArgError(message)


def _parser():
    ap = _Parser(prog="nlsgap", description="Ground states of periodic NLS at a spectral gap edge.")
    ap.add_argument("--version", action="version", version=f"nlsgap {__version__}")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--seed", type=int, default=None, help="override solve.rng_seed")
    ap.add_argument("--out", default=None, help="override output.directory")
    ap.add_argument("--threads", type=int, default=1, help="parallel runs for multistart")
    ap.add_argument("--reports", default=None, help="directory of report JSON files (dedup)")
    return ap


def run(argv=None) -> int:
    """Run one subcommand and return its exit code."""
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except _ArgError as exc:
        print(f"nlsgap: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        if args.threads < 1:
            raise ValidationError("--threads must be >= 1")
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ValidationError("--seed must be >= 0")
            cfg = cfg.with_seed(args.seed)
        if args.out is not None:
            cfg = cfg.with_output(args.out)
        sub = args.subcommand
        if sub == "bands":
            _bands(cfg)
        elif sub == "calibrate":
            _calibrate(cfg)
        elif sub == "check":
            _check(cfg)
        elif sub == "solve":
            _solve(cfg)
        elif sub == "multistart":
            _multistart(cfg, args.threads)
        elif sub == "dedup":
            if args.reports is None:
                raise ValidationError("dedup needs --reports DIR")
            directory = Path(args.reports)
            if not directory.is_dir():
                raise ValidationError(f"{directory} is not a directory")
            _dedup(cfg, directory)
        else:
            _study(cfg, args.threads)
    except _Failed as exc:
        print(f"nlsgap: {exc}", file=sys.stderr)
        return exc.code
    except (ValidationError, GridMismatchError, EPrimeError) as exc:
        print(f"nlsgap: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ConvergenceError, DegenerateFiberError, EigensolveError) as exc:
        print(f"nlsgap: not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except NoGapError as exc:
        print(f"nlsgap: no gap: {exc}", file=sys.stderr)
        return EXIT_NO_GAP
    except AmbiguousSplitError as exc:
        print(f"nlsgap: {exc}", file=sys.stderr)
        return EXIT_NO_GAP
    except NlsGapError as exc:  # pragma: no cover
        print(f"nlsgap: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def main():  # pragma: no cover
    sys.exit(run())
