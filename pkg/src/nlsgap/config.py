"""Strict JSON run configuration.

Every block is validated before anything is computed; unknown keys are
errors that name their full path (``problem.nonlinearity.mu``).
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError
from .functional import NonlinearitySpec
from .lattice import PotentialSpec, load_tabulated_csv
from .nehari import FiberOptions
from .solver import START_MODES, SolveOptions

DEFAULTS = {
    "problem": {
        "dim": 1,
        "cells": 20,
        "points_per_cell": 16,
        "potential": None,
        "nonlinearity": None,
        "calibrate": True,
        "gap_index": 0,
        "n_k": None,
        "laplacian": "spectral",
        "eps_split": None,
        "beta_floor": None,
    },
    "solve": {
        "max_outer_iterations": 3000,
        "tol_residual": 1e-8,
        "armijo": 1e-4,
        "backtrack": 0.5,
        "rng_seed": 0,
        "start_mode": "random_lowmode",
        "gaussian_width": 1.0,
        "n_starts": 5,
        "tol_orbit": 1e-2,
        "cells_list": [10, 20, 40],
    },
    "bands": {"n_k": 64, "n_bands": 4, "cell_resolution": None, "require_gap": True},
    "output": {"directory": "out", "formats": ["json", "csv"]},
}

POTENTIAL_KEYS = {"kind", "amplitude", "constant", "table", "table_csv", "shift"}
NONLINEARITY_KEYS = {"kind", "p", "mu", "weight"}
WEIGHT_KEYS = {"kind", "amplitude", "constant", "table", "shift"}


@dataclass(frozen=True)
class RunConfig:
    """A validated configuration; ``resolved`` is the full dict with defaults filled in."""

    resolved: dict
    potential: PotentialSpec
    nonlinearity: NonlinearitySpec
    solve_options: SolveOptions

    @property
    def problem(self) -> dict:
        return self.resolved["problem"]

    @property
    def solve(self) -> dict:
        return self.resolved["solve"]

    @property
    def bands(self) -> dict:
        return self.resolved["bands"]

    @property
    def output(self) -> dict:
        return self.resolved["output"]

    def with_seed(self, seed: int) -> "RunConfig":
        raw = copy.deepcopy(self.resolved)
        raw["solve"]["rng_seed"] = int(seed)
        return parse_config(raw)

    def with_output(self, directory) -> "RunConfig":
        raw = copy.deepcopy(self.resolved)
        raw["output"]["directory"] = str(directory)
        return parse_config(raw)


def _reject_unknown(block: dict, allowed, path: str):
    if not isinstance(block, dict):
        raise ValidationError(f"{path} must be an object")
    extra = sorted(set(block) - set(allowed))
    if extra:
        raise ValidationError(f"unknown key {path}.{extra[0]}")


def _number(value, path, integer=False, positive=False, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{path} must be a number, got {value!r}")
    if integer and not isinstance(value, int):
        raise ValidationError(f"{path} must be an integer, got {value!r}")
    if positive and not value > 0:
        raise ValidationError(f"{path} must be > 0, got {value!r}")
    if minimum is not None and value < minimum:
        raise ValidationError(f"{path} must be >= {minimum}, got {value!r}")
    return value


def _potential(block, path, base_dir, allowed=POTENTIAL_KEYS) -> PotentialSpec:
    if block is None:
        raise ValidationError(f"missing required field {path}")
    _reject_unknown(block, allowed, path)
    if "kind" not in block:
        raise ValidationError(f"missing required field {path}.kind")
    for key in ("amplitude", "constant", "shift"):
        if key in block:
            _number(block[key], f"{path}.{key}")
    if block.get("table_csv") is not None:
        csv = Path(block["table_csv"])
        if not csv.is_absolute() and base_dir is not None:
            csv = base_dir / csv
        # keep the resolved path so the embedded config can be re-read anywhere
        block["table_csv"] = str(csv.resolve())
        spec = load_tabulated_csv(csv, float(block.get("shift", 0.0)))
        if block["kind"] != "tabulated":
            raise ValidationError(f"{path}.table_csv needs kind 'tabulated'")
        return spec
    try:
        return PotentialSpec(
            block["kind"],
            float(block.get("amplitude", 0.0)),
            float(block.get("constant", 0.0)),
            tuple(block.get("table", ())),
            float(block.get("shift", 0.0)),
        )
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def _nonlinearity(block, path) -> NonlinearitySpec:
    if block is None:
        raise ValidationError(f"missing required field {path}")
    _reject_unknown(block, NONLINEARITY_KEYS, path)
    for key in ("kind", "p", "mu"):
        if key not in block:
            raise ValidationError(f"missing required field {path}.{key}")
    _number(block["p"], f"{path}.p")
    _number(block["mu"], f"{path}.mu")
    weight = block.get("weight")
    w = PotentialSpec("constant", constant=1.0) if weight is None else _potential(weight, f"{path}.weight", None, WEIGHT_KEYS)
    if block["kind"] == "custom":
        raise ValidationError(f"{path}.kind: custom nonlinearities cannot be configured from a file")
    try:
        return NonlinearitySpec(block["kind"], float(block["p"]), float(block["mu"]), w)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def _merge(raw: dict) -> dict:
    _reject_unknown(raw, DEFAULTS, "config")
    out = copy.deepcopy(DEFAULTS)
    for name, block in raw.items():
        _reject_unknown(block, DEFAULTS[name], name)
        out[name].update(copy.deepcopy(block))
    return out


def parse_config(raw: dict, base_dir: Path | None = None) -> RunConfig:
    """Validate a configuration dict (already parsed from JSON)."""
    cfg = _merge(raw)
    pb = cfg["problem"]
    if pb["dim"] not in (1, 2) or isinstance(pb["dim"], bool):
        raise ValidationError(f"problem.dim must be 1 or 2, got {pb['dim']!r}")
    _number(pb["cells"], "problem.cells", integer=True, minimum=1)
    _number(pb["points_per_cell"], "problem.points_per_cell", integer=True, minimum=4)
    _number(pb["gap_index"], "problem.gap_index", integer=True, minimum=0)
    if not isinstance(pb["calibrate"], bool):
        raise ValidationError("problem.calibrate must be true or false")
    if pb["n_k"] is not None:
        _number(pb["n_k"], "problem.n_k", integer=True, minimum=8)
    if pb["laplacian"] not in ("spectral", "fd"):
        raise ValidationError("problem.laplacian must be 'spectral' or 'fd'")
    for key in ("eps_split", "beta_floor"):
        if pb[key] is not None:
            _number(pb[key], f"problem.{key}", minimum=0)
    potential = _potential(pb["potential"], "problem.potential", base_dir)
    nonlinearity = _nonlinearity(pb["nonlinearity"], "problem.nonlinearity")

    sv = cfg["solve"]
    _number(sv["max_outer_iterations"], "solve.max_outer_iterations", integer=True, minimum=1)
    _number(sv["rng_seed"], "solve.rng_seed", integer=True, minimum=0)
    _number(sv["n_starts"], "solve.n_starts", integer=True, minimum=1)
    for key in ("tol_residual", "armijo", "backtrack", "gaussian_width", "tol_orbit"):
        _number(sv[key], f"solve.{key}", positive=True)
    if not sv["tol_orbit"] < 1:
        raise ValidationError("solve.tol_orbit must lie in (0, 1)")
    if sv["start_mode"] not in START_MODES or sv["start_mode"] == "provided":
        raise ValidationError(f"solve.start_mode must be 'random_lowmode' or 'gaussian', got {sv['start_mode']!r}")
    if not isinstance(sv["cells_list"], list) or not sv["cells_list"]:
        raise ValidationError("solve.cells_list must be a non-empty list")
    for i, M in enumerate(sv["cells_list"]):
        _number(M, f"solve.cells_list[{i}]", integer=True, minimum=1)
    try:
        opts = SolveOptions(
            max_outer_iterations=sv["max_outer_iterations"],
            tol_residual=float(sv["tol_residual"]),
            armijo=float(sv["armijo"]),
            backtrack=float(sv["backtrack"]),
            rng_seed=sv["rng_seed"],
            start_mode=sv["start_mode"],
            gaussian_width=float(sv["gaussian_width"]),
            fiber=FiberOptions(),
        )
    except ValidationError as exc:
        raise ValidationError(f"solve: {exc}") from exc

    bd = cfg["bands"]
    _number(bd["n_k"], "bands.n_k", integer=True, minimum=8)
    _number(bd["n_bands"], "bands.n_bands", integer=True, minimum=2)
    if bd["cell_resolution"] is not None:
        _number(bd["cell_resolution"], "bands.cell_resolution", integer=True, minimum=4)
    if not isinstance(bd["require_gap"], bool):
        raise ValidationError("bands.require_gap must be true or false")

    out = cfg["output"]
    if not isinstance(out["directory"], str):
        raise ValidationError("output.directory must be a string")
    if not isinstance(out["formats"], list) or not set(out["formats"]) <= {"json", "csv"}:
        raise ValidationError("output.formats must be a list drawn from 'json', 'csv'")
    return RunConfig(cfg, potential, nonlinearity, opts)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_config(raw, path.parent)
