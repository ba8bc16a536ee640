"""Command line front end.

Subcommands ``run``, ``refine``, ``index`` and ``stability`` read a JSON
config. Exit codes: 0 success, 2 configuration error, 3 solver failure; on
failure stderr carries a single JSON object.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    BoundarySpec,
    ConfigurationError,
    Dirichlet,
    Free,
    InitialSpec,
    InputError,
    PDAESystem,
    Problem,
    SpaceGrid,
    StateField,
    TimeGrid,
    sample_initial,
)
from .discretization import FORWARD, KINDS, DiffScheme
from .index import (
    DerivativeArraySpec,
    NumericalError,
    StructuralError,
    plasma_lemma2_determinant,
    time_index,
)
from .plasma import PlasmaParams, plasma_C0, plasma_model, plasma_scheme
from .splitting import FULL, SPLIT, PreconditionError, StepFailure, integrate
from .stability import check_levels, refinement_csv, refinement_study, stability_report

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3
PLASMA_KEYS = ("b0", "d1", "u30", "K2")


@dataclass
class RunConfig:
    model: str
    problem: Problem
    M: int
    tau: float
    t_e: float = 1.0
    scheme: DiffScheme = field(default_factory=DiffScheme)
    solver: str = FULL
    K0: float | None = None
    params: PlasmaParams | None = None
    C0: np.ndarray | None = None
    stability_scheme: str = FORWARD
    levels: list[int] = field(default_factory=list)
    out: str | None = None

    @property
    def grid(self) -> SpaceGrid:
        return SpaceGrid(self.M)

    @property
    def tgrid(self) -> TimeGrid:
        return TimeGrid(self.tau, self.t_e)


def _scheme(value, default: DiffScheme) -> DiffScheme:
    if value is None:
        return default
    if isinstance(value, str):
        if value not in KINDS:
            raise InputError(f"scheme must be one of {KINDS}")
        return DiffScheme(value, upwind_fallback="backward" if value == "upwind" else "central")
    return DiffScheme.from_dict(value)


def _inline_problem(cfg: dict) -> Problem:
    system = PDAESystem.from_dict(cfg["system"])
    n = system.n
    iv_vals = cfg.get("initial", [0.0] * n)
    bvc = cfg.get("boundary", {})
    left = bvc.get("left", [0.0] * n)
    right = bvc.get("right", [0.0] * n)
    if not (len(iv_vals) == len(left) == len(right) == n):
        raise InputError("initial/boundary lists need one entry per component")
    iv = InitialSpec(tuple((lambda c: (lambda x: np.full_like(np.asarray(x, dtype=float), c)))(float(v)) for v in iv_vals))
    bv = BoundarySpec(
        tuple(Free() if v is None else Dirichlet(float(v)) for v in left),
        tuple(Free() if v is None else Dirichlet(float(v)) for v in right),
    )
    return Problem(system, iv, bv)


def parse_config(cfg: dict, args: argparse.Namespace | None = None) -> RunConfig:
    """Validate a config dict (plus command line overrides) into a ``RunConfig``."""
    if not isinstance(cfg, dict):
        raise InputError("config must be a JSON object")
    model = cfg.get("model", "plasma" if "system" not in cfg else "inline")
    params = None
    if model == "plasma":
        params = PlasmaParams.from_dict(cfg)
        pm = plasma_model(params)
        problem, default_scheme, C0 = pm.problem, plasma_scheme(), plasma_C0(params.d1)
    elif model == "inline" or isinstance(model, dict):
        if isinstance(model, dict):
            cfg = {**cfg, "system": model}
        if "system" not in cfg:
            raise InputError("inline model needs a 'system' definition")
        problem = _inline_problem(cfg)
        default_scheme, C0 = DiffScheme(), problem.system.C0
        model = "inline"
    else:
        raise InputError(f"unknown model {model!r}")
    if "C0" in cfg:
        C0 = np.asarray(cfg["C0"], dtype=float)

    M = cfg.get("M", 20)
    if not isinstance(M, int) or isinstance(M, bool) or M < 2:
        raise InputError("M must be an integer >= 2")
    has_K0, has_tau = "K0" in cfg, "tau" in cfg
    if has_K0 and has_tau:
        raise InputError("specify exactly one of K0 and tau")
    t_e = float(cfg.get("t_e", 1.0))
    if has_tau:
        K0, tau = None, float(cfg["tau"])
    elif has_K0 or params is not None:
        K0 = float(cfg.get("K0", params.K0 if params else 0.0))
        tau = K0 / M
    else:
        raise InputError("specify exactly one of K0 and tau")
    if not (tau > 0 and math.isfinite(tau)) or not (t_e > 0 and math.isfinite(t_e)):
        raise InputError("tau and t_e must be positive")

    scheme = _scheme(cfg.get("scheme"), default_scheme)
    solver = cfg.get("solver", FULL)
    levels = cfg.get("levels", [])
    out = cfg.get("out")
    if args is not None:
        if getattr(args, "scheme", None):
            scheme = _scheme(args.scheme, default_scheme)
        if getattr(args, "solver", None):
            solver = args.solver
        if getattr(args, "levels", None):
            try:
                levels = [int(s) for s in args.levels.split(",") if s.strip()]
            except ValueError:
                raise InputError(f"cannot parse levels {args.levels!r}") from None
        if getattr(args, "out", None):
            out = args.out
    if solver not in (FULL, SPLIT):
        raise InputError(f"solver must be {FULL!r} or {SPLIT!r}")
    stab = cfg.get("stability_scheme", FORWARD)
    return RunConfig(
        model, problem, M, tau, t_e, scheme, solver, K0, params, np.asarray(C0, dtype=float),
        stab, list(levels), out,
    )


# commands ----------------------------------------------------------------


def cmd_run(rc: RunConfig) -> dict:
    p = rc.problem
    traj = integrate(p.system, p.iv, p.bv, p.source, rc.grid, rc.tgrid, rc.scheme, rc.solver)
    if rc.out:
        traj.to_csv(rc.out)
    final = traj.full(len(traj) - 1)
    return {
        "model": rc.model,
        "M": rc.M,
        "tau": rc.tau,
        "steps": len(traj) - 1,
        "t_final": float(traj.times[-1]),
        "solver": rc.solver,
        "min": final.min(axis=0).tolist(),
        "max": final.max(axis=0).tolist(),
        "out": rc.out,
    }


def cmd_refine(rc: RunConfig) -> tuple[dict, list]:
    levels = check_levels(rc.levels or [20, 40, 80, 160, 320])
    if rc.K0 is None:
        raise InputError("refinement needs K0 (tau = K0 h per level), not a fixed tau")
    rows = refinement_study(rc.problem, levels, (0, 1), rc.K0, rc.t_e, rc.scheme, rc.solver)
    if rc.out:
        refinement_csv(rows, rc.out)
    table = [
        {"N": r.N, "CFL2": r.CFL2, "e": r.e, "order": [None if np.isnan(o) else o for o in r.order], "failure": r.failure}
        for r in rows
    ]
    return {"levels": levels, "rows": table, "out": rc.out}, [r.failure for r in rows if r.failure]


def cmd_index(rc: RunConfig) -> dict:
    p = rc.problem
    cert = time_index(p.system, p.iv.evaluate, rc.grid, DerivativeArraySpec(), p.bv)
    if rc.model == "plasma":
        cert.lemma2_det = plasma_lemma2_determinant(rc.params)
    return cert.to_dict()


def cmd_stability(rc: RunConfig) -> dict:
    p = rc.problem
    U0: StateField = sample_initial(p.iv, rc.grid)
    report = stability_report(p.system, rc.C0, U0, rc.tau, rc.grid.h, rc.stability_scheme)
    return report.to_dict()


# entry point -------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """Argument errors become ``InputError`` so stderr only carries the JSON object."""

    def error(self, message):
        raise InputError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qlpdae", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("run", "integrate and write the trajectory CSV"),
        ("refine", "grid refinement study, CSV N,CFL2,e1,e2,order1,order2"),
        ("index", "time index certificate as JSON"),
        ("stability", "G0/G1 stability report as JSON"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON config file (default: plasma defaults)")
        sp.add_argument("--out", help="output path (CSV for run/refine, JSON otherwise)")
        sp.add_argument("--scheme", choices=KINDS)
        sp.add_argument("--solver", choices=(FULL, SPLIT))
        if name == "refine":
            sp.add_argument("--levels", help="comma separated doubling grid sizes, e.g. 20,40,80")
    return parser


def _fail(code: int, payload: dict) -> int:
    sys.stderr.write(json.dumps(payload) + "\n")
    return code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except InputError as exc:
        return _fail(EXIT_CONFIG, {"error": "config", "message": str(exc)})

    try:
        cfg = {}
        if args.config:
            with open(args.config) as fh:
                cfg = json.load(fh)
        rc = parse_config(cfg, args)
        failures = []
        if args.command == "run":
            result = cmd_run(rc)
        elif args.command == "refine":
            result, failures = cmd_refine(rc)
        elif args.command == "index":
            result = cmd_index(rc)
        else:
            result = cmd_stability(rc)
        if args.command in ("index", "stability") and rc.out:
            with open(rc.out, "w") as fh:
                json.dump(result, fh, indent=2)
    except StepFailure as exc:
        return _fail(EXIT_SOLVER, exc.to_dict())
    except NumericalError as exc:
        return _fail(EXIT_SOLVER, {"error": "solver", "message": str(exc)})
    except (InputError, ConfigurationError, PreconditionError, StructuralError, OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        return _fail(EXIT_CONFIG, {"error": "config", "message": str(exc)})

    print(json.dumps(result, indent=2))
    if failures:
        return _fail(EXIT_SOLVER, {"error": "solver", "message": "; ".join(failures)})
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
