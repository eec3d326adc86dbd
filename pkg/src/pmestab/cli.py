"""Command-line entry point: INI configs in, CSV out.

    pmestab run CONFIG.ini [--assert]
    pmestab barenblatt --m 2 --n 1 --t 1 --samples 100 --output out.csv

Exit codes: 0 success, 1 invalid configuration, 2 solver failure,
3 acceptance threshold missed (only with --assert).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import estimates, harness, inequalities
from .barenblatt import normalize
from .grid import make_interval, make_radial
from .params import SubcriticalExponent, make_exponent
from .solver import (DirichletProblem, SolverConfig, barenblatt_cauchy, constant_boundary,
                     indicator_cauchy, solve_cauchy, solve_dirichlet)

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_ASSERT = 0, 1, 2, 3

OUTPUT_DIR_ENV = "PMESTAB_OUTPUT_DIR"
THREADS_ENV = harness.THREADS_ENV


class ConfigInvalid(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class IoError(OSError):
    pass


def _floats(text):
    return tuple(float(v) for v in str(text).replace(",", " ").split())


def _bool(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default); a default of None marks the key as required
_DOMAIN = {"m": (float, None), "n": (int, 1)}
_DIRICHLET = {**_DOMAIN, "a": (float, -1.0), "b": (float, 1.0), "cells": (int, 128),
              "T": (float, 0.5), "dt": (float, 1 / 256), "bump_radius": (float, 0.5),
              "bump_height": (float, 1.0), "boundary_value": (float, 0.0)}
_CAUCHY = {**_DOMAIN, "r_max": (float, 4.0), "cells": (int, 256), "T": (float, 2.0),
           "dt": (float, 1 / 256), "t_start": (float, 0.5), "data": (str, "barenblatt"),
           "mass": (float, 1.0), "radius": (float, 0.5)}
SCHEMAS = {
    "barenblatt": {**_DOMAIN, "t": (float, None), "samples": (int, None), "r_max": (float, 0.0),
                   "mass": (float, 1.0)},
    "solve-dirichlet": _DIRICHLET,
    "solve-cauchy": _CAUCHY,
    "sweep-dirichlet": {**_DIRICHLET, "deltas": (_floats, None), "q": (float, 2.0), "s": (float, 2.0),
                        "two_resolutions": (_bool, True), "fine_reference": (_bool, False),
                        "rate_experiment": (_bool, False)},
    "sweep-cauchy": {**_CAUCHY, "deltas": (_floats, None), "q": (float, 2.0), "s": (float, 1.5),
                     "S_radius": (float, 3.0), "two_resolutions": (_bool, True),
                     "fine_reference": (_bool, False)},
    "check-estimates": {**_DIRICHLET, "rho": (float, 0.5), "t0": (float, 0.4),
                        "oleinik_deltas": (_floats, (0.2, 0.1, 0.05, 0.025))},
    "check-lemmas": {"samples": (int, 100_000)},
}

HEADERS = {
    "barenblatt": ("r", "u"),
    "solve-dirichlet": ("t", "mass", "sup_u", "newton_iterations", "residual"),
    "solve-cauchy": ("t", "mass", "sup_u", "newton_iterations", "residual"),
    "sweep-dirichlet": ("delta", "m_i", "q", "error_Lq", "error_power_Ls", "weak_defect_max", "resolution_tag"),
    "sweep-cauchy": ("delta", "m_i", "q", "error_Lq", "error_power_Ls", "weak_defect_max", "resolution_tag"),
    "check-estimates": ("name", "lhs", "rhs", "realized_constant", "parameters"),
    "check-lemmas": ("name", "samples", "violations", "worst_ratio"),
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    parameters: dict = field(default_factory=dict)
    output_path: str = ""
    seed: int = 0


def parse_config(text: str) -> RunConfig:
    """Validated RunConfig from INI text; every problem is reported at once."""
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep "T" distinct from "t"
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigInvalid([f"syntax: {exc}"]) from None
    errors = []
    if not cp.has_section("run"):
        raise ConfigInvalid(["[run] section is missing"])
    run = cp["run"]
    command = run.get("command", "").strip()
    if command not in SCHEMAS:
        errors.append(f"command: expected one of {sorted(SCHEMAS)}, got {command!r}")
    output = run.get("output_path", "").strip()
    if not output:
        errors.append("output_path: missing")
    try:
        seed = int(run.get("seed", "0"))
    except ValueError:
        errors.append(f"seed: not an integer: {run.get('seed')!r}")
        seed = 0
    params = {}
    if command in SCHEMAS:
        raw = dict(cp["parameters"]) if cp.has_section("parameters") else {}
        schema = SCHEMAS[command]
        for key in sorted(set(raw) - set(schema)):
            errors.append(f"{key}: unknown parameter for {command}")
        for key, (conv, default) in schema.items():
            if key not in raw:
                if default is None:
                    errors.append(f"{key}: missing")
                else:
                    params[key] = default
                continue
            try:
                params[key] = conv(raw[key])
            except ValueError as exc:
                errors.append(f"{key}: {exc}")
        errors += _semantic_errors(command, params)
    if errors:
        raise ConfigInvalid(errors)
    return RunConfig(command, params, output, seed)


def _semantic_errors(command, p):
    errors = []
    if "m" in p and "n" in p:
        try:
            make_exponent(p["m"], p["n"])
        except SubcriticalExponent as exc:
            errors.append(f"m: SubcriticalExponent: {exc}")
        except ValueError as exc:
            errors.append(f"n: {exc}")
        if "deltas" in p:
            for d in p["deltas"]:
                try:
                    make_exponent(p["m"] + d, p["n"])
                except ValueError as exc:
                    errors.append(f"deltas: m + {d}: SubcriticalExponent: {exc}")
    for key in ("cells", "samples"):
        if key in p and p[key] < 1:
            errors.append(f"{key}: must be positive")
    for key in ("dt", "T", "t", "mass", "r_max", "radius", "S_radius", "rho"):
        if key in p and p[key] <= 0 and not (key == "r_max" and command == "barenblatt"):
            errors.append(f"{key}: must be positive")
    if "a" in p and "b" in p and p["a"] >= p["b"]:
        errors.append("b: must exceed a")
    if command in ("solve-dirichlet", "sweep-dirichlet", "check-estimates") and p.get("n") != 1:
        errors.append("n: Dirichlet runs use the interval [a, b], so n must be 1")
    if p.get("data", "barenblatt") not in ("barenblatt", "indicator"):
        errors.append("data: expected barenblatt or indicator")
    if "t_start" in p and "T" in p and not 0 <= p["t_start"] < p["T"]:
        errors.append("t_start: need 0 <= t_start < T")
    if p.get("data") == "barenblatt" and "t_start" in p and p["t_start"] <= 0:
        errors.append("t_start: Barenblatt data need t_start > 0")
    return errors


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def serialize_config(cfg: RunConfig) -> str:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["run"] = {"command": cfg.command, "output_path": cfg.output_path, "seed": str(cfg.seed)}
    cp["parameters"] = {k: _format_value(v) for k, v in cfg.parameters.items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return str(v)


def emit_csv(rows, path, header) -> None:
    """RFC 4180 CSV with a fixed header, %.17g floats and LF line endings."""
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def resolve_output(path: str) -> Path:
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    return p if p.is_absolute() or not base else Path(base) / p


def _bump(p):
    def u0(g):
        return p["bump_height"] * np.clip(1 - (g.centers / p["bump_radius"]) ** 2, 0, None) ** 2
    return u0


def _dirichlet_problem(p):
    e = make_exponent(p["m"], 1)
    g = make_interval(p["a"], p["b"], p["cells"])
    return DirichletProblem(e, g, p["T"], constant_boundary(p["boundary_value"]), _bump(p)(g))


def _cauchy_problem(p):
    e = make_exponent(p["m"], p["n"])
    g = make_radial(p["n"], p["r_max"], p["cells"])
    if p["data"] == "barenblatt":
        prof = normalize(e, p["mass"])
        return barenblatt_cauchy(prof, g, p["t_start"], p["T"]), lambda gr: prof.cell_averages(gr, p["t_start"])
    return indicator_cauchy(e, g, p["mass"], p["radius"], p["T"]), None


def _level_rows(traj):
    sup = traj.fields.max(axis=1)
    return [(float(t), float(mass), float(s), int(k), float(r))
            for t, mass, s, k, r in zip(traj.times, traj.masses(), sup, traj.newton_iters, traj.residual_norms)]


def _sweep_rows(result):
    return [(r.delta, r.m_i, r.q, r.error_Lq, r.error_power_Ls, r.weak_defect_max, r.resolution_tag)
            for r in result.rows]


def _sweep_passes(result):
    """Errors strictly decrease with |δ| separately for each sign, and the δ = 0 control vanishes."""
    ok = True
    for sign in (1, -1):
        rows = [r for r in result.table("base") if r.delta * sign > 0]
        e = [r.error_Lq for r in rows]
        ok &= all(not r.failed for r in rows) and all(a < b for a, b in zip(e, e[1:]))
    ok &= all(r.error_Lq <= 1e-9 for r in result.table("base") if r.delta == 0)
    return ok


def execute(cfg: RunConfig):
    """Run a validated config; returns (rows, passed)."""
    p = cfg.parameters
    c = cfg.command
    if c == "barenblatt":
        prof = normalize(make_exponent(p["m"], p["n"]), p["mass"])
        front = prof.support_radius(p["t"])
        r_max = p["r_max"] or (1.25 * front if np.isfinite(front) else 10.0)
        r = np.linspace(0.0, r_max, p["samples"])
        return list(zip(r.tolist(), prof.evaluate(r, p["t"]).tolist())), True
    if c == "solve-dirichlet":
        traj = solve_dirichlet(_dirichlet_problem(p), SolverConfig(p["dt"]))
        return _level_rows(traj), True
    if c == "solve-cauchy":
        prob, _ = _cauchy_problem(p)
        traj = solve_cauchy(prob, SolverConfig(p["dt"]))
        m = traj.masses()
        return _level_rows(traj), bool(np.all(m <= prob.mass * (1 + 1e-8)))
    if c == "sweep-dirichlet":
        prob = _dirichlet_problem(p)
        spec = harness.SweepSpec(p["m"], p["deltas"], prob, SolverConfig(p["dt"]), ((p["q"], p["s"]),),
                                 two_resolutions=p["two_resolutions"], fine_reference=p["fine_reference"],
                                 require_m_at_least_one=p["rate_experiment"])
        res = harness.run_dirichlet_sweep(spec, u0_fn=_bump(p))
        return _sweep_rows(res), _sweep_passes(res)
    if c == "sweep-cauchy":
        prob, u0_fn = _cauchy_problem(p)
        spec = harness.SweepSpec(p["m"], p["deltas"], prob, SolverConfig(p["dt"]), ((p["q"], p["s"]),),
                                 S_radius=p["S_radius"], two_resolutions=p["two_resolutions"],
                                 fine_reference=p["fine_reference"])
        res = harness.run_cauchy_sweep(spec, u0_fn=u0_fn)
        return _sweep_rows(res), _sweep_passes(res)
    if c == "check-estimates":
        prob = _dirichlet_problem(p)
        config = SolverConfig(p["dt"])
        traj = solve_dirichlet(prob, config)
        reports = [estimates.energy_estimate_report(traj, prob),
                   estimates.local_sup_bound_report(traj, p["rho"], p["t0"], 0.5 * (p["a"] + p["b"])),
                   estimates.sobolev_report(traj),
                   estimates.caccioppoli_report(traj)]
        reports += [estimates.oleinik_defect(traj, d, prob, config) for d in p["oleinik_deltas"]]
        rows = [(r.name, r.lhs, r.rhs_without_constant, r.realized_constant,
                 " ".join(f"{k}={_cell(v)}" for k, v in sorted(r.metadata.items()))) for r in reports]
        passed = all(r.holds_with_stated is not False for r in reports)
        return rows, passed
    if c == "check-lemmas":
        out = inequalities.fuzz_lemmas(p["samples"], cfg.seed)
        for o in out:
            print(f"{o.name}: {o.violations} violations in {o.samples}, worst lhs/allowed = {o.worst_ratio:.6g}")
        return [(o.name, o.samples, o.violations, o.worst_ratio) for o in out], all(o.violations == 0 for o in out)
    raise ConfigInvalid([f"command: unknown {c!r}"])


def run_config(cfg: RunConfig, assert_mode: bool = False) -> int:
    try:
        rows, passed = execute(cfg)
    except (ConfigInvalid, SubcriticalExponent) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except harness.SOLVER_ERRORS + (RuntimeError,) as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        emit_csv(rows, resolve_output(cfg.output_path), HEADERS[cfg.command])
    except IoError as exc:
        print(exc, file=sys.stderr)
        return EXIT_RUNTIME
    if assert_mode and not passed:
        print(f"{cfg.command}: acceptance threshold missed", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


def _build_parser():
    ap = argparse.ArgumentParser(prog="pmestab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run an INI configuration")
    r.add_argument("config", type=Path)
    r.add_argument("--assert", dest="assert_mode", action="store_true",
                   help="exit 3 when the acceptance check of the command fails")
    for name, schema in SCHEMAS.items():
        s = sub.add_parser(name, help=f"{name} with parameters given as flags")
        s.add_argument("--output", required=True)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--assert", dest="assert_mode", action="store_true")
        for key in schema:
            s.add_argument(f"--{key}", dest=f"p_{key}")
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.cmd == "run":
            text = args.config.read_text()
            cfg = parse_config(text)
        else:
            lines = ["[run]", f"command = {args.cmd}", f"output_path = {args.output}", f"seed = {args.seed}",
                     "[parameters]"]
            lines += [f"{k[2:]} = {v}" for k, v in vars(args).items() if k.startswith("p_") and v is not None]
            cfg = parse_config("\n".join(lines))
    except OSError as exc:
        print(f"cannot read configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConfigInvalid as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_INVALID
    return run_config(cfg, args.assert_mode)


if __name__ == "__main__":
    sys.exit(main())
