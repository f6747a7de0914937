"""Command line front end: problem files, command dispatch and JSON reports.

Problem files are TOML with the sections [problem], [candidate],
[multipliers], [dual], [estimator] and [grid].  A bare name such as
``section4`` resolves to the bundled corpus.

Exit codes: 0 all checks passed, 1 a check was refuted, 2 inconclusive,
3 input error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .cones import ConeConfig, critical_directions
from .deriv import (
    NONEXISTENT,
    EstimatorConfig,
    InapplicableError,
    clarke_dd,
    gateaux_dd,
    pales_zeidan_dd2,
    quotient_clarke,
    quotient_pz2,
    second_dd,
)
from .duality import (
    DualPoint,
    PreconditionError,
    converse_duality_check,
    mwsd_feasible,
    strong_duality_construct,
    weak_duality_sweep,
)
from .expr import DomainError, ParseError
from .kkt import (
    AssumptionError,
    MultiplierVector,
    strong_kkt_sweep,
    strong_kkt_system,
    verify_multipliers,
)
from .lp import STRICT_TOL
from .problem import (
    EFFICIENT,
    FractionalProblem,
    default_resolution,
    feasible,
    pareto_oracle,
    ratio_objective,
)
from .sufficiency import PARETO_EFFICIENT, RESIDUAL_TOL, theorem41_check, theorem42_check

__all__ = ["ProblemFile", "InputError", "load_problem_file", "run", "main", "corpus_names"]

EXIT_OK, EXIT_REFUTED, EXIT_INCONCLUSIVE, EXIT_INPUT = 0, 1, 2, 3
COMMANDS = ("derivatives", "check-kkt", "sufficiency", "duality", "pareto")

PASS, REFUTED, INCONCLUSIVE = "pass", "refuted", "inconclusive"


class InputError(ValueError):
    """Malformed problem file or command line."""


# ---------------------------------------------------------------------------
# Problem files
# ---------------------------------------------------------------------------


@dataclass
class ProblemFile:
    problem: FractionalProblem
    point: np.ndarray | None = None
    direction: np.ndarray | None = None
    multipliers: MultiplierVector | None = None
    dual: DualPoint | None = None
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    grid_box: tuple | None = None
    resolution: int | None = None
    seed: int = 0
    source: str = ""


def corpus_names() -> list[str]:
    root = resources.files("nmfp") / "corpus"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def _resolve(path: str) -> tuple[str, str]:
    p = Path(path)
    if p.is_file():
        return p.read_text(encoding="utf-8"), path
    name = p.name[:-5] if p.name.endswith(".toml") else p.name
    res = resources.files("nmfp") / "corpus" / f"{name}.toml"
    if res.is_file():
        return res.read_text(encoding="utf-8"), name
    raise InputError(f"no such problem file or corpus entry: {path}")


def _vector(section: dict, key: str, n: int | None, where: str) -> np.ndarray | None:
    if key not in section:
        return None
    val = section[key]
    if isinstance(val, (int, float)):
        val = [val] * (n or 1)
    try:
        arr = np.asarray(val, dtype=float).reshape(-1)
    except (TypeError, ValueError) as exc:
        raise InputError(f"[{where}] {key} must be a list of numbers") from exc
    if n is not None and arr.size != n:
        raise InputError(f"[{where}] {key} must have {n} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"[{where}] {key} must be finite")
    return arr


def _strings(section: dict, key: str) -> list[str]:
    val = section.get(key, [])
    if isinstance(val, str):
        val = [val]
    if not isinstance(val, list) or not all(isinstance(v, str) for v in val):
        raise InputError(f"[problem] {key} must be a list of expression strings")
    return val


def _multipliers(section: dict, P: FractionalProblem, where: str) -> MultiplierVector:
    lam = _vector(section, "lambda", P.p, where)
    if lam is None:
        raise InputError(f"[{where}] lambda is required")
    mu = _vector(section, "mu", P.m, where)
    nu = _vector(section, "nu", P.l, where)
    return MultiplierVector(lam, np.zeros(P.m) if mu is None else mu,
                            np.zeros(P.l) if nu is None else nu)


def parse_problem_file(text: str, source: str = "") -> ProblemFile:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"{source}: {exc}") from exc
    known = {"problem", "candidate", "multipliers", "dual", "estimator", "grid"}
    unknown = set(doc) - known
    if unknown:
        raise InputError(f"unknown section(s): {', '.join(sorted(unknown))}")
    prob = doc.get("problem")
    if not isinstance(prob, dict):
        raise InputError("missing [problem] section")
    n = prob.get("dimension")
    if not isinstance(n, int) or n < 1:
        raise InputError("[problem] dimension must be a positive integer")
    lower = _vector(prob, "lower", n, "problem")
    upper = _vector(prob, "upper", n, "problem")
    if lower is None or upper is None:
        raise InputError("[problem] lower and upper bounds are required")
    if np.any(lower >= upper):
        raise InputError("[problem] lower must be below upper in every coordinate")
    f, F = _strings(prob, "f"), _strings(prob, "F")
    if not f or len(f) != len(F):
        raise InputError("[problem] f and F must be nonempty and of equal length")
    try:
        P = FractionalProblem.from_strings(n, lower, upper, f, F, _strings(prob, "g"),
                                           _strings(prob, "h"), name=str(prob.get("name", "")))
    except ParseError as exc:
        raise InputError(f"expression error: {exc}") from exc

    est_section = dict(doc.get("estimator", {}))
    seed = int(est_section.pop("seed", prob.get("seed", 0)))
    names = {f_.name for f_ in fields(EstimatorConfig)}
    bad = set(est_section) - names
    if bad:
        raise InputError(f"[estimator] unknown key(s): {', '.join(sorted(bad))}")
    try:
        est = EstimatorConfig(**est_section, seed=seed)
    except TypeError as exc:
        raise InputError(f"[estimator] {exc}") from exc

    cand = doc.get("candidate", {})
    pf = ProblemFile(P, _vector(cand, "point", n, "candidate"),
                     _vector(cand, "direction", n, "candidate"), estimator=est, seed=seed,
                     source=source)
    if "multipliers" in doc:
        pf.multipliers = _multipliers(doc["multipliers"], P, "multipliers")
    if "dual" in doc:
        u = _vector(doc["dual"], "u", n, "dual")
        if u is None:
            raise InputError("[dual] u is required")
        dirs = doc["dual"].get("directions", [])
        pf.dual = DualPoint(u, _multipliers(doc["dual"], P, "dual"),
                            [np.asarray(d, dtype=float) for d in dirs])
    grid = doc.get("grid", {})
    glo, ghi = _vector(grid, "lower", n, "grid"), _vector(grid, "upper", n, "grid")
    if (glo is None) != (ghi is None):
        raise InputError("[grid] needs both lower and upper")
    if glo is not None:
        pf.grid_box = (glo, ghi)
    if "resolution" in grid:
        pf.resolution = int(grid["resolution"])
    return pf


def load_problem_file(path: str) -> ProblemFile:
    text, source = _resolve(path)
    return parse_problem_file(text, source)


# ---------------------------------------------------------------------------
# JSON helpers
# ---------------------------------------------------------------------------


def _clean(obj):
    """Plain JSON values: arrays to lists, −0 to 0, non-finite floats to
    strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x + 0.0
    return obj


def _est(e) -> dict:
    return e.to_dict()


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


@dataclass
class Context:
    pf: ProblemFile
    point: np.ndarray
    direction: np.ndarray
    resolution: int
    seed: int
    weak: bool
    sweep: bool
    cfg: EstimatorConfig


def _functions(P: FractionalProblem):
    for i, fn in enumerate(P.f):
        yield f"f{i + 1}", fn
    for i, fn in enumerate(P.F):
        yield f"F{i + 1}", fn
    for j, fn in enumerate(P.g):
        yield f"g{j + 1}", fn
    for k, fn in enumerate(P.h):
        yield f"h{k + 1}", fn


def cmd_derivatives(ctx: Context) -> list[dict]:
    P, x0, v, cfg = ctx.pf.problem, ctx.point, ctx.direction, ctx.cfg
    rows = []
    for label, fn in _functions(P):
        c = clarke_dd(fn, x0, v, cfg)
        rows.append({
            "check": "derivatives",
            "function": label,
            "source": fn.expression.source(),
            "gateaux": _est(gateaux_dd(fn, x0, v, cfg)),
            "clarke": _est(c),
            "second": _est(second_dd(fn, x0, v, cfg)),
            "pales_zeidan": _est(pales_zeidan_dd2(fn, x0, v, cfg, d1=c)),
            "status": PASS,
        })
    for i, (fi, Fi) in enumerate(zip(P.f, P.F)):
        q = fi.expression / Fi.expression
        row = {"check": "quotient", "function": f"f{i + 1}/F{i + 1}", "source": q.source()}
        try:
            qc = clarke_dd(q, x0, v, cfg)
            row["clarke"] = _est(qc)
            row["pales_zeidan"] = _est(pales_zeidan_dd2(q, x0, v, cfg, d1=qc))
        except DomainError as exc:
            row["error"] = str(exc)
        n1, d = fi(x0), Fi(x0)
        dg = gateaux_dd(Fi, x0, v, cfg)
        if dg.verdict == NONEXISTENT:
            row["clarke_rule"] = "inapplicable: denominator has no one-sided derivative"
        else:
            row["clarke_rule"] = quotient_clarke(clarke_dd(fi, x0, v, cfg).value, n1, d, dg.value)
        try:
            row["pales_zeidan_rule"] = quotient_pz2(pales_zeidan_dd2(fi, x0, v, cfg).value, n1, d,
                                                    second_dd(Fi, x0, v, cfg))
        except InapplicableError as exc:
            row["pales_zeidan_rule"] = str(exc)
        row["status"] = PASS
        rows.append(row)
    return rows


def _kkt_verdict(outcome, label: str, **extra) -> dict:
    row = {"check": label, **outcome.to_dict(), **extra}
    row["status"] = PASS if outcome.found else REFUTED
    if not outcome.found:
        row["message"] = f"no strictly positive lambda (delta* = {outcome.delta:.6g} <= {STRICT_TOL:g})"
    return row


def cmd_check_kkt(ctx: Context) -> list[dict]:
    P, x0, v, cfg = ctx.pf.problem, ctx.point, ctx.direction, ctx.cfg
    if not feasible(P, x0):
        raise InputError("candidate point is infeasible")
    out = []
    try:
        if ctx.sweep:
            crit = critical_directions(P, x0, seed=ctx.seed, est=cfg)
            dirs = crit.with_zero(P.n)
            outcome = strong_kkt_sweep(P, x0, dirs, cfg, ctx.weak)
            out.append(_kkt_verdict(outcome, "strong-kkt-sweep",
                                    directions=[d.tolist() for d in dirs],
                                    stationarity_only=not (P.m or P.l)))
        else:
            outcome = strong_kkt_system(P, x0, v, cfg, ctx.weak)
            out.append(_kkt_verdict(outcome, "strong-kkt", direction=v.tolist(),
                                    system=outcome.system.to_dict(),
                                    stationarity_only=not (P.m or P.l)))
        if ctx.pf.multipliers is not None:
            chk = verify_multipliers(P, x0, v, ctx.pf.multipliers, cfg, ctx.weak)
            out.append({
                "check": "given-multipliers",
                "multipliers": ctx.pf.multipliers.to_dict(),
                "stationarity_residual": chk.stationarity_residual,
                "second_order_value": chk.second_order_value,
                "slackness": chk.slackness,
                "signs": chk.sign_ok,
                "status": PASS if chk.holds else REFUTED,
            })
    except AssumptionError as exc:
        out.append({"check": "strong-kkt", "status": INCONCLUSIVE, "message": str(exc)})
    return out


def _candidate_multipliers(ctx: Context) -> MultiplierVector | None:
    if ctx.pf.multipliers is not None:
        return ctx.pf.multipliers
    return strong_kkt_system(ctx.pf.problem, ctx.point, ctx.direction, ctx.cfg, ctx.weak).certificate


def cmd_sufficiency(ctx: Context) -> list[dict]:
    P, x0 = ctx.pf.problem, ctx.point
    if not feasible(P, x0):
        raise InputError("candidate point is infeasible")
    try:
        mult = _candidate_multipliers(ctx)
    except AssumptionError as exc:
        return [{"check": "sufficiency", "status": INCONCLUSIVE, "message": str(exc)}]
    if mult is None:
        return [{"check": "sufficiency", "status": INCONCLUSIVE,
                 "message": "no multipliers given and none found"}]
    out = []
    for name, fn in (("sufficiency-convex", theorem41_check),
                     ("sufficiency-pseudoconvex", theorem42_check)):
        ver = fn(P, x0, mult, cfg=ctx.cfg, weak=ctx.weak, resolution=ctx.resolution,
                 grid_box=ctx.pf.grid_box, seed=ctx.seed)
        row = {"check": name, "multipliers": mult.to_dict(), **ver.to_dict()}
        row["verdict"] = ver.status
        if ver.status == PARETO_EFFICIENT:
            row["status"] = PASS
        elif ver.status == "inconclusive":
            row["status"] = INCONCLUSIVE
        else:
            row["status"] = REFUTED
        out.append(row)
    # the command passes when either premise set certifies the point
    if any(r["status"] == PASS for r in out):
        for r in out:
            if r["status"] != PASS:
                r["status"] = "not-needed"
    return out


def cmd_duality(ctx: Context) -> list[dict]:
    P, cfg = ctx.pf.problem, ctx.cfg
    out = []
    dp = ctx.pf.dual
    if dp is None:
        if not feasible(P, ctx.point):
            raise InputError("candidate point is infeasible")
        try:
            res = strong_duality_construct(P, ctx.point, ctx.direction, cfg, ctx.weak,
                                           seed=ctx.seed)
        except AssumptionError as exc:
            return [{"check": "strong-duality", "status": INCONCLUSIVE, "message": str(exc)}]
        row = {"check": "strong-duality", **res.to_dict()}
        if res.found:
            gap = float(np.max(np.abs(res.primal_value - res.dual_value)))
            row["gap"] = gap
            row["status"] = PASS if res.feasibility.feasible and gap == 0.0 else REFUTED
        else:
            row["status"] = REFUTED
        out.append(row)
        dp = res.dual_point
        if dp is None:
            return out
    else:
        try:
            ver = mwsd_feasible(P, dp, dp.v_certificate or None, cfg, ctx.weak, ctx.seed)
        except AssumptionError as exc:
            return [{"check": "mwsd-feasibility", "status": INCONCLUSIVE, "message": str(exc)}]
        out.append({"check": "mwsd-feasibility", "dual_point": dp.to_dict(), **ver.to_dict(),
                    "status": {"feasible": PASS, "infeasible": REFUTED}.get(ver.status,
                                                                          INCONCLUSIVE)})
        if not dp.v_certificate:
            dp = DualPoint(dp.u, dp.mult, ver.v_checked)
    sweep = weak_duality_sweep(P, ctx.resolution, [dp], cfg, ctx.weak, ctx.pf.grid_box,
                               seed=ctx.seed)
    out.append({"check": "weak-duality", **sweep.to_dict(),
                "status": PASS if sweep.clean else REFUTED})
    if feasible(P, dp.u):
        conv = converse_duality_check(P, dp, cfg, ctx.weak, resolution=ctx.resolution,
                                      grid_box=ctx.pf.grid_box, seed=ctx.seed)
        status = PASS if conv.status == "Pareto-efficient" else (
            INCONCLUSIVE if conv.status == "inconclusive" else REFUTED)
        if not conv.consistent:
            status = REFUTED
        out.append({"check": "converse-duality", **conv.to_dict(), "status": status})
    return out


def cmd_pareto(ctx: Context) -> list[dict]:
    P, x0 = ctx.pf.problem, ctx.point
    ver = pareto_oracle(P, ctx.resolution, x0, ctx.pf.grid_box, weak=ctx.weak, with_front=True)
    row = {"check": "pareto", **ver.to_dict(), "point": x0.tolist()}
    if feasible(P, x0):
        row["value"] = ratio_objective(P, x0).tolist()
    row["front_values"] = [] if ver.front_values is None else ver.front_values.tolist()
    row["status"] = PASS if ver.status == EFFICIENT else (
        INCONCLUSIVE if ver.status == "inconclusive" else REFUTED)
    return [row]


_DISPATCH = {
    "derivatives": cmd_derivatives,
    "check-kkt": cmd_check_kkt,
    "sufficiency": cmd_sufficiency,
    "duality": cmd_duality,
    "pareto": cmd_pareto,
}


def _exit_code(verdicts: list[dict]) -> int:
    statuses = {v.get("status") for v in verdicts}
    if REFUTED in statuses:
        return EXIT_REFUTED
    if INCONCLUSIVE in statuses:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def _parse_vector(text: str | None, n: int, what: str) -> np.ndarray | None:
    if text is None:
        return None
    try:
        vals = [float(t) for t in text.replace(",", " ").split()]
    except ValueError as exc:
        raise InputError(f"--{what} expects numbers") from exc
    if len(vals) == 1 and n > 1:
        vals = vals * n
    if len(vals) != n:
        raise InputError(f"--{what} needs {n} numbers")
    return np.array(vals)


def run(command: str, path: str, point: str | None = None, direction: str | None = None,
        grid: int | None = None, seed: int | None = None, weak: bool = False,
        sweep: bool = False, timings: bool = False) -> tuple[dict, int]:
    """Execute one command and return (report, exit code)."""
    if command not in _DISPATCH:
        raise InputError(f"unknown command {command!r}")
    pf = load_problem_file(path)
    P = pf.problem
    x0 = _parse_vector(point, P.n, "point")
    x0 = x0 if x0 is not None else (pf.point if pf.point is not None else np.zeros(P.n))
    v = _parse_vector(direction, P.n, "direction")
    if v is None:
        v = pf.direction if pf.direction is not None else np.zeros(P.n)
    seed = pf.seed if seed is None else int(seed)
    cfg = replace(pf.estimator, seed=seed)
    resolution = grid or pf.resolution or default_resolution(P.n)
    if resolution < 2:
        raise InputError("grid resolution must be at least 2")
    ctx = Context(pf, x0, v, resolution, seed, weak, sweep, cfg)
    start = time.perf_counter()
    try:
        verdicts = _DISPATCH[command](ctx)
    except (PreconditionError, DomainError) as exc:
        raise InputError(str(exc)) from exc
    elapsed = time.perf_counter() - start
    report = {
        "command": command,
        "inputs": {
            "file": pf.source,
            "problem": P.name,
            "point": x0.tolist(),
            "direction": v.tolist(),
            "grid": resolution,
            "grid_box": None if pf.grid_box is None else [b.tolist() for b in pf.grid_box],
            "weak": weak,
            "sweep": sweep,
        },
        "verdicts": verdicts,
        "tolerances": {
            "estimator": cfg.to_dict(),
            "cones": asdict(ConeConfig(seed=seed)),
            "feasibility": asdict(P.tolerances),
            "strict_lp": STRICT_TOL,
            "residual": RESIDUAL_TOL,
        },
        "seed": seed,
        "timings": {"seconds": elapsed} if timings else None,
    }
    return _clean(report), _exit_code(verdicts)


def _summary(report: dict) -> str:
    lines = [f"{report['command']} on {report['inputs']['file']}"
             f" at point {report['inputs']['point']}"]
    for v in report["verdicts"]:
        label = v.get("check", "?")
        if "function" in v:
            label += f" {v['function']}"
        detail = v.get("verdict") or v.get("message") or ""
        if label.startswith("derivatives"):
            detail = ", ".join(f"{k}={v[k]['value']}" for k in
                               ("gateaux", "clarke", "second", "pales_zeidan"))
        elif label.startswith("quotient"):
            detail = f"pz={v.get('pales_zeidan', {}).get('value')} rule={v.get('pales_zeidan_rule')}"
        lines.append(f"  [{v.get('status')}] {label}" + (f": {detail}" if detail else ""))
    return "\n".join(lines)


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors, so they exit with code 3 rather than
    argparse's 2, which means inconclusive here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: input error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nmfp", description=(
        "Generalized derivatives, strong KKT checks, second-order sufficiency and "
        "Mond-Weir duality for nonsmooth multiobjective fractional programs."))
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("file", help="problem file (TOML) or bundled corpus name")
    parser.add_argument("--point", help="candidate point, e.g. '0 1'")
    parser.add_argument("--direction", help="direction v, e.g. '0 1'")
    parser.add_argument("--sweep", action="store_true",
                        help="check-kkt: one multiplier for all sampled critical directions")
    parser.add_argument("--grid", type=int, help="grid points per axis for oracles and sweeps")
    parser.add_argument("--seed", type=int, help="seed for every sampler")
    parser.add_argument("--weak", action="store_true", help="weak efficiency variant (λ ≥ 0)")
    parser.add_argument("--json", metavar="OUT", help="write the JSON report ('-' for stdout)")
    parser.add_argument("--timings", action="store_true", help="record wall time in the report")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report, code = run(args.command, args.file, args.point, args.direction, args.grid,
                           args.seed, args.weak, args.sweep, args.timings)
    except (InputError, ValueError, ArithmeticError) as exc:
        print(f"nmfp: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    text = json.dumps(report, indent=2)
    if args.json == "-":
        print(text)
    else:
        if args.json:
            Path(args.json).write_text(text + "\n", encoding="utf-8")
        print(_summary(report))
    return code


if __name__ == "__main__":
    sys.exit(main())
