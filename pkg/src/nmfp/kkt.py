"""First- and second-order strong KKT systems at a candidate point.

The multiplier search is a linear program in (λ, μ, ν): stationarity of the
Gâteaux gradients, the second-order inequality along a critical direction v,
μ_j = 0 off J(x0, v), and λ pushed away from zero by maximizing min_i λ_i
under Σλ_i = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .deriv import (
    NONEXISTENT,
    EstimatorConfig,
    clarke_dd,
    gateaux_dd,
    pales_zeidan_dd2,
    second_dd,
)
from .expr import as_expression
from .lp import STRICT_TOL, FeasibilityResult, lp_feasibility, solve_lp
from .problem import (
    FractionalProblem,
    active_inequalities,
    active_second,
    feasible,
    s_parameter,
)

__all__ = [
    "AssumptionError",
    "DualSystem",
    "MultiplierVector",
    "KKTOutcome",
    "PrimalVerdict",
    "gateaux_gradient",
    "assemble_dual_system",
    "strong_kkt_system",
    "solve_strong_kkt",
    "strong_kkt_sweep",
    "verify_multipliers",
    "stationarity_relations",
    "primal_condition_check",
    "complementary_slackness_report",
]

PRODUCT_TOL = 1e-9
LINEARITY_TOL = 1e-6


class AssumptionError(ValueError):
    """A derivative the theory requires to exist is missing."""


def gateaux_gradient(fn, x0, cfg: EstimatorConfig | None = None, label: str = "") -> np.ndarray:
    """Gâteaux gradient from exact forward mode, or from numeric one-sided
    derivatives along ±e_i checked for linearity."""
    e = as_expression(fn)
    x0 = np.asarray(x0, dtype=float)
    grad = e.gradient(x0) if (cfg is None or cfg.use_exact) else None
    if grad is not None:
        return grad
    n = e.dimension
    out = np.empty(n)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = 1.0
        plus = gateaux_dd(e, x0, ei, cfg)
        minus = gateaux_dd(e, x0, -ei, cfg)
        if NONEXISTENT in (plus.verdict, minus.verdict):
            raise AssumptionError(f"{label or e.source()}: directional derivative missing")
        if abs(plus.value + minus.value) > LINEARITY_TOL * (1 + abs(plus.value)) + plus.error + minus.error:
            raise AssumptionError(f"{label or e.source()} is not Gâteaux differentiable at the point")
        out[i] = 0.5 * (plus.value - minus.value)
    return out


@dataclass
class DualSystem:
    """Rows [gradient | second-order term] of the objectives (B), the
    active constraints plus [0 | −1] (C) and the equalities (D)."""

    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    v: np.ndarray
    x0: np.ndarray
    s: np.ndarray
    J_active: list[int]
    J_second: list[int]
    m: int
    # raw second-order terms before the shift, per objective
    f_second: np.ndarray = field(default_factory=lambda: np.zeros(0))
    F_second: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n(self) -> int:
        return self.v.size

    def to_dict(self) -> dict:
        return {
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "D": self.D.tolist(),
            "v": self.v.tolist(),
            "J_active": [j + 1 for j in self.J_active],
            "J_second": [j + 1 for j in self.J_second],
            "f_second": self.f_second.tolist(),
            "F_second": self.F_second.tolist(),
        }


def _pz(fn, x0, v, cfg):
    est = pales_zeidan_dd2(fn, x0, v, cfg)
    return est.value


def assemble_dual_system(P: FractionalProblem, x0, v, cfg: EstimatorConfig | None = None,
                         deriv_tol: float = 1e-5) -> DualSystem:
    x0 = np.asarray(x0, dtype=float)
    v = np.asarray(v, dtype=float)
    s = s_parameter(P, x0)
    rows, f2s, F2s = [], [], []
    for i, (fi, Fi) in enumerate(zip(P.f, P.F)):
        gf = gateaux_gradient(fi, x0, cfg, f"f{i + 1}")
        gF = gateaux_gradient(Fi, x0, cfg, f"F{i + 1}")
        F2 = second_dd(Fi, x0, v, cfg)
        if F2.verdict == NONEXISTENT:
            raise AssumptionError(
                f"F{i + 1} = {Fi.expression.source()}: second-order directional derivative "
                "does not exist along v")
        f2s.append(_pz(fi, x0, v, cfg))
        F2s.append(F2.value)
        rows.append(np.append(gf - s[i] * gF, f2s[-1] - s[i] * F2.value))
    B = np.array(rows).reshape(P.p, P.n + 1) + 0.0
    J0 = active_inequalities(P, x0)
    Jv = active_second(P, x0, v, deriv_tol=deriv_tol, cfg=cfg)
    crow = [np.append(gateaux_gradient(P.g[j], x0, cfg, f"g{j + 1}"), _pz(P.g[j], x0, v, cfg))
            for j in Jv]
    tail = np.zeros(P.n + 1)
    tail[-1] = -1.0
    C = np.array(crow + [tail]).reshape(len(Jv) + 1, P.n + 1) + 0.0
    drow = [np.append(gateaux_gradient(hk, x0, cfg, f"h{k + 1}"), _pz(hk, x0, v, cfg))
            for k, hk in enumerate(P.h)]
    D = np.array(drow).reshape(P.l, P.n + 1) + 0.0
    return DualSystem(B, C, D, v, x0, s, J0, Jv, P.m, np.array(f2s), np.array(F2s))


@dataclass
class MultiplierVector:
    lam: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    delta: float = math.nan

    def normalized(self) -> "MultiplierVector":
        total = float(self.lam.sum())
        if total <= 0:
            raise ValueError("λ must have a positive sum to be normalized")
        lam = self.lam / total
        return MultiplierVector(lam, self.mu / total, self.nu / total, float(lam.min()))

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam.tolist(),
            "mu": self.mu.tolist(),
            "nu": self.nu.tolist(),
            "delta": self.delta,
        }


@dataclass
class KKTOutcome:
    certificate: MultiplierVector | None
    delta: float
    system: DualSystem | list
    A_eq: np.ndarray
    layout: dict
    weak: bool = False

    @property
    def found(self) -> bool:
        return self.certificate is not None

    def to_dict(self) -> dict:
        return {
            "found": self.found,
            "delta": self.delta,
            "strict_tol": STRICT_TOL,
            "certificate": None if self.certificate is None else self.certificate.to_dict(),
        }


def _lp_blocks(systems: Sequence[DualSystem], p: int, m: int, l: int, n: int):
    """Equality and inequality blocks over z = (λ, μ_support, ν)."""
    support = sorted(set.intersection(*(set(S.J_second) for S in systems)))
    t = len(support)
    N = p + t + l
    first = systems[0]
    pos = {j: first.J_second.index(j) for j in support}
    A_eq = np.zeros((n, N))
    A_eq[:, :p] = first.B[:, :n].T
    for c, j in enumerate(support):
        A_eq[:, p + c] = first.C[pos[j], :n]
    A_eq[:, p + t:] = first.D[:, :n].T
    A_ub = []
    for S in systems:
        row = np.zeros(N)
        row[:p] = -S.B[:, n]
        for c, j in enumerate(support):
            row[p + c] = -S.C[S.J_second.index(j), n]
        row[p + t:] = -S.D[:, n]
        A_ub.append(row)
    free = np.zeros(N, dtype=bool)
    free[p + t:] = True
    layout = {"lambda": slice(0, p), "mu": support, "nu": slice(p + t, N)}
    return A_eq, np.array(A_ub), free, layout


def _solve(systems, P, weak):
    p, m, l, n = P.p, P.m, P.l, P.n
    A_eq, A_ub, free, layout = _lp_blocks(systems, p, m, l, n)
    N = A_eq.shape[1]
    if weak:
        # λ ≥ 0, Σλ = 1: plain feasibility
        row = np.zeros(N)
        row[:p] = 1.0
        res = solve_lp(np.zeros(N), A_ub, np.zeros(len(A_ub)),
                       np.vstack([A_eq, row]), np.append(np.zeros(n), 1.0), free)
        ok = res.status == "optimal"
        result = FeasibilityResult(res.x if ok else None,
                                   float(res.x[:p].min()) if ok else -math.inf,
                                   res.status)
    else:
        result = lp_feasibility(A_eq, np.zeros(n), A_ub, np.zeros(len(A_ub)),
                                strict=range(p), n=N, free=free)
    cert = None
    accept = result.point is not None and (weak or result.margin > STRICT_TOL)
    if accept:
        z = result.point
        mu = np.zeros(m)
        for c, j in enumerate(layout["mu"]):
            mu[j] = max(z[p + c], 0.0)
        cert = MultiplierVector(z[:p].copy(), mu, z[layout["nu"]].copy(), result.margin)
    return cert, result.margin, A_eq, layout


def strong_kkt_system(P: FractionalProblem, x0, v, cfg: EstimatorConfig | None = None,
                      weak: bool = False) -> KKTOutcome:
    if not feasible(P, x0):
        raise ValueError("candidate point is infeasible")
    S = assemble_dual_system(P, x0, v, cfg)
    cert, delta, A_eq, layout = _solve([S], P, weak)
    return KKTOutcome(cert, delta, S, A_eq, layout, weak)


def solve_strong_kkt(P: FractionalProblem, x0, v, cfg: EstimatorConfig | None = None,
                     weak: bool = False) -> MultiplierVector | None:
    return strong_kkt_system(P, x0, v, cfg, weak).certificate


def strong_kkt_sweep(P: FractionalProblem, x0, directions: Sequence, cfg: EstimatorConfig | None = None,
                     weak: bool = False) -> KKTOutcome:
    """One multiplier valid for every supplied direction at once."""
    if not feasible(P, x0):
        raise ValueError("candidate point is infeasible")
    dirs = [np.asarray(d, dtype=float) for d in directions]
    if not dirs:
        dirs = [np.zeros(P.n)]
    systems = [assemble_dual_system(P, x0, d, cfg) for d in dirs]
    cert, delta, A_eq, layout = _solve(systems, P, weak)
    return KKTOutcome(cert, delta, systems, A_eq, layout, weak)


def stationarity_relations(outcome: KKTOutcome, p: int):
    """Express λ through (μ, ν) on the stationarity block.

    Returns (M_mu, M_nu, rank) with λ = M_mu·μ + M_nu·ν for every solution
    of the equality block, valid when the λ-columns have full column rank.
    """
    A = outcome.A_eq
    A_lam = A[:, :p]
    rank = int(np.linalg.matrix_rank(A_lam))
    pinv = np.linalg.pinv(A_lam)
    t = len(outcome.layout["mu"])
    M_mu = -pinv @ A[:, p:p + t]
    M_nu = -pinv @ A[:, p + t:]
    return M_mu, M_nu, rank


@dataclass
class MultiplierCheck:
    stationarity_residual: float
    second_order_value: float
    slackness: list
    sign_ok: bool

    @property
    def holds(self) -> bool:
        return (self.stationarity_residual <= 1e-7 and self.second_order_value >= -1e-7
                and self.sign_ok and not any(row["flagged"] for row in self.slackness))


def verify_multipliers(P: FractionalProblem, x0, v, mult: MultiplierVector,
                       cfg: EstimatorConfig | None = None, weak: bool = False) -> MultiplierCheck:
    """Check a given (λ, μ, ν) against the strong KKT conditions at (x0, v)."""
    S = assemble_dual_system(P, x0, v, cfg)
    n = P.n
    grads_g = np.array([gateaux_gradient(g, x0, cfg) for g in P.g]).reshape(P.m, n)
    second_g = np.array([_pz(g, x0, v, cfg) for g in P.g])
    stat = mult.lam @ S.B[:, :n] + mult.mu @ grads_g + mult.nu @ S.D[:, :n]
    second = float(mult.lam @ S.B[:, n] + mult.mu @ second_g + mult.nu @ S.D[:, n])
    sign_ok = bool(np.all(mult.mu >= 0) and (np.all(mult.lam >= 0) and mult.lam.sum() > 0
                                             if weak else np.all(mult.lam > 0)))
    return MultiplierCheck(float(np.linalg.norm(stat, np.inf)), second,
                           complementary_slackness_report(P, x0, v, mult, cfg), sign_ok)


def complementary_slackness_report(P: FractionalProblem, x0, v, mult: MultiplierVector,
                                   cfg: EstimatorConfig | None = None) -> list[dict]:
    rows = []
    for j, g in enumerate(P.g):
        gval = g(x0)
        gv = float(gateaux_gradient(g, x0, cfg) @ np.asarray(v, dtype=float))
        mu = float(mult.mu[j])
        flagged = abs(mu * gval) > PRODUCT_TOL or abs(mu * gv) > PRODUCT_TOL
        rows.append({"j": j + 1, "g": gval, "mu": mu, "g_dir": gv, "flagged": flagged})
    return rows


# ---------------------------------------------------------------------------
# Primal condition
# ---------------------------------------------------------------------------


@dataclass
class PrimalVerdict:
    status: str                     # "incompatible" or "solvable"
    witness: np.ndarray | None
    method: str
    samples: int

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "witness": None if self.witness is None else self.witness.tolist(),
            "method": self.method,
            "samples": self.samples,
        }


def _primal_rows(P, x0, v, r, cfg):
    """Per-function first-order evaluators and constant second-order terms."""
    s = s_parameter(P, x0)
    Jv = active_second(P, x0, v, cfg=cfg)
    obj = []
    for i, (fi, Fi) in enumerate(zip(P.f, P.F)):
        gF = gateaux_gradient(Fi, x0, cfg, f"F{i + 1}")
        F2 = second_dd(Fi, x0, v, cfg)
        if F2.verdict == NONEXISTENT:
            raise AssumptionError(f"F{i + 1}: second-order directional derivative does not exist")
        const = r * (_pz(fi, x0, v, cfg) - s[i] * F2.value)
        obj.append((fi, -s[i] * gF, const))
    cons = [(P.g[j], r * _pz(P.g[j], x0, v, cfg)) for j in Jv]
    eqs = [(hk, r * _pz(hk, x0, v, cfg)) for hk in P.h]
    return obj, cons, eqs


def primal_condition_check(P: FractionalProblem, x0, v, r: float = 1.0, w_samples: int = 200,
                           seed: int = 0, cfg: EstimatorConfig | None = None,
                           tol: float = 1e-7) -> PrimalVerdict:
    """Look for w solving the primal second-order system at (x0, v, r).

    Sampled w are tested with Clarke derivatives; then the linearized system
    (Gâteaux gradients) is decided exactly by an LP.
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    x0 = np.asarray(x0, dtype=float)
    v = np.asarray(v, dtype=float)
    obj, cons, eqs = _primal_rows(P, x0, v, r, cfg)
    n = P.n
    rng = np.random.default_rng([seed, 7])
    W = rng.standard_normal((w_samples, n))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    W = np.vstack([np.eye(n), -np.eye(n), W])
    checked = 0
    for w in W:
        checked += 1
        if any(abs(clarke_dd(hk, x0, w, cfg).value + c) > tol for hk, c in eqs):
            continue
        if any(clarke_dd(g, x0, w, cfg).value + c > tol for g, c in cons):
            continue
        vals = [clarke_dd(fi, x0, w, cfg).value + gw @ w + c for fi, gw, c in obj]
        if max(vals) <= tol and min(vals) < -tol:
            return PrimalVerdict("solvable", w, "sampled", checked)

    # exact decision for the linearization: minimize Σ a_i(w) with a_i ≤ 0
    grads_f = np.array([gateaux_gradient(fi, x0, cfg) + gw for fi, gw, _ in obj])
    cf = np.array([c for _, _, c in obj])
    Ag = np.array([gateaux_gradient(g, x0, cfg) for g, _ in cons]).reshape(-1, n)
    cg = np.array([c for _, c in cons])
    Ah = np.array([gateaux_gradient(hk, x0, cfg) for hk, _ in eqs]).reshape(-1, n)
    ch = np.array([c for _, c in eqs])
    A_ub = np.vstack([grads_f, Ag, -grads_f.sum(axis=0, keepdims=True)])
    b_ub = np.concatenate([-cf, -cg, [1.0 + cf.sum()]])
    res = solve_lp(grads_f.sum(axis=0), A_ub, b_ub, Ah, -ch, free=np.ones(n, dtype=bool))
    if res.status == "optimal" and res.value + cf.sum() < -tol:
        return PrimalVerdict("solvable", res.x, "linearized-lp", checked)
    return PrimalVerdict("incompatible", None, "sampled+linearized-lp", checked)
