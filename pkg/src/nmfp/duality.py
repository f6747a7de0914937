"""Mond-Weir second-order dual: feasibility of dual points, weak-duality
sweeps, the strong-duality construction from a strong KKT certificate and
the converse-duality check.

A dual point is (u, λ, μ, ν) with s = (f/F)(u).  It is feasible when

(a) λᵀ(∇f(u) − s∗∇F(u)) + Σμ_j ∇g_j(u) + Σν_k ∇h_k(u) = 0,
(b) λᵀ(f°°(u;v) − s∗F''(u;v)) + Σμ_j g_j°°(u;v) + Σν_k h_k°°(u;v) ≥ 0
    for every sampled critical direction v at u,
(c) Σμ_j g_j(u) + Σν_k h_k(u) ≥ 0,
(d) Σλ_i = 1, λ > 0 and μ ≥ 0 (λ ≥ 0 in weak mode).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cones import critical_directions, gsoarc_probe
from .deriv import NONEXISTENT, EstimatorConfig, pales_zeidan_dd2, second_dd
from .kkt import AssumptionError, MultiplierVector, gateaux_gradient, strong_kkt_system, strong_kkt_sweep
from .problem import (
    EFFICIENT,
    DOMINANCE_TOL,
    FractionalProblem,
    default_resolution,
    feasible,
    feasible_mask,
    grid_points,
    pareto_oracle,
    ratio_objective,
    s_parameter,
    shifted_functions,
)
from .sufficiency import (
    CERTIFIED,
    COUNTEREXAMPLE,
    ConvexityCertificate,
    PreconditionError,
    certify_common,
    sphere_grid,
    weighted,
)

__all__ = [
    "FEASIBLE",
    "INFEASIBLE",
    "INCONCLUSIVE",
    "DualPoint",
    "MWSDVerdict",
    "DualitySweep",
    "StrongDualityResult",
    "ConverseVerdict",
    "PreconditionError",
    "mwsd_feasible",
    "weak_duality_sweep",
    "strong_duality_construct",
    "converse_duality_check",
    "weak_duality_premises",
]

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
INCONCLUSIVE = "inconclusive"

RESIDUAL_TOL = 1e-6
NORMALIZATION_TOL = 1e-9
PREMISE_RESOLUTION = 21


@dataclass
class DualPoint:
    u: np.ndarray
    mult: MultiplierVector
    v_certificate: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "u": self.u.tolist(),
            "multipliers": self.mult.to_dict(),
            "v_certificate": [v.tolist() for v in self.v_certificate],
        }


@dataclass
class MWSDVerdict:
    status: str
    blocks: dict
    v_checked: list
    s: np.ndarray | None = None

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "blocks": self.blocks,
            "v_checked": [v.tolist() for v in self.v_checked],
            "s": None if self.s is None else self.s.tolist(),
        }


def _check_point(P: FractionalProblem, u: np.ndarray) -> np.ndarray:
    if u.shape != (P.n,):
        raise PreconditionError(f"dual point must have {P.n} coordinates")
    if not P.in_box(u):
        raise PreconditionError("dual point lies outside the box")
    F = np.array([Fi(u) for Fi in P.F])
    if np.any(F <= 0):
        raise PreconditionError("a denominator is not positive at the dual point")
    return s_parameter(P, u)


def mwsd_feasible(P: FractionalProblem, dp: DualPoint, v_samples=None,
                  cfg: EstimatorConfig | None = None, weak: bool = False,
                  seed: int = 0) -> MWSDVerdict:
    """Check blocks (a)-(d); derivative failures give ``inconclusive``.

    Without ``v_samples`` the sampled critical directions at u are used,
    together with v = 0."""
    cfg = cfg or EstimatorConfig()
    u = np.asarray(dp.u, dtype=float)
    s = _check_point(P, u)
    lam, mu, nu = (np.asarray(a, dtype=float) for a in (dp.mult.lam, dp.mult.mu, dp.mult.nu))
    if lam.shape != (P.p,) or mu.shape != (P.m,) or nu.shape != (P.l,):
        raise PreconditionError("multiplier sizes do not match the problem")
    if v_samples is None:
        v_samples = critical_directions(P, u, seed=seed, est=cfg).with_zero(P.n)
    V = [np.asarray(v, dtype=float) for v in v_samples]
    blocks: dict = {}

    # (d) signs and normalization
    if weak:
        sign_ok = bool(np.all(lam >= 0) and lam.sum() > 0)
    else:
        sign_ok = bool(np.all(lam > 0))
    sign_ok = sign_ok and bool(np.all(mu >= 0))
    norm_ok = abs(float(lam.sum()) - 1.0) <= NORMALIZATION_TOL
    blocks["d"] = {"holds": sign_ok and norm_ok, "sum_lambda": float(lam.sum()),
                   "signs": sign_ok}

    # (c) constraint value block
    gu = np.array([g(u) for g in P.g])
    hu = np.array([h(u) for h in P.h])
    cval = float(mu @ gu + nu @ hu) if (P.m or P.l) else 0.0
    ctol = RESIDUAL_TOL * (1.0 + float(np.abs(mu * gu).sum() + np.abs(nu * hu).sum()))
    blocks["c"] = {"holds": cval >= -ctol, "value": cval, "tolerance": ctol}

    undecided = False
    # (a) stationarity of Gâteaux gradients
    try:
        rows = [lam[i] * (gateaux_gradient(fi, u, cfg, f"f{i + 1}")
                          - s[i] * gateaux_gradient(Fi, u, cfg, f"F{i + 1}"))
                for i, (fi, Fi) in enumerate(zip(P.f, P.F))]
        rows += [mu[j] * gateaux_gradient(g, u, cfg, f"g{j + 1}") for j, g in enumerate(P.g)]
        rows += [nu[k] * gateaux_gradient(h, u, cfg, f"h{k + 1}") for k, h in enumerate(P.h)]
        stat = np.sum(rows, axis=0)
        atol = RESIDUAL_TOL * (1.0 + float(sum(np.abs(r).sum() for r in rows)))
        res = float(np.abs(stat).max())
        blocks["a"] = {"holds": res <= atol, "residual": res, "tolerance": atol}
    except (AssumptionError, ArithmeticError) as exc:
        blocks["a"] = {"holds": None, "error": str(exc)}
        undecided = True

    # (b) second-order inequality on the sampled critical directions
    try:
        worst = math.inf
        b_ok = True
        for v in V:
            terms = []
            for i, (fi, Fi) in enumerate(zip(P.f, P.F)):
                F2 = second_dd(Fi, u, v, cfg)
                if F2.verdict == NONEXISTENT:
                    raise AssumptionError(f"F{i + 1}: second-order directional derivative missing")
                terms.append(lam[i] * (pales_zeidan_dd2(fi, u, v, cfg).value - s[i] * F2.value))
            terms += [mu[j] * pales_zeidan_dd2(g, u, v, cfg).value for j, g in enumerate(P.g)]
            terms += [nu[k] * pales_zeidan_dd2(h, u, v, cfg).value for k, h in enumerate(P.h)]
            total = float(sum(terms))
            worst = min(worst, total)
            b_ok &= total >= -RESIDUAL_TOL * (1.0 + sum(abs(t) for t in terms))
        blocks["b"] = {"holds": bool(b_ok), "min": None if math.isinf(worst) else worst,
                       "directions": len(V)}
    except (AssumptionError, ArithmeticError) as exc:
        blocks["b"] = {"holds": None, "error": str(exc)}
        undecided = True

    if any(b["holds"] is False for b in blocks.values()):
        status = INFEASIBLE
    elif undecided:
        status = INCONCLUSIVE
    else:
        status = FEASIBLE
    return MWSDVerdict(status, dict(sorted(blocks.items())), V, s)


def _box_samples(P: FractionalProblem, resolution: int) -> np.ndarray:
    return grid_points(P.lower, P.upper, resolution)


def weak_duality_premises(P: FractionalProblem, dp: DualPoint, U=None,
                          cfg: EstimatorConfig | None = None,
                          resolution: int = PREMISE_RESOLUTION, seed: int = 0
                          ) -> ConvexityCertificate:
    """f − s∗F and g second-order convex, h second-order infine at u with
    respect to sampled points of the box, with one common (v, w) per
    sample."""
    u = np.asarray(dp.u, dtype=float)
    s = s_parameter(P, u)
    if U is None:
        U = _box_samples(P, resolution)
    items = [(e, "convex2", f"f{i + 1}-s*F{i + 1}") for i, e in enumerate(shifted_functions(P, s))]
    items += [(g, "convex2", f"g{j + 1}") for j, g in enumerate(P.g)]
    items += [(h, "infine2", f"h{k + 1}") for k, h in enumerate(P.h)]
    V = dp.v_certificate or [np.zeros(P.n)]
    return certify_common(items, u, U, V, sphere_grid(P.n, seed=seed), cfg=cfg)


@dataclass
class DualitySweep:
    violations: list
    checked_pairs: int
    dual_status: list
    premises: list

    @property
    def clean(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "violations": [{"x": x.tolist(), "u": u.tolist()} for x, u in self.violations],
            "violation_count": len(self.violations),
            "checked_pairs": self.checked_pairs,
            "dual_status": self.dual_status,
            "premises": self.premises,
        }


def weak_duality_sweep(P: FractionalProblem, primal_grid=None, dual_samples: Sequence[DualPoint] = (),
                       cfg: EstimatorConfig | None = None, weak: bool = False,
                       grid_box=None, premise_resolution: int = PREMISE_RESOLUTION,
                       check_feasibility: bool = True, seed: int = 0) -> DualitySweep:
    """Look for feasible x with (f/F)(x) ≤ (f/F)(u), x ≠ u in value, for
    every dual point u.

    ``primal_grid`` is a resolution or an array of points.  Dual points
    failing ``mwsd_feasible`` are reported and skipped; the premise status
    at each remaining u is recorded but does not filter violations."""
    if primal_grid is None or np.isscalar(primal_grid):
        resolution = int(primal_grid or default_resolution(P.n))
        lower, upper = grid_box if grid_box is not None else (P.lower, P.upper)
        X = grid_points(lower, upper, resolution)
    else:
        X = np.atleast_2d(np.asarray(primal_grid, dtype=float))
    X = X[feasible_mask(P, X)]
    f, F, _, _ = P.values(X) if len(X) else (np.zeros((0, P.p)), np.ones((0, P.p)), None, None)
    R = f / F
    violations, status, premises = [], [], []
    checked = 0
    for dp in dual_samples:
        u = np.asarray(dp.u, dtype=float)
        if check_feasibility:
            ver = mwsd_feasible(P, dp, dp.v_certificate or None, cfg, weak, seed)
            status.append(ver.status)
            if not ver.feasible:
                premises.append(None)
                continue
        else:
            status.append("unchecked")
        premises.append(weak_duality_premises(P, dp, cfg=cfg, resolution=premise_resolution,
                                              seed=seed).status)
        ru = ratio_objective(P, u)
        if weak:
            bad = np.all(R < ru - DOMINANCE_TOL, axis=1)
        else:
            bad = np.all(R <= ru + DOMINANCE_TOL, axis=1) & np.any(R < ru - DOMINANCE_TOL, axis=1)
        checked += len(X)
        violations.extend((X[i].copy(), u.copy()) for i in np.flatnonzero(bad))
    return DualitySweep(violations, checked, status, premises)


@dataclass
class StrongDualityResult:
    dual_point: DualPoint | None
    delta: float
    feasibility: MWSDVerdict | None
    gsoarc: str | None
    primal_value: np.ndarray
    dual_value: np.ndarray | None
    swept: bool = False

    @property
    def found(self) -> bool:
        return self.dual_point is not None

    def to_dict(self) -> dict:
        return {
            "found": self.found,
            "delta": self.delta,
            "dual_point": None if self.dual_point is None else self.dual_point.to_dict(),
            "feasibility": None if self.feasibility is None else self.feasibility.to_dict(),
            "gsoarc": self.gsoarc,
            "primal_value": self.primal_value.tolist(),
            "dual_value": None if self.dual_value is None else self.dual_value.tolist(),
            "swept": self.swept,
        }


def strong_duality_construct(P: FractionalProblem, x0, v, cfg: EstimatorConfig | None = None,
                             weak: bool = False, v_samples=None, probe_regularity: bool = True,
                             seed: int = 0) -> StrongDualityResult:
    """Turn a strong KKT certificate at (x0, v) into a normalized dual point
    and re-check it.

    When the certificate obtained for v alone fails the second-order block
    on another sampled critical direction, one multiplier valid for all of
    them is searched instead."""
    cfg = cfg or EstimatorConfig()
    x0 = np.asarray(x0, dtype=float)
    v = np.asarray(v, dtype=float)
    if not feasible(P, x0):
        raise PreconditionError("candidate point is infeasible")
    primal = ratio_objective(P, x0)
    gs = gsoarc_probe(P, x0, v, seed=seed, est=cfg).status if probe_regularity else None
    outcome = strong_kkt_system(P, x0, v, cfg, weak)
    if not outcome.found:
        return StrongDualityResult(None, outcome.delta, None, gs, primal, None)
    if v_samples is None:
        v_samples = critical_directions(P, x0, seed=seed, est=cfg).with_zero(P.n)
    V = [np.asarray(d, dtype=float) for d in v_samples]
    if not any(np.allclose(v, d) for d in V):
        V.append(v)

    def package(cert):
        dp = DualPoint(x0.copy(), cert.normalized(), V)
        return dp, mwsd_feasible(P, dp, V, cfg, weak, seed)

    dp, ver = package(outcome.certificate)
    swept = False
    if ver.blocks["b"]["holds"] is False:
        swept = True
        sweep = strong_kkt_sweep(P, x0, V, cfg, weak)
        if not sweep.found:
            return StrongDualityResult(None, sweep.delta, ver, gs, primal, None, swept)
        outcome = sweep
        dp, ver = package(sweep.certificate)
    return StrongDualityResult(dp, outcome.delta, ver, gs, primal, ratio_objective(P, dp.u), swept)


@dataclass
class ConverseVerdict:
    status: str
    premises: ConvexityCertificate | None
    dual_feasibility: str
    oracle: str
    consistent: bool

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "premises": None if self.premises is None else self.premises.to_dict(),
            "dual_feasibility": self.dual_feasibility,
            "oracle": self.oracle,
            "consistent": self.consistent,
        }


def converse_duality_check(P: FractionalProblem, dp: DualPoint, cfg: EstimatorConfig | None = None,
                           weak: bool = False, U=None, premise_resolution: int = PREMISE_RESOLUTION,
                           resolution: int | None = None, grid_box=None, seed: int = 0
                           ) -> ConverseVerdict:
    """Premises at u with respect to sampled box points (λᵀ(f − s∗F)
    pseudoconvex2, μᵀg quasiconvex2, h infine2), dual feasibility, then the
    grid oracle.  ``consistent`` is false when the premises are certified
    but the oracle finds u dominated."""
    u = np.asarray(dp.u, dtype=float)
    if not feasible(P, u):
        raise PreconditionError("u is not feasible for the primal problem")
    ver = mwsd_feasible(P, dp, dp.v_certificate or None, cfg, weak, seed)
    s = s_parameter(P, u)
    items = [(weighted(dp.mult.lam, shifted_functions(P, s), P.n), "pseudoconvex2",
              "lambda^T(f-s*F)")]
    if P.m:
        items.append((weighted(dp.mult.mu, P.g, P.n), "quasiconvex2", "mu^T g"))
    items += [(h, "infine2", f"h{k + 1}") for k, h in enumerate(P.h)]
    if U is None:
        U = _box_samples(P, premise_resolution)
    V = dp.v_certificate or [np.zeros(P.n)]
    premises = certify_common(items, u, U, V, sphere_grid(P.n, seed=seed), cfg=cfg)
    oracle = pareto_oracle(P, resolution, u, grid_box, weak=weak).status
    if ver.status == INFEASIBLE:
        status = "dual-infeasible"
    elif premises.status == COUNTEREXAMPLE:
        status = "premise-failed"
    elif ver.status == INCONCLUSIVE or premises.status != CERTIFIED:
        status = INCONCLUSIVE
    else:
        status = "Pareto-efficient"
    consistent = status != "Pareto-efficient" or oracle == EFFICIENT
    return ConverseVerdict(status, premises, ver.status, oracle, consistent)
