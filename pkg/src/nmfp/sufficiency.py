"""Second-order generalized convexity on samples and the sufficiency checks
built on it.

For a function θ and a base point x0 every notion compares the increment
Δ = θ(x) − θ(x0) with a(v, w) = θ°(x0; w) + ½·θ°°(x0; v):

* convex2:        Δ ≥ a
* infine2:        Δ = a
* pseudoconvex2:  a ≥ 0 ⟹ Δ ≥ 0
* quasiconvex2:   Δ ≤ 0 ⟹ a ≤ 0

where some nonzero pair (v, w) may be chosen per sample x.  The pair is
searched on finite grids, so a certificate only speaks for the samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cones import critical_directions
from .deriv import NONEXISTENT, EstimatorConfig, clarke_dd, pales_zeidan_dd2, second_dd
from .expr import DomainError, Expression, as_expression, linear_combination
from .kkt import AssumptionError, MultiplierVector, gateaux_gradient
from .problem import (
    EFFICIENT,
    FractionalProblem,
    default_resolution,
    feasible,
    feasible_mask,
    grid_points,
    pareto_oracle,
    s_parameter,
    shifted_functions,
)

__all__ = [
    "NOTIONS",
    "CERTIFIED",
    "COUNTEREXAMPLE",
    "INCONCLUSIVE",
    "PARETO_EFFICIENT",
    "CONDITION_FAILED",
    "PREMISE_FAILED",
    "INCONSISTENT",
    "Witness",
    "ConvexityCertificate",
    "SufficiencyVerdict",
    "PreconditionError",
    "sphere_grid",
    "weighted",
    "certify",
    "certify_common",
    "first_order_condition",
    "theorem41_check",
    "theorem42_check",
    "feasible_samples",
]

NOTIONS = ("convex2", "pseudoconvex2", "quasiconvex2", "infine2")

CERTIFIED = "certified-on-samples"
COUNTEREXAMPLE = "counterexample"
INCONCLUSIVE = "inconclusive"

PARETO_EFFICIENT = "Pareto-efficient"
CONDITION_FAILED = "condition-failed"
PREMISE_FAILED = "premise-failed"
INCONSISTENT = "inconsistent"

RESIDUAL_TOL = 1e-6
ZERO_DIRECTION = 1e-9


class PreconditionError(ValueError):
    """A point does not satisfy the requirements of a check."""


def sphere_grid(n: int, count: int = 16, seed: int = 0) -> list[np.ndarray]:
    """Unit directions: equally spaced angles in the plane, otherwise the
    signed axes plus seeded Gaussian samples."""
    if n == 1:
        return [np.array([1.0]), np.array([-1.0])]
    if n == 2:
        ang = 2.0 * math.pi * np.arange(count) / count
        return [np.array([math.cos(a), math.sin(a)]) for a in ang]
    dirs = list(np.eye(n)) + list(-np.eye(n))
    g = np.random.default_rng([seed, 23]).standard_normal((count, n))
    dirs += list(g / np.linalg.norm(g, axis=1, keepdims=True))
    return dirs


def weighted(coefs: Sequence[float], fns: Sequence, dimension: int) -> Expression:
    """Σ coefs[i]·fns[i] as one expression."""
    return linear_combination([float(c) for c in coefs], [as_expression(f) for f in fns],
                              dimension)


def _nonzero(dirs) -> list[np.ndarray]:
    out = []
    for d in dirs:
        d = np.asarray(d, dtype=float)
        if np.linalg.norm(d) >= ZERO_DIRECTION:
            out.append(d)
    return out


class _Derivs:
    """Cached θ°(x0; ·) and θ°°(x0; ·) of one expression."""

    def __init__(self, e: Expression, x0: np.ndarray, cfg: EstimatorConfig):
        self.e, self.x0, self.cfg = e, x0, cfg
        self.base = e.evaluate(x0)
        self._first: dict = {}
        self._second: dict = {}

    def first(self, w: np.ndarray) -> float:
        key = w.tobytes()
        if key not in self._first:
            try:
                self._first[key] = clarke_dd(self.e, self.x0, w, self.cfg).value
            except ArithmeticError:
                self._first[key] = math.nan
        return self._first[key]

    def second(self, v: np.ndarray) -> float:
        key = v.tobytes()
        if key not in self._second:
            try:
                d1 = clarke_dd(self.e, self.x0, v, self.cfg)
                self._second[key] = pales_zeidan_dd2(self.e, self.x0, v, self.cfg, d1=d1).value
            except ArithmeticError:
                self._second[key] = math.nan
        return self._second[key]


def _residual(notion: str, delta: float, a: np.ndarray) -> np.ndarray:
    """Violation of the defining relation for each candidate value a."""
    if notion == "convex2":
        return np.maximum(a - delta, 0.0)
    if notion == "infine2":
        return np.abs(delta - a)
    if notion == "pseudoconvex2":
        # the premise a ≥ 0 is tested without slack so that convex2
        # witnesses carry over verbatim
        return np.where(a >= 0.0, max(-delta, 0.0), 0.0)
    if notion == "quasiconvex2":
        return np.where(delta <= 0.0, np.maximum(a, 0.0), 0.0)
    raise ValueError(f"unknown notion {notion!r}")


@dataclass
class Witness:
    x: np.ndarray
    v: np.ndarray | None
    w: np.ndarray | None
    residual: float
    tolerance: float

    def to_dict(self) -> dict:
        return {
            "x": self.x.tolist(),
            "v": None if self.v is None else self.v.tolist(),
            "w": None if self.w is None else self.w.tolist(),
            "residual": self.residual,
            "tolerance": self.tolerance,
        }


@dataclass
class ConvexityCertificate:
    """Outcome of a sampled convexity check.

    ``witnesses`` holds one entry per accepted sample.  For a counterexample
    ``counterexample`` is the violating x and ``searched`` the number of
    (v, w) pairs that were tried there."""

    notion: str
    x0: np.ndarray
    status: str
    witnesses: list = field(default_factory=list)
    max_residual: float = 0.0
    counterexample: np.ndarray | None = None
    failing: str | None = None
    searched: int = 0
    samples: int = 0
    inconclusive_samples: int = 0

    @property
    def certified(self) -> bool:
        return self.status == CERTIFIED

    def pairs(self) -> list:
        """Witness pairs aligned with the accepted samples."""
        return [(wt.v, wt.w) for wt in self.witnesses]

    def to_dict(self) -> dict:
        return {
            "notion": self.notion,
            "status": self.status,
            "x0": self.x0.tolist(),
            "samples": self.samples,
            "inconclusive_samples": self.inconclusive_samples,
            "max_residual": self.max_residual,
            "counterexample": None if self.counterexample is None else self.counterexample.tolist(),
            "failing": self.failing,
            "searched": self.searched,
            "witnesses": [wt.to_dict() for wt in self.witnesses],
        }


def certify_common(items: Sequence[tuple], x0, X, v_grid, w_grid, common_vw=None,
                   include_difference: bool = True, cfg: EstimatorConfig | None = None
                   ) -> ConvexityCertificate:
    """Search one (v, w) per sample that satisfies every (function, notion,
    label) item at once.

    ``common_vw`` fixes the pair instead: either a single (v, w) or one pair
    per sample of X.  With ``include_difference`` the difference x − x0 is
    added to both grids for that sample."""
    cfg = cfg or EstimatorConfig()
    x0 = np.asarray(x0, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    derivs = [(_Derivs(as_expression(f), x0, cfg), notion, label) for f, notion, label in items]
    for _, notion, _ in derivs:
        if notion not in NOTIONS:
            raise ValueError(f"unknown notion {notion!r}")
    base_v, base_w = _nonzero(v_grid), _nonzero(w_grid)
    fixed = None
    if common_vw is not None:
        if isinstance(common_vw, tuple) and len(common_vw) == 2 and np.ndim(common_vw[0]) == 1:
            fixed = [common_vw] * len(X)
        else:
            fixed = list(common_vw)
            if len(fixed) != len(X):
                raise ValueError("one fixed pair per sample is required")
    name = "+".join(dict.fromkeys(n for _, n, _ in derivs))
    cert = ConvexityCertificate(name, x0, CERTIFIED)
    for idx, x in enumerate(X):
        diff = x - x0
        if np.linalg.norm(diff) < 1e-12:
            continue
        cert.samples += 1
        if fixed is not None:
            V = [np.asarray(fixed[idx][0], dtype=float)]
            W = [np.asarray(fixed[idx][1], dtype=float)]
        else:
            V, W = list(base_v), list(base_w)
            if include_difference and np.linalg.norm(diff) >= ZERO_DIRECTION:
                V.append(diff)
                W.append(diff)
        if not V or not W:
            cert.inconclusive_samples += 1
            continue
        ok = np.ones((len(V), len(W)), dtype=bool)
        worst = np.zeros((len(V), len(W)))
        tol_max, bad, failing = 0.0, False, None
        for d, notion, label in derivs:
            try:
                val = d.e.evaluate(x)
            except DomainError:
                bad = True
                break
            delta = val - d.base
            c1 = np.array([d.first(w) for w in W])
            c2 = np.array([d.second(v) for v in V])
            if not (np.all(np.isfinite(c1)) and np.all(np.isfinite(c2))):
                bad = True
                break
            a = 0.5 * c2[:, None] + c1[None, :]
            tol = RESIDUAL_TOL * (1.0 + abs(val))
            res = _residual(notion, delta, a)
            acc = res <= tol
            if failing is None and not (ok & acc).any():
                failing = label
            ok &= acc
            worst = np.maximum(worst, res)
            tol_max = max(tol_max, tol)
        if bad:
            cert.inconclusive_samples += 1
            continue
        hits = np.argwhere(ok)
        if hits.size == 0:
            if cert.counterexample is None:
                cert.counterexample = x.copy()
                cert.failing = failing
                cert.searched = len(V) * len(W)
                cert.max_residual = max(cert.max_residual, float(worst.min()))
            continue
        i, j = hits[0]
        cert.witnesses.append(Witness(x.copy(), V[i].copy(), W[j].copy(),
                                      float(worst[i, j]), tol_max))
        cert.max_residual = max(cert.max_residual, float(worst[i, j]))
    if cert.counterexample is not None:
        cert.status = COUNTEREXAMPLE
    elif cert.inconclusive_samples:
        cert.status = INCONCLUSIVE
    return cert


def certify(f, notion: str, x0, X, v_grid, w_grid, common_vw=None,
            include_difference: bool = True, cfg: EstimatorConfig | None = None
            ) -> ConvexityCertificate:
    """Certify one notion for one function (or weighted combination built
    with ``weighted``) at x0 on the samples X."""
    return certify_common([(f, notion, "theta")], x0, X, v_grid, w_grid, common_vw,
                          include_difference, cfg)


# ---------------------------------------------------------------------------
# Sufficiency checks
# ---------------------------------------------------------------------------


@dataclass
class SufficiencyVerdict:
    status: str
    variant: str
    conditions: dict
    premises: ConvexityCertificate | None
    oracle: str | None
    consistent: bool
    v_samples: list = field(default_factory=list)
    w_samples: int = 0
    x_samples: int = 0

    @property
    def efficient(self) -> bool:
        return self.status == PARETO_EFFICIENT

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "variant": self.variant,
            "conditions": self.conditions,
            "premises": None if self.premises is None else self.premises.to_dict(),
            "oracle": self.oracle,
            "consistent": self.consistent,
            "v_samples": [v.tolist() for v in self.v_samples],
            "w_samples": self.w_samples,
            "x_samples": self.x_samples,
        }


def feasible_samples(P: FractionalProblem, resolution: int | None = None,
                     grid_box=None) -> np.ndarray:
    resolution = resolution or default_resolution(P.n)
    lower, upper = grid_box if grid_box is not None else (P.lower, P.upper)
    X = grid_points(lower, upper, resolution)
    return X[feasible_mask(P, X)]


def first_order_condition(P: FractionalProblem, x0, mult: MultiplierVector, v_samples,
                          w_samples, cfg: EstimatorConfig | None = None,
                          weak: bool = False) -> dict:
    """The multiplier conditions at x0 over sampled directions: the
    first-order equality for every w, the second-order inequality for every
    v and complementary slackness Σμ_j g_j(x0) = 0.

    Raises AssumptionError when F has no Gâteaux gradient or no
    second-order directional derivative."""
    cfg = cfg or EstimatorConfig()
    x0 = np.asarray(x0, dtype=float)
    s = s_parameter(P, x0)
    lam, mu, nu = (np.asarray(a, dtype=float) for a in (mult.lam, mult.mu, mult.nu))
    gradF = [gateaux_gradient(Fi, x0, cfg, f"F{i + 1}") for i, Fi in enumerate(P.F)]

    first_worst = 0.0
    first_ok = True
    for w in w_samples:
        terms = [lam[i] * (clarke_dd(fi, x0, w, cfg).value - s[i] * float(gradF[i] @ w))
                 for i, fi in enumerate(P.f)]
        terms += [mu[j] * clarke_dd(g, x0, w, cfg).value for j, g in enumerate(P.g)]
        terms += [nu[k] * clarke_dd(h, x0, w, cfg).value for k, h in enumerate(P.h)]
        total = float(sum(terms))
        tol = RESIDUAL_TOL * (1.0 + sum(abs(t) for t in terms))
        first_worst = max(first_worst, abs(total))
        first_ok &= abs(total) <= tol

    second_min = math.inf
    second_ok = True
    for v in v_samples:
        terms = []
        for i, (fi, Fi) in enumerate(zip(P.f, P.F)):
            F2 = second_dd(Fi, x0, v, cfg)
            if F2.verdict == NONEXISTENT:
                raise AssumptionError(f"F{i + 1}: second-order directional derivative missing")
            terms.append(lam[i] * (pales_zeidan_dd2(fi, x0, v, cfg).value - s[i] * F2.value))
        terms += [mu[j] * pales_zeidan_dd2(g, x0, v, cfg).value for j, g in enumerate(P.g)]
        terms += [nu[k] * pales_zeidan_dd2(h, x0, v, cfg).value for k, h in enumerate(P.h)]
        total = float(sum(terms))
        tol = RESIDUAL_TOL * (1.0 + sum(abs(t) for t in terms))
        second_min = min(second_min, total)
        second_ok &= (total > tol) if weak else (total >= -tol)

    gx = np.array([g(x0) for g in P.g])
    slack = float(mu @ gx) if P.m else 0.0
    slack_ok = abs(slack) <= RESIDUAL_TOL * (1.0 + float(np.abs(mu * gx).sum()) if P.m else 1.0)
    if weak:
        sign_ok = bool(np.all(lam >= 0) and lam.sum() > 0 and np.all(mu >= 0))
    else:
        sign_ok = bool(np.all(lam > 0) and np.all(mu >= 0))
    return {
        "first_order": {"holds": bool(first_ok), "max_abs": first_worst},
        "second_order": {"holds": bool(second_ok),
                         "min": None if math.isinf(second_min) else second_min},
        "slackness": {"holds": bool(slack_ok), "value": slack},
        "signs": {"holds": sign_ok},
    }


def _directions(P, x0, v_samples, w_samples, cfg, seed):
    if v_samples is None:
        v_samples = critical_directions(P, x0, seed=seed, est=cfg).critical
    if w_samples is None:
        w_samples = sphere_grid(P.n, seed=seed)
    return _nonzero(v_samples), _nonzero(w_samples)


def _run_check(P, x0, mult, items, variant, v_samples, w_samples, X, cfg, weak,
               resolution, grid_box, seed):
    cfg = cfg or EstimatorConfig()
    x0 = np.asarray(x0, dtype=float)
    if not feasible(P, x0):
        raise PreconditionError("candidate point is infeasible")
    V, W = _directions(P, x0, v_samples, w_samples, cfg, seed)
    if X is None:
        X = feasible_samples(P, resolution, grid_box)
    oracle = pareto_oracle(P, resolution, x0, grid_box, weak=weak).status

    try:
        conditions = first_order_condition(P, x0, mult, V, W, cfg, weak)
    except (AssumptionError, ArithmeticError) as exc:
        return SufficiencyVerdict(INCONCLUSIVE, variant, {"error": str(exc)}, None, oracle,
                                  True, V, len(W), len(X))
    premises = certify_common(items, x0, X, V, W, cfg=cfg)
    if not all(c["holds"] for c in conditions.values()):
        status = CONDITION_FAILED
    elif premises.status == COUNTEREXAMPLE:
        status = PREMISE_FAILED
    elif premises.status == INCONCLUSIVE:
        status = INCONCLUSIVE
    else:
        status = PARETO_EFFICIENT
    consistent = status != PARETO_EFFICIENT or oracle == EFFICIENT
    if not consistent:
        status = INCONSISTENT
    return SufficiencyVerdict(status, variant, conditions, premises, oracle, consistent,
                              V, len(W), len(X))


def theorem41_check(P: FractionalProblem, x0, mult: MultiplierVector, v_samples=None,
                    w_samples=None, X=None, cfg: EstimatorConfig | None = None,
                    weak: bool = False, resolution: int | None = None, grid_box=None,
                    seed: int = 0) -> SufficiencyVerdict:
    """Sufficiency under convexity premises: every f_i − s_i·F_i and every
    g_j second-order convex, every h_k second-order infine, all with one
    common (v, w) per sample of the feasible set."""
    x0 = np.asarray(x0, dtype=float)
    s = s_parameter(P, x0)
    items = [(e, "convex2", f"f{i + 1}-s*F{i + 1}") for i, e in enumerate(shifted_functions(P, s))]
    items += [(g, "convex2", f"g{j + 1}") for j, g in enumerate(P.g)]
    items += [(h, "infine2", f"h{k + 1}") for k, h in enumerate(P.h)]
    return _run_check(P, x0, mult, items, "convex", v_samples, w_samples, X, cfg, weak,
                      resolution, grid_box, seed)


def theorem42_check(P: FractionalProblem, x0, mult: MultiplierVector, v_samples=None,
                    w_samples=None, X=None, cfg: EstimatorConfig | None = None,
                    weak: bool = False, resolution: int | None = None, grid_box=None,
                    seed: int = 0) -> SufficiencyVerdict:
    """Sufficiency under the weaker premises: λᵀ(f − s∗F) second-order
    pseudoconvex, μᵀg second-order quasiconvex and h second-order infine."""
    x0 = np.asarray(x0, dtype=float)
    s = s_parameter(P, x0)
    phi = weighted(mult.lam, shifted_functions(P, s), P.n)
    items = [(phi, "pseudoconvex2", "lambda^T(f-s*F)")]
    if P.m:
        items.append((weighted(mult.mu, P.g, P.n), "quasiconvex2", "mu^T g"))
    items += [(h, "infine2", f"h{k + 1}") for k, h in enumerate(P.h)]
    return _run_check(P, x0, mult, items, "pseudoconvex", v_samples, w_samples, X, cfg, weak,
                      resolution, grid_box, seed)
