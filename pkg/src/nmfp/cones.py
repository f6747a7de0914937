"""Cone membership tests at a feasible point.

* contingent cone T(X, x0) and projective second-order tangent cone
  T̃²(X, x0, v): numeric curve-feasibility searches over shrinking caps;
* linearizing cone C(Q, x0) and its second-order version C̃²(Q, x0, v):
  sign conditions on Clarke and Páles-Zeidan derivatives of the
  objective quotients and active constraints;
* critical directions D(x0) = T ∩ C by sampling;
* GSOARC (C̃² ⊆ T̃²) and GSOGRC (C̃² ⊆ closed convex hull of T̃²) probes.

Every numeric membership is three-valued: member, non-member or
inconclusive.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .deriv import (
    NONEXISTENT,
    EstimatorConfig,
    clarke_dd,
    gateaux_dd,
    pales_zeidan_dd2,
    quotient_clarke,
    second_dd,
)
from .expr import as_expression
from .kkt import gateaux_gradient
from .lp import solve_lp
from .problem import FractionalProblem, active_inequalities, active_second, s_parameter

__all__ = [
    "MEMBER",
    "NON_MEMBER",
    "INCONCLUSIVE",
    "ConeConfig",
    "ConeVerdict",
    "DirectionSample",
    "CriticalSet",
    "RegularityProbe",
    "contingent_member",
    "tangent2_member",
    "linearizing_member",
    "linearizing2_member",
    "critical_directions",
    "gsoarc_probe",
    "gsogrc_probe",
]

MEMBER = "member"
NON_MEMBER = "non-member"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class ConeConfig:
    t0: float = 0.1
    gamma: float = 0.5
    levels: int = 10
    tail: int = 5
    cap: float = 0.5            # cap radius c in c·√t
    # allowed constraint excess, relative to each constraint's variation
    # over a unit move at the current step
    feas_rtol: float = 1e-6
    starts: int = 2
    seed: int = 0
    deriv_tol: float = 1e-5

    def steps(self) -> np.ndarray:
        return self.t0 * self.gamma ** np.arange(self.levels)


@dataclass
class ConeVerdict:
    status: str
    kind: str
    levels: list = field(default_factory=list)   # (t, best violation, feasible?)
    parts: dict = field(default_factory=dict)

    @property
    def member(self) -> bool:
        return self.status == MEMBER

    def __bool__(self) -> bool:
        return self.member

    def to_dict(self) -> dict:
        return {"status": self.status, "kind": self.kind, "parts": self.parts}


# ---------------------------------------------------------------------------
# Numeric curve feasibility
# ---------------------------------------------------------------------------


class _Constraints:
    """Constraint excesses at points near a base, each measured against how
    much that constraint varies over a cap-sized move.

    A per-constraint relative scale keeps constraints that are quadratic in
    the displacement (x1·x2 = 0 at the origin) from being swamped by linear
    ones, and makes the feasibility test invariant to rescaling a single
    constraint."""

    def __init__(self, P: FractionalProblem, base: np.ndarray, step: float, center: np.ndarray):
        self.P = P
        self.fns = [(g.expression, False) for g in P.g] + [(h.expression, True) for h in P.h]
        n = center.size
        probes = [center] + [center + sgn * e for e in np.eye(n) for sgn in (1.0, -1.0)]
        X = np.array([base + step * u for u in probes])
        scales = []
        for e, _ in self.fns:
            vals = e.evaluate_batch(np.vstack([base, X]))
            var = np.nanmax(np.abs(vals[1:] - vals[0])) if not np.isnan(vals).all() else 0.0
            scales.append(max(float(var), 1e-300))
        self.scales = np.array(scales)
        self.box_scale = max(step, 1e-300)
        self.smooth = all(e.smooth for e, _ in self.fns)

    def excess(self, x: np.ndarray) -> np.ndarray:
        """Relative excess per constraint, box last (∞ where undefined)."""
        out = np.empty(len(self.fns) + 1)
        for j, (e, is_eq) in enumerate(self.fns):
            try:
                val = e.evaluate(x)
            except ArithmeticError:
                out[j] = math.inf
                continue
            out[j] = (abs(val) if is_eq else max(val, 0.0)) / self.scales[j]
        box = max(float(np.max(self.P.lower - x)), float(np.max(x - self.P.upper)), 0.0)
        out[-1] = box / self.box_scale
        return out

    def worst(self, x: np.ndarray) -> float:
        return float(np.max(self.excess(x)))

    def penalty(self, x: np.ndarray) -> float:
        ex = self.excess(x)
        if not np.all(np.isfinite(ex)):
            return 1e300
        return float(np.sum(ex * ex))

    def penalty_grad(self, x: np.ndarray) -> np.ndarray | None:
        """Gradient of ``penalty`` in x, or None when a constraint is not
        smooth or not differentiable at x."""
        if not self.smooth:
            return None
        ex = self.excess(x)
        if not np.all(np.isfinite(ex)):
            return None
        grad = np.zeros(x.size)
        for j, (e, is_eq) in enumerate(self.fns):
            if ex[j] == 0.0:
                continue
            gj = e.gradient(x)
            if gj is None:
                return None
            sign = math.copysign(1.0, e.evaluate(x)) if is_eq else 1.0
            grad += 2.0 * ex[j] * sign * gj / self.scales[j]
        if ex[-1] > 0.0:
            lo, hi = self.P.lower - x, x - self.P.upper
            i_lo, i_hi = int(np.argmax(lo)), int(np.argmax(hi))
            if lo[i_lo] >= hi[i_hi]:
                grad[i_lo] -= 2.0 * ex[-1] / self.box_scale
            else:
                grad[i_hi] += 2.0 * ex[-1] / self.box_scale
        return grad


def _cap_search(P, base: np.ndarray, step: float, center: np.ndarray, radius: float,
                tol: float, rng: np.random.Generator, starts: int):
    """Minimize the relative constraint excess of base + step·d over the ball
    |d − center| ≤ radius.

    Returns (best excess, d), stopping once the excess is within ``tol``."""
    n = center.size
    cons_model = _Constraints(P, base, step, center)
    point = lambda d: base + step * d  # noqa: E731
    best_v, best_d = cons_model.worst(point(center)), center
    if best_v <= tol:
        return best_v, center
    inits = [center]
    for _ in range(starts - 1):
        u = rng.standard_normal(n)
        u *= radius * rng.random() ** (1.0 / n) / max(np.linalg.norm(u), 1e-300)
        inits.append(center + u)
    cons = [{"type": "ineq", "fun": lambda d: radius * radius - float(np.sum((d - center) ** 2)),
             "jac": lambda d: -2.0 * (d - center)}]
    jac = None
    if cons_model.smooth:
        def jac(d):
            g = cons_model.penalty_grad(point(d))
            return np.zeros(n) if g is None else step * g
    for d0 in inits:
        res = minimize(lambda d: cons_model.penalty(point(d)), d0, jac=jac, method="SLSQP",
                       constraints=cons, options={"ftol": 1e-20, "maxiter": 100})
        d = res.x
        dist = float(np.linalg.norm(d - center))
        if dist > radius:
            d = center + (d - center) * radius / dist
        val = cons_model.worst(point(d))
        if val < best_v:
            best_v, best_d = val, d
        if best_v <= tol:
            break
    return best_v, best_d


def _decide(flags: list[bool]) -> str:
    if all(flags):
        return MEMBER
    if not any(flags):
        return NON_MEMBER
    return INCONCLUSIVE


def contingent_member(P: FractionalProblem, x0, d, cfg: ConeConfig | None = None) -> ConeVerdict:
    """Is d in the contingent cone of the feasible set at x0?

    On the finest levels of the step grid a feasible point x0 + t·d' is
    searched for with d' in the cap of radius c·√t around the normalized d."""
    cfg = cfg or ConeConfig()
    x0 = np.asarray(x0, dtype=float)
    d = np.asarray(d, dtype=float)
    norm = float(np.linalg.norm(d))
    if norm == 0.0:
        return ConeVerdict(MEMBER, "contingent")
    center = d / norm
    flags, levels = [], []
    steps = cfg.steps()
    for k in range(len(steps) - cfg.tail, len(steps)):
        t = float(steps[k])
        rng = np.random.default_rng([cfg.seed, 11, k])
        val, _ = _cap_search(P, x0, t, center, cfg.cap * math.sqrt(t), cfg.feas_rtol, rng,
                             cfg.starts)
        flags.append(val <= cfg.feas_rtol)
        levels.append((t, val, flags[-1]))
    return ConeVerdict(_decide(flags), "contingent", levels)


def tangent2_member(P: FractionalProblem, x0, v, w, r: float,
                    cfg: ConeConfig | None = None, stop_on_failure: bool = False) -> ConeVerdict:
    """Is (w, r) in the projective second-order tangent cone at x0 along v?

    Points x0 + t_k·v + ½·s_k·w' with s_k = t_k²/r_k are searched for, w' in
    a cap of radius c·√s_k around w.  r_k ≡ r for r > 0 and r_k = √t_k for
    r = 0, so t_k/r_k → 0 in both cases.  With ``stop_on_failure`` the
    finest level is tried first and the search ends at the first infeasible
    level, which is enough when only membership matters."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    cfg = cfg or ConeConfig()
    x0 = np.asarray(x0, dtype=float)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    wscale = max(1.0, float(np.linalg.norm(w)))
    flags, levels = [], []
    steps = cfg.steps()
    order = range(len(steps) - cfg.tail, len(steps))
    for k in (reversed(order) if stop_on_failure else order):
        t = float(steps[k])
        rk = r if r > 0 else math.sqrt(t)
        s = t * t / rk
        base = x0 + t * v
        rng = np.random.default_rng([cfg.seed, 13, k])
        val, _ = _cap_search(P, base, 0.5 * s, w, cfg.cap * math.sqrt(s) * wscale,
                             cfg.feas_rtol, rng, cfg.starts)
        flags.append(val <= cfg.feas_rtol)
        levels.append((t, val, flags[-1]))
        if stop_on_failure and not flags[-1]:
            break
    return ConeVerdict(_decide(flags), "tangent2", levels)


# ---------------------------------------------------------------------------
# Linearizing cones
# ---------------------------------------------------------------------------


class LocalData:
    """Derivative data at x0 shared by many linearizing-cone queries."""

    def __init__(self, P: FractionalProblem, x0, est: EstimatorConfig | None = None,
                 s=None, eps_act: float | None = None):
        self.P = P
        self.x0 = np.asarray(x0, dtype=float)
        self.est = est
        self.s = s_parameter(P, self.x0) if s is None else np.asarray(s, dtype=float)
        self.fvals = np.array([f(self.x0) for f in P.f])
        self.Fvals = np.array([F(self.x0) for F in P.F])
        self.J0 = active_inequalities(P, self.x0, eps_act)
        self._second: dict = {}

    def quotient_first(self, i: int, d) -> float:
        P = self.P
        n1 = clarke_dd(P.f[i], self.x0, d, self.est).value
        dg = gateaux_dd(P.F[i], self.x0, d, self.est).value
        return quotient_clarke(n1, self.fvals[i], self.Fvals[i], dg)

    def first(self, fn, d) -> float:
        return clarke_dd(fn, self.x0, d, self.est).value

    def second(self, v) -> dict:
        """Páles-Zeidan data along v, cached per direction."""
        key = tuple(np.asarray(v, dtype=float).tolist())
        if key not in self._second:
            P, x0, est = self.P, self.x0, self.est
            q = []
            for i in range(P.p):
                F2 = second_dd(P.F[i], x0, v, est)
                if F2.verdict == NONEXISTENT:
                    q.append(None)
                    continue
                # the quotient rule drops the cross term 2(f/F)°⟨F',v⟩/F, so
                # the ratio is estimated as one expression
                ratio = as_expression(P.f[i]) / as_expression(P.F[i])
                q.append(pales_zeidan_dd2(ratio, x0, v, est).value)
            Jv = active_second(P, x0, v, cfg=est)
            self._second[key] = {
                "quotient": q,
                "Jv": Jv,
                "g": {j: pales_zeidan_dd2(P.g[j], x0, v, est).value for j in Jv},
                "h": [pales_zeidan_dd2(h, x0, v, est).value for h in P.h],
            }
        return self._second[key]


def linearizing_member(P: FractionalProblem, x0, s, d, est: EstimatorConfig | None = None,
                       deriv_tol: float = 1e-5, data: LocalData | None = None) -> ConeVerdict:
    """The three derivative conditions of the linearizing cone, each kept."""
    data = data or LocalData(P, x0, est, s)
    d = np.asarray(d, dtype=float)
    tol = deriv_tol * max(1.0, float(np.linalg.norm(d)))
    obj = [data.quotient_first(i, d) for i in range(P.p)]
    cons = [data.first(P.g[j], d) for j in data.J0]
    eqs = [data.first(h, d) for h in P.h]
    parts = {
        "objectives": all(a <= tol for a in obj),
        "inequalities": all(a <= tol for a in cons),
        "equalities": all(abs(a) <= tol for a in eqs),
    }
    status = MEMBER if all(parts.values()) else NON_MEMBER
    return ConeVerdict(status, "linearizing", parts=parts)


def linearizing2_member(P: FractionalProblem, x0, s, v, w, r: float,
                        est: EstimatorConfig | None = None, deriv_tol: float = 1e-5,
                        data: LocalData | None = None) -> ConeVerdict:
    """Second-order linearizing cone conditions at (w, r) along v."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    data = data or LocalData(P, x0, est, s)
    w = np.asarray(w, dtype=float)
    sec = data.second(v)
    if any(q is None for q in sec["quotient"]):
        return ConeVerdict(INCONCLUSIVE, "linearizing2",
                           parts={"reason": "denominator second derivative missing"})
    tol = deriv_tol * max(1.0, float(np.linalg.norm(w)), r)
    obj = [data.quotient_first(i, w) + r * sec["quotient"][i] for i in range(P.p)]
    cons = [data.first(P.g[j], w) + r * sec["g"][j] for j in sec["Jv"]]
    eqs = [data.first(h, w) + r * h2 for h, h2 in zip(P.h, sec["h"])]
    parts = {
        "objectives": all(a <= tol for a in obj),
        "inequalities": all(a <= tol for a in cons),
        "equalities": all(abs(a) <= tol for a in eqs),
    }
    status = MEMBER if all(parts.values()) else NON_MEMBER
    return ConeVerdict(status, "linearizing2", parts=parts)


# ---------------------------------------------------------------------------
# Critical directions
# ---------------------------------------------------------------------------


@dataclass
class DirectionSample:
    direction: np.ndarray
    in_tangent: bool | None     # None when skipped because not linearizing
    in_linearizing: bool

    @property
    def critical(self) -> bool:
        return bool(self.in_tangent) and self.in_linearizing


@dataclass
class CriticalSet:
    samples: list
    critical: list

    def with_zero(self, n: int) -> list:
        return [np.zeros(n)] + [c.copy() for c in self.critical]


def _null_directions(P: FractionalProblem, x0, est) -> list[np.ndarray]:
    """Unit vectors orthogonal to subsets of the active gradients."""
    n = P.n
    grads = []
    for j in active_inequalities(P, x0):
        try:
            grads.append(gateaux_gradient(P.g[j], x0, est))
        except ValueError:
            pass
    for h in P.h:
        try:
            grads.append(gateaux_gradient(h, x0, est))
        except ValueError:
            pass
    grads = [g for g in grads if np.linalg.norm(g) > 1e-12]
    out = []
    for size in range(1, min(len(grads), n - 1) + 1):
        for subset in itertools.combinations(grads, size):
            G = np.array(subset)
            _, sv, vt = np.linalg.svd(G)
            rank = int(np.sum(sv > 1e-10))
            for row in vt[rank:]:
                out.extend([row, -row])
    return out


def _unique(dirs: list[np.ndarray]) -> list[np.ndarray]:
    out = []
    for d in dirs:
        nd = np.linalg.norm(d)
        if nd < 1e-12:
            continue
        d = d / nd
        if not any(np.linalg.norm(d - e) < 1e-9 for e in out):
            out.append(d)
    return out


def critical_directions(P: FractionalProblem, x0, n_samples: int = 32, seed: int = 0,
                        est: EstimatorConfig | None = None, cone: ConeConfig | None = None,
                        full: bool = False) -> CriticalSet:
    """Tag sampled unit directions with both cone memberships.

    Candidates are the coordinate axes in both signs, null-space directions
    of active gradient subsets and uniform samples on the sphere.  The zero
    direction is always critical and is left implicit.  Unless ``full`` is
    set, the costly tangent test is skipped for non-linearizing directions."""
    x0 = np.asarray(x0, dtype=float)
    n = P.n
    rng = np.random.default_rng([seed, 17])
    sphere = rng.standard_normal((n_samples, n))
    cands = list(np.eye(n)) + list(-np.eye(n)) + _null_directions(P, x0, est) + list(sphere)
    cands = _unique(cands)
    data = LocalData(P, x0, est)
    samples, critical = [], []
    for d in cands:
        lin = linearizing_member(P, x0, data.s, d, est, data=data).member
        tan = contingent_member(P, x0, d, cone).member if (lin or full) else None
        samples.append(DirectionSample(d, tan, lin))
        if tan and lin:
            critical.append(d)
    return CriticalSet(samples, critical)


# ---------------------------------------------------------------------------
# Second-order regularity probes
# ---------------------------------------------------------------------------


@dataclass
class RegularityProbe:
    status: str                   # holds-on-samples / violated / inconclusive
    witness: tuple | None = None  # (w, r)
    accepted: int = 0
    checked: int = 0

    @property
    def violated(self) -> bool:
        return self.status == "violated"

    def to_dict(self) -> dict:
        w = None
        if self.witness is not None:
            w = {"w": np.asarray(self.witness[0]).tolist(), "r": float(self.witness[1])}
        return {"status": self.status, "witness": w, "accepted": self.accepted,
                "checked": self.checked}


_R_VALUES = (0.0, 0.5, 1.0, 2.0)


def _pair_candidates(P, x0, n_samples, seed, est):
    n = P.n
    rng = np.random.default_rng([seed, 19])
    dirs = list(np.eye(n)) + list(-np.eye(n)) + _null_directions(P, x0, est)
    dirs += list(rng.standard_normal((n_samples, n)))
    dirs = _unique(dirs)
    pairs = [(np.zeros(n), r) for r in _R_VALUES if r > 0]
    pairs += [(d, r) for d in dirs for r in _R_VALUES]
    return pairs


def gsoarc_probe(P: FractionalProblem, x0, v, n_samples: int = 32, seed: int = 0,
                 est: EstimatorConfig | None = None, cone: ConeConfig | None = None
                 ) -> RegularityProbe:
    """Sample (w, r) from the second-order linearizing cone and test each for
    membership in the second-order tangent cone."""
    x0 = np.asarray(x0, dtype=float)
    v = np.asarray(v, dtype=float)
    data = LocalData(P, x0, est)
    accepted = checked = 0
    undecided = None
    for w, r in _pair_candidates(P, x0, n_samples, seed, est):
        checked += 1
        if not linearizing2_member(P, x0, data.s, v, w, r, est, data=data).member:
            continue
        accepted += 1
        verdict = tangent2_member(P, x0, v, w, r, cone)
        if verdict.status == NON_MEMBER:
            return RegularityProbe("violated", (w, r), accepted, checked)
        if verdict.status == INCONCLUSIVE and undecided is None:
            undecided = (w, r)
    if undecided is not None:
        return RegularityProbe(INCONCLUSIVE, undecided, accepted, checked)
    return RegularityProbe("holds-on-samples", None, accepted, checked)


def gsogrc_probe(P: FractionalProblem, x0, v, n_samples: int = 32, seed: int = 0,
                 est: EstimatorConfig | None = None, cone: ConeConfig | None = None
                 ) -> RegularityProbe:
    """Check that every sampled second-order linearizing pair is a
    nonnegative combination of sampled second-order tangent pairs.

    The conic hull of finitely many sampled tangent pairs under-approximates
    the closed convex hull, so a reported violation is only a hint."""
    x0 = np.asarray(x0, dtype=float)
    v = np.asarray(v, dtype=float)
    data = LocalData(P, x0, est)
    pairs = _pair_candidates(P, x0, n_samples, seed, est)
    lin_flags = [linearizing2_member(P, x0, data.s, v, w, r, est, data=data).member
                 for w, r in pairs]
    linear = [np.append(w, r) for (w, r), ok in zip(pairs, lin_flags) if ok]
    if not linear:
        return RegularityProbe("holds-on-samples", None, 0, 0)
    # linearizing pairs that are themselves tangent need no hull search
    tangent, uncovered = [], []
    for (w, r), ok in zip(pairs, lin_flags):
        if ok:
            if tangent2_member(P, x0, v, w, r, cone).member:
                tangent.append(np.append(w, r))
            else:
                uncovered.append(np.append(w, r))
    if not uncovered:
        return RegularityProbe("holds-on-samples", None, len(linear), len(tangent))
    for (w, r), ok in zip(pairs, lin_flags):
        if not ok and tangent2_member(P, x0, v, w, r, cone, stop_on_failure=True).member:
            tangent.append(np.append(w, r))
    if not tangent:
        z = uncovered[0]
        return RegularityProbe("violated", (z[:-1], z[-1]), len(linear), 0)
    G = np.array(tangent).T
    for z in uncovered:
        res = solve_lp(np.zeros(G.shape[1]), A_eq=G, b_eq=z)
        if res.status != "optimal":
            return RegularityProbe("violated", (z[:-1], z[-1]), len(linear), len(tangent))
    return RegularityProbe("holds-on-samples", None, len(linear), len(tangent))
