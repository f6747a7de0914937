"""Fractional program instances, feasibility, the parametric shift and a
brute-force grid oracle for Pareto efficiency."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .deriv import clarke_dd
from .expr import Expression, ScalarFunction, linear_combination

__all__ = [
    "FeasibilityTolerances",
    "FractionalProblem",
    "ParetoVerdict",
    "BorweinVerdict",
    "NonpositiveDenominator",
    "feasible",
    "ratio_objective",
    "s_parameter",
    "smfp_objective",
    "active_inequalities",
    "active_second",
    "grid_points",
    "pareto_oracle",
    "lemma21_check",
    "lemma21_sweep",
    "borwein_probe",
    "dominates",
    "feasible_mask",
    "shifted_functions",
    "smfp_oracle",
    "EFFICIENT",
    "WEAK_ONLY",
    "DOMINATED",
    "INCONCLUSIVE",
]

EFFICIENT = "efficient"
WEAK_ONLY = "weakly-efficient-only"
DOMINATED = "dominated"
INCONCLUSIVE = "inconclusive"

DOMINANCE_TOL = 1e-12


class NonpositiveDenominator(ArithmeticError):
    pass


@dataclass(frozen=True)
class FeasibilityTolerances:
    eq_tol: float = 1e-9
    ineq_tol: float = 1e-9
    active_tol: float = 1e-8

    def __post_init__(self):
        if min(self.eq_tol, self.ineq_tol, self.active_tol) < 0:
            raise ValueError("tolerances must be nonnegative")


def _fn(f) -> ScalarFunction:
    if isinstance(f, ScalarFunction):
        return f
    if isinstance(f, Expression):
        return ScalarFunction(f, f.source())
    raise TypeError(f"expected ScalarFunction or Expression, got {type(f).__name__}")


@dataclass(frozen=True)
class FractionalProblem:
    """min f(x)/F(x) subject to g(x) ≤ 0, h(x) = 0, x in the box."""

    f: tuple[ScalarFunction, ...]
    F: tuple[ScalarFunction, ...]
    g: tuple[ScalarFunction, ...]
    h: tuple[ScalarFunction, ...]
    lower: np.ndarray
    upper: np.ndarray
    name: str = ""
    tolerances: FeasibilityTolerances = field(default_factory=FeasibilityTolerances)
    interior_margin: float = 1e-6

    def __post_init__(self):
        for key in ("f", "F", "g", "h"):
            object.__setattr__(self, key, tuple(_fn(x) for x in getattr(self, key)))
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if not self.f or len(self.f) != len(self.F):
            raise ValueError("need p >= 1 numerators and as many denominators")
        if lo.shape != hi.shape or not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ValueError("box bounds must be finite and of equal length")
        if not np.all(lo < hi):
            raise ValueError("box must have nonempty interior")
        n = lo.size
        for fn in (*self.f, *self.F, *self.g, *self.h):
            if fn.dimension != n:
                raise ValueError(f"function {fn.label!r} has arity {fn.dimension}, expected {n}")

    @classmethod
    def from_strings(cls, dimension: int, lower, upper, f: Sequence[str], F: Sequence[str],
                     g: Sequence[str] = (), h: Sequence[str] = (), name: str = "",
                     **kwargs) -> "FractionalProblem":
        lower = np.broadcast_to(np.asarray(lower, dtype=float), (dimension,))
        upper = np.broadcast_to(np.asarray(upper, dtype=float), (dimension,))

        def mk(srcs):
            return tuple(ScalarFunction.from_source(s, dimension) for s in srcs)

        return cls(mk(f), mk(F), mk(g), mk(h), lower, upper, name=name, **kwargs)

    @property
    def n(self) -> int:
        return self.lower.size

    @property
    def p(self) -> int:
        return len(self.f)

    @property
    def m(self) -> int:
        return len(self.g)

    @property
    def l(self) -> int:
        return len(self.h)

    def in_box(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def interior(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower + self.interior_margin)
                    and np.all(x <= self.upper - self.interior_margin))

    # vectorized helpers, rows of X are points
    def _stack(self, fns, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not fns:
            return np.zeros((X.shape[0], 0))
        return np.column_stack([fn.expression.evaluate_batch(X) for fn in fns])

    def values(self, X):
        """(f, F, g, h) evaluated at the rows of X."""
        return tuple(self._stack(fns, X) for fns in (self.f, self.F, self.g, self.h))


def _tol(P: FractionalProblem, tol: FeasibilityTolerances | None) -> FeasibilityTolerances:
    return tol if tol is not None else P.tolerances


def feasible(P: FractionalProblem, x, tol: FeasibilityTolerances | None = None) -> bool:
    tol = _tol(P, tol)
    x = np.asarray(x, dtype=float)
    if not P.in_box(x):
        return False
    g = [fn(x) for fn in P.g]
    h = [fn(x) for fn in P.h]
    return all(v <= tol.ineq_tol for v in g) and all(abs(v) <= tol.eq_tol for v in h)


def feasible_mask(P: FractionalProblem, X, tol: FeasibilityTolerances | None = None) -> np.ndarray:
    tol = _tol(P, tol)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _, _, g, h = P.values(X)
    inbox = np.all((X >= P.lower) & (X <= P.upper), axis=1)
    with np.errstate(invalid="ignore"):
        ok = np.all(g <= tol.ineq_tol, axis=1) & np.all(np.abs(h) <= tol.eq_tol, axis=1)
    return inbox & ok


def ratio_objective(P: FractionalProblem, x) -> np.ndarray:
    num = np.array([fn(x) for fn in P.f])
    den = np.array([fn(x) for fn in P.F])
    if np.any(den <= 0):
        raise NonpositiveDenominator(f"denominator not positive at {np.asarray(x).tolist()}")
    return num / den + 0.0


def s_parameter(P: FractionalProblem, x0) -> np.ndarray:
    return ratio_objective(P, x0)


def smfp_objective(P: FractionalProblem, x, s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return np.array([fn(x) for fn in P.f]) - s * np.array([fn(x) for fn in P.F])


def shifted_functions(P: FractionalProblem, s) -> list[Expression]:
    """The components f_i − s_i·F_i as expressions."""
    out = []
    for fi, Fi, si in zip(P.f, P.F, np.asarray(s, dtype=float)):
        out.append(linear_combination([1.0, -float(si)], [fi.expression, Fi.expression], P.n))
    return out


def active_inequalities(P: FractionalProblem, x0, eps_act: float | None = None) -> list[int]:
    eps = P.tolerances.active_tol if eps_act is None else eps_act
    return [j for j, fn in enumerate(P.g) if abs(fn(x0)) <= eps]


def active_second(P: FractionalProblem, x0, v, eps_act: float | None = None,
                  deriv_tol: float = 1e-5, cfg=None) -> list[int]:
    out = []
    for j in active_inequalities(P, x0, eps_act):
        if abs(clarke_dd(P.g[j], x0, v, cfg).value) <= deriv_tol:
            out.append(j)
    return out


# ---------------------------------------------------------------------------
# Grid oracle
# ---------------------------------------------------------------------------


def default_resolution(n: int) -> int:
    return 201 if n <= 2 else 41


def grid_points(lower, upper, resolution: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(lower, upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


@dataclass
class ParetoVerdict:
    status: str
    witness: np.ndarray | None = None
    front: np.ndarray | None = None
    front_values: np.ndarray | None = None
    grid_size: int = 0
    feasible_count: int = 0

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "witness": None if self.witness is None else self.witness.tolist(),
            "front_size": None if self.front is None else int(len(self.front)),
            "grid_size": self.grid_size,
            "feasible_count": self.feasible_count,
        }


def dominates(a: np.ndarray, b: np.ndarray, tol: float = DOMINANCE_TOL) -> bool:
    """a ≤ b componentwise with at least one strict improvement."""
    return bool(np.all(a <= b + tol) and np.any(a < b - tol))


def _classify(values: np.ndarray, y0: np.ndarray, tol: float):
    no_worse = np.all(values <= y0 + tol, axis=1)
    better_some = np.any(values < y0 - tol, axis=1)
    better_all = np.all(values < y0 - tol, axis=1)
    strict = np.flatnonzero(better_all)
    pareto = np.flatnonzero(no_worse & better_some)
    return strict, pareto


def _front_mask(values: np.ndarray, tol: float) -> np.ndarray:
    """Nondominated rows of ``values`` (minimization)."""
    N, p = values.shape
    if N == 0:
        return np.zeros(0, dtype=bool)
    if p == 1:
        return values[:, 0] <= values[:, 0].min() + tol
    keep = np.ones(N, dtype=bool)
    if p == 2:
        # an earlier point in (y0, y1) order with a clearly smaller y1
        # dominates; this only prunes, survivors are re-checked exactly
        order = np.lexsort((values[:, 1], values[:, 0]))
        y1 = values[order, 1]
        prefix = np.minimum.accumulate(np.concatenate(([np.inf], y1[:-1])))
        keep[order[prefix < y1 - tol]] = False
        # exact re-check of survivors against everyone, the sweep only prunes
        cand = np.flatnonzero(keep)
        for idx in cand:
            strict, pareto = _classify(values, values[idx], tol)
            if pareto.size:
                keep[idx] = False
        return keep
    for idx in range(N):
        _, pareto = _classify(values, values[idx], tol)
        if pareto.size:
            keep[idx] = False
    return keep


def _oracle(P, x0, objective, resolution, grid_box, weak, with_front, tol):
    lower, upper = grid_box if grid_box is not None else (P.lower, P.upper)
    X = grid_points(lower, upper, resolution)
    x0 = np.asarray(x0, dtype=float)
    X = np.vstack([X, x0])
    mask = feasible_mask(P, X)
    if not mask[:-1].any():
        raise ValueError("no feasible grid point")
    if not feasible(P, x0):
        return ParetoVerdict(INCONCLUSIVE, grid_size=len(X) - 1, feasible_count=int(mask[:-1].sum()))
    Xf = X[mask]
    vals = objective(Xf)
    if np.isnan(vals).any():
        keep = ~np.isnan(vals).any(axis=1)
        Xf, vals = Xf[keep], vals[keep]
    y0 = vals[-1]
    strict, pareto = _classify(vals, y0, tol)
    verdict = ParetoVerdict(EFFICIENT, grid_size=len(X) - 1, feasible_count=int(mask[:-1].sum()))
    if strict.size:
        verdict.status, verdict.witness = DOMINATED, Xf[strict[0]].copy()
    elif pareto.size:
        if weak:
            verdict.status = EFFICIENT
        else:
            verdict.status, verdict.witness = WEAK_ONLY, Xf[pareto[0]].copy()
    if with_front:
        fm = _front_mask(vals[:-1], tol)
        verdict.front = Xf[:-1][fm]
        verdict.front_values = vals[:-1][fm]
    return verdict


def _ratio_batch(P: FractionalProblem):
    def obj(X):
        f, F, _, _ = P.values(X)
        if np.any(F <= 0):
            raise NonpositiveDenominator("denominator not positive on a feasible grid point")
        return f / F
    return obj


def _shift_batch(P: FractionalProblem, s):
    s = np.asarray(s, dtype=float)

    def obj(X):
        f, F, _, _ = P.values(X)
        return f - s[None, :] * F
    return obj


def pareto_oracle(P: FractionalProblem, resolution: int | None = None, x0=None,
                  grid_box=None, weak: bool = False, with_front: bool = False,
                  tol: float = DOMINANCE_TOL) -> ParetoVerdict:
    """Classify x0 against every feasible grid point.

    ``dominated`` means some grid point is strictly better in every
    component, ``weakly-efficient-only`` means a Pareto improvement exists
    but no strict one.  With ``weak`` the latter counts as efficient.
    """
    resolution = resolution or default_resolution(P.n)
    if x0 is None:
        raise ValueError("a focus point is required")
    return _oracle(P, x0, _ratio_batch(P), resolution, grid_box, weak, with_front, tol)


def smfp_oracle(P: FractionalProblem, resolution: int | None = None, x0=None,
                grid_box=None, weak: bool = False, tol: float = DOMINANCE_TOL) -> ParetoVerdict:
    """Same classification for the shifted objective f − s∗F, s = (f/F)(x0)."""
    resolution = resolution or default_resolution(P.n)
    s = s_parameter(P, x0)
    return _oracle(P, x0, _shift_batch(P, s), resolution, grid_box, weak, False, tol)


def lemma21_check(P: FractionalProblem, x0, resolution: int | None = None,
                  grid_box=None) -> bool:
    a = pareto_oracle(P, resolution, x0, grid_box)
    b = smfp_oracle(P, resolution, x0, grid_box)
    return a.status == b.status


def lemma21_sweep(P: FractionalProblem, resolution: int | None = None, grid_box=None,
                  tol: float = DOMINANCE_TOL) -> list[np.ndarray]:
    """Every feasible grid point where the two verdicts disagree.

    Vectorized over all focus points: for each feasible x0 the ratio and
    shifted verdicts are computed against the whole feasible grid.
    """
    resolution = resolution or default_resolution(P.n)
    lower, upper = grid_box if grid_box is not None else (P.lower, P.upper)
    X = grid_points(lower, upper, resolution)
    X = X[feasible_mask(P, X)]
    f, F, _, _ = P.values(X)
    R = f / F
    mismatches = []
    for i in range(len(X)):
        s = R[i]
        S = f - s[None, :] * F
        ra = _status_of(R, R[i], tol)
        sb = _status_of(S, S[i], tol)
        if ra != sb:
            mismatches.append(X[i])
    return mismatches


def _status_of(vals, y0, tol):
    strict, pareto = _classify(vals, y0, tol)
    if strict.size:
        return DOMINATED
    if pareto.size:
        return WEAK_ONLY
    return EFFICIENT


@dataclass
class BorweinVerdict:
    status: str                 # "violated" or "consistent (desk-scale)"
    direction: np.ndarray | None = None
    checked: int = 0

    @property
    def violated(self) -> bool:
        return self.status == "violated"


def borwein_probe(P: FractionalProblem, x0, resolution: int | None = None,
                  ray_samples: int = 64, grid_box=None, direction_tol: float = 1e-6
                  ) -> BorweinVerdict:
    """Desk-scale check that no tangent direction of the image set plus the
    nonnegative orthant at (f/F)(x0) points into the nonpositive orthant.

    Any image point below y0 gives such a direction outright.  Otherwise the
    normalized differences to the nearest image points stand in for tangent
    directions; adding the orthant only lets a direction's positive part be
    dropped, so a direction d qualifies when its positive part vanishes.
    """
    resolution = resolution or default_resolution(P.n)
    lower, upper = grid_box if grid_box is not None else (P.lower, P.upper)
    X = grid_points(lower, upper, resolution)
    X = X[feasible_mask(P, X)]
    y0 = ratio_objective(P, x0)
    vals = _ratio_batch(P)(X)
    diff = vals - y0[None, :]
    nonzero = np.linalg.norm(diff, axis=1) > DOMINANCE_TOL
    below = np.all(diff <= DOMINANCE_TOL, axis=1) & nonzero
    if below.any():
        i = int(np.flatnonzero(below)[0])
        return BorweinVerdict("violated", diff[i] / np.linalg.norm(diff[i]), int(len(X)))
    diff = diff[nonzero]
    if diff.size == 0:
        return BorweinVerdict("consistent (desk-scale)", None, 0)
    dist = np.linalg.norm(diff, axis=1)
    order = np.argsort(dist, kind="stable")[:ray_samples]
    dirs = diff[order] / dist[order, None]
    pos = np.linalg.norm(np.maximum(dirs, 0.0), axis=1)
    k = int(np.argmin(pos))
    if pos[k] <= direction_tol:
        return BorweinVerdict("violated", dirs[k], int(len(order)))
    return BorweinVerdict("consistent (desk-scale)", None, int(len(order)))
