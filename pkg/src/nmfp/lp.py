"""Dense two-phase simplex for the small linear programs behind the KKT
multiplier search.

Bland's rule picks both the entering column (lowest index with negative
reduced cost) and the leaving row (lowest basic index among ratio ties), so
the solver terminates on degenerate problems and returns the same vertex for
the same data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["LPResult", "FeasibilityResult", "solve_lp", "lp_feasibility", "STRICT_TOL"]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

STRICT_TOL = 1e-9
_PIVOT_TOL = 1e-11


class LPError(RuntimeError):
    pass


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None
    value: float
    iterations: int = 0


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    col_vals = T[:, col].copy()
    col_vals[row] = 0.0
    T -= np.outer(col_vals, T[row])


def _simplex(T: np.ndarray, basis: list[int], ncols: int, tol: float, max_iter: int) -> tuple[str, int]:
    """Minimize the objective in the last row of T over the first ``ncols``
    columns.  The last column is the right-hand side."""
    it = 0
    m = len(basis)
    while True:
        reduced = T[m, :ncols]
        candidates = np.flatnonzero(reduced < -tol)
        if candidates.size == 0:
            return OPTIMAL, it
        col = int(candidates[0])
        column = T[:m, col]
        rows = np.flatnonzero(column > _PIVOT_TOL)
        if rows.size == 0:
            return UNBOUNDED, it
        ratios = T[rows, -1] / column[rows]
        best = ratios.min()
        ties = rows[ratios <= best + tol * max(1.0, abs(best))]
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(T, row, col)
        basis[row] = col
        it += 1
        if it > max_iter:
            raise LPError("simplex iteration limit reached")


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, free=None,
             tol: float = 1e-10, max_iter: int = 10000) -> LPResult:
    """Minimize c·x subject to A_ub x ≤ b_ub, A_eq x = b_eq and x ≥ 0
    except for the coordinates flagged in ``free``."""
    c = np.asarray(c, dtype=float).reshape(-1)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).reshape(-1)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    if A_ub.size == 0:
        A_ub = A_ub.reshape(0, n)
    if A_eq.size == 0:
        A_eq = A_eq.reshape(0, n)
    free = np.zeros(n, dtype=bool) if free is None else np.asarray(free, dtype=bool)
    for arr in (c, A_ub, b_ub, A_eq, b_eq):
        if not np.all(np.isfinite(arr)):
            raise ValueError("LP data must be finite")

    # split free variables: x = x⁺ − x⁻, the minus parts appended at the end
    free_idx = np.flatnonzero(free)
    k = n + free_idx.size
    expand = np.hstack([np.eye(n), -np.eye(n)[:, free_idx]])
    cs = c @ expand
    Aub = A_ub @ expand
    Aeq = A_eq @ expand
    mu, me = Aub.shape[0], Aeq.shape[0]

    # standard form with slacks on the inequalities
    A = np.zeros((mu + me, k + mu))
    A[:mu, :k] = Aub
    A[:mu, k:] = np.eye(mu)
    A[mu:, :k] = Aeq
    b = np.concatenate([b_ub, b_eq])
    neg = b < 0
    A[neg] *= -1.0
    b = np.abs(b)
    rows, cols = A.shape

    # phase 1: one artificial per row
    T = np.zeros((rows + 1, cols + rows + 1))
    T[:rows, :cols] = A
    T[:rows, cols:cols + rows] = np.eye(rows)
    T[:rows, -1] = b
    T[rows, :cols] = -A.sum(axis=0)
    T[rows, -1] = -b.sum()
    basis = list(range(cols, cols + rows))
    _, it1 = _simplex(T, basis, cols + rows, tol, max_iter)
    scale = max(1.0, float(np.abs(b).max()) if b.size else 1.0)
    if -T[rows, -1] > 1e-9 * scale:
        return LPResult(INFEASIBLE, None, math.nan, it1)

    # drive artificials out of the basis, dropping redundant rows
    keep = []
    for r in range(rows):
        if basis[r] >= cols:
            nz = np.flatnonzero(np.abs(T[r, :cols]) > 1e-9)
            if nz.size:
                _pivot(T, r, int(nz[0]))
                basis[r] = int(nz[0])
                keep.append(r)
        else:
            keep.append(r)
    T = np.vstack([T[keep], T[rows:rows + 1]])
    basis = [basis[r] for r in keep]
    m = len(basis)
    T = np.hstack([T[:, :cols], T[:, -1:]])

    # phase 2
    cost = np.zeros(cols)
    cost[:k] = cs
    T[m, :] = 0.0
    T[m, :cols] = cost
    for r, j in enumerate(basis):
        if T[m, j] != 0.0:
            T[m] -= T[m, j] * T[r]
    status, it2 = _simplex(T, basis, cols, tol, max_iter)
    if status == UNBOUNDED:
        return LPResult(UNBOUNDED, None, -math.inf, it1 + it2)
    z = np.zeros(cols)
    for r, j in enumerate(basis):
        z[j] = T[r, -1]
    x = expand @ z[:k]
    return LPResult(OPTIMAL, x, float(c @ x), it1 + it2)


@dataclass
class FeasibilityResult:
    """Outcome of a strict-feasibility search.

    ``margin`` is the optimal δ; it is −inf when even the non-strict system
    (with the normalization) is infeasible and +inf when there is no strict
    group and the system is feasible."""

    point: np.ndarray | None
    margin: float
    status: str

    @property
    def strictly_feasible(self) -> bool:
        return self.margin > STRICT_TOL


def lp_feasibility(A_eq=None, b_eq=None, A_ub=None, b_ub=None, strict=(), n: int | None = None,
                   free=None, normalize: bool = True) -> FeasibilityResult:
    """Maximize δ subject to the given equalities and inequalities,
    x_i ≥ δ for i in ``strict`` and Σ_{i∈strict} x_i = 1.

    Variables are nonnegative unless flagged ``free``; coordinates in the
    strict group are only bounded below by δ.
    """
    arrays = [a for a in (A_eq, A_ub) if a is not None and np.size(a)]
    if n is None:
        if not arrays:
            raise ValueError("dimension required when there are no constraints")
        n = np.atleast_2d(arrays[0]).shape[1]
    strict = sorted(set(int(i) for i in strict))
    free = np.zeros(n, dtype=bool) if free is None else np.asarray(free, dtype=bool).copy()
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float)).reshape(-1, n)
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float)).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).reshape(-1)

    if not strict:
        res = solve_lp(np.zeros(n), A_ub, b_ub, A_eq, b_eq, free)
        if res.status == INFEASIBLE:
            return FeasibilityResult(None, -math.inf, INFEASIBLE)
        return FeasibilityResult(res.x, math.inf, OPTIMAL)

    # extra variable δ (free) in the last column
    N = n + 1
    Aeq = np.hstack([A_eq, np.zeros((A_eq.shape[0], 1))])
    beq = b_eq
    if normalize:
        row = np.zeros(N)
        row[strict] = 1.0
        Aeq = np.vstack([Aeq, row])
        beq = np.concatenate([beq, [1.0]])
    Aub = np.hstack([A_ub, np.zeros((A_ub.shape[0], 1))])
    bounds = np.zeros((len(strict), N))
    for r, i in enumerate(strict):
        bounds[r, i] = -1.0
        bounds[r, n] = 1.0
    Aub = np.vstack([Aub, bounds])
    bub = np.concatenate([b_ub, np.zeros(len(strict))])
    free_all = np.concatenate([free, [True]])
    free_all[strict] = True
    c = np.zeros(N)
    c[n] = -1.0
    res = solve_lp(c, Aub, bub, Aeq, beq, free_all)
    if res.status == INFEASIBLE:
        return FeasibilityResult(None, -math.inf, INFEASIBLE)
    if res.status == UNBOUNDED:
        raise LPError("strict-feasibility LP is unbounded; the normalization is missing")
    return FeasibilityResult(res.x[:n], float(res.x[n]), OPTIMAL)
