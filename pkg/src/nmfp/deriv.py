"""Numeric estimators for first- and second-order directional derivatives.

Four notions are covered:

* ``gateaux_dd``        one-sided limit of (θ(x0+tv) − θ(x0))/t
* ``clarke_dd``         limsup of (θ(y+tv) − θ(y))/t as y → x0, t → 0⁺
* ``second_dd``         limit of (θ(x0+tv) − θ(x0) − t·θ'(x0;v))/(t²/2)
* ``pales_zeidan_dd2``  limsup of the same quotient built on θ°(x0;v)

All of them walk a geometric grid t_k = t0·γ^k.  Inside each band
[γ·t_k, t_k] a few jittered extra step sizes are drawn from a per-level
seeded stream, so oscillating quotients such as 2·sin(1/t) are seen across
their whole range.  Levels whose roundoff bound exceeds a fixed budget are
discarded, and the verdict is read off the last few usable levels.

The quotient and affine rules for Clarke and Páles-Zeidan derivatives are
plain formulas at the bottom of the module.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .expr import DomainError, Expression, as_expression

__all__ = [
    "CONVERGED",
    "OSCILLATING",
    "NONEXISTENT",
    "EstimatorConfig",
    "DerivativeEstimate",
    "RegularityVerdict",
    "InapplicableError",
    "gateaux_dd",
    "clarke_dd",
    "second_dd",
    "pales_zeidan_dd2",
    "clarke_regular_probe",
    "quotient_clarke",
    "affine_clarke",
    "quotient_pz2",
    "affine_pz2",
]

CONVERGED = "converged"
OSCILLATING = "oscillating"
NONEXISTENT = "nonexistent"

_EPS = np.finfo(float).eps


class InapplicableError(ValueError):
    """A calculus rule was asked to use a derivative that does not exist."""


@dataclass(frozen=True)
class EstimatorConfig:
    t0: float = 0.1
    gamma: float = 0.5
    levels: int = 20
    ball_samples: int = 64
    phase_samples: int = 16
    oscillation_threshold: float = 0.05
    seed: int = 0
    use_exact: bool = True
    # how many trailing usable levels decide the verdict
    tail: int = 5
    # levels kept even when their roundoff bound is over budget
    min_levels: int = 8
    roundoff_budget: float = 1e-7
    # bound on the error a first-order estimate drags into a second-order
    # quotient, 2·err(d1)/t
    carry_budget: float = 1e-3
    regular_abs_tol: float = 1e-4
    regular_rel_tol: float = 1e-3

    def __post_init__(self):
        if not self.t0 > 0:
            raise ValueError("t0 must be positive")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        for name in ("levels", "ball_samples", "phase_samples", "tail", "min_levels"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.tail > self.levels:
            raise ValueError("tail cannot exceed the number of levels")
        if self.oscillation_threshold < 0:
            raise ValueError("oscillation_threshold must be nonnegative")

    def steps(self) -> np.ndarray:
        return self.t0 * self.gamma ** np.arange(self.levels)

    def rng(self, level: int, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, stream, level])

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DerivativeEstimate:
    value: float
    error: float
    verdict: str
    samples: int

    @property
    def exists(self) -> bool:
        return self.verdict != NONEXISTENT

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "error": self.error,
            "verdict": self.verdict,
            "samples": self.samples,
        }


@dataclass(frozen=True)
class RegularityVerdict:
    holds: bool
    status: str
    worst_direction: tuple[float, ...] | None
    worst_gap: float
    details: tuple = field(default=())


def _exact(value: float, samples: int = 1) -> DerivativeEstimate:
    return DerivativeEstimate(float(value), 0.0, CONVERGED, samples)


def _prepare(f, x0, v):
    e = as_expression(f)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    if x0.shape[0] != e.dimension or v.shape[0] != e.dimension:
        raise ValueError("point/direction dimension does not match the function")
    return e, x0, v


def _values(e: Expression, X: np.ndarray) -> np.ndarray:
    out = e.evaluate_batch(X)
    if np.isnan(out).any():
        raise DomainError("function undefined at a probe point near the base point")
    return out


def _band_steps(cfg: EstimatorConfig, k: int, t: float) -> np.ndarray:
    """t_k itself, γ·t_k, and jittered stratified samples strictly inside."""
    m = cfg.phase_samples
    u = (np.arange(m) + cfg.rng(k).random(m)) / m
    inner = t * (cfg.gamma + (1.0 - cfg.gamma) * u)
    return np.concatenate(([t, cfg.gamma * t], inner))


def _usable(bounds: np.ndarray, cfg: EstimatorConfig) -> int:
    """Number of leading levels whose roundoff bound is within budget."""
    ok = bounds <= cfg.roundoff_budget
    count = int(np.argmin(ok)) if not ok.all() else len(ok)
    return max(count, min(cfg.min_levels, len(ok)), cfg.tail)


def _chord_gap(steps: np.ndarray, q: np.ndarray) -> float:
    """Largest deviation of the band quotients from the straight line
    through the two band endpoints."""
    t_hi, t_lo = steps[0], steps[1]
    q_hi, q_lo = q[0], q[1]
    chord = q_lo + (q_hi - q_lo) * (steps - t_lo) / (t_hi - t_lo)
    return float(np.max(np.abs(q - chord)))


@dataclass
class _Ladder:
    """Quotient samples for every usable level of one estimator run."""

    steps: list          # band step arrays per level
    quotients: list      # quotient arrays per level
    heads: np.ndarray    # quotient at t_k
    gaps: np.ndarray     # chord deviation per level
    samples: int

    @property
    def tops(self) -> np.ndarray:
        return np.array([q.max() for q in self.quotients])

    @property
    def bottoms(self) -> np.ndarray:
        return np.array([q.min() for q in self.quotients])


def _ladder(e, x0, v, cfg, base, order, d1=0.0, d1_err=0.0) -> _Ladder:
    ts = cfg.steps()
    steps, quotients, bounds = [], [], []
    samples = 0
    for k, t in enumerate(ts):
        band = _band_steps(cfg, k, t)
        vals = _values(e, x0[None, :] + band[:, None] * v[None, :])
        samples += band.size
        scale = max(abs(base), float(np.max(np.abs(vals))), 1e-300)
        if order == 1:
            q = (vals - base) / band
            bounds.append(4.0 * _EPS * scale / t)
        else:
            q = (vals - base - band * d1) / (0.5 * band * band)
            over = (8.0 * _EPS * scale / (t * t)) / cfg.roundoff_budget
            carried = (2.0 * d1_err / t) / cfg.carry_budget
            bounds.append(max(over, carried) * cfg.roundoff_budget)
        steps.append(band)
        quotients.append(q)
    n = _usable(np.array(bounds), cfg)
    steps, quotients = steps[:n], quotients[:n]
    heads = np.array([q[0] for q in quotients])
    gaps = np.array([_chord_gap(s, q) for s, q in zip(steps, quotients)])
    return _Ladder(steps, quotients, heads, gaps, samples)


def _richardson(heads: np.ndarray, gamma: float) -> np.ndarray:
    """Eliminate the O(t) term between consecutive levels."""
    return (heads[1:] - gamma * heads[:-1]) / (1.0 - gamma)


def _carry_corrected(lad: _Ladder, cfg: EstimatorConfig) -> np.ndarray:
    """Tail extrapolations for a second-order quotient built on an
    inexact first-order value.

    An error e in d1 adds exactly 2e/t to every quotient, so each window
    of three consecutive levels is fitted by c + a/t + b·t and c kept."""
    ts = np.array([s[0] for s in lad.steps])
    out = []
    for k in range(2, len(ts)):
        t = ts[k - 2:k + 1]
        M = np.column_stack([np.ones(3), 1.0 / t, t])
        out.append(np.linalg.solve(M, lad.heads[k - 2:k + 1])[0])
    return np.array(out) if out else _richardson(lad.heads, cfg.gamma)


def _limit_estimate(lad: _Ladder, cfg: EstimatorConfig) -> DerivativeEstimate:
    """Two-sided limit: nonexistent when every tail level oscillates."""
    tail = slice(-cfg.tail, None)
    tops, bottoms = lad.tops[tail], lad.bottoms[tail]
    scale = max(1.0, float(np.max(np.abs(tops))), float(np.max(np.abs(bottoms))))
    noisy = lad.gaps[tail] > cfg.oscillation_threshold * scale
    if noisy.all():
        hi, lo = float(tops.max()), float(bottoms.min())
        return DerivativeEstimate(0.5 * (hi + lo), 0.5 * (hi - lo), NONEXISTENT, lad.samples)
    rich = _richardson(lad.heads, cfg.gamma)
    value = float(rich[-1])
    last3 = rich[-3:]
    error = max(float(last3.max() - last3.min()), abs(value - float(lad.heads[-1])))
    verdict = OSCILLATING if noisy.any() else CONVERGED
    return DerivativeEstimate(value, error, verdict, lad.samples)


def gateaux_dd(f, x0, v, cfg: EstimatorConfig | None = None) -> DerivativeEstimate:
    """One-sided directional derivative lim (θ(x0+tv) − θ(x0))/t."""
    cfg = cfg or EstimatorConfig()
    e, x0, v = _prepare(f, x0, v)
    base = e.evaluate(x0)
    if not v.any():
        return _exact(0.0)
    if cfg.use_exact:
        d = e.directional(x0, v)
        if d is not None:
            return _exact(d)
    return _limit_estimate(_ladder(e, x0, v, cfg, base, 1), cfg)


def clarke_dd(f, x0, v, cfg: EstimatorConfig | None = None) -> DerivativeEstimate:
    """Clarke generalized directional derivative.

    Per level the largest quotient over a ball of base points of radius
    t_k·‖v‖ and over the band of step sizes is recorded; the tail maxima
    are extrapolated linearly to t = 0.
    """
    cfg = cfg or EstimatorConfig()
    e, x0, v = _prepare(f, x0, v)
    e.evaluate(x0)
    if not v.any():
        return _exact(0.0)
    if cfg.use_exact:
        d = e.directional(x0, v)
        if d is not None:
            return _exact(d)
    n = x0.size
    vnorm = float(np.linalg.norm(v))
    ts = cfg.steps()
    maxima = np.empty(ts.size)
    samples = 0
    for k, t in enumerate(ts):
        rng = cfg.rng(k, stream=1)
        g = rng.standard_normal((cfg.ball_samples, n))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        radii = rng.random(cfg.ball_samples) ** (1.0 / n)
        ys = x0 + (t * vnorm) * radii[:, None] * g
        ys = np.vstack([x0, x0 - t * v, x0 + t * v, ys])
        band = _band_steps(cfg, k, t)
        fy = e.evaluate_batch(ys)
        pts = ys[:, None, :] + band[None, :, None] * v[None, None, :]
        fyt = e.evaluate_batch(pts.reshape(-1, n)).reshape(len(ys), band.size)
        with np.errstate(invalid="ignore"):
            q = (fyt - fy[:, None]) / band[None, :]
        samples += q.size + len(ys)
        if np.isnan(q).all():
            raise DomainError("function undefined on the whole probe ball")
        maxima[k] = np.nanmax(q)
    tail_t, tail_m = ts[-cfg.tail:], maxima[-cfg.tail:]
    slope, intercept = np.polyfit(tail_t, tail_m, 1)
    value = float(intercept)
    running = np.maximum.accumulate(maxima[::-1])[::-1]
    last3 = tail_m[-3:]
    error = max(float(last3.max() - last3.min()), abs(value - float(running[-1])))
    scale = max(1.0, abs(value))
    verdict = CONVERGED if error <= cfg.oscillation_threshold * scale else OSCILLATING
    return DerivativeEstimate(value, error, verdict, samples)


def second_dd(f, x0, v, cfg: EstimatorConfig | None = None,
              d1: DerivativeEstimate | float | None = None) -> DerivativeEstimate:
    """Second-order directional derivative as a two-sided limit.

    ``d1`` defaults to the one-sided first derivative; a nonexistent first
    derivative makes the second one nonexistent too.
    """
    cfg = cfg or EstimatorConfig()
    e, x0, v = _prepare(f, x0, v)
    base = e.evaluate(x0)
    if not v.any():
        return _exact(0.0)
    if d1 is None:
        d1 = gateaux_dd(e, x0, v, cfg)
    d1_err = 0.0
    if isinstance(d1, DerivativeEstimate):
        if d1.verdict == NONEXISTENT:
            return DerivativeEstimate(math.nan, math.inf, NONEXISTENT, d1.samples)
        d1, d1_err = d1.value, d1.error
    return _limit_estimate(_ladder(e, x0, v, cfg, base, 2, float(d1), d1_err), cfg)


def pales_zeidan_dd2(f, x0, v, cfg: EstimatorConfig | None = None,
                     d1: DerivativeEstimate | float | None = None) -> DerivativeEstimate:
    """Páles-Zeidan second-order derivative: limsup over t of the Taylor
    remainder quotient built on the Clarke derivative."""
    cfg = cfg or EstimatorConfig()
    e, x0, v = _prepare(f, x0, v)
    base = e.evaluate(x0)
    if not v.any():
        return _exact(0.0)
    if d1 is None:
        d1 = clarke_dd(e, x0, v, cfg)
    d1_err = 0.0
    if isinstance(d1, DerivativeEstimate):
        d1, d1_err = d1.value, d1.error
    lad = _ladder(e, x0, v, cfg, base, 2, float(d1), d1_err)
    tail = slice(-cfg.tail, None)
    tops = lad.tops[tail]
    scale = max(1.0, float(np.max(np.abs(tops))))
    if not (lad.gaps[tail] > cfg.oscillation_threshold * scale).any():
        rich = _richardson(lad.heads, cfg.gamma)
        if d1_err > 0:
            rich = _carry_corrected(lad, cfg)
        value = float(rich[-1])
        last3 = rich[-3:]
        error = max(float(last3.max() - last3.min()), abs(value - float(lad.heads[-1])))
        return DerivativeEstimate(value, error, CONVERGED, lad.samples)
    value = float(tops.max())
    last3 = tops[-3:]
    return DerivativeEstimate(value, float(last3.max() - last3.min()), OSCILLATING, lad.samples)


def clarke_regular_probe(f, x0, directions: Sequence, cfg: EstimatorConfig | None = None
                         ) -> RegularityVerdict:
    """Compare one-sided and Clarke derivatives along every direction."""
    cfg = cfg or EstimatorConfig()
    directions = [np.asarray(d, dtype=float) for d in directions]
    if not directions:
        raise ValueError("at least one direction is required")
    worst_gap, worst_dir, rows = -1.0, None, []
    for d in directions:
        g = gateaux_dd(f, x0, d, cfg)
        c = clarke_dd(f, x0, d, cfg)
        key = tuple(float(a) for a in d)
        if g.verdict == NONEXISTENT:
            rows.append((key, None, c.value, math.inf))
            return RegularityVerdict(False, "fails (derivative missing)", key, math.inf, tuple(rows))
        gap = abs(g.value - c.value)
        rows.append((key, g.value, c.value, gap))
        if gap > worst_gap:
            worst_gap, worst_dir = gap, key
    fails = [r for r in rows
             if r[3] > max(cfg.regular_abs_tol, cfg.regular_rel_tol * abs(r[2]))]
    status = "fails" if fails else "holds"
    return RegularityVerdict(not fails, status, worst_dir, worst_gap, tuple(rows))


# ---------------------------------------------------------------------------
# Quotient and affine rules
# ---------------------------------------------------------------------------


def _second_value(d_second, rule: str) -> float:
    if isinstance(d_second, DerivativeEstimate):
        if d_second.verdict == NONEXISTENT:
            raise InapplicableError(
                f"{rule} inapplicable: the denominator's second-order directional "
                "derivative does not exist")
        return d_second.value
    return float(d_second)


def quotient_clarke(n1_clarke: float, n1_value: float, d_value: float,
                    d_gateaux: float) -> float:
    """Clarke derivative of θ1/θ2 from θ1°, θ1(x0), θ2(x0) > 0 and ⟨θ2', v⟩."""
    if not d_value > 0:
        raise ValueError("denominator value must be positive")
    return (n1_clarke - (n1_value / d_value) * d_gateaux) / d_value


def affine_clarke(n1_clarke: float, beta: float, d_gateaux: float) -> float:
    """Clarke derivative of θ1 − βθ2 for β ≥ 0 and Gâteaux θ2."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    return n1_clarke - beta * d_gateaux


def quotient_pz2(n1_pz: float, n1_value: float, d_value: float, d_second) -> float:
    """Páles-Zeidan derivative of θ1/θ2.  ``d_second`` must be the ordinary
    second-order derivative θ2''(x0;v); a nonexistent one is refused."""
    if not d_value > 0:
        raise ValueError("denominator value must be positive")
    d2 = _second_value(d_second, "quotient rule")
    return (n1_pz - (n1_value / d_value) * d2) / d_value


def affine_pz2(n1_pz: float, beta: float, d_second) -> float:
    """Páles-Zeidan derivative of θ1 − βθ2 for β ≥ 0."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    d2 = _second_value(d_second, "affine rule")
    return n1_pz - beta * d2
