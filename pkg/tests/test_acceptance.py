"""Acceptance criteria, one test and one PASS/FAIL line per criterion.

Run directly (``python tests/test_acceptance.py``) or through pytest; the
lines are repeated in the terminal summary under "acceptance criteria".
"""

from __future__ import annotations

import json
import math
import sys
import time

import numpy as np
import pytest
from scipy.optimize import linprog

from nmfp.cli import COMMANDS, corpus_names, load_problem_file, run
from nmfp.cones import contingent_member, gsoarc_probe, linearizing_member
from nmfp.deriv import (
    NONEXISTENT,
    EstimatorConfig,
    InapplicableError,
    affine_clarke,
    affine_pz2,
    clarke_dd,
    gateaux_dd,
    pales_zeidan_dd2,
    quotient_clarke,
    quotient_pz2,
    second_dd,
)
from nmfp.duality import strong_duality_construct, weak_duality_sweep
from nmfp.expr import parse
from nmfp.kkt import MultiplierVector, stationarity_relations, strong_kkt_system, verify_multipliers
from nmfp.lp import lp_feasibility
from nmfp.problem import EFFICIENT, lemma21_sweep, pareto_oracle, s_parameter
from nmfp.sufficiency import PARETO_EFFICIENT, theorem42_check

THETA1 = "x1^2 + 1"
THETA2 = "if0(x1, 1, x1^2*sin(1/x1) + 1)"


def test_criterion_1_example21(acceptance):
    start = time.perf_counter()
    t1, t2 = parse(THETA1, 1), parse(THETA2, 1)
    quotient = parse(f"({THETA1}) / ({THETA2})", 1)
    x0, v = [0.0], [1.0]
    c1 = clarke_dd(t1, x0, v)
    pz1 = pales_zeidan_dd2(t1, x0, v)
    pz2 = pales_zeidan_dd2(t2, x0, v)
    pzq = pales_zeidan_dd2(quotient, x0, v)
    sec2 = second_dd(t2, x0, v)
    try:
        quotient_pz2(pz1.value, t1.evaluate(x0), t2.evaluate(x0), sec2)
        refused = ""
    except InapplicableError as exc:
        refused = str(exc)
    elapsed = time.perf_counter() - start
    checks = {
        "clarke(t1)=0": abs(c1.value) <= 0.02,
        "pz(t1)=2": abs(pz1.value - 2) <= 0.1,
        "pz(t2)=2": abs(pz2.value - 2) <= 0.1,
        "pz(t1/t2)=4": abs(pzq.value - 4) <= 0.2,
        "second(t2) nonexistent": sec2.verdict == NONEXISTENT,
        "quotient rule refused": "inapplicable" in refused,
        "under 2 s": elapsed < 2.0,
    }
    detail = (f"clarke={c1.value:.4g} pz1={pz1.value:.4g} pz2={pz2.value:.4g} "
              f"pzq={pzq.value:.4g} second={sec2.verdict} {elapsed:.2f}s")
    failed = [k for k, ok in checks.items() if not ok]
    ok = acceptance(1, "oscillating denominator derivatives", not failed,
                    detail + (f" failed={failed}" if failed else ""))
    assert ok, failed


def test_criterion_2_example31(acceptance, example31):
    start = time.perf_counter()
    P = example31.problem
    x0, v = np.zeros(3), np.array([0.0, 0.0, 1.0])
    outcome = strong_kkt_system(P, x0, v)
    M_mu, M_nu, rank = stationarity_relations(outcome, P.p)
    # λ1 = −(3μ1+2μ2)/7, λ2 = −(μ1+3μ2)/7 as printed
    printed = np.array([[-3.0, -2.0], [-1.0, -3.0]]) / 7.0
    # independent oracle: solve the hand-written stationarity block
    # −3λ1 + 2λ2 − μ1 = 0, λ1 − 3λ2 − μ2 = 0
    oracle = np.linalg.solve(np.array([[-3.0, 2.0], [1.0, -3.0]]), np.eye(2))
    rng = np.random.default_rng(3)
    block_residual = 0.0
    for _ in range(20):
        mu = rng.uniform(0, 2, 2)
        nu = rng.uniform(-2, 2, P.l)
        z = np.concatenate([printed @ mu, mu, nu])
        block_residual = max(block_residual, float(np.abs(outcome.A_eq @ z).max()))
    probe = gsoarc_probe(P, x0, v)
    in_C = in_T = None
    if probe.witness is not None:
        w = np.asarray(probe.witness[0])
        in_C = linearizing_member(P, x0, s_parameter(P, x0), w).member
        in_T = contingent_member(P, x0, w).status
        # hand reading: the feasible cross has w1·w2 = 0 on its tangent cone
        hand_outside_T = w[0] > 1e-9 and w[1] > 1e-9
    elapsed = time.perf_counter() - start
    checks = {
        "no certificate": outcome.certificate is None,
        "delta <= 1e-9": outcome.delta <= 1e-9,
        "mu support = both inequalities": list(outcome.layout["mu"]) == [0, 1],
        "relations match printed": np.allclose(M_mu, printed, atol=1e-9) and rank == 2,
        "relations match oracle": np.allclose(M_mu, oracle, atol=1e-9),
        "relations hold on equality block": block_residual <= 1e-9,
        "gsoarc violated": probe.violated,
        "witness in C": bool(in_C),
        "witness not in T": in_T == "non-member" and bool(probe.witness is not None and hand_outside_T),
        "under 5 s": elapsed < 5.0,
    }
    failed = [k for k, ok in checks.items() if not ok]
    detail = (f"delta*={outcome.delta} M_mu={np.round(M_mu, 6).tolist()} "
              f"witness={None if probe.witness is None else np.round(probe.witness[0], 3).tolist()} "
              f"{elapsed:.2f}s")
    ok = acceptance(2, "regularity failure refutes KKT", not failed,
                    detail + (f" failed={failed}" if failed else ""))
    assert ok, failed


def test_criterion_3_section4(acceptance, section4):
    start = time.perf_counter()
    pf = section4
    P, x0, v = pf.problem, pf.point, pf.direction
    outcome = strong_kkt_system(P, x0, v)
    paper = MultiplierVector(np.array([1.0, 2.0]), np.array([1.0, 0.0]), np.array([-2.0]))
    paper_check = verify_multipliers(P, x0, v, paper)
    lam_gap = float(np.abs(paper.normalized().lam - np.array([1 / 3, 2 / 3])).max())
    suff = theorem42_check(P, x0, paper, resolution=pf.resolution, grid_box=pf.grid_box)
    oracle = pareto_oracle(P, 201, x0, pf.grid_box)
    construct = strong_duality_construct(P, x0, v)
    sweep = weak_duality_sweep(P, 201, [construct.dual_point] if construct.found else [],
                               grid_box=pf.grid_box)
    elapsed = time.perf_counter() - start
    checks = {
        "certificate delta > 1e-6": outcome.found and outcome.delta > 1e-6,
        "printed multipliers verified": paper_check.holds and lam_gap <= 1e-6,
        "theorem42 Pareto-efficient": suff.status == PARETO_EFFICIENT,
        "oracle efficient on 201^2": oracle.status == EFFICIENT and oracle.grid_size == 201 ** 2,
        "construct MWSD-feasible": construct.found and construct.feasibility.feasible,
        "zero weak-duality violations": construct.found and sweep.clean and sweep.checked_pairs > 0,
        "under 30 s": elapsed < 30.0,
    }
    failed = [k for k, ok in checks.items() if not ok]
    cert = outcome.certificate
    detail = (f"delta={outcome.delta:.4g} lambda={None if cert is None else cert.lam.tolist()} "
              f"theorem42={suff.status} oracle={oracle.status} "
              f"violations={len(sweep.violations)}/{sweep.checked_pairs} {elapsed:.1f}s")
    ok = acceptance(3, "common denominator problem end to end", not failed,
                    detail + (f" failed={failed}" if failed else ""))
    assert ok, failed


def _random_pair(rng):
    """θ1 a cubic plus a rational term, θ2 a quadratic ≥ 0.5 on [−1,1]²."""
    a = rng.uniform(-1, 1, 6)
    theta1 = (f"{a[0]:.4f}*x1^3 + {a[1]:.4f}*x1*x2 + {a[2]:.4f}*x2^2 + {a[3]:.4f}*x1"
              f" + {a[4]:.4f}/(2 + x2^2) + {a[5]:.4f}")
    b = rng.uniform(-1, 1, 4)
    b *= 0.45 / np.abs(b).sum()           # |perturbation| ≤ 0.45 on the box
    theta2 = f"1 + {b[0]:.4f}*x1^2 + {b[1]:.4f}*x2^2 + {b[2]:.4f}*x1*x2 + {b[3]:.4f}*x2"
    return theta1, theta2


def _close(value, ref):
    return abs(value - ref) <= 1e-3 * (1 + abs(ref))


def calculus_suite(count: int = 20, seed: int = 11):
    cfg = EstimatorConfig(use_exact=False)
    rng = np.random.default_rng(seed)
    grid = np.stack(np.meshgrid(np.linspace(-1, 1, 41), np.linspace(-1, 1, 41)), -1).reshape(-1, 2)
    rows = []
    for _ in range(count):
        s1, s2 = _random_pair(rng)
        t1, t2 = parse(s1, 2), parse(s2, 2)
        assert min(t2.evaluate(x) for x in grid) >= 0.5
        x0 = rng.uniform(-0.5, 0.5, 2)
        v = rng.standard_normal(2)
        beta = float(rng.uniform(0, 3))
        n_val, d_val = t1.evaluate(x0), t2.evaluate(x0)
        n_c = clarke_dd(t1, x0, v, cfg).value
        n_pz = pales_zeidan_dd2(t1, x0, v, cfg).value
        d_g = gateaux_dd(t2, x0, v, cfg).value
        d_2 = second_dd(t2, x0, v, cfg)
        quot = parse(f"({s1}) / ({s2})", 2)
        aff = parse(f"({s1}) - {beta!r}*({s2})", 2)
        q_c = quotient_clarke(n_c, n_val, d_val, d_g)
        q_pz = quotient_pz2(n_pz, n_val, d_val, d_2)
        rows.append({
            "ii": (q_c, clarke_dd(quot, x0, v, cfg).value),
            "iii": (affine_clarke(n_c, beta, d_g), clarke_dd(aff, x0, v, cfg).value),
            "iv": (q_pz, pales_zeidan_dd2(quot, x0, v, cfg).value),
            "v": (affine_pz2(n_pz, beta, d_2), pales_zeidan_dd2(aff, x0, v, cfg).value),
            # the product rule term that the printed quotient formula omits
            "iv_cross": (q_pz - 2 * q_c * d_g / d_val, pales_zeidan_dd2(quot, x0, v, cfg).value),
        })
    quads = []
    for _ in range(count):
        n = int(rng.integers(1, 4))
        A = rng.uniform(-2, 2, (n, n))
        b = rng.uniform(-2, 2, n)
        terms = [f"{A[i, j]:.4f}*x{i + 1}*x{j + 1}" for i in range(n) for j in range(n)]
        terms += [f"{b[i]:.4f}*x{i + 1}" for i in range(n)]
        e = parse(" + ".join(terms) + " + 0.5", n)
        H = np.array([[float(f"{A[i, j]:.4f}") for j in range(n)] for i in range(n)])
        H = H + H.T
        x0 = rng.uniform(-1, 1, n)
        v = rng.standard_normal(n)
        quads.append((pales_zeidan_dd2(e, x0, v, cfg).value, float(v @ H @ v)))
    return rows, quads


def test_criterion_4_calculus(acceptance):
    rows, quads = calculus_suite()
    counts = {k: sum(_close(*r[k]) for r in rows) for k in ("ii", "iii", "iv", "v", "iv_cross")}
    worst_iv = max(abs(a - b) for a, b in (r["iv"] for r in rows))
    hess_ok = sum(_close(a, b) for a, b in quads)
    n = len(rows)
    ok = all(counts[k] == n for k in ("ii", "iii", "iv", "v")) and hess_ok == len(quads)
    detail = (f"(ii) {counts['ii']}/{n}, (iii) {counts['iii']}/{n}, (iv) {counts['iv']}/{n} "
              f"(worst gap {worst_iv:.3g}; with the omitted cross term "
              f"{counts['iv_cross']}/{n}), (v) {counts['v']}/{n}, "
              f"PZ = vHv {hess_ok}/{len(quads)}")
    acceptance(4, "calculus property suite", ok, detail)
    assert ok, detail


def test_criterion_5_lemma21(acceptance):
    total = 0
    points = 0
    per = []
    for name in corpus_names():
        pf = load_problem_file(name)
        mism = lemma21_sweep(pf.problem, pf.resolution, pf.grid_box)
        total += len(mism)
        per.append(f"{name}:{len(mism)}")
    ok = total == 0
    acceptance(5, "ratio and shifted problem oracle equivalence", ok,
               f"{total} mismatches over {len(per)} problems ({', '.join(per)})")
    assert ok


def planted_instances(count: int = 50, seed: int = 5):
    """Half strictly feasible by a planted positive point, half refuted by
    a planted Gordan certificate yᵀA = c ≥ 0, c ≠ 0."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        n = int(rng.integers(2, 7))
        m = int(rng.integers(1, n))
        A = rng.standard_normal((m, n))
        if k % 2 == 0:
            x = rng.uniform(0.2, 1.0, n)
            x /= x.sum()
            b = A @ x
            ub = rng.standard_normal((2, n))
            bub = ub @ x + rng.uniform(0.1, 1.0, 2)
            out.append((A, b, ub, bub, True))
        else:
            y = rng.standard_normal(m)
            c = rng.uniform(0.0, 1.0, n)
            c[rng.integers(n)] += 0.5
            A = A + np.outer(y, c - y @ A) / (y @ y)
            out.append((A, np.zeros(m), None, None, False))
    return out


def highs_margin(A, b, ub, bub):
    m, n = A.shape
    N = n + 1
    c = np.zeros(N)
    c[-1] = -1.0
    Aeq = np.vstack([np.hstack([A, np.zeros((m, 1))]), np.append(np.ones(n), 0.0)])
    beq = np.append(b, 1.0)
    Aub = np.hstack([-np.eye(n), np.ones((n, 1))])
    bubs = np.zeros(n)
    if ub is not None:
        Aub = np.vstack([Aub, np.hstack([ub, np.zeros((len(ub), 1))])])
        bubs = np.append(bubs, bub)
    res = linprog(c, A_ub=Aub, b_ub=bubs, A_eq=Aeq, b_eq=beq, bounds=[(None, None)] * N,
                  method="highs")
    return -res.fun if res.status == 0 else -math.inf


def test_criterion_6_lp(acceptance):
    correct = 0
    worst = 0.0
    insts = planted_instances()
    for A, b, ub, bub, planted in insts:
        n = A.shape[1]
        res = lp_feasibility(A, b, ub, bub, strict=range(n), n=n)
        ref = highs_margin(A, b, ub, bub)
        correct += res.strictly_feasible == planted
        if math.isfinite(ref) or math.isfinite(res.margin):
            worst = max(worst, abs(res.margin - ref))
    ok = correct == len(insts) and worst <= 1e-7
    acceptance(6, "LP solver oracle", ok,
               f"{correct}/{len(insts)} classified, worst margin error vs HiGHS {worst:.2e}")
    assert ok


def corpus_reports(seed: int = 0) -> dict:
    return {(name, cmd): json.dumps(run(cmd, name, seed=seed)[0], indent=2)
            for name in corpus_names() for cmd in COMMANDS}


def test_criterion_7_determinism(acceptance):
    first = corpus_reports()
    second = corpus_reports()
    differ = [k for k in first if first[k] != second[k]]
    ok = not differ and len(first) == len(corpus_names()) * len(COMMANDS)
    acceptance(7, "determinism", ok,
               f"{len(first) - len(differ)}/{len(first)} reports byte-identical"
               + (f", differing: {differ}" if differ else ""))
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
