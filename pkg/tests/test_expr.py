"""Expression parser, evaluator and forward-mode directional derivatives."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmfp.expr import (
    DomainError,
    ParseError,
    ScalarFunction,
    evaluate,
    exact_directional,
    linear_combination,
    parse,
    to_source,
)

THETA2 = "if0(x1, 1, x1^2*sin(1/x1)+1)"


# -- spec examples -----------------------------------------------------------

def test_parse_polynomial_and_evaluate():
    assert parse("x1^2 + 1", 1).evaluate([2.0]) == 5.0
    assert evaluate(parse("x1^2 + 1", 1), [1.0]) == 2.0


def test_unguarded_theta2_is_domain_error_at_zero():
    e = parse("x1^2*sin(1/x1) + 1", 1)
    with pytest.raises(DomainError):
        e.evaluate([0.0])


def test_if0_guard():
    e = parse(THETA2, 1)
    assert e.evaluate([0.0]) == 1.0
    assert e.evaluate([0.1]) == pytest.approx(0.1 ** 2 * math.sin(10) + 1, abs=1e-15)
    # sin(π/2) = 1 at x = 2/π
    assert e.evaluate([2 / math.pi]) == pytest.approx((2 / math.pi) ** 2 + 1, abs=1e-15)


def test_section4_numerator_at_origin():
    assert parse("3*x1^4+5*x1^2+6*x2^2", 2).evaluate([0.0, 0.0]) == 0.0


def test_exact_directional_examples():
    assert exact_directional(parse("x1^2", 1), [0.0], [3.0]) == 0.0
    F1 = parse("1+x1+x2", 3)
    assert exact_directional(F1, [0, 0, 0], [1, 1, 0]) == 2.0
    assert exact_directional(parse("abs(x1)", 1), [0.0], [1.0]) is None


# -- grammar -----------------------------------------------------------------

@pytest.mark.parametrize("src, x, value", [
    ("-x1^2", [3.0], -9.0),              # ^ binds tighter than unary minus
    ("2^3^2", [0.0], 64.0),              # left-associative: (2^3)^2
    ("8/4/2", [0.0], 1.0),
    ("1 - 2 - 3", [0.0], -4.0),
    ("2*x1 + 3*x1*x1", [2.0], 16.0),
    ("min(x1, 2, -1)", [0.5], -1.0),
    ("max(x1, 2)", [5.0], 5.0),
    ("abs(-x1)", [-2.0], 2.0),
    ("exp(log(x1))", [3.0], 3.0),
    ("cos(pi)", [0.0], -1.0),
    ("e^2", [0.0], math.e ** 2),
    ("1.5e-1*x1", [2.0], 0.3),
    ("x1^-1", [4.0], 0.25),
    ("x1^0.5", [9.0], 3.0),
])
def test_precedence_and_builtins(src, x, value):
    assert parse(src, 1).evaluate(x) == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize("src, message", [
    ("x1 +", "unexpected end of input"),
    ("x1 $ 2", "unexpected character"),
    ("foo(x1)", "unknown function"),
    ("y + 1", "unknown identifier"),
    ("x3", "exceeds dimension"),
    ("sin(x1, x2)", "takes 1 argument"),
    ("if0(x1, 1)", "takes 3 argument"),
    ("max(x1)", "at least 2"),
    ("x1^x2", "exponent must be constant"),
    ("(x1 + 1", r"expected '\)'"),
    ("   ", "empty expression"),
])
def test_parse_errors(src, message):
    with pytest.raises(ParseError, match=message):
        parse(src, 2)


def test_parse_error_carries_position():
    with pytest.raises(ParseError) as info:
        parse("x1 + * 2", 1)
    assert info.value.position == 5


@pytest.mark.parametrize("src, x", [
    ("log(x1)", [0.0]),
    ("log(x1)", [-1.0]),
    ("1/x1", [0.0]),
    ("x1^0.5", [-1.0]),
    ("exp(x1)", [1000.0]),
])
def test_domain_errors(src, x):
    with pytest.raises(DomainError):
        parse(src, 1).evaluate(x)


def test_batch_marks_domain_failures_with_nan():
    out = parse("1/x1", 1).evaluate_batch([[1.0], [0.0], [2.0]])
    assert out[0] == 1.0 and math.isnan(out[1]) and out[2] == 0.5


def test_wrong_point_dimension():
    with pytest.raises(ValueError):
        parse("x1", 2).evaluate([1.0])


# -- smoothness tags ---------------------------------------------------------

def test_smoothness_flags():
    assert parse("x1^2 + sin(x2)", 2).smooth
    for src in ("abs(x1)", "min(x1, x2)", "max(x1, 0)", THETA2.replace("x1", "x2")):
        assert not parse(src, 2).smooth
    # a denominator that vanishes on the box is not smooth there
    assert parse("1/x1", 1).smooth_on([0.5], [1.0])
    assert not parse("1/x1", 1).smooth_on([-1.0], [1.0])
    assert not parse("log(x1)", 1).smooth_on([-1.0], [1.0])


def test_kink_below_smooth_root_is_unavailable():
    assert exact_directional(parse("x1^2 + abs(x2)", 2), [1.0, 1.0], [1.0, 0.0]) is None


def test_gradient_and_combinations():
    e = parse("x1^2*x2 + 3*x2", 2)
    np.testing.assert_allclose(e.gradient([1.0, 2.0]), [4.0, 4.0])
    q = e / parse("1 + x1^2", 2)
    assert q.evaluate([1.0, 2.0]) == pytest.approx(4.0)
    lc = linear_combination([2.0, 0.0, 1.0], [e, parse("x1", 2), parse("x2", 2)], 2)
    assert lc.evaluate([1.0, 2.0]) == 2 * 8 + 2
    assert linear_combination([0.0], [e], 2).evaluate([1.0, 1.0]) == 0.0


def test_scalar_function_label_and_call():
    f = ScalarFunction.from_source("x1 + 2", 1)
    assert f.label == "x1 + 2" and f([1.0]) == 3.0 and f.dimension == 1


# -- properties --------------------------------------------------------------

def _leaf(n):
    return st.one_of(
        st.integers(1, n).map(lambda k: f"x{k}"),
        st.floats(-3, 3, allow_nan=False).map(lambda c: f"{c:.3f}"),
    )


def smooth_sources(n=2):
    """Random polynomials with sin/cos/exp decorations."""
    return st.recursive(
        _leaf(n),
        lambda inner: st.one_of(
            st.tuples(inner, st.sampled_from("+-*"), inner).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
            st.tuples(inner, st.integers(1, 3)).map(lambda t: f"({t[0]})^{t[1]}"),
            st.tuples(st.sampled_from(["sin", "cos"]), inner).map(lambda t: f"{t[0]}({t[1]})"),
            inner.map(lambda s: f"-{s}"),
        ),
        max_leaves=8,
    )


def any_sources(n=2):
    return st.recursive(
        _leaf(n),
        lambda inner: st.one_of(
            st.tuples(inner, st.sampled_from("+-*/"), inner).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
            st.tuples(inner, st.sampled_from(["2", "3", "0.5", "-1"])).map(lambda t: f"({t[0]})^{t[1]}"),
            st.tuples(st.sampled_from(["sin", "cos", "exp", "log", "abs"]), inner)
              .map(lambda t: f"{t[0]}({t[1]})"),
            st.tuples(st.sampled_from(["min", "max"]), inner, inner).map(lambda t: f"{t[0]}({t[1]}, {t[2]})"),
            st.tuples(inner, inner, inner).map(lambda t: f"if0({t[0]}, {t[1]}, {t[2]})"),
            inner.map(lambda s: f"-{s}"),
        ),
        max_leaves=8,
    )


def _same(a, b):
    return (math.isnan(a) and math.isnan(b)) or a == b


@settings(max_examples=60, deadline=None)
@given(any_sources())
def test_round_trip_is_evaluation_identical(src):
    e = parse(src, 2)
    again = parse(to_source(e), 2)
    X = np.random.default_rng(0).uniform(-2, 2, (100, 2))
    a, b = e.evaluate_batch(X), again.evaluate_batch(X)
    assert all(_same(x, y) for x, y in zip(a, b))
    # and print∘parse is a fixed point
    assert to_source(again) == to_source(e)


@settings(max_examples=60, deadline=None)
@given(smooth_sources(), st.floats(-10, 10), st.floats(-10, 10), st.integers(0, 2 ** 31))
def test_directional_is_linear_in_v(src, alpha, beta, seed):
    e = parse(src, 2)
    rng = np.random.default_rng(seed)
    x, v, w = rng.uniform(-1, 1, (3, 2))
    dv, dw = e.directional(x, v), e.directional(x, w)
    d = e.directional(x, alpha * v + beta * w)
    assert abs(d - alpha * dv - beta * dw) <= 1e-12 * (1 + abs(d))


@settings(max_examples=60, deadline=None)
@given(smooth_sources(), st.integers(0, 2 ** 31))
def test_directional_matches_forward_difference(src, seed):
    e = parse(src, 2)
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, 2)
    v = rng.standard_normal(2)
    d = e.directional(x, v)
    t = 1e-6
    fd = (e.evaluate(x + t * v) - e.evaluate(x)) / t
    # second-order remainder t·|v|²·|H|/2 plus roundoff, relative to the scale
    scale = 1 + abs(d) + abs(e.evaluate(x))
    assert abs(fd - d) <= 1e-4 * scale


def test_linearity_tolerance_as_stated():
    """Random smooth polynomials at the stated 1e-12 relative bound."""
    rng = np.random.default_rng(1)
    for _ in range(50):
        c = rng.uniform(-2, 2, 6)
        e = parse(f"{c[0]}*x1^3 + {c[1]}*x1*x2 + {c[2]}*x2^2 + {c[3]}*x1 + {c[4]}*x2 + {c[5]}", 2)
        x, v, w = rng.uniform(-1, 1, (3, 2))
        a, b = rng.uniform(-10, 10, 2)
        d = e.directional(x, a * v + b * w)
        assert abs(d - a * e.directional(x, v) - b * e.directional(x, w)) <= 1e-12 * (1 + abs(d))
