"""Small problem builders shared by the test modules."""

from __future__ import annotations

from nmfp.problem import FractionalProblem


def line_problem(f: str, F: str = "1", g=(), h=(), lower=-1.0, upper=1.0) -> FractionalProblem:
    """One-dimensional problem with a single ratio."""
    return FractionalProblem.from_strings(1, [lower], [upper], [f], [F], list(g), list(h))
