import math
import random

import numpy as np
import pytest
from hypothesis import strategies as st

from spectralflex import symexpr as se


def random_tree(rng: random.Random, depth: int, n: int = 4):
    """Random expression tree paired with a plain ``math`` lambda."""
    if depth == 0 or rng.random() < 0.25:
        kind = rng.choice(["const", "coord", "sin", "cos"])
        i = rng.randrange(n)
        if kind == "const":
            c = rng.randint(-3, 3)
            return se.const(c), lambda p: float(c)
        if kind == "coord":
            return se.coord(i), lambda p: p[i]
        k = rng.randint(-3, 3)
        if kind == "sin":
            return se.sin(k, i), lambda p: math.sin(k * p[i])
        return se.cos(k, i), lambda p: math.cos(k * p[i])
    kind = rng.choice(["sum", "prod", "neg"])
    if kind == "neg":
        e, f = random_tree(rng, depth - 1, n)
        return se.Neg(e), lambda p: -f(p)
    kids = [random_tree(rng, depth - 1, n) for _ in range(rng.randint(2, 3))]
    exprs = [k[0] for k in kids]
    funcs = [k[1] for k in kids]
    if kind == "sum":
        return se.Sum(exprs), lambda p: sum(f(p) for f in funcs)
    return se.Prod(exprs), lambda p: math.prod(f(p) for f in funcs)


def reference_eval(e, p):
    """Recursive interpreter over the raw tree, independent of expansion."""
    if isinstance(e, se.Const):
        return float(e.value)
    if isinstance(e, se.Coord):
        return float(p[e.index])
    if isinstance(e, se.Sin):
        return math.sin(e.k * p[e.index])
    if isinstance(e, se.Cos):
        return math.cos(e.k * p[e.index])
    if isinstance(e, se.Neg):
        return -reference_eval(e.child, p)
    if isinstance(e, se.Sum):
        return sum(reference_eval(t, p) for t in e.terms)
    if isinstance(e, se.Prod):
        return math.prod(reference_eval(t, p) for t in e.factors)
    raise TypeError(type(e))


@st.composite
def trig_exprs(draw, n: int = 4, depth: int = 3):
    """Hypothesis strategy: trig polynomials without raw coordinates."""
    if depth == 0 or draw(st.booleans()):
        i = draw(st.integers(0, n - 1))
        k = draw(st.integers(-3, 3))
        kind = draw(st.sampled_from(["const", "sin", "cos"]))
        if kind == "const":
            return se.const(draw(st.integers(-4, 4)))
        return se.sin(k, i) if kind == "sin" else se.cos(k, i)
    a = draw(trig_exprs(n, depth - 1))
    b = draw(trig_exprs(n, depth - 1))
    return draw(st.sampled_from([se.add(a, b), se.mul(a, b), se.neg(a)]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def torus_points(rng, count, n=4):
    return rng.uniform(0, 2 * np.pi, (count, n))


# -- acceptance reporting ------------------------------------------------

ACCEPTANCE = []


def record(number: int, ok: bool, detail: str) -> bool:
    """Log one acceptance line; the summary hook reprints them all."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {detail}"
    ACCEPTANCE.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE, key=lambda t: t[0]):
        terminalreporter.write_line(line)
