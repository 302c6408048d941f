"""Exact symbolic trigonometric polynomials over torus coordinates.

Expressions are immutable trees built from rational constants, raw
coordinates, ``sin(k*x_i)``, ``cos(k*x_i)``, sums, products and negation.
Every tree has a canonical *expanded* form (a sum of monomials with rational
coefficients), which is what ``normalize`` rebuilds and what ``diff`` and
``eval`` work on.  No trigonometric identities are applied beyond the parity
rules ``sin(-kx) = -sin(kx)``, ``cos(-kx) = cos(kx)``, ``sin(0) = 0`` and
``cos(0) = 1``.

>>> x = sin(1, 0)
>>> diff(x, 0)
Cos(k=1, index=0)
"""
from __future__ import annotations

from fractions import Fraction
from numbers import Rational
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Expr", "Const", "Coord", "Sin", "Cos", "Sum", "Prod", "Neg",
    "const", "coord", "sin", "cos", "add", "mul", "neg",
    "normalize", "diff", "eval", "evaluate", "is_zero", "ExprError",
]

Scalar = Union[int, Fraction]

# An atom is a hashable key such as ("sin", k, i), ("cos", k, i), ("x", 0, i).
# A monomial is a sorted tuple of (atom, power) pairs; a polynomial maps
# monomials to non-zero Fractions.
_Atom = tuple
_Monomial = tuple
_Poly = Mapping[_Monomial, Fraction]

_ATOM_ORDER = {"x": 0, "cos": 1, "sin": 2}


class ExprError(TypeError):
    """Raised when an expression outside the trigonometric class is built."""


def _as_fraction(value) -> Fraction:
    if isinstance(value, bool):
        raise ExprError("booleans are not expression constants")
    if isinstance(value, (int, Fraction)) or isinstance(value, Rational):
        return Fraction(value)
    raise ExprError(
        f"only rational constants are allowed, got {type(value).__name__}")


class Expr:
    """Base class of expression nodes.

    Nodes compare structurally.  Arithmetic operators return normalized
    expressions.
    """

    __slots__ = ("_hash", "_poly")

    def _key(self) -> tuple:  # pragma: no cover - abstract
        raise NotImplementedError

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, Expr):
            return NotImplemented
        return type(self) is type(other) and self._key() == other._key()

    def __hash__(self) -> int:
        try:
            return self._hash
        except AttributeError:
            h = hash((type(self).__name__, self._key()))
            object.__setattr__(self, "_hash", h)
            return h

    def __setattr__(self, name, value):
        raise AttributeError("Expr nodes are immutable")

    def poly(self) -> _Poly:
        """Expanded form as ``{monomial: coefficient}`` (cached)."""
        try:
            return self._poly
        except AttributeError:
            p = self._expand()
            object.__setattr__(self, "_poly", p)
            return p

    def _expand(self) -> dict:  # pragma: no cover - abstract
        raise NotImplementedError

    def __add__(self, other):
        return add(self, _lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_lift(other)))

    def __rsub__(self, other):
        return add(_lift(other), neg(self))

    def __mul__(self, other):
        return mul(self, _lift(other))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __call__(self, point):
        return evaluate(self, point)


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        object.__setattr__(self, "value", _as_fraction(value))

    def _key(self):
        return (self.value,)

    def _expand(self):
        return {(): self.value} if self.value else {}

    def __repr__(self):
        return f"Const({self.value})"


class Coord(Expr):
    """The raw coordinate ``x_index`` (not reduced mod 2*pi)."""

    __slots__ = ("index",)

    def __init__(self, index: int):
        if index < 0:
            raise ExprError("coordinate index must be non-negative")
        object.__setattr__(self, "index", int(index))

    def _key(self):
        return (self.index,)

    def _expand(self):
        return {((("x", 0, self.index), 1),): Fraction(1)}

    def __repr__(self):
        return f"Coord({self.index})"


class _Trig(Expr):
    __slots__ = ("k", "index")
    kind = ""

    def __init__(self, k: int, index: int):
        if not isinstance(k, (int, np.integer)) or isinstance(k, bool):
            raise ExprError("trigonometric frequencies must be integers")
        if index < 0:
            raise ExprError("coordinate index must be non-negative")
        object.__setattr__(self, "k", int(k))
        object.__setattr__(self, "index", int(index))

    def _key(self):
        return (self.k, self.index)

    def __repr__(self):
        return f"{type(self).__name__}(k={self.k}, index={self.index})"


class Sin(_Trig):
    __slots__ = ()

    def _expand(self):
        if self.k == 0:
            return {}
        sign = Fraction(1 if self.k > 0 else -1)
        return {((("sin", abs(self.k), self.index), 1),): sign}


class Cos(_Trig):
    __slots__ = ()

    def _expand(self):
        if self.k == 0:
            return {(): Fraction(1)}
        return {((("cos", abs(self.k), self.index), 1),): Fraction(1)}


class Sum(Expr):
    __slots__ = ("terms",)

    def __init__(self, terms: Iterable[Expr]):
        object.__setattr__(self, "terms", tuple(_check(t) for t in terms))

    def _key(self):
        return self.terms

    def _expand(self):
        out: dict = {}
        for t in self.terms:
            _accumulate(out, t.poly())
        return out

    def __repr__(self):
        return f"Sum({list(self.terms)})"


class Prod(Expr):
    __slots__ = ("factors",)

    def __init__(self, factors: Iterable[Expr]):
        object.__setattr__(self, "factors", tuple(_check(f) for f in factors))

    def _key(self):
        return self.factors

    def _expand(self):
        out: dict = {(): Fraction(1)}
        for f in self.factors:
            out = _poly_mul(out, f.poly())
            if not out:
                break
        return out

    def __repr__(self):
        return f"Prod({list(self.factors)})"


class Neg(Expr):
    __slots__ = ("child",)

    def __init__(self, child: Expr):
        object.__setattr__(self, "child", _check(child))

    def _key(self):
        return (self.child,)

    def _expand(self):
        return {m: -c for m, c in self.child.poly().items()}

    def __repr__(self):
        return f"Neg({self.child!r})"


def _check(e) -> Expr:
    if not isinstance(e, Expr):
        raise ExprError(f"expected an Expr, got {type(e).__name__}")
    return e


def _lift(value) -> Expr:
    if isinstance(value, Expr):
        return value
    return Const(value)


# -- polynomial arithmetic on expanded forms --------------------------------

def _accumulate(out: dict, p: _Poly, scale: Fraction = Fraction(1)) -> None:
    for m, c in p.items():
        v = out.get(m, 0) + scale * c
        if v:
            out[m] = v
        else:
            out.pop(m, None)


def _mono_mul(a: _Monomial, b: _Monomial) -> _Monomial:
    if not a:
        return b
    if not b:
        return a
    powers = dict(a)
    for atom, p in b:
        powers[atom] = powers.get(atom, 0) + p
    return tuple(sorted(powers.items(), key=_factor_sort_key))


def _factor_sort_key(item):
    (kind, k, i), _ = item
    return (i, _ATOM_ORDER[kind], k)


def _poly_mul(p: _Poly, q: _Poly) -> dict:
    out: dict = {}
    for ma, ca in p.items():
        for mb, cb in q.items():
            m = _mono_mul(ma, mb)
            v = out.get(m, 0) + ca * cb
            if v:
                out[m] = v
            else:
                out.pop(m, None)
    return out


def _atom_expr(atom: _Atom) -> Expr:
    kind, k, i = atom
    if kind == "x":
        return Coord(i)
    return Sin(k, i) if kind == "sin" else Cos(k, i)


def _mono_sort_key(m: _Monomial):
    return (sum(p for _, p in m), [(_factor_sort_key(f), f[1]) for f in m])


def _from_poly(p: _Poly) -> Expr:
    """Canonical tree for an expanded polynomial."""
    if not p:
        return Const(0)
    terms = []
    for m in sorted(p, key=_mono_sort_key):
        c = p[m]
        factors = []
        for atom, power in m:
            factors.extend([_atom_expr(atom)] * power)
        if not factors:
            terms.append(Const(c))
            continue
        body = factors[0] if len(factors) == 1 else Prod(factors)
        if c == 1:
            terms.append(body)
        elif c == -1:
            terms.append(Neg(body))
        else:
            terms.append(Prod([Const(c)] + factors))
    out = terms[0] if len(terms) == 1 else Sum(terms)
    object.__setattr__(out, "_poly", dict(p))
    return out


# -- public constructors ----------------------------------------------------

def const(value: Scalar) -> Expr:
    return Const(value)


def coord(index: int) -> Expr:
    return Coord(index)


def sin(k: int, index: int) -> Expr:
    """``sin(k * x_index)``."""
    return normalize(Sin(k, index))


def cos(k: int, index: int) -> Expr:
    """``cos(k * x_index)``."""
    return normalize(Cos(k, index))


def add(*terms) -> Expr:
    out: dict = {}
    for t in terms:
        _accumulate(out, _lift(t).poly())
    return _from_poly(out)


def mul(*factors) -> Expr:
    out: dict = {(): Fraction(1)}
    for f in factors:
        out = _poly_mul(out, _lift(f).poly())
    return _from_poly(out)


def neg(e: Expr) -> Expr:
    return _from_poly({m: -c for m, c in _lift(e).poly().items()})


def normalize(e: Expr) -> Expr:
    """Fold constants, drop zero terms and flatten to the canonical form."""
    return _from_poly(_check(e).poly())


def is_zero(e: Expr) -> bool:
    return not _check(e).poly()


# -- calculus ---------------------------------------------------------------

def _atom_diff(atom: _Atom) -> tuple:
    """Derivative of an atom w.r.t. its own coordinate as (coeff, atom|None)."""
    kind, k, i = atom
    if kind == "x":
        return Fraction(1), None
    if kind == "sin":
        return Fraction(k), ("cos", k, i)
    return Fraction(-k), ("sin", k, i)


def _diff_poly(p: _Poly, index: int) -> dict:
    out: dict = {}
    for m, c in p.items():
        for pos, (atom, power) in enumerate(m):
            if atom[2] != index:
                continue
            dc, datom = _atom_diff(atom)
            rest = list(m)
            if power == 1:
                del rest[pos]
            else:
                rest[pos] = (atom, power - 1)
            mono = tuple(rest)
            if datom is not None:
                mono = _mono_mul(mono, ((datom, 1),))
            v = out.get(mono, 0) + c * power * dc
            if v:
                out[mono] = v
            else:
                out.pop(mono, None)
    return out


def diff(e: Expr, index: int) -> Expr:
    """Exact partial derivative with respect to coordinate ``index``."""
    if index < 0:
        raise ValueError("coordinate index must be non-negative")
    return _from_poly(_diff_poly(_check(e).poly(), index))


def max_index(e: Expr) -> int:
    """Largest coordinate index used, or -1 for constants."""
    return max((a[2] for m in e.poly() for a, _ in m), default=-1)


# -- evaluation -------------------------------------------------------------

def evaluate(e: Expr, point) -> np.ndarray | float:
    """Evaluate at one point (1-D array) or many points (rows of a 2-D array).

    Trigonometric atoms are 2*pi-periodic, so coordinates may be given
    unreduced; raw ``Coord`` atoms evaluate to the coordinate as supplied.
    """
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    p = _check(e).poly()
    need = max_index(e)
    if need >= pts.shape[1]:
        raise ValueError(
            f"expression uses coordinate {need} but points have "
            f"dimension {pts.shape[1]}")
    cache: dict = {}
    total = np.zeros(pts.shape[0])
    for m, c in p.items():
        term = np.full(pts.shape[0], float(c))
        for atom, power in m:
            v = cache.get(atom)
            if v is None:
                kind, k, i = atom
                col = pts[:, i]
                if kind == "x":
                    v = col
                elif kind == "sin":
                    v = np.sin(k * col)
                else:
                    v = np.cos(k * col)
                cache[atom] = v
            term = term * (v if power == 1 else v ** power)
        total += term
    return float(total[0]) if single else total


eval = evaluate  # noqa: A001  - public name used throughout the package


def evaluate_many(exprs: Sequence[Expr], points) -> np.ndarray:
    """Stack evaluations: result has shape ``(len(exprs), n_points)``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.array([evaluate(e, pts) for e in exprs]).reshape(len(exprs), -1)
