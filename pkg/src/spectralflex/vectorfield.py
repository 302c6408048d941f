"""Vector fields on the flat torus and the two-field construction on T^2 x M.

Coordinates 0 and 1 are ``x`` and ``y`` on T^2; coordinates ``2..n-1`` are
the ``z`` coordinates of M = T^(n-2).  Fields carry one exact trigonometric
coefficient per coordinate direction.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import prod
from typing import Sequence

import numpy as np

from . import symexpr as se
from .symexpr import Expr


class DimensionError(ValueError):
    pass


class ConstructionError(ValueError):
    pass


@dataclass(frozen=True)
class VectorField:
    """A field ``sum_i coeffs[i] * d/dx_i`` on the n-torus."""

    coeffs: tuple

    def __post_init__(self):
        coeffs = tuple(se.normalize(se._lift(c)) for c in self.coeffs)
        n = len(coeffs)
        for c in coeffs:
            if se.max_index(c) >= n:
                raise DimensionError(
                    f"coefficient {c!r} uses a coordinate outside 0..{n - 1}")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def dim(self) -> int:
        return len(self.coeffs)

    @classmethod
    def zero(cls, n: int) -> "VectorField":
        return cls((se.const(0),) * n)

    @classmethod
    def coordinate(cls, n: int, i: int, scale=1) -> "VectorField":
        """``scale * d/dx_i``."""
        c = [se.const(0)] * n
        c[i] = se._lift(scale)
        return cls(tuple(c))

    def __getitem__(self, i: int) -> Expr:
        return self.coeffs[i]

    def _same_dim(self, other: "VectorField"):
        if self.dim != other.dim:
            raise DimensionError(
                f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other: "VectorField") -> "VectorField":
        self._same_dim(other)
        return VectorField(tuple(se.add(a, b)
                                 for a, b in zip(self.coeffs, other.coeffs)))

    def __sub__(self, other: "VectorField") -> "VectorField":
        self._same_dim(other)
        return VectorField(tuple(se.add(a, se.neg(b))
                                 for a, b in zip(self.coeffs, other.coeffs)))

    def __neg__(self) -> "VectorField":
        return VectorField(tuple(se.neg(a) for a in self.coeffs))

    def scale(self, f) -> "VectorField":
        """Multiply every coefficient by the scalar expression ``f``."""
        return VectorField(tuple(se.mul(f, a) for a in self.coeffs))

    __rmul__ = scale

    def apply(self, f: Expr) -> Expr:
        """Directional derivative ``X(f) = sum_i X^i d_i f``."""
        return se.add(*[se.mul(c, se.diff(f, i))
                        for i, c in enumerate(self.coeffs)
                        if not se.is_zero(c)])

    def is_zero(self) -> bool:
        return all(se.is_zero(c) for c in self.coeffs)

    def __call__(self, points) -> np.ndarray:
        """Evaluate; shape ``(n,)`` for one point, ``(m, n)`` for many."""
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1] != self.dim:
            raise DimensionError("point dimension does not match field")
        if pts.ndim == 1:
            return np.array([se.evaluate(c, pts) for c in self.coeffs])
        return np.stack([se.evaluate(c, pts) for c in self.coeffs], axis=1)


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    """``[X, Y]^j = sum_i X^i d_i Y^j - Y^i d_i X^j``."""
    X._same_dim(Y)
    return VectorField(tuple(se.add(X.apply(Yj), se.neg(Y.apply(Xj)))
                             for Xj, Yj in zip(X.coeffs, Y.coeffs)))


def divergence(X: VectorField) -> Expr:
    """Flat divergence ``sum_i d_i X^i``."""
    return se.add(*[se.diff(c, i) for i, c in enumerate(X.coeffs)])


def iterated_bracket(X: VectorField, Y: VectorField, times: int) -> VectorField:
    """``D_X^times (Y)`` with ``D_X(Y) = [X, Y]``."""
    out = Y
    for _ in range(times):
        out = lie_bracket(X, out)
    return out


# -- the basis phi_l and its polynomial -------------------------------------

def phi(l: int) -> Expr:
    """``phi_{2j-1} = sin(jx)``, ``phi_{2j} = cos(jx)`` (1-based ``l``)."""
    if l < 1:
        raise ValueError("basis index is 1-based")
    j = (l + 1) // 2
    return se.sin(j, 0) if l % 2 else se.cos(j, 0)


def phi_derivative(l: int, order: int) -> Expr:
    """Exact ``order``-th x-derivative of ``phi_l``."""
    e = phi(l)
    for _ in range(order):
        e = se.diff(e, 0)
    return e


def q_coefficients(d: int) -> list[int]:
    """Integer coefficients ``q_0..q_2d`` of ``Q(t) = prod_j (t^2 + j^2)``."""
    coeffs = [1]
    for j in range(1, d + 1):
        nxt = [0] * (len(coeffs) + 2)
        for k, c in enumerate(coeffs):
            nxt[k] += j * j * c
            nxt[k + 2] += c
        coeffs = nxt
    return coeffs


def apply_polynomial(coeffs: Sequence[int], e: Expr) -> Expr:
    """``F(d/dx) e`` for the integer polynomial ``sum_k coeffs[k] t^k``."""
    out = []
    cur = e
    for k, c in enumerate(coeffs):
        if k:
            cur = se.diff(cur, 0)
        if c:
            out.append(se.mul(c, cur))
    return se.add(*out)


def lemma_b_coefficients(d: int) -> list[int]:
    """``b_j = prod_{k != j} (k^2 - j^2)`` for ``j = 1..d``."""
    if d < 1:
        raise ValueError("d must be positive")
    out = [prod(k * k - j * j for k in range(1, d + 1) if k != j)
           for j in range(1, d + 1)]
    assert all(out)
    return out


def basis_identity_residual(d: int, l: int) -> Expr:
    """``Q'(d/dx) phi_l - 2 b_{ceil(l/2)} phi_l'``, identically zero."""
    q = q_coefficients(d)
    dq = [k * q[k] for k in range(1, len(q))]
    b = lemma_b_coefficients(d)[(l + 1) // 2 - 1]
    return se.add(apply_polynomial(dq, phi(l)),
                  se.mul(-2 * b, phi_derivative(l, 1)))


def wronskian(d: int, x) -> np.ndarray:
    """Matrices ``(phi_l^{(r)}(x))``, rows r = 0..2d-1, columns l = 1..2d."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    pts = np.zeros((xs.size, 1))
    pts[:, 0] = xs
    out = np.empty((xs.size, 2 * d, 2 * d))
    for l in range(1, 2 * d + 1):
        e = phi(l)
        for r in range(2 * d):
            out[:, r, l - 1] = se.evaluate(e, pts)
            e = se.diff(e, 0)
    return out


# -- the construction -------------------------------------------------------

@dataclass(frozen=True)
class ConstructionSpec:
    """Data for ``V = d/dx + h(z) d/dy`` and ``W = sum_l phi_l(x) Z_l``.

    ``z_fields`` are ambient fields (dimension ``n``) with vanishing x and y
    components and coefficients depending on ``z`` only.
    """

    d: int
    h: Expr
    z_fields: tuple
    n: int = 4
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "z_fields", tuple(self.z_fields))
        if self.d < 1:
            raise ConstructionError("d must be a positive integer")
        if self.n < 3:
            raise ConstructionError("ambient dimension must be at least 3")
        if len(self.z_fields) != 2 * self.d:
            raise ConstructionError(
                f"expected {2 * self.d} Z-fields, got {len(self.z_fields)}")
        if se.max_index(self.h) >= self.n or _uses(self.h, (0, 1)):
            raise ConstructionError("h must depend on the M coordinates only")
        for Z in self.z_fields:
            if Z.dim != self.n:
                raise ConstructionError("Z-field has the wrong dimension")
            if not (se.is_zero(Z[0]) and se.is_zero(Z[1])):
                raise ConstructionError("Z-fields must be tangent to M")
            if any(_uses(c, (0, 1)) for c in Z.coeffs):
                raise ConstructionError("Z-fields must depend on z only")
        self.check_spanning()

    def check_spanning(self, samples: int = 256, seed: int = 0):
        m = self.n - 2
        rng = np.random.default_rng(seed)
        pts = rng.uniform(0.0, 2 * np.pi, size=(samples, self.n))
        mats = np.stack([Z(pts)[:, 2:] for Z in self.z_fields], axis=2)
        sv = np.linalg.svd(mats, compute_uv=False)
        ranks = (sv > 1e-8 * sv[:, :1]).sum(axis=1)
        if ranks.min() < m:
            raise ConstructionError(
                "Z-fields do not span the tangent space of M at "
                f"{int((ranks < m).sum())} of {samples} sampled points")

    def zh(self, l: int) -> Expr:
        """``Z_l h`` (1-based)."""
        return self.z_fields[l - 1].apply(self.h)

    @cached_property
    def fields(self) -> tuple:
        return build_construction(self)

    @property
    def V(self) -> VectorField:
        return self.fields[0]

    @property
    def W(self) -> VectorField:
        return self.fields[1]


def _uses(e: Expr, indices) -> bool:
    return any(a[2] in indices for m in e.poly() for a, _ in m)


def build_construction(spec: ConstructionSpec) -> tuple:
    """Return ``(V, W)``."""
    n = spec.n
    V = VectorField((se.const(1), spec.h) + (se.const(0),) * (n - 2))
    W = VectorField.zero(n)
    for l, Z in enumerate(spec.z_fields, start=1):
        W = W + Z.scale(phi(l))
    return V, W


def y_field(spec: ConstructionSpec, coeff: Expr) -> VectorField:
    return VectorField.coordinate(spec.n, 1, coeff)


def step1_closed_form(spec: ConstructionSpec, alpha: int) -> VectorField:
    """``sum_l phi_l^(a) Z_l - a phi_l^(a-1) (Z_l h) d/dy`` without bracketing."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    out = VectorField.zero(spec.n)
    for l, Z in enumerate(spec.z_fields, start=1):
        out = out + Z.scale(phi_derivative(l, alpha))
        if alpha:
            ycoef = se.mul(-alpha, phi_derivative(l, alpha - 1), spec.zh(l))
            out = out + y_field(spec, ycoef)
    return out


def xi_bracket_form(spec: ConstructionSpec, r: int) -> VectorField:
    """``sum_k q_k D_V^{r+k-1}(W)`` from iterated brackets."""
    q = q_coefficients(spec.d)
    V, W = spec.fields
    out = VectorField.zero(spec.n)
    cur = iterated_bracket(V, W, r - 1)
    for k, qk in enumerate(q):
        if k:
            cur = lie_bracket(V, cur)
        if qk:
            out = out + cur.scale(qk)
    return out


def xi_closed_form(spec: ConstructionSpec, r: int) -> VectorField:
    """``-sum_l 2 b_{ceil(l/2)} phi_l^(r) (Z_l h) d/dy``."""
    b = lemma_b_coefficients(spec.d)
    terms = [se.mul(-2 * b[(l + 1) // 2 - 1], phi_derivative(l, r), spec.zh(l))
             for l in range(1, 2 * spec.d + 1)]
    return y_field(spec, se.add(*terms))


def xi_field(spec: ConstructionSpec, r: int, samples: int = 200,
             tol: float = 1e-8, seed: int = 0) -> VectorField:
    """``xi_r``, built both ways and cross-checked at random points.

    Raises ``AssertionError`` if the two constructions disagree, which can
    only happen through an engine bug.
    """
    if not 1 <= r <= 2 * spec.d:
        raise ValueError(f"r must lie in 1..{2 * spec.d}")
    a = xi_bracket_form(spec, r)
    b = xi_closed_form(spec, r)
    pts = np.random.default_rng(seed).uniform(0, 2 * np.pi, (samples, spec.n))
    err = np.abs(a(pts) - b(pts)).max()
    if err > tol:
        raise AssertionError(f"xi_{r} constructions disagree by {err:.3e}")
    return a


def step3_y_component(spec: ConstructionSpec, beta: int) -> Expr:
    """Predicted d/dy coefficient of ``D_W D_V^beta (W)``."""
    if beta == 0:
        return se.const(0)
    terms = []
    for k, Zk in enumerate(spec.z_fields, start=1):
        for l in range(1, 2 * spec.d + 1):
            terms.append(se.mul(-beta, phi(k), phi_derivative(l, beta - 1),
                                Zk.apply(spec.zh(l))))
    return se.add(*terms)


# -- presets ----------------------------------------------------------------

def morse_h() -> Expr:
    """``cos z1 + cos z2`` on T^2."""
    return se.add(se.cos(1, 2), se.cos(1, 3))


def preset(name: str) -> ConstructionSpec:
    """``"t4-d1"`` or ``"t4-d2-singular"``, both on T^2 x T^2."""
    Z1 = VectorField.coordinate(4, 2)
    Z2 = VectorField.coordinate(4, 3)
    if name == "t4-d1":
        return ConstructionSpec(1, morse_h(), (Z1, Z2), 4, name)
    if name == "t4-d2-singular":
        return ConstructionSpec(2, morse_h(), (Z1, Z2, Z1, Z2), 4, name)
    raise KeyError(f"unknown preset {name!r}")


PRESETS = ("t4-d1", "t4-d2-singular")

__all__ = [
    "VectorField", "ConstructionSpec", "DimensionError", "ConstructionError",
    "lie_bracket", "divergence", "iterated_bracket", "phi", "phi_derivative",
    "q_coefficients", "apply_polynomial", "lemma_b_coefficients",
    "basis_identity_residual", "wronskian", "build_construction", "step1_closed_form",
    "xi_bracket_form", "xi_closed_form", "xi_field", "step3_y_component",
    "morse_h", "preset", "PRESETS",
]
