"""Group law, dilations, quasi-metric, frame and coframe in first-kind coordinates.

Every routine has an array-level form (``*_coords``) that broadcasts over
leading axes, and a :class:`GroupElement` wrapper that checks algebra
compatibility.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import factorial

import numpy as np

from .algebra import StratifiedAlgebra
from .bch import bch
from .errors import DegeneracyError, StructuralError


@dataclass(frozen=True, eq=False)
class GroupElement:
    coords: np.ndarray
    algebra: StratifiedAlgebra

    def __post_init__(self):
        c = np.array(self.coords, dtype=float).reshape(-1)
        if c.shape[0] != self.algebra.total_dim:
            raise StructuralError(
                f"coordinate vector of length {c.shape[0]} for algebra of dimension {self.algebra.total_dim}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @classmethod
    def identity(cls, algebra: StratifiedAlgebra) -> "GroupElement":
        return cls(np.zeros(algebra.total_dim), algebra)

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        return multiply(self, other)

    def __repr__(self) -> str:
        return f"GroupElement({list(self.coords)}, {self.algebra.name})"

    def allclose(self, other: "GroupElement", atol: float = 1e-12) -> bool:
        return np.allclose(self.coords, other.coords, atol=atol, rtol=0)


def _same(p: GroupElement, q: GroupElement) -> StratifiedAlgebra:
    if not p.algebra.same_as(q.algebra):
        raise StructuralError(f"elements live in different algebras ({p.algebra.name}, {q.algebra.name})")
    return p.algebra


# array level -----------------------------------------------------------------


def multiply_coords(alg: StratifiedAlgebra, p, q) -> np.ndarray:
    return bch(p, q, alg.tensor, alg.step)


def dilate_coords(alg: StratifiedAlgebra, lam, p) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    return np.asarray(p, dtype=float) * lam[..., None] ** alg.weight_array


def _layer_norm(alg: StratifiedAlgebra, v) -> np.ndarray:
    return np.sum(np.abs(v) ** (1.0 / alg.weight_array), axis=-1)


@lru_cache(maxsize=None)
def _bernoulli_plus(n: int) -> tuple[Fraction, ...]:
    """Bernoulli numbers with the convention B_1 = +1/2."""
    B = [Fraction(1)]
    for m in range(1, n + 1):
        s = sum(Fraction(factorial(m + 1), factorial(k) * factorial(m + 1 - k)) * B[k] for k in range(m))
        B.append(-s / (m + 1))
    B = list(B)
    if n >= 1:
        B[1] = Fraction(1, 2)
    return tuple(B)


def frame_coords(alg: StratifiedAlgebra, p) -> np.ndarray:
    """Left-invariant frame; column j is X_j at p.

    The differential of left translation in exponential coordinates is the
    series ``sum_n B_n^+ / n! ad_p^n`` which terminates at the step.
    """
    p = np.asarray(p, dtype=float)
    n = alg.total_dim
    A = alg.ad(p)
    out = np.broadcast_to(np.eye(n), A.shape).copy()
    B = _bernoulli_plus(alg.step)
    power = np.broadcast_to(np.eye(n), A.shape).copy()
    for k in range(1, alg.step):
        power = power @ A
        c = float(B[k] / factorial(k))
        if c:
            out = out + c * power
    return out


def coframe_coords(alg: StratifiedAlgebra, p) -> np.ndarray:
    """Inverse of :func:`frame_coords`: ``sum_n (-1)^n ad_p^n / (n+1)!``."""
    p = np.asarray(p, dtype=float)
    n = alg.total_dim
    A = alg.ad(p)
    out = np.broadcast_to(np.eye(n), A.shape).copy()
    power = np.broadcast_to(np.eye(n), A.shape).copy()
    for k in range(1, alg.step):
        power = power @ A
        out = out + ((-1) ** k / factorial(k + 1)) * power
    return out


# closed forms for step <= 3 ------------------------------------------------------


def _closed_form_tensors(alg: StratifiedAlgebra):
    if alg.step > 3:
        raise StructuralError("closed-form group law is only available for step <= 3")
    i1, i2, i3 = (alg.layer_indices(k) for k in (1, 2, 3))
    C = alg.tensor
    a = C[np.ix_(i1, i1, i2)]  # [d_i, d_j] = a[i, j, k] e_k
    b = C[np.ix_(i1, i2, i3)]  # [d_i, e_k] = b[i, k, m] f_m
    return i1, i2, i3, a, b


def closed_form_multiply(alg: StratifiedAlgebra, p, q) -> np.ndarray:
    """Explicit step-3 product in first-kind coordinates."""
    i1, i2, i3, a, b = _closed_form_tensors(alg)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    A, B, Cc = p[..., i1], p[..., i2], p[..., i3]
    a1, b1, c1 = q[..., i1], q[..., i2], q[..., i3]
    out = np.array(np.broadcast_arrays(p, q)[0], dtype=float, copy=True)
    out[..., i1] = A + a1
    bracket2 = np.einsum("...i,...j,ijk->...k", A, a1, a)
    out[..., i2] = B + b1 + 0.5 * bracket2
    if i3.size:
        half = np.einsum("...i,...j,ijm->...m", A, b1, b) - np.einsum("...j,...i,ijm->...m", B, a1, b)
        twelfth = np.einsum("...l,...k,lkm->...m", A - a1, bracket2, b)
        out[..., i3] = Cc + c1 + 0.5 * half + twelfth / 12.0
    return out


def closed_form_left_quotient(alg: StratifiedAlgebra, p, q) -> np.ndarray:
    """Explicit ``p^{-1} q`` for step <= 3."""
    i1, i2, i3, a, b = _closed_form_tensors(alg)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    A, B, Cc = p[..., i1], p[..., i2], p[..., i3]
    a1, b1, c1 = q[..., i1], q[..., i2], q[..., i3]
    out = np.array(np.broadcast_arrays(p, q)[0], dtype=float, copy=True)
    out[..., i1] = a1 - A
    bracket2 = np.einsum("...i,...j,ijk->...k", A, a1, a)
    out[..., i2] = b1 - B - 0.5 * bracket2
    if i3.size:
        half = np.einsum("...i,...j,ijm->...m", A, b1, b) - np.einsum("...j,...i,ijm->...m", B, a1, b)
        twelfth = np.einsum("...l,...k,lkm->...m", A + a1, bracket2, b)
        out[..., i3] = c1 - Cc - 0.5 * half + twelfth / 12.0
    return out


def closed_form_frame(alg: StratifiedAlgebra, p) -> np.ndarray:
    """Explicit step-3 frame derived from the closed-form product."""
    i1, i2, i3, a, b = _closed_form_tensors(alg)
    p = np.asarray(p, dtype=float)
    n = alg.total_dim
    A, B = p[..., i1], p[..., i2]
    F = np.broadcast_to(np.eye(n), p.shape[:-1] + (n, n)).copy()
    # X^i: d/dA_i - 1/2 sum_j a[i,j,k] A_j d/dB_k + (...) d/dC_m
    F[..., i2[:, None], i1[None, :]] = -0.5 * np.einsum("ijk,...j->...ki", a, A)
    if i3.size:
        term_b = -0.5 * np.einsum("...j,ijm->...mi", B, b)
        inner = np.einsum("ijk,...j->...ik", a, A)  # sum_j a[i,j,k] A_j
        term_ab = -np.einsum("...l,...ik,lkm->...mi", A, inner, b) / 12.0
        F[..., i3[:, None], i1[None, :]] = term_b + term_ab
        # Y^k: d/dB_k + 1/2 sum_i b[i,k,m] A_i d/dC_m
        F[..., i3[:, None], i2[None, :]] = 0.5 * np.einsum("...i,ikm->...mk", A, b)
    return F


def closed_form_coframe(alg: StratifiedAlgebra, p) -> np.ndarray:
    """Explicit step-3 contact coframe (rows are the left-invariant 1-forms)."""
    i1, i2, i3, a, b = _closed_form_tensors(alg)
    p = np.asarray(p, dtype=float)
    n = alg.total_dim
    A, B = p[..., i1], p[..., i2]
    W = np.broadcast_to(np.eye(n), p.shape[:-1] + (n, n)).copy()
    # dB_k - 1/2 sum_{i,j} a[i,j,k] A_i dA_j
    W[..., i2[:, None], i1[None, :]] = -0.5 * np.einsum("...i,ijk->...kj", A, a)
    if i3.size:
        # dC_m + 1/2 sum B_k b[j,k,m] dA_j + 1/6 sum A_l A_i a[i,j,k] b[l,k,m] dA_j
        #      - 1/2 sum_i A_i b[i,k,m] dB_k
        t1 = 0.5 * np.einsum("...k,jkm->...mj", B, b)
        inner = np.einsum("...i,ijk->...jk", A, a)
        t2 = np.einsum("...l,...jk,lkm->...mj", A, inner, b) / 6.0
        W[..., i3[:, None], i1[None, :]] = t1 + t2
        W[..., i3[:, None], i2[None, :]] = -0.5 * np.einsum("...i,ikm->...mk", A, b)
    return W


# element level -------------------------------------------------------------------


def multiply(p: GroupElement, q: GroupElement) -> GroupElement:
    alg = _same(p, q)
    alg.require_valid()
    return GroupElement(multiply_coords(alg, p.coords, q.coords), alg)


def inverse(p: GroupElement) -> GroupElement:
    return GroupElement(-p.coords, p.algebra)


def left_quotient(p: GroupElement, q: GroupElement) -> GroupElement:
    """``p^{-1} * q``."""
    alg = _same(p, q)
    alg.require_valid()
    return GroupElement(multiply_coords(alg, -p.coords, q.coords), alg)


def dilate(lam: float, p: GroupElement) -> GroupElement:
    if not np.isfinite(lam) or lam <= 0:
        raise ValueError(f"dilation factor must be positive, got {lam}")
    return GroupElement(dilate_coords(p.algebra, lam, p.coords), p.algebra)


def quasi_metric(p: GroupElement, q: GroupElement) -> float:
    """``d_K(p, q) = sum_i |pi_i(q^{-1} p)|^{1/weight(i)}``."""
    alg = _same(p, q)
    alg.require_valid()
    return float(_layer_norm(alg, multiply_coords(alg, -q.coords, p.coords)))


def quasi_metric_coords(alg: StratifiedAlgebra, p, q) -> np.ndarray:
    return _layer_norm(alg, multiply_coords(alg, -np.asarray(q, float), np.asarray(p, float)))


def homogeneous_norm(alg: StratifiedAlgebra, p) -> np.ndarray:
    return _layer_norm(alg, np.asarray(p, dtype=float))


def left_invariant_frame(p: GroupElement) -> np.ndarray:
    p.algebra.require_valid()
    return frame_coords(p.algebra, p.coords)


def contact_coframe(p: GroupElement) -> np.ndarray:
    p.algebra.require_valid()
    W = coframe_coords(p.algebra, p.coords)
    if not np.all(np.isfinite(W)) or abs(np.linalg.det(W)) < 1e-300:
        raise DegeneracyError("singular coframe")
    return W
