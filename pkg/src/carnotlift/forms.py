"""Left-invariant (vector-valued) forms and the Lie algebra differential."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .algebra import StratifiedAlgebra
from .errors import StructuralError, ValidationError

_ANTISYM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class InvariantForm:
    """A V-valued left-invariant k-form given on the left-invariant coframe.

    ``values`` has shape ``(dim V,) + (n,) * degree``; entry ``[v, i, j]`` is the
    v-th component evaluated on ``(X_i, X_j)``.  ``value_weights`` grades V; a
    scalar form uses a single component of weight 0.
    """

    algebra: StratifiedAlgebra
    degree: int
    values: np.ndarray
    value_weights: tuple[int, ...] = ()

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        n = self.algebra.total_dim
        if vals.ndim == self.degree:
            vals = vals[None]
        if vals.shape[1:] != (n,) * self.degree:
            raise StructuralError(f"form values of shape {vals.shape} do not match degree {self.degree} on dim {n}")
        vw = tuple(self.value_weights) or (0,) * vals.shape[0]
        if len(vw) != vals.shape[0]:
            raise StructuralError("value_weights length differs from number of components")
        if self.degree >= 2:
            for a, b in itertools.combinations(range(1, self.degree + 1), 2):
                if np.abs(vals + np.swapaxes(vals, a, b)).max(initial=0.0) > _ANTISYM_TOL * max(1.0, np.abs(vals).max(initial=0.0)):
                    raise ValidationError(f"form of degree {self.degree} is not antisymmetric in slots {a},{b}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "value_weights", vw)

    @property
    def n_components(self) -> int:
        return self.values.shape[0]

    @property
    def weight(self) -> int | None:
        """Common value of ``weight(v) - sum weight(slots)`` over nonzero entries.

        Graded maps and cocycles have weight 0; a scalar form such as ``theta^k``
        has weight ``-weight(k)``.  ``None`` for inhomogeneous or zero forms.
        """
        w = np.asarray(self.algebra.weights)
        found = set()
        for idx in np.argwhere(np.abs(self.values) > 1e-14):
            found.add(int(self.value_weights[idx[0]] - w[idx[1:]].sum()))
            if len(found) > 1:
                return None
        return found.pop() if found else None

    def is_zero(self, tol: float = 1e-12) -> bool:
        return float(np.abs(self.values).max(initial=0.0)) <= tol

    @classmethod
    def from_entries(cls, algebra, degree, n_components, entries, value_weights=()):
        """Antisymmetrized form from ``(v, i, j[, k]) -> c`` entries (0-based)."""
        vals = np.zeros((n_components,) + (algebra.total_dim,) * degree)
        for key, c in entries.items():
            v, idx = key[0], key[1:]
            for perm in itertools.permutations(range(degree)):
                sign = _perm_sign(perm)
                vals[(v,) + tuple(idx[p] for p in perm)] += sign * c
        return cls(algebra, degree, vals, value_weights)


def _perm_sign(perm) -> int:
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def lie_differential_d0(form: InvariantForm) -> InvariantForm:
    """Chevalley-Eilenberg differential with trivial coefficients.

    ``d0 mu(X, Y) = -mu([X, Y])`` and
    ``d0 rho(X, Y, Z) = -rho([X,Y],Z) + rho([X,Z],Y) - rho([Y,Z],X)``.
    """
    C = form.algebra.tensor
    v = form.values
    if form.degree == 1:
        out = -np.einsum("abk,vk->vab", C, v)
    elif form.degree == 2:
        t = np.einsum("abk,vkc->vabc", C, v)  # rho([a,b], c)
        out = -t + np.swapaxes(t, 2, 3) - np.transpose(t, (0, 3, 1, 2))
    else:
        raise ValueError(f"lie_differential_d0 supports degree 1 or 2, got {form.degree}")
    return InvariantForm(form.algebra, form.degree + 1, out, form.value_weights)
