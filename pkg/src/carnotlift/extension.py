"""Central extensions built from graded 2-cocycles, and maps between them."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .algebra import StratifiedAlgebra, load_algebra
from .errors import StructuralError, ValidationError
from .forms import InvariantForm, lie_differential_d0
from .group import frame_coords

_GAUSS = {q: np.polynomial.legendre.leggauss(q) for q in (1, 2, 3, 4, 6, 8)}


def gauss_nodes(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [0, 1]."""
    if q not in _GAUSS:
        _GAUSS[q] = np.polynomial.legendre.leggauss(q)
    x, w = _GAUSS[q]
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True, eq=False)
class CentralExtension:
    """``V -> g -> h``: extended algebra is ``h`` (first) followed by ``V``."""

    base: StratifiedAlgebra
    fiber_layers: tuple[int, ...]
    cocycle: np.ndarray  # (dim V, dim h, dim h), antisymmetric in the last two slots
    extended: StratifiedAlgebra

    @property
    def n_base(self) -> int:
        return self.base.total_dim

    @property
    def n_fiber(self) -> int:
        return len(self.fiber_layers)

    @property
    def fiber_dims(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for w in self.fiber_layers:
            out[w] = out.get(w, 0) + 1
        return out

    @property
    def base_slice(self) -> slice:
        return slice(0, self.n_base)

    @property
    def fiber_slice(self) -> slice:
        return slice(self.n_base, self.n_base + self.n_fiber)

    def project(self, g) -> np.ndarray:
        """``pi``: coordinates of g -> coordinates of h (a coordinate projection)."""
        return np.asarray(g, dtype=float)[..., self.base_slice]

    def fiber_part(self, g) -> np.ndarray:
        return np.asarray(g, dtype=float)[..., self.fiber_slice]

    def include(self, v) -> np.ndarray:
        """``iota``: V -> g."""
        v = np.asarray(v, dtype=float)
        return np.concatenate([np.zeros(v.shape[:-1] + (self.n_base,)), v], axis=-1)

    def join(self, x, v) -> np.ndarray:
        x, v = np.broadcast_arrays(np.asarray(x, float)[..., :, None], np.asarray(v, float)[..., None, :])
        return np.concatenate([x[..., 0], v[..., 0, :]], axis=-1)

    @cached_property
    def cocycle_form(self) -> InvariantForm:
        return InvariantForm(self.base, 2, self.cocycle, self.fiber_layers)

    @cached_property
    def potential(self) -> "PotentialForm":
        return potential_form(self)


def build_extension(
    base: StratifiedAlgebra,
    fiber_layers: Sequence[int],
    cocycle,
    name: str | None = None,
    tol: float = 1e-10,
) -> CentralExtension:
    """Extended algebra with bracket ``[X, Y]_h + rho(X, Y)`` and central V.

    ``cocycle`` may be an array ``(dim V, n, n)``, an :class:`InvariantForm`, or
    an iterable of 0-based ``(i, j, v, c)`` entries meaning ``rho(X_i, X_j)_v = c``.
    """
    base.require_valid()
    fiber_layers = tuple(int(w) for w in fiber_layers)
    if any(w < 1 for w in fiber_layers):
        raise StructuralError("fiber layers must be positive")
    n, m = base.total_dim, len(fiber_layers)
    if isinstance(cocycle, InvariantForm):
        rho = np.array(cocycle.values)
    elif isinstance(cocycle, np.ndarray):
        rho = np.array(cocycle, dtype=float)
    else:
        rho = np.zeros((m, n, n))
        for i, j, v, c in cocycle:
            i, j, v = int(i), int(j), int(v)
            if not (0 <= i < n and 0 <= j < n and 0 <= v < m):
                raise StructuralError(f"cocycle entry ({i + 1},{j + 1},{v + 1}) out of range")
            if i == j:
                raise ValidationError("cocycle entry on a diagonal pair", witness=(i + 1, j + 1))
            rho[v, i, j] += float(c)
            rho[v, j, i] -= float(c)
    if rho.shape != (m, n, n):
        raise StructuralError(f"cocycle shape {rho.shape} != {(m, n, n)}")
    if np.abs(rho + np.swapaxes(rho, 1, 2)).max(initial=0.0) > tol:
        raise ValidationError("cocycle is not antisymmetric")
    w = np.asarray(base.weights)
    for v, i, j in np.argwhere(np.abs(rho) > tol):
        if i < j and fiber_layers[v] != w[i] + w[j]:
            raise ValidationError(
                f"grading mismatch: rho(X{i + 1}, X{j + 1}) has a component in fiber vector {v + 1} "
                f"of layer {fiber_layers[v]} != {w[i]} + {w[j]}",
                witness=(i + 1, j + 1),
            )
    form = InvariantForm(base, 2, rho, fiber_layers)
    d = lie_differential_d0(form).values
    bad = np.argwhere(np.abs(d) > tol * max(1.0, np.abs(rho).max(initial=0.0)))
    for v, i, j, k in bad:
        if i < j < k:
            raise ValidationError(
                f"cocycle condition fails: d0 rho(X{i + 1}, X{j + 1}, X{k + 1}) = {d[v, i, j, k]:.3g}",
                witness=(i + 1, j + 1, k + 1),
            )
    brackets = [(i, j, k, c) for (i, j), row in base.structure.items() for k, c in row.items()]
    for v, i, j in np.argwhere(np.abs(rho) > 0):
        if i < j:
            brackets.append((int(i), int(j), n + int(v), float(rho[v, i, j])))
    ext = StratifiedAlgebra.from_brackets(
        None, brackets, name=name or f"{base.name}+ext", weights=tuple(base.weights) + fiber_layers
    )
    rep = ext.report
    if not rep.ok:
        raise ValidationError("extended algebra fails validation: " + str(rep.violations[0]), witness=rep.violations[0])
    return CentralExtension(base, fiber_layers, rho, ext)


def extension_from_dict(data: Mapping) -> CentralExtension:
    """Parse ``{"base": ..., "fiber_layers": [...], "cocycle": [{"i","j","v","c"}]}`` (1-based)."""
    for key in ("base", "fiber_layers", "cocycle"):
        if key not in data:
            raise ValueError(f"extension definition missing field {key!r}")
    base = load_algebra(data["base"])
    layers = data["fiber_layers"]
    if not isinstance(layers, list) or not all(isinstance(x, int) for x in layers):
        raise ValueError("field 'fiber_layers' must be a list of integers (layer of each fiber vector)")
    entries = []
    for pos, e in enumerate(data["cocycle"]):
        try:
            entries.append((int(e["i"]) - 1, int(e["j"]) - 1, int(e["v"]) - 1, float(e["c"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"cocycle[{pos}]: needs integer i, j, v and numeric c ({exc})") from exc
    return build_extension(base, layers, entries, name=data.get("name"))


def load_extension(spec) -> CentralExtension:
    """JSON path, parsed dict, or a short name such as ``heisenberg:1`` / ``filiform:3``."""
    if isinstance(spec, Mapping):
        return extension_from_dict(spec)
    name = str(spec)
    if name in _NAMED:
        return _NAMED[name]()
    family, _, arg = name.partition(":")
    if family in _NAMED_FAMILIES:
        return _NAMED_FAMILIES[family](int(arg) if arg else 1)
    with Path(name).open() as fh:
        return extension_from_dict(json.load(fh))


def heisenberg_extension(n: int = 1) -> CentralExtension:
    """``R -> H^n -> R^{2n}`` with ``rho = sum dx_i ^ dy_i``."""
    from .algebra import abelian

    return build_extension(abelian(2 * n), [2], [(i, n + i, 0, 1.0) for i in range(n)], name=f"heisenberg:{n}")


def filiform_extension() -> CentralExtension:
    """``R -> F^3 -> H^1`` with ``rho(X1, X3) = 1`` into layer 3."""
    from .algebra import heisenberg

    return build_extension(heisenberg(1), [3], [(0, 2, 0, 1.0)], name="filiform:3")


def quaternionic_extension(n: int = 1) -> CentralExtension:
    from .algebra import abelian, quaternionic_forms

    rho = np.stack(quaternionic_forms(n))
    return build_extension(abelian(4 * n), [2, 2, 2], rho, name=f"quaternionic-heisenberg:{n}")


_NAMED = {"filiform:3": filiform_extension}
_NAMED_FAMILIES = {"heisenberg": heisenberg_extension, "quaternionic-heisenberg": quaternionic_extension}


# potential form ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PotentialForm:
    """V-valued 1-form ``alpha`` on the base with ``d alpha = rho``.

    Coefficients are in base coordinate differentials: the extended coframe's
    fiber rows read ``dC - alpha(x) dx``.  A horizontal curve in the extended
    group therefore satisfies ``dC = alpha(dx)``.
    """

    ext: CentralExtension

    def coefficients(self, x) -> np.ndarray:
        """Shape ``(..., dim V, dim h)`` at base points ``x``."""
        x = np.asarray(x, dtype=float)
        e = self.ext
        g = np.concatenate([x, np.zeros(x.shape[:-1] + (e.n_fiber,))], axis=-1)
        F = frame_coords(e.extended, g)
        Fb = F[..., e.base_slice, e.base_slice]
        Fv = F[..., e.fiber_slice, e.base_slice]
        if e.base.is_abelian:
            return Fv
        return np.linalg.solve(np.swapaxes(Fb, -1, -2), np.swapaxes(Fv, -1, -2)).swapaxes(-1, -2)

    def __call__(self, x, dx) -> np.ndarray:
        """Pair alpha at x with the tangent vector dx."""
        return np.einsum("...vi,...i->...v", self.coefficients(x), np.asarray(dx, dtype=float))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.ext.cocycle)

    @property
    def polynomial_degree(self) -> int:
        return max(1, self.ext.extended.step - 1)

    def exterior_derivative_fd(self, x, h: float = 1e-5) -> np.ndarray:
        """Central-difference ``d alpha`` in coordinates: ``[..., v, a, b]``."""
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        grads = []
        for a in range(n):
            e = np.zeros(n)
            e[a] = h
            grads.append((self.coefficients(x + e) - self.coefficients(x - e)) / (2 * h))
        D = np.stack(grads, axis=-1)  # [..., v, b, a] = d_a alpha_b
        return np.swapaxes(D, -1, -2) - D

    def rho_in_coordinates(self, x) -> np.ndarray:
        """The cocycle transported to coordinate 2-forms via the base coframe."""
        from .group import coframe_coords

        Th = coframe_coords(self.ext.base, np.asarray(x, dtype=float))
        return np.einsum("...ia,vij,...jb->...vab", Th, self.ext.cocycle, Th)


def potential_form(ext: CentralExtension) -> PotentialForm:
    if any(w == 1 for w in ext.fiber_layers):
        raise StructuralError("potential form needs a fiber without horizontal directions (equal ranks)")
    return PotentialForm(ext)


# maps between extensions ------------------------------------------------------------


def _check_graded(M: np.ndarray, w_out: Sequence[int], w_in: Sequence[int], label: str, tol: float = 1e-12):
    w_out = np.asarray(w_out)[:, None]
    w_in = np.asarray(w_in)[None, :]
    bad = np.argwhere((np.abs(M) > tol) & (w_out != w_in))
    if bad.size:
        i, j = bad[0]
        raise ValidationError(
            f"{label} is not graded: entry ({i + 1},{j + 1}) maps layer {int(w_in[0, j])} to layer {int(w_out[i, 0])}",
            witness=(int(i) + 1, int(j) + 1),
        )


@dataclass(frozen=True, eq=False)
class GradedMapTriple:
    L: np.ndarray
    phi: np.ndarray
    mu: np.ndarray | None
    source: CentralExtension
    target: CentralExtension

    def __post_init__(self):
        s, t = self.source, self.target
        L = np.atleast_2d(np.asarray(self.L, float))
        phi = np.atleast_2d(np.asarray(self.phi, float))
        if L.shape != (t.n_base, s.n_base):
            raise StructuralError(f"L has shape {L.shape}, expected {(t.n_base, s.n_base)}")
        if phi.shape != (t.n_fiber, s.n_fiber):
            raise StructuralError(f"phi has shape {phi.shape}, expected {(t.n_fiber, s.n_fiber)}")
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "phi", phi)
        if self.mu is not None:
            mu = np.atleast_2d(np.asarray(self.mu, float))
            if mu.shape != (t.n_fiber, s.n_base):
                raise StructuralError(f"mu has shape {mu.shape}, expected {(t.n_fiber, s.n_base)}")
            object.__setattr__(self, "mu", mu)

    def check_graded(self) -> None:
        s, t = self.source, self.target
        _check_graded(self.L, t.base.weights, s.base.weights, "L")
        _check_graded(self.phi, t.fiber_layers, s.fiber_layers, "phi")
        if self.mu is not None:
            _check_graded(self.mu, t.fiber_layers, s.base.weights, "mu")


def graded_hom_compose(t: GradedMapTriple) -> np.ndarray:
    """``psi(X + Y) = L X + (mu X + phi Y)`` as a matrix on extended coordinates."""
    t.check_graded()
    if t.mu is None:
        raise StructuralError("graded_hom_compose needs mu")
    top = np.hstack([t.L, np.zeros((t.target.n_base, t.source.n_fiber))])
    bottom = np.hstack([t.mu, t.phi])
    return np.vstack([top, bottom])


def homomorphism_residual(psi: np.ndarray, src: StratifiedAlgebra, dst: StratifiedAlgebra) -> float:
    """Max over basis pairs of ``|psi[e_i, e_j] - [psi e_i, psi e_j]|``."""
    lhs = np.einsum("ijk,lk->ijl", src.tensor, psi)
    rhs = np.einsum("ai,bj,abl->ijl", psi, psi, dst.tensor)
    return float(np.abs(lhs - rhs).max(initial=0.0))


@dataclass(frozen=True)
class ObstructionResult:
    obstruction: InvariantForm
    mu: np.ndarray | None
    residual: float

    @property
    def vanishes(self) -> bool:
        return self.obstruction.is_zero(1e-12)


def _d0_operator(ext1: CentralExtension, ext2: CentralExtension):
    """Matrix of ``mu -> d0 mu`` restricted to graded mu, plus the unknown index list."""
    w1 = ext1.base.weights
    slots = [(v, a) for v in range(ext2.n_fiber) for a in range(ext1.n_base) if ext2.fiber_layers[v] == w1[a]]
    C = ext1.base.tensor
    n = ext1.n_base
    M = np.zeros((ext2.n_fiber * n * n, len(slots)))
    for col, (v, a) in enumerate(slots):
        d = -C[:, :, a]  # d0 mu(X_i, X_j) = -mu([X_i, X_j])
        block = np.zeros((ext2.n_fiber, n, n))
        block[v] = d
        M[:, col] = block.ravel()
    return M, slots


def hom_obstruction(L, phi, ext1: CentralExtension, ext2: CentralExtension, tol: float = 1e-9) -> ObstructionResult:
    """Obstruction ``phi o rho_1 - L^* rho_2`` and a graded ``mu`` with ``d0 mu`` equal to it."""
    t = GradedMapTriple(L, phi, None, ext1, ext2)
    t.check_graded()
    O = np.einsum("wv,vab->wab", t.phi, ext1.cocycle) - np.einsum("wcd,ca,db->wab", ext2.cocycle, t.L, t.L)
    form = InvariantForm(ext1.base, 2, O, ext2.fiber_layers)
    M, slots = _d0_operator(ext1, ext2)
    rhs = O.ravel()
    mu = np.zeros((ext2.n_fiber, ext1.n_base))
    if slots:
        sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
        for (v, a), c in zip(slots, sol):
            mu[v, a] = c
        resid = float(np.abs(M @ sol - rhs).max(initial=0.0))
    else:
        resid = float(np.abs(rhs).max(initial=0.0))
    return ObstructionResult(form, mu if resid < tol else None, resid)


@dataclass(frozen=True)
class FiberMapSolution:
    phi: np.ndarray
    mu: np.ndarray
    residual: float


def solve_fiber_map(L, ext1: CentralExtension, ext2: CentralExtension) -> FiberMapSolution:
    """Least-squares graded ``(phi, mu)`` with ``phi o rho_1 - d0 mu = L^* rho_2``."""
    L = np.atleast_2d(np.asarray(L, float))
    target = np.einsum("wcd,ca,db->wab", ext2.cocycle, L, L).ravel()
    n = ext1.n_base
    phi_slots = [
        (w, v) for w in range(ext2.n_fiber) for v in range(ext1.n_fiber) if ext2.fiber_layers[w] == ext1.fiber_layers[v]
    ]
    P = np.zeros((target.size, len(phi_slots)))
    for col, (w, v) in enumerate(phi_slots):
        block = np.zeros((ext2.n_fiber, n, n))
        block[w] = ext1.cocycle[v]
        P[:, col] = block.ravel()
    D, mu_slots = _d0_operator(ext1, ext2)
    A = np.hstack([P, -D])
    sol, *_ = np.linalg.lstsq(A, target, rcond=None)
    phi = np.zeros((ext2.n_fiber, ext1.n_fiber))
    mu = np.zeros((ext2.n_fiber, n))
    for (w, v), c in zip(phi_slots, sol[: len(phi_slots)]):
        phi[w, v] = c
    for (w, a), c in zip(mu_slots, sol[len(phi_slots):]):
        mu[w, a] = c
    return FiberMapSolution(phi, mu, float(np.abs(A @ sol - target).max(initial=0.0)))


# Pfaffian ------------------------------------------------------------------------------


def _pfaffian_expand(A: np.ndarray) -> float:
    n = A.shape[0]
    if n == 0:
        return 1.0
    total = 0.0
    for j in range(1, n):
        if A[0, j] == 0:
            continue
        keep = [k for k in range(1, n) if k != j]
        total += (-1) ** (j + 1) * A[0, j] * _pfaffian_expand(A[np.ix_(keep, keep)])
    return total


def _pfaffian_householder(A: np.ndarray) -> float:
    """Skew-tridiagonalize with Householder reflections and read off the Pfaffian."""
    A = np.array(A, dtype=float)
    n = A.shape[0]
    pf = 1.0
    for k in range(0, n - 1, 2):
        x = A[k + 1 :, k].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            return 0.0
        # reflect x onto a multiple of e_1
        v = x.copy()
        v[0] += np.copysign(alpha, x[0])
        v /= np.linalg.norm(v)
        H = np.eye(n - k - 1) - 2.0 * np.outer(v, v)
        A[k + 1 :, :] = H @ A[k + 1 :, :]
        A[:, k + 1 :] = A[:, k + 1 :] @ H
        # a Householder reflector has determinant -1 and Pf(Q A Q^T) = det(Q) Pf(A)
        pf *= -A[k, k + 1]
    return pf


def top_wedge_coefficient(J) -> float:
    """Pfaffian of an antisymmetric matrix (coefficient of ``omega^m / m!`` on the volume form)."""
    J = np.asarray(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise StructuralError("top_wedge_coefficient needs a square matrix")
    if J.shape[0] % 2:
        raise StructuralError("top_wedge_coefficient needs even dimension")
    if np.abs(J + J.T).max(initial=0.0) > 1e-12 * max(1.0, np.abs(J).max(initial=0.0)):
        raise ValidationError("matrix is not antisymmetric")
    if J.shape[0] <= 8:
        return float(_pfaffian_expand(J))
    return float(_pfaffian_householder(J))
