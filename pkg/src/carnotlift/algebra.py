"""Stratified Lie algebras: storage, validation, built-in families, JSON I/O."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import StructuralError, ValidationError

_TOL = 1e-10


@dataclass(frozen=True)
class Violation:
    """One failed invariant; ``indices`` are 1-based basis indices."""

    kind: str
    indices: tuple[int, ...]
    detail: str = ""

    def __str__(self) -> str:
        idx = ",".join(str(i) for i in self.indices)
        return f"{self.kind} at ({idx})" + (f": {self.detail}" if self.detail else "")


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self) -> int:
        return len(self.violations)

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


@dataclass(frozen=True, eq=False)
class StratifiedAlgebra:
    """Graded nilpotent Lie algebra with a fixed basis.

    ``structure`` maps a canonical pair ``(i, j)`` with ``i < j`` to a dict
    ``{k: c}`` meaning ``[e_i, e_j] = sum_k c e_k`` (0-based indices).
    ``weights[i]`` is the layer of basis vector ``i``.  Layers need not be
    contiguous in the basis order (extended algebras append the fiber last).
    """

    weights: tuple[int, ...]
    structure: Mapping[tuple[int, int], Mapping[int, float]]
    name: str = "custom"
    raw_brackets: tuple[tuple[int, int, int, float], ...] = field(default=(), repr=False)
    conflicts: tuple[tuple[int, int, int], ...] = field(default=(), repr=False)

    # construction -----------------------------------------------------------
    @classmethod
    def from_brackets(
        cls,
        layer_dims: Sequence[int] | None,
        brackets: Iterable[tuple[int, int, int, float]],
        name: str = "custom",
        weights: Sequence[int] | None = None,
    ) -> "StratifiedAlgebra":
        """Build from 0-based ``(i, j, k, c)`` entries meaning ``c^k_{ij} = c``.

        Either ``layer_dims`` (basis ordered layer by layer) or explicit
        ``weights`` must be given.  Entries for ``(j, i)`` are folded into the
        canonical ``(i, j)`` slot with a sign flip; a disagreeing duplicate is
        remembered as an antisymmetry conflict for :func:`validate`.
        """
        if weights is None:
            if layer_dims is None:
                raise StructuralError("need layer_dims or weights")
            if any(int(d) <= 0 for d in layer_dims):
                raise StructuralError(f"layer dimensions must be positive: {list(layer_dims)}")
            weights = [w + 1 for w, d in enumerate(layer_dims) for _ in range(int(d))]
        weights = tuple(int(w) for w in weights)
        if not weights or min(weights) < 1:
            raise StructuralError("weights must be positive integers")
        n = len(weights)
        raw = []
        canon: dict[tuple[int, int], dict[int, float]] = {}
        seen: dict[tuple[int, int, int], tuple[int, int, float]] = {}
        conflicts = []
        for i, j, k, c in brackets:
            i, j, k, c = int(i), int(j), int(k), float(c)
            for idx in (i, j, k):
                if not 0 <= idx < n:
                    raise StructuralError(f"bracket index {idx + 1} outside basis of size {n}")
            raw.append((i, j, k, c))
            if i == j:
                if c != 0.0:
                    conflicts.append((i, j, k))
                continue
            a, b, s = (i, j, 1.0) if i < j else (j, i, -1.0)
            key = (a, b, k)
            if key in seen:
                if abs(seen[key][2] - s * c) > _TOL * max(1.0, abs(c)):
                    conflicts.append((i, j, k) if i < j else (j, i, k))
                continue
            seen[key] = (i, j, s * c)
            if c != 0.0:
                canon.setdefault((a, b), {})[k] = s * c
        return cls(
            weights=weights,
            structure={key: dict(v) for key, v in canon.items()},
            name=name,
            raw_brackets=tuple(raw),
            conflicts=tuple(conflicts),
        )

    # derived data -------------------------------------------------------------
    @property
    def total_dim(self) -> int:
        return len(self.weights)

    @property
    def step(self) -> int:
        return max(self.weights)

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return tuple(self.weights.count(w) for w in range(1, self.step + 1))

    @cached_property
    def weight_array(self) -> np.ndarray:
        w = np.asarray(self.weights, dtype=float)
        w.setflags(write=False)
        return w

    def layer_indices(self, layer: int) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.weights) == layer)

    @property
    def rank(self) -> int:
        """Dimension of the horizontal layer."""
        return self.weights.count(1)

    @property
    def homogeneous_dimension(self) -> int:
        return int(sum(self.weights))

    @property
    def is_abelian(self) -> bool:
        return not self.structure

    @cached_property
    def tensor(self) -> np.ndarray:
        """Dense ``C[i, j, k]`` with ``[e_i, e_j] = sum_k C[i, j, k] e_k``."""
        n = self.total_dim
        C = np.zeros((n, n, n))
        for (i, j), row in self.structure.items():
            for k, c in row.items():
                C[i, j, k] = c
                C[j, i, k] = -c
        C.setflags(write=False)
        return C

    @cached_property
    def report(self) -> ValidationReport:
        return validate(self)

    @property
    def is_valid(self) -> bool:
        return self.report.ok

    def require_valid(self) -> None:
        if not self.is_valid:
            raise ValidationError(
                f"algebra {self.name!r} fails validation: "
                + "; ".join(str(v) for v in self.report.violations[:5]),
                witness=self.report.violations[0],
            )

    # linear algebra helpers ---------------------------------------------------
    def bracket(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Bracket of (batched) coordinate vectors."""
        return np.einsum("...i,...j,ijk->...k", a, b, self.tensor)

    def ad(self, p: np.ndarray) -> np.ndarray:
        """Matrix of ``ad_p`` acting on column vectors (batched over leading axes)."""
        return np.einsum("...i,ijk->...kj", p, self.tensor)

    def same_as(self, other: "StratifiedAlgebra") -> bool:
        if self is other:
            return True
        return (
            self.weights == other.weights
            and self.total_dim == other.total_dim
            and np.array_equal(self.tensor, other.tensor)
        )

    def to_json_dict(self) -> dict:
        """Serialize in the 1-based file format (requires layer-ordered weights)."""
        if list(self.weights) != sorted(self.weights):
            raise StructuralError("JSON format needs a layer-ordered basis")
        return {
            "name": self.name,
            "layers": list(self.layer_dims),
            "brackets": [
                {"i": i + 1, "j": j + 1, "k": k + 1, "c": c}
                for (i, j), row in sorted(self.structure.items())
                for k, c in sorted(row.items())
            ],
        }


def validate(algebra: StratifiedAlgebra, tol: float = _TOL) -> ValidationReport:
    """Check antisymmetry, grading, Jacobi; warn on deficient generation."""
    out: list[Violation] = []
    warns: list[str] = []
    w = algebra.weights
    for i, j, k in algebra.conflicts:
        out.append(Violation("antisymmetry", (i + 1, j + 1, k + 1), "c^k_ij != -c^k_ji"))
    for (i, j), row in sorted(algebra.structure.items()):
        for k, c in sorted(row.items()):
            if abs(c) > tol and w[k] != w[i] + w[j]:
                out.append(
                    Violation(
                        "grading",
                        (i + 1, j + 1, k + 1),
                        f"weight {w[k]} != {w[i]} + {w[j]}",
                    )
                )
    C = np.array(algebra.tensor)
    n = algebra.total_dim
    if n and algebra.structure:
        jac = (
            np.einsum("ijm,mkl->ijkl", C, C)
            + np.einsum("jkm,mil->ijkl", C, C)
            + np.einsum("kim,mjl->ijkl", C, C)
        )
        scale = max(1.0, float(np.abs(C).max()) ** 2)
        bad = np.argwhere(np.abs(jac) > tol * scale)
        for i, j, k, l in bad:
            if i < j < k:
                out.append(
                    Violation("jacobi", (i + 1, j + 1, k + 1, l + 1), f"residual {jac[i, j, k, l]:.3g}")
                )
    # generation [g1, g^k] = g^{k+1}: warning only
    idx1 = algebra.layer_indices(1)
    for layer in range(1, algebra.step):
        nxt = algebra.layer_indices(layer + 1)
        if nxt.size == 0:
            warns.append(f"layer {layer + 1} is empty")
            continue
        cur = algebra.layer_indices(layer)
        if cur.size == 0 or idx1.size == 0:
            warns.append(f"layer {layer + 1} not generated from layer 1")
            continue
        images = C[np.ix_(idx1, cur, nxt)].reshape(-1, nxt.size)
        r = np.linalg.matrix_rank(images, tol=1e-9) if images.size else 0
        if r < nxt.size:
            warns.append(f"[g^1, g^{layer}] spans {r} of dim g^{layer + 1} = {nxt.size}")
    return ValidationReport(tuple(out), tuple(warns))


# built-in families ------------------------------------------------------------


def heisenberg(n: int = 1) -> StratifiedAlgebra:
    """Basis ``x_1..x_n, y_1..y_n, z`` with ``[x_i, y_i] = z``."""
    if n < 1:
        raise StructuralError("heisenberg needs n >= 1")
    br = [(i, n + i, 2 * n, 1.0) for i in range(n)]
    return StratifiedAlgebra.from_brackets([2 * n, 1], br, name=f"heisenberg:{n}")


def filiform(step: int = 3) -> StratifiedAlgebra:
    """Model filiform algebra: ``[X1, X2] = X3`` and ``[X1, Xk] = X(k+1)``."""
    if step < 2:
        raise StructuralError("filiform needs step >= 2")
    br = [(0, 1, 2, 1.0)] + [(0, k, k + 1, 1.0) for k in range(2, step)]
    return StratifiedAlgebra.from_brackets([2] + [1] * (step - 1), br, name=f"filiform:{step}")


def abelian(n: int) -> StratifiedAlgebra:
    if n < 1:
        raise StructuralError("abelian needs n >= 1")
    return StratifiedAlgebra.from_brackets([n], [], name=f"abelian:{n}")


def quaternionic_forms(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Matrices of the three quaternionic 2-forms on ``R^{4n}``.

    Coordinates are blocks ``(x, y, z, w)`` of size n.  Entry ``[a, b]`` is the
    value of the form on ``(e_a, e_b)``:
    ``dx^dy + dz^dw``, ``dx^dz + dw^dy`` and ``dx^dw + dy^dz``.
    """
    if n < 1:
        raise StructuralError("quaternionic structure needs n >= 1")
    I = np.eye(n)
    Z = np.zeros((n, n))

    def block(pairs):
        M = [[Z] * 4 for _ in range(4)]
        for a, b in pairs:
            M[a][b] = I
            M[b][a] = -I
        return np.block(M)

    X, Y, Zc, W = 0, 1, 2, 3
    return (
        block([(X, Y), (Zc, W)]),
        block([(X, Zc), (W, Y)]),
        block([(X, W), (Y, Zc)]),
    )


def quaternionic_heisenberg(n: int = 1) -> StratifiedAlgebra:
    """Base ``R^{4n}`` with three central directions ``[u, v] = sum_k rho_k(u, v) Z_k``."""
    forms = quaternionic_forms(n)
    m = 4 * n
    br = []
    for k, M in enumerate(forms):
        for a in range(m):
            for b in range(a + 1, m):
                if M[a, b] != 0:
                    br.append((a, b, m + k, float(M[a, b])))
    return StratifiedAlgebra.from_brackets([m, 3], br, name=f"quaternionic-heisenberg:{n}")


_BUILTINS = {
    "heisenberg": heisenberg,
    "filiform": filiform,
    "quaternionic-heisenberg": quaternionic_heisenberg,
    "abelian": abelian,
}


def builtin(name: str) -> StratifiedAlgebra:
    """Resolve ``family:n`` names such as ``heisenberg:1`` or ``filiform:3``."""
    family, _, arg = name.strip().partition(":")
    if family not in _BUILTINS:
        raise KeyError(f"unknown built-in algebra {name!r}")
    try:
        n = int(arg) if arg else (3 if family == "filiform" else 1)
    except ValueError as exc:
        raise KeyError(f"bad parameter in {name!r}") from exc
    return _BUILTINS[family](n)


def is_builtin_name(name: str) -> bool:
    return name.strip().partition(":")[0] in _BUILTINS


def algebra_from_dict(data: Mapping) -> StratifiedAlgebra:
    """Parse the 1-based JSON group definition."""
    if not isinstance(data, Mapping):
        raise ValueError("group definition must be a JSON object")
    for key in ("layers", "brackets"):
        if key not in data:
            raise ValueError(f"group definition missing field {key!r}")
    layers = data["layers"]
    if not isinstance(layers, list) or not all(isinstance(d, int) for d in layers):
        raise ValueError("field 'layers' must be a list of integers")
    entries = []
    for pos, b in enumerate(data["brackets"]):
        try:
            entries.append((int(b["i"]) - 1, int(b["j"]) - 1, int(b["k"]) - 1, float(b["c"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"brackets[{pos}]: needs integer i, j, k and numeric c ({exc})") from exc
    if any(min(e[:3]) < 0 for e in entries):
        raise ValueError("bracket indices are 1-based")
    return StratifiedAlgebra.from_brackets(layers, entries, name=str(data.get("name", "custom")))


def load_algebra(spec: str | Mapping) -> StratifiedAlgebra:
    """Built-in name, path to a JSON file, or an already parsed dict."""
    if isinstance(spec, Mapping):
        return algebra_from_dict(spec)
    if is_builtin_name(spec):
        return builtin(spec)
    path = Path(spec)
    with path.open() as fh:
        return algebra_from_dict(json.load(fh))


def homogeneous_norm_exponents(algebra: StratifiedAlgebra) -> np.ndarray:
    return 1.0 / algebra.weight_array


def lcm_of_weights(algebra: StratifiedAlgebra) -> int:
    return math.lcm(*algebra.weights)
