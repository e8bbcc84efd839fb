"""Controls, horizontal curves, the endpoint map, line integrals and horizontal lifts."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .algebra import StratifiedAlgebra
from .errors import StructuralError, ValidationError
from .extension import CentralExtension, PotentialForm
from .forms import InvariantForm
from .group import GroupElement, coframe_coords, frame_coords


@dataclass(frozen=True, eq=False)
class Control:
    """Horizontal control on [0, 1], given in layer-1 coordinates.

    ``kind="linear"`` interpolates node values; ``kind="constant"`` holds
    ``values[i]`` on ``[t_i, t_{i+1})`` (the last row is ignored).
    """

    times: np.ndarray
    values: np.ndarray
    kind: str = "linear"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if t.size < 2 or v.shape[0] != t.size:
            raise StructuralError("control needs at least two nodes and one value row per node")
        if abs(t[0]) > 1e-12 or abs(t[-1] - 1.0) > 1e-12 or np.any(np.diff(t) <= 0):
            raise StructuralError("control grid must increase strictly from 0 to 1")
        if self.kind not in ("linear", "constant"):
            raise StructuralError(f"unknown control kind {self.kind!r}")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def uniform(cls, fn: Callable[[np.ndarray], np.ndarray], nodes: int, kind: str = "linear") -> "Control":
        t = np.linspace(0.0, 1.0, nodes)
        return cls(t, fn(t), kind)

    def refined(self) -> "Control":
        """Insert midpoints; the control function itself is unchanged."""
        t = self.times
        mid = 0.5 * (t[:-1] + t[1:])
        tt = np.empty(2 * t.size - 1)
        tt[0::2], tt[1::2] = t, mid
        if self.kind == "linear":
            vm = 0.5 * (self.values[:-1] + self.values[1:])
        else:
            vm = self.values[:-1]
        vv = np.empty((tt.size, self.values.shape[1]))
        vv[0::2], vv[1::2] = self.values, vm
        return Control(tt, vv, self.kind)


def _embed_control(alg: StratifiedAlgebra, u: np.ndarray) -> np.ndarray:
    idx1 = alg.layer_indices(1)
    if u.shape[-1] == alg.total_dim:
        off = np.delete(u, idx1, axis=-1)
        if np.abs(off).max(initial=0.0) > 0:
            raise ValidationError("control has components outside the horizontal layer")
        return u
    if u.shape[-1] != idx1.size:
        raise StructuralError(f"control width {u.shape[-1]} differs from the rank {idx1.size}")
    full = np.zeros(u.shape[:-1] + (alg.total_dim,))
    full[..., idx1] = u
    return full


@dataclass(frozen=True, eq=False)
class HorizontalCurve:
    times: np.ndarray
    points: np.ndarray  # (N, dim)
    algebra: StratifiedAlgebra | None = None
    control: Control | None = None

    def __post_init__(self):
        t = np.asarray(self.times, float).reshape(-1)
        p = np.asarray(self.points, float)
        if p.ndim != 2 or p.shape[0] != t.size:
            raise StructuralError("curve needs one point row per time node")
        if np.any(np.diff(t) <= 0):
            raise StructuralError("curve times must increase strictly")
        if self.algebra is not None and p.shape[1] != self.algebra.total_dim:
            raise StructuralError("curve point dimension differs from its algebra")
        t.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", p)

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def element(self, i: int) -> GroupElement:
        if self.algebra is None:
            raise StructuralError("curve has no algebra attached")
        return GroupElement(self.points[i], self.algebra)

    def is_closed(self, tol: float = 1e-9, coords: slice | None = None) -> bool:
        sl = coords if coords is not None else slice(None)
        return bool(np.abs(self.points[-1, sl] - self.points[0, sl]).max() <= tol)

    def length(self) -> float:
        """Euclidean length of the coordinate polyline."""
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def left_velocity(self) -> np.ndarray:
        """Left-trivialized finite-difference velocity at segment midpoints."""
        if self.algebra is None:
            raise StructuralError("curve has no algebra attached")
        mid = 0.5 * (self.points[:-1] + self.points[1:])
        dp = np.diff(self.points, axis=0) / np.diff(self.times)[:, None]
        return np.einsum("nij,nj->ni", coframe_coords(self.algebra, mid), dp)

    def nonhorizontal_defect(self) -> float:
        v = self.left_velocity()
        rest = np.delete(v, self.algebra.layer_indices(1), axis=1)
        return float(np.abs(rest).max(initial=0.0))


def endpoint(control: Control, start: GroupElement) -> HorizontalCurve:
    """Classical RK4 for ``gamma' = (L_gamma)_* u`` on the control grid."""
    alg = start.algebra
    alg.require_valid()
    t = control.times
    U = _embed_control(alg, control.values)
    pts = np.empty((t.size, alg.total_dim))
    pts[0] = start.coords

    def rhs(x, u):
        return frame_coords(alg, x) @ u

    for i in range(t.size - 1):
        h = t[i + 1] - t[i]
        if control.kind == "linear":
            u0, u1 = U[i], U[i + 1]
        else:
            u0 = u1 = U[i]
        um = 0.5 * (u0 + u1)
        x = pts[i]
        k1 = rhs(x, u0)
        k2 = rhs(x + 0.5 * h * k1, um)
        k3 = rhs(x + 0.5 * h * k2, um)
        k4 = rhs(x + h * k3, u1)
        pts[i + 1] = x + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    return HorizontalCurve(t, pts, alg, control)


def _coordinate_coefficients(form, points: np.ndarray, algebra: StratifiedAlgebra | None) -> np.ndarray:
    if isinstance(form, PotentialForm):
        return form.coefficients(points)
    if isinstance(form, InvariantForm):
        if form.degree != 1:
            raise ValueError(f"line_integral needs a 1-form, got degree {form.degree}")
        alg = algebra or form.algebra
        if not alg.same_as(form.algebra):
            raise StructuralError("form and curve live on different algebras")
        return np.einsum("vk,...kj->...vj", form.values, coframe_coords(alg, points))
    if callable(form):
        out = np.asarray(form(points), dtype=float)
        return out if out.ndim == points.ndim + 1 else out[..., None, :]
    raise TypeError("form must be a PotentialForm, a degree-1 InvariantForm or a callable")


def line_integral(form, curve: HorizontalCurve, cumulative: bool = False) -> np.ndarray:
    """Composite midpoint rule ``sum_i alpha(mid_i)(x_{i+1} - x_i)``.

    ``form`` may be a :class:`PotentialForm` (base coordinates), a degree-1
    :class:`InvariantForm` on the curve's algebra, or a callable returning
    coordinate coefficients ``(..., r, n)``.
    """
    pts = curve.points
    mid = 0.5 * (pts[:-1] + pts[1:])
    coeff = _coordinate_coefficients(form, mid, curve.algebra)
    inc = np.einsum("nvj,nj->nv", coeff, np.diff(pts, axis=0))
    if cumulative:
        return np.vstack([np.zeros((1, inc.shape[1])), np.cumsum(inc, axis=0)])
    return inc.sum(axis=0)


def horizontal_lift(base_curve: HorizontalCurve, start: GroupElement, ext: CentralExtension, tol: float = 1e-9) -> HorizontalCurve:
    """Lift a base curve into the extended group: fiber increment is the integral of alpha."""
    if not start.algebra.same_as(ext.extended):
        raise StructuralError("start point is not in the extended group")
    if base_curve.points.shape[1] != ext.n_base:
        raise StructuralError("base curve dimension differs from the extension base")
    if np.abs(ext.project(start.coords) - base_curve.start).max() > tol:
        raise ValidationError("start point does not project to the base curve's first point")
    fiber = ext.fiber_part(start.coords) + line_integral(ext.potential, base_curve, cumulative=True)
    pts = np.hstack([base_curve.points, fiber])
    return HorizontalCurve(base_curve.times, pts, ext.extended, base_curve.control)


# CSV --------------------------------------------------------------------------------


def curve_to_csv(curve: HorizontalCurve) -> str:
    n = curve.points.shape[1]
    buf = io.StringIO()
    buf.write("t," + ",".join(f"x{i + 1}" for i in range(n)) + "\n")
    for t, row in zip(curve.times, curve.points):
        buf.write(repr(float(t)) + "," + ",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def curve_from_csv(text: str, algebra: StratifiedAlgebra | None = None, origin: str = "<curve>") -> HorizontalCurve:
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{origin}: empty curve file")
    head = [c.strip() for c in rows[0]]
    if not head or head[0] != "t" or any(h != f"x{i}" for i, h in enumerate(head[1:], start=1)):
        raise ValueError(f"{origin}: line 1: header must be 't,x1,...,xn'")
    data = []
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != len(head):
            raise ValueError(f"{origin}: line {lineno}: expected {len(head)} fields, found {len(r)}")
        try:
            data.append([float(c) for c in r])
        except ValueError as exc:
            raise ValueError(f"{origin}: line {lineno}: {exc}") from exc
    if len(data) < 2:
        raise ValueError(f"{origin}: need at least two nodes")
    arr = np.asarray(data)
    return HorizontalCurve(arr[:, 0], arr[:, 1:], algebra)


def load_curve(path: str | Path, algebra: StratifiedAlgebra | None = None) -> HorizontalCurve:
    p = Path(path)
    return curve_from_csv(p.read_text(), algebra, origin=str(p))


def polyline_curve(vertices, samples_per_edge: int = 1, algebra: StratifiedAlgebra | None = None) -> HorizontalCurve:
    """Piecewise-linear curve through ``vertices`` with uniform sub-sampling."""
    V = np.asarray(vertices, dtype=float)
    pieces = [V[:1]]
    for a, b in zip(V[:-1], V[1:]):
        s = np.linspace(0, 1, samples_per_edge + 1)[1:, None]
        pieces.append(a + s * (b - a))
    P = np.vstack(pieces)
    return HorizontalCurve(np.linspace(0.0, 1.0, P.shape[0]), P, algebra)


def circle_curve(nodes: int, radius: float = 1.0, center=(0.0, 0.0)) -> HorizontalCurve:
    t = np.linspace(0.0, 1.0, nodes)
    pts = np.stack([center[0] + radius * np.cos(2 * np.pi * t), center[1] + radius * np.sin(2 * np.pi * t)], axis=1)
    pts[-1] = pts[0]
    return HorizontalCurve(t, pts)


def square_loop_control(side: float = 1.0) -> Control:
    """Counter-clockwise square traversed once with piecewise-constant speed 4*side."""
    s = 4.0 * side
    vals = np.array([[s, 0.0], [0.0, s], [-s, 0.0], [0.0, -s], [0.0, -s]])
    return Control(np.array([0.0, 0.25, 0.5, 0.75, 1.0]), vals, kind="constant")
