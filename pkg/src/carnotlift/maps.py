"""Grid-sampled maps with multilinear interpolation, path quadrature and file I/O."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ChartError, StructuralError

_BOX_TOL = 1e-9


class SampledMap:
    """Values of a map ``R^k -> R^m`` on a uniform grid over an axis-aligned box.

    ``values`` has shape ``shape + (m,)`` in row-major (C) order.  Evaluation
    is multilinear inside each cell; :meth:`gradient` is the exact derivative
    of that interpolant and :meth:`jacobian` interpolates central-difference
    node Jacobians.
    """

    def __init__(self, lower, upper, values, source: str | None = None, target: str | None = None):
        lower = np.asarray(lower, dtype=float).reshape(-1)
        upper = np.asarray(upper, dtype=float).reshape(-1)
        values = np.array(values, dtype=float)
        k = lower.size
        if upper.size != k:
            raise StructuralError("lower and upper corners differ in dimension")
        if np.any(upper <= lower):
            raise StructuralError("domain box must be nonempty")
        if values.ndim != k + 1:
            raise StructuralError(f"values need {k} grid axes plus one value axis, got shape {values.shape}")
        if any(n < 2 for n in values.shape[:-1]):
            raise StructuralError("each grid axis needs at least 2 nodes")
        if not np.all(np.isfinite(values)):
            raise StructuralError("map values must be finite at every node")
        values.setflags(write=False)
        self.lower, self.upper, self.values = lower, upper, values
        self.source, self.target = source, target
        self.axes = [np.linspace(lo, hi, n) for lo, hi, n in zip(lower, upper, values.shape[:-1])]
        self.spacing = (upper - lower) / (np.asarray(values.shape[:-1]) - 1)
        self._node_jac = None

    # construction -----------------------------------------------------------
    @classmethod
    def from_function(cls, fn: Callable, lower, upper, shape, **meta) -> "SampledMap":
        lower = np.asarray(lower, float)
        upper = np.asarray(upper, float)
        axes = [np.linspace(lo, hi, int(n)) for lo, hi, n in zip(lower, upper, shape)]
        nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        vals = np.asarray(fn(nodes), dtype=float)
        if vals.shape[:-1] != nodes.shape[:-1]:
            vals = vals.reshape(nodes.shape[:-1] + (-1,))
        return cls(lower, upper, vals, **meta)

    # geometry ---------------------------------------------------------------
    @property
    def dim_in(self) -> int:
        return self.lower.size

    @property
    def dim_out(self) -> int:
        return self.values.shape[-1]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape[:-1]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def nodes(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def contains(self, pts, margin: float = 0.0) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        tol = _BOX_TOL * np.maximum(1.0, np.abs(self.upper - self.lower))
        return np.all((pts >= self.lower + margin - tol) & (pts <= self.upper - margin + tol), axis=-1)

    def _require_inside(self, pts) -> None:
        if not np.all(self.contains(pts)):
            bad = np.asarray(pts)[~self.contains(pts)]
            raise ChartError(f"point {bad.reshape(-1, self.dim_in)[0].tolist()} outside the sampled box")

    def locate(self, pts) -> tuple[np.ndarray, np.ndarray]:
        """Cell multi-index and local coordinates in [0, 1] for each point."""
        pts = np.asarray(pts, dtype=float)
        rel = (pts - self.lower) / self.spacing
        cells = np.clip(np.floor(rel).astype(int), 0, np.asarray(self.shape) - 2)
        return cells, rel - cells

    # evaluation -------------------------------------------------------------
    def eval_in_cell(self, pts, cells, derivative: bool = False):
        """Evaluate the cell polynomial of ``cells`` at ``pts`` (may lie on the cell boundary)."""
        pts = np.asarray(pts, dtype=float)
        cells = np.asarray(cells)
        t = (pts - self.lower) / self.spacing - cells
        k = self.dim_in
        val = 0.0
        grad = [0.0] * k if derivative else None
        for corner in range(1 << k):
            bits = [(corner >> d) & 1 for d in range(k)]
            idx = tuple(cells[..., d] + bits[d] for d in range(k))
            node = self.values[idx]
            factors = [t[..., d] if bits[d] else 1.0 - t[..., d] for d in range(k)]
            w = np.ones(t.shape[:-1])
            for fct in factors:
                w = w * fct
            val = val + w[..., None] * node
            if derivative:
                for d in range(k):
                    dw = np.ones(t.shape[:-1]) * ((1.0 if bits[d] else -1.0) / self.spacing[d])
                    for e in range(k):
                        if e != d:
                            dw = dw * factors[e]
                    grad[d] = grad[d] + dw[..., None] * node
        if derivative:
            return val, np.stack(grad, axis=-1)  # (..., m, k)
        return val

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        self._require_inside(pts)
        cells, _ = self.locate(pts)
        return self.eval_in_cell(pts, cells)

    def gradient(self, pts) -> np.ndarray:
        """Exact derivative of the multilinear interpolant, ``(..., m, k)``."""
        pts = np.asarray(pts, dtype=float)
        self._require_inside(pts)
        cells, _ = self.locate(pts)
        return self.eval_in_cell(pts, cells, derivative=True)[1]

    def node_jacobian(self) -> np.ndarray:
        """Central-difference Jacobian at every node (second-order one-sided at edges)."""
        if self._node_jac is None:
            grads = np.gradient(self.values, *self.spacing, axis=tuple(range(self.dim_in)), edge_order=2)
            if self.dim_in == 1:
                grads = [grads]
            J = np.stack(grads, axis=-1)
            J.setflags(write=False)
            self._node_jac = J
        return self._node_jac

    def jacobian(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        self._require_inside(pts)
        J = self.node_jacobian()
        flat = SampledMap.__new__(SampledMap)
        flat.lower, flat.upper, flat.spacing = self.lower, self.upper, self.spacing
        flat.values = J.reshape(self.shape + (-1,))
        cells, _ = self.locate(pts)
        out = flat.eval_in_cell(pts, cells)
        return out.reshape(pts.shape[:-1] + (self.dim_out, self.dim_in))

    def interior_slices(self, width: int = 1) -> tuple[slice, ...]:
        return tuple(slice(width, n - width) for n in self.shape)

    def with_values(self, values) -> "SampledMap":
        return SampledMap(self.lower, self.upper, values, source=self.source, target=self.target)

    # path quadrature ----------------------------------------------------------
    def split_polyline(self, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Cut a polyline at every grid hyperplane.

        Returns piece start points, end points and the cell index of each piece,
        so that the interpolant is a single polynomial on every piece.
        """
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.dim_in:
            raise StructuralError("polyline must have shape (N, dim_in)")
        self._require_inside(pts)
        starts, ends = [], []
        for a, b in zip(pts[:-1], pts[1:]):
            d = b - a
            ts = [np.array([0.0, 1.0])]
            for j in range(self.dim_in):
                if d[j] == 0.0:
                    continue
                lo, hi = sorted((a[j], b[j]))
                ax = self.axes[j]
                inner = ax[(ax > lo) & (ax < hi)]
                if inner.size:
                    ts.append((inner - a[j]) / d[j])
            t = np.unique(np.concatenate(ts))
            seg = a + t[:, None] * d
            starts.append(seg[:-1])
            ends.append(seg[1:])
        A = np.concatenate(starts) if starts else np.zeros((0, self.dim_in))
        B = np.concatenate(ends) if ends else np.zeros((0, self.dim_in))
        keep = np.any(A != B, axis=1)
        A, B = A[keep], B[keep]
        cells, _ = self.locate(0.5 * (A + B))
        return A, B, cells

    def pullback_path_integral(self, points, form_coefficients: Callable, quad_order: int = 4) -> np.ndarray:
        """``int_path (f^* alpha)`` for a coordinate 1-form ``alpha`` on the target.

        ``form_coefficients(y)`` returns ``(..., r, m)`` coefficients at target
        points.  Exact for polynomial forms of modest degree because each piece
        lies in one interpolation cell.
        """
        A, B, cells = self.split_polyline(points)
        return self._integrate_pieces(A, B, cells, form_coefficients, quad_order).sum(axis=0)

    def _integrate_pieces(self, A, B, cells, form_coefficients, quad_order):
        from .extension import gauss_nodes

        s, w = gauss_nodes(quad_order)
        X = A[:, None, :] + s[None, :, None] * (B - A)[:, None, :]
        C = np.broadcast_to(cells[:, None, :], X.shape)
        val, grad = self.eval_in_cell(X, C, derivative=True)
        vel = np.einsum("pqmk,pk->pqm", grad, B - A)
        coeff = form_coefficients(val)  # (P, q, r, m)
        integrand = np.einsum("pqrm,pqm->pqr", coeff, vel)
        return np.einsum("pqr,q->pr", integrand, w)


def identity_map(lower, upper, shape) -> SampledMap:
    return SampledMap.from_function(lambda x: x, lower, upper, shape)


# named maps used by the CLI and tests -------------------------------------------------

def _qshear(x):
    return np.stack([x[..., 0] + x[..., 1] ** 2, x[..., 1]], axis=-1)


def _asq(x):
    return np.stack([x[..., 0] ** 2, x[..., 1]], axis=-1)


BUILTIN_MAPS: dict[str, Callable] = {
    "identity": lambda x: x,
    "quadratic-shear": _qshear,
    "a-squared": _asq,
}


def builtin_map(name: str, params: Mapping | None = None) -> Callable:
    params = dict(params or {})
    if name in BUILTIN_MAPS:
        return BUILTIN_MAPS[name]
    if name == "linear":
        M = np.asarray(params["matrix"], dtype=float)
        return lambda x: np.einsum("ij,...j->...i", M, x)
    if name == "scale-x":
        s = float(params.get("factor", 2.0))
        return lambda x: np.concatenate([s * x[..., :1], x[..., 1:]], axis=-1)
    if name == "weierstrass-shear":
        from .hoelder import weierstrass

        N = int(params.get("N", 6))
        return lambda x: np.stack([x[..., 0] + weierstrass(x[..., 1], N), x[..., 1]], axis=-1)
    raise KeyError(f"unknown built-in map {name!r}")


@dataclass
class MapFile:
    """Parsed map-grid file: header fields plus the sampled map."""

    sampled: SampledMap
    header: dict = field(default_factory=dict)


def _parse_csv_payload(text: str, expected_rows: int, m: int, origin: str) -> np.ndarray:
    rows = []
    reader = csv.reader(io.StringIO(text))
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            vals = [float(c) for c in row]
        except ValueError as exc:
            if lineno == 1:
                continue  # header line
            raise ValueError(f"{origin}: line {lineno}: non-numeric field ({exc})") from exc
        if len(vals) != m:
            raise ValueError(f"{origin}: line {lineno}: expected {m} fields, found {len(vals)}")
        rows.append(vals)
    if len(rows) != expected_rows:
        raise ValueError(f"{origin}: expected {expected_rows} rows, found {len(rows)}")
    return np.asarray(rows)


def map_from_dict(data: Mapping, base_dir: Path | None = None, origin: str = "<map>") -> MapFile:
    """Map-grid JSON: ``lower``, ``upper``, ``shape`` and one of ``values``, ``payload``, ``builtin``."""
    for key in ("lower", "upper", "shape"):
        if key not in data:
            raise ValueError(f"{origin}: missing field {key!r}")
    try:
        lower = [float(v) for v in data["lower"]]
        upper = [float(v) for v in data["upper"]]
        shape = [int(v) for v in data["shape"]]
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{origin}: fields lower/upper/shape must be numeric lists ({exc})") from exc
    if not (len(lower) == len(upper) == len(shape)):
        raise ValueError(f"{origin}: lower, upper and shape differ in length")
    meta = {"source": data.get("source"), "target": data.get("target")}
    if "builtin" in data:
        b = data["builtin"]
        name = b if isinstance(b, str) else b.get("name")
        params = {} if isinstance(b, str) else {k: v for k, v in b.items() if k != "name"}
        try:
            fn = builtin_map(name, params)
        except KeyError as exc:
            raise ValueError(f"{origin}: field 'builtin': {exc}") from exc
        sm = SampledMap.from_function(fn, lower, upper, shape, **meta)
    elif "values" in data:
        vals = np.asarray(data["values"], dtype=float)
        count = int(np.prod(shape))
        if vals.size % count:
            raise ValueError(f"{origin}: field 'values' has {vals.size} numbers, not a multiple of {count} nodes")
        sm = SampledMap(lower, upper, vals.reshape(tuple(shape) + (-1,)), **meta)
    elif "payload" in data:
        path = Path(data["payload"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        m = int(data.get("dim_out", len(lower)))
        arr = _parse_csv_payload(path.read_text(), int(np.prod(shape)), m, str(path))
        sm = SampledMap(lower, upper, arr.reshape(tuple(shape) + (m,)), **meta)
    else:
        raise ValueError(f"{origin}: need one of 'values', 'payload' or 'builtin'")
    return MapFile(sm, dict(data))


def load_map(path_or_name: str, default_box=None, default_shape=None) -> MapFile:
    """Load a map file, or sample a built-in map by name on a default box."""
    p = Path(path_or_name)
    if p.exists():
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{p}: line {exc.lineno}: {exc.msg}") from exc
        return map_from_dict(data, base_dir=p.parent, origin=str(p))
    if default_box is None or default_shape is None:
        raise ValueError(f"map {path_or_name!r} not found")
    lower, upper = default_box
    return map_from_dict(
        {"lower": list(lower), "upper": list(upper), "shape": list(default_shape), "builtin": path_or_name},
        origin=path_or_name,
    )


def save_map(sm: SampledMap, path: Path, payload: str | None = None) -> None:
    """Write a JSON header; node values inline or in a CSV payload next to it."""
    header = {
        "lower": sm.lower.tolist(),
        "upper": sm.upper.tolist(),
        "shape": list(sm.shape),
        "dim_out": sm.dim_out,
    }
    if sm.source:
        header["source"] = sm.source
    if sm.target:
        header["target"] = sm.target
    flat = sm.values.reshape(-1, sm.dim_out)
    if payload:
        csv_path = path.parent / payload
        with csv_path.open("w", newline="") as fh:
            fh.write(",".join(f"y{i + 1}" for i in range(sm.dim_out)) + "\n")
            for row in flat:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        header["payload"] = payload
    else:
        header["values"] = flat.tolist()
    path.write_text(json.dumps(header, indent=1) + "\n")


def grid_shape_for(resolution: int, dim: int) -> tuple[int, ...]:
    """``resolution`` cells per axis -> node counts."""
    return (int(resolution) + 1,) * dim


def as_points(x: Sequence[float] | np.ndarray) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=float))
