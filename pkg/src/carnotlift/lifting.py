"""Closed-loop lift criterion, constructive map lift, fiber maps and Pansu quotients."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .algebra import StratifiedAlgebra, filiform
from .curves import HorizontalCurve
from .errors import ChartError, NotLiftableError, StructuralError, ValidationError
from .extension import CentralExtension, gauss_nodes, solve_fiber_map
from .group import GroupElement, dilate_coords, multiply_coords
from .maps import SampledMap

DEFECT_TOL_PER_LENGTH = 1e-6


def _quad_order(ext2: CentralExtension) -> int:
    # integrand along one interpolation cell is polynomial of degree <= step - 1 + dim
    return max(3, (ext2.extended.step + ext2.n_base) // 2 + 1)


def _graded_part(J: np.ndarray, w_out, w_in) -> np.ndarray:
    mask = np.asarray(w_out)[:, None] == np.asarray(w_in)[None, :]
    return np.where(mask, J, 0.0)


def estimate_fiber_map(f: SampledMap, x0, ext1: CentralExtension, ext2: CentralExtension) -> np.ndarray:
    """phi at ``x0`` from the graded part of the central-difference Jacobian of f."""
    L = _graded_part(f.jacobian(np.asarray(x0, float)[None])[0], ext2.base.weights, ext1.base.weights)
    return solve_fiber_map(L, ext1, ext2).phi


def polyline_form_integral(coeff_fn: Callable, pts: np.ndarray, quad_order: int = 4) -> np.ndarray:
    """Exact-for-polynomials integral of a coordinate 1-form along straight segments."""
    s, w = gauss_nodes(quad_order)
    A, B = pts[:-1], pts[1:]
    X = A[:, None, :] + s[None, :, None] * (B - A)[:, None, :]
    c = coeff_fn(X)  # (S, q, r, n)
    return np.einsum("sqrn,sn,q->r", c, B - A, w)


@dataclass(frozen=True)
class LoopDefect:
    defect: np.ndarray
    image_integral: np.ndarray
    base_integral: np.ndarray
    phi: np.ndarray
    length: float

    @property
    def magnitude(self) -> float:
        return float(np.abs(self.defect).max(initial=0.0))


def _base_points(loop, ext1: CentralExtension) -> np.ndarray:
    pts = loop.points if isinstance(loop, HorizontalCurve) else np.asarray(loop, dtype=float)
    if pts.shape[1] == ext1.extended.total_dim:
        pts = ext1.project(pts)
    if pts.shape[1] != ext1.n_base:
        raise StructuralError("loop dimension matches neither the base nor the extended group")
    return pts


def closed_loop_defect(
    f: SampledMap,
    loop,
    ext1: CentralExtension,
    ext2: CentralExtension,
    phi=None,
    tol: float = 1e-9,
) -> LoopDefect:
    """``int_{f o pi_1 gamma} alpha_2 - phi(int_{pi_1 gamma} alpha_1)`` along a closed base loop.

    ``phi`` defaults to the fiber map solved from the Jacobian of f at the
    loop's first point.  For loops that close in the extended source group
    the second term vanishes.
    """
    pts = _base_points(loop, ext1)
    if pts.shape[0] < 3:
        raise StructuralError("loops need at least 3 nodes")
    if np.abs(pts[-1] - pts[0]).max() > tol:
        raise ValidationError("loop is not closed")
    if not np.all(f.contains(pts)):
        raise ChartError("loop leaves the domain chart of f")
    if phi is None:
        phi = estimate_fiber_map(f, pts[0], ext1, ext2)
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    q = _quad_order(ext2)
    image = f.pullback_path_integral(pts, ext2.potential.coefficients, quad_order=q)
    base = polyline_form_integral(ext1.potential.coefficients, pts, quad_order=q)
    length = float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())
    return LoopDefect(image - phi @ base, image, base, phi, length)


# probe family ------------------------------------------------------------------------


def probe_family(lower, upper, seed: int = 0, n_random: int = 100, scales=(0.5, 0.25, 0.125), anchors: int = 5):
    """Axis-aligned rectangles at several scales plus seeded random polygons.

    Rectangles come first (largest scale first) so that the first failing probe
    is the coarsest witness.  Every loop lies in the box and is closed.
    """
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    k = lower.size
    width = upper - lower
    center = 0.5 * (lower + upper)
    loops = []
    fr = np.linspace(0.0, 1.0, anchors)
    for s in scales:
        for i in range(k):
            for j in range(i + 1, k):
                for ai in fr:
                    for aj in fr:
                        if ai + s > 1.0 + 1e-12 or aj + s > 1.0 + 1e-12:
                            continue
                        p0 = center.copy()
                        p0[i] = lower[i] + ai * width[i]
                        p0[j] = lower[j] + aj * width[j]
                        di = np.zeros(k)
                        dj = np.zeros(k)
                        di[i] = s * width[i]
                        dj[j] = s * width[j]
                        loops.append(np.array([p0, p0 + di, p0 + di + dj, p0 + dj, p0]))
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        m = int(rng.integers(3, 9))
        V = lower + rng.random((m, k)) * width
        loops.append(np.vstack([V, V[:1]]))
    return loops


@dataclass
class LiftCheck:
    passed: bool
    max_ratio: float
    tolerance_per_length: float
    defects: list = field(default_factory=list)
    witness_index: int | None = None
    witness_loop: np.ndarray | None = None
    witness_defect: np.ndarray | None = None

    @property
    def max_defect(self) -> float:
        return max((d.magnitude for d in self.defects), default=0.0)


def check_liftable(
    f: SampledMap,
    ext1: CentralExtension,
    ext2: CentralExtension,
    seed: int = 0,
    phi=None,
    tol_per_length: float = DEFECT_TOL_PER_LENGTH,
    jobs: int = 1,
    loops: Sequence | None = None,
) -> LiftCheck:
    """Evaluate the loop defect over the probe family; first failing loop is the witness."""
    if loops is None:
        loops = probe_family(f.lower, f.upper, seed=seed)

    def one(loop):
        return closed_loop_defect(f, loop, ext1, ext2, phi=phi)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            defects = list(pool.map(one, loops))
    else:
        defects = [one(L) for L in loops]
    ratios = [d.magnitude / max(d.length, 1e-300) for d in defects]
    witness = next((i for i, d in enumerate(defects) if d.magnitude > tol_per_length * d.length), None)
    out = LiftCheck(witness is None, max(ratios, default=0.0), tol_per_length, defects)
    if witness is not None:
        out.witness_index = witness
        out.witness_loop = np.asarray(loops[witness])
        out.witness_defect = defects[witness].defect
    return out


# constructive lift ---------------------------------------------------------------------


class LiftedMap(SampledMap):
    """Contact lift ``F`` of a base map, built along coordinate staircases.

    ``F(x, v) = (f(x), p_v + int_S f^* alpha_2 + phi(v - g_v - int_S alpha_1))``
    where ``S`` is the staircase from the base point to x.  Node values are
    sampled on ``f``'s grid times a fiber grid; calling the object evaluates
    the formula exactly at arbitrary points.
    """

    def __init__(self, f, ext1, ext2, g, p, phi, fiber_lower, fiber_upper, fiber_nodes=3):
        self.f, self.ext1, self.ext2 = f, ext1, ext2
        self.g = np.asarray(g, float)
        self.p = np.asarray(p, float)
        self.phi = np.atleast_2d(np.asarray(phi, float))
        self.x0 = ext1.project(self.g)
        self._q = _quad_order(ext2)
        fl = np.broadcast_to(np.asarray(fiber_lower, float), (ext1.n_fiber,))
        fu = np.broadcast_to(np.asarray(fiber_upper, float), (ext1.n_fiber,))
        nodes = f.nodes().reshape(-1, f.dim_in)
        I2, I1 = self.staircase_integrals(nodes)
        fvals = f.values.reshape(-1, f.dim_out)
        faxes = [np.linspace(a, b, fiber_nodes) for a, b in zip(fl, fu)]
        V = np.stack(np.meshgrid(*faxes, indexing="ij"), axis=-1).reshape(-1, ext1.n_fiber)
        base_fiber = self.p[ext2.fiber_slice] + I2 - (I1 + self.g[ext1.fiber_slice]) @ self.phi.T
        fib = base_fiber[:, None, :] + (V @ self.phi.T)[None, :, :]
        vals = np.concatenate([np.broadcast_to(fvals[:, None, :], fib.shape[:2] + (f.dim_out,)), fib], axis=-1)
        shape = tuple(f.shape) + (fiber_nodes,) * ext1.n_fiber
        super().__init__(
            np.concatenate([f.lower, fl]),
            np.concatenate([f.upper, fu]),
            vals.reshape(shape + (ext2.extended.total_dim,)),
            source=ext1.extended.name,
            target=ext2.extended.name,
        )

    # staircase quadrature
    def staircase_legs(self, xs: np.ndarray):
        """Axis-aligned legs from x0 to each x: ``(owner, start, axis, end_value)``."""
        xs = np.atleast_2d(xs)
        k = xs.shape[1]
        owners, starts, axes_, ends = [], [], [], []
        cur = np.broadcast_to(self.x0, xs.shape).copy()
        for j in range(k):
            owners.append(np.arange(xs.shape[0]))
            starts.append(cur.copy())
            axes_.append(np.full(xs.shape[0], j))
            ends.append(xs[:, j].copy())
            cur[:, j] = xs[:, j]
        return (np.concatenate(owners), np.concatenate(starts), np.concatenate(axes_), np.concatenate(ends))

    def staircase_integrals(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        f = self.f
        xs = np.atleast_2d(np.asarray(xs, float))
        if not np.all(f.contains(xs)):
            raise ChartError("node unreachable: point outside the base chart")
        owner, start, axis, endv = self.staircase_legs(xs)
        A_list, B_list, own_list = [], [], []
        for o, a, j, b in zip(owner, start, axis, endv):
            aj = a[j]
            if aj == b:
                continue
            ax = f.axes[j]
            lo, hi = (aj, b) if aj < b else (b, aj)
            inner = ax[(ax > lo) & (ax < hi)]
            br = np.concatenate([[aj], inner if aj < b else inner[::-1], [b]])
            P = np.repeat(a[None, :], br.size, axis=0)
            P[:, j] = br
            A_list.append(P[:-1])
            B_list.append(P[1:])
            own_list.append(np.full(br.size - 1, o))
        n = xs.shape[0]
        if not A_list:
            return np.zeros((n, self.ext2.n_fiber)), np.zeros((n, self.ext1.n_fiber))
        A = np.concatenate(A_list)
        B = np.concatenate(B_list)
        own = np.concatenate(own_list)
        cells, _ = f.locate(0.5 * (A + B))
        piece2 = f._integrate_pieces(A, B, cells, self.ext2.potential.coefficients, self._q)
        s, w = gauss_nodes(self._q)
        X = A[:, None, :] + s[None, :, None] * (B - A)[:, None, :]
        piece1 = np.einsum("pqrn,pn,q->pr", self.ext1.potential.coefficients(X), B - A, w)
        I2 = np.zeros((n, piece2.shape[1]))
        I1 = np.zeros((n, piece1.shape[1]))
        np.add.at(I2, own, piece2)
        np.add.at(I1, own, piece1)
        return I2, I1

    def evaluate_exact(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, float))
        e1, e2 = self.ext1, self.ext2
        x, v = e1.project(pts), e1.fiber_part(pts)
        I2, I1 = self.staircase_integrals(x)
        fib = self.p[e2.fiber_slice] + I2 + (v - self.g[e1.fiber_slice] - I1) @ self.phi.T
        return np.concatenate([self.f(x), fib], axis=-1)

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, float)
        out = self.evaluate_exact(pts.reshape(-1, pts.shape[-1]))
        return out.reshape(pts.shape[:-1] + (out.shape[-1],))

    def evaluate_along(self, path: np.ndarray, v) -> np.ndarray:
        """Same formula along an arbitrary base polyline from x0 (well-definedness probe)."""
        path = np.asarray(path, float)
        if np.abs(path[0] - self.x0).max() > 1e-12:
            raise ValidationError("path must start at the base point")
        q = self._q
        I2 = self.f.pullback_path_integral(path, self.ext2.potential.coefficients, quad_order=q)
        I1 = polyline_form_integral(self.ext1.potential.coefficients, path, quad_order=q)
        fib = self.p[self.ext2.fiber_slice] + I2 + (np.asarray(v, float) - self.g[self.ext1.fiber_slice] - I1) @ self.phi.T
        return np.concatenate([self.f(path[-1:])[0], fib])


def lift_map(
    f: SampledMap,
    ext1: CentralExtension,
    ext2: CentralExtension,
    basepoint_pair=None,
    phi=None,
    fiber_box=(-1.0, 1.0),
    fiber_nodes: int = 3,
    check: bool = True,
    seed: int = 0,
    tol_per_length: float = DEFECT_TOL_PER_LENGTH,
    jobs: int = 1,
) -> LiftedMap:
    """Lift ``f: H_1 -> H_2`` to ``F: G_1 -> G_2`` with ``pi_2 F = f pi_1``.

    Refuses with :class:`NotLiftableError` when the probe family finds a loop
    with defect above ``tol_per_length * length``.  The source base must be
    abelian so that coordinate staircases are horizontal.
    """
    if not ext1.base.is_abelian:
        raise StructuralError("lift_map supports abelian source bases (coordinate staircases)")
    if f.dim_in != ext1.n_base or f.dim_out != ext2.n_base:
        raise StructuralError("map dimensions do not match the extension bases")
    ext2.potential  # raises when ranks differ
    if basepoint_pair is None:
        x0 = f.center
        g = ext1.join(x0, np.zeros(ext1.n_fiber))
        p = ext2.join(f(x0[None])[0], np.zeros(ext2.n_fiber))
    else:
        g, p = basepoint_pair
        g = g.coords if isinstance(g, GroupElement) else np.asarray(g, float)
        p = p.coords if isinstance(p, GroupElement) else np.asarray(p, float)
    x0 = ext1.project(g)
    if np.abs(ext2.project(p) - f(x0[None])[0]).max() > 1e-9:
        raise ValidationError("basepoint pair violates pi_2(p) = f(pi_1(g))")
    if phi is None:
        phi = estimate_fiber_map(f, x0, ext1, ext2)
    if check:
        rep = check_liftable(f, ext1, ext2, seed=seed, phi=phi, tol_per_length=tol_per_length, jobs=jobs)
        if not rep.passed:
            raise NotLiftableError(
                f"not liftable at tolerance {tol_per_length:g} per unit length: "
                f"defect {rep.witness_defect.tolist()} on probe loop {rep.witness_index}",
                witness_loop=rep.witness_loop,
                defect=rep.witness_defect,
                tolerance=tol_per_length,
            )
    return LiftedMap(f, ext1, ext2, g, p, phi, fiber_box[0], fiber_box[1], fiber_nodes)


# fiber homomorphism ---------------------------------------------------------------------


@dataclass
class FiberHomReport:
    Phi: np.ndarray
    deviation: float
    linearity_residual: float
    base_leak: float
    n_probes: int


def fiber_hom_extract(
    F: Callable,
    ext1: CentralExtension,
    ext2: CentralExtension,
    probes=None,
    magnitudes=(-0.5, -0.25, 0.25, 0.5),
    chart: SampledMap | None = None,
) -> FiberHomReport:
    """Estimate ``Phi(k) = F(g)^{-1} F(g k)`` for fiber translations k."""
    chart = chart if chart is not None else (F if isinstance(F, SampledMap) else None)
    n1 = ext1.n_fiber
    if probes is None:
        if chart is None:
            raise StructuralError("need probe points or a sampled chart")
        lo, hi = chart.lower, chart.upper
        rng = np.random.default_rng(0)
        probes = lo + (0.2 + 0.6 * rng.random((16, lo.size))) * (hi - lo)
        probes[:, ext1.fiber_slice] = 0.5 * (lo + hi)[ext1.fiber_slice]
    probes = np.atleast_2d(np.asarray(probes, float))
    ks = np.array([m * e for e in np.eye(n1) for m in magnitudes])
    G2 = ext2.extended
    per_g = []
    resid = 0.0
    leak = 0.0
    for g in probes:
        shifted = g[None, :] + ext1.include(ks)  # central: g * k is coordinatewise
        if chart is not None and not np.all(chart.contains(shifted)):
            raise ChartError("fiber translates of a probe point leave the chart")
        Fg = np.asarray(F(g[None, :]))[0]
        Fgk = np.asarray(F(shifted))
        q = multiply_coords(G2, -Fg[None, :], Fgk)
        leak = max(leak, float(np.abs(ext2.project(q)).max()))
        y = ext2.fiber_part(q)
        M, *_ = np.linalg.lstsq(ks, y, rcond=None)
        per_g.append(M.T)
        resid = max(resid, float(np.abs(ks @ M - y).max()))
    per_g = np.asarray(per_g)
    Phi = per_g.mean(axis=0)
    dev = float(np.abs(per_g - Phi).max())
    return FiberHomReport(Phi, dev, max(resid, leak), leak, len(probes))


# Pansu quotients ----------------------------------------------------------------------------


def pansu_quotient(F: Callable, g, h, lam: float, source: StratifiedAlgebra, target: StratifiedAlgebra, chart=None):
    """``delta_{1/lam}(F(g)^{-1} F(g delta_lam h))``."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    g = g.coords if isinstance(g, GroupElement) else np.asarray(g, float)
    h = h.coords if isinstance(h, GroupElement) else np.asarray(h, float)
    moved = multiply_coords(source, g, dilate_coords(source, lam, h))
    if chart is not None and not np.all(chart.contains(moved)):
        raise ChartError("g * delta_lambda(h) leaves the chart")
    Fg = np.asarray(F(g[None]))[0]
    Fm = np.asarray(F(np.atleast_2d(moved)))[0]
    return GroupElement(dilate_coords(target, 1.0 / lam, multiply_coords(target, -Fg, Fm)), target)


def pansu_matrix(F: Callable, g, lam: float, source: StratifiedAlgebra, target: StratifiedAlgebra, chart=None) -> np.ndarray:
    """Columns are quotients at the basis vectors; a finite-lambda Pansu differential."""
    cols = [pansu_quotient(F, g, e, lam, source, target, chart).coords for e in np.eye(source.total_dim)]
    return np.stack(cols, axis=1)


def richardson_limit(F, g, source, target, lams=(1e-1, 1e-2, 1e-3), chart=None) -> np.ndarray:
    """Extrapolate ``pansu_matrix`` to lambda -> 0 assuming an error linear in lambda."""
    mats = [pansu_matrix(F, g, lam, source, target, chart) for lam in lams]
    l1, l2 = lams[-2], lams[-1]
    return (l1 * mats[-1] - l2 * mats[-2]) / (l1 - l2)


# filiform generator ----------------------------------------------------------------------------


@dataclass
class GeneratorReport:
    constraint_residuals: dict
    violated: list
    cartan_residual: float
    lie_derivative_max: float
    h: float
    passed: bool


def _filiform_omega4(x):
    x1 = x[..., 0]
    return np.stack([np.zeros_like(x1), 0.5 * x1**2, -x1, np.ones_like(x1)], axis=-1)


def _filiform_domega4(x):
    """``[..., i, j] = d_i omega_j``."""
    out = np.zeros(x.shape[:-1] + (4, 4))
    out[..., 0, 1] = x[..., 0]
    out[..., 0, 2] = -1.0
    return out


def contact_generator_check(
    p4: Callable,
    p2: Callable | None = None,
    h: float = 1e-2,
    grid=None,
    tol: float = 1e-6,
    cartan_tol: float = 1e-4,
) -> GeneratorReport:
    """Generator ``V = p1 X1 + p2 X2 + p3 X3 + p4 X4`` on the filiform chart.

    ``p1 = d3 p4`` and ``p3 = -d1 p4`` by central differences; reports the
    remaining constraints ``x1 p1 = d2 p4`` and ``d4 p4 = 0``, the residual of
    Cartan's formula for ``L_V omega_4`` and, as information, ``max |L_V omega_4|``.
    Fields are callables on arrays ``(..., 4)`` in the chart with
    ``X2 = d2 + x1 d3 + x1^2/2 d4``, ``X3 = d3 + x1 d4``, ``omega_4 = x1^2/2 dx2 - x1 dx3 + dx4``.
    """
    if p2 is None:
        p2 = lambda x: 0.25 * np.sin(x[..., 0]) * np.cos(x[..., 3])
    if grid is None:
        ax = np.linspace(-1.0, 1.0, 7)
        grid = np.stack(np.meshgrid(ax, ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 4)
    grid = np.atleast_2d(np.asarray(grid, float))
    if h <= 0:
        raise ValueError("step must be positive")
    E = np.eye(4) * h

    def d(fn, x, i):
        return (fn(x + E[i]) - fn(x - E[i])) / (2 * h)

    def V(x):
        x1 = x[..., 0]
        q1 = d(p4, x, 2)
        q2 = p2(x)
        q3 = -d(p4, x, 0)
        q4 = p4(x)
        return np.stack([q1, q2, x1 * q2 + q3, 0.5 * x1**2 * q2 + x1 * q3 + q4], axis=-1)

    x = grid
    q1 = d(p4, x, 2)
    cons = {
        "p1 = d3 p4": 0.0,
        "x1 p1 = d2 p4": float(np.abs(x[:, 0] * q1 - d(p4, x, 1)).max()),
        "d4 p4 = 0": float(np.abs(d(p4, x, 3)).max()),
    }
    violated = [name for name, r in cons.items() if r > tol]
    Vx = V(x)
    om = _filiform_omega4(x)
    dom = _filiform_domega4(x)
    dV = np.stack([d(V, x, j) for j in range(4)], axis=-1)  # [..., i, j] = d_j V^i
    lie = np.einsum("ni,nij->nj", Vx, dom) + np.einsum("ni,nij->nj", om, dV)

    def contraction(y):
        return np.einsum("...i,...i->...", _filiform_omega4(y), V(y))

    d_contr = np.stack([d(contraction, x, j) for j in range(4)], axis=-1)
    i_domega = np.einsum("ni,nij->nj", Vx, dom - np.swapaxes(dom, -1, -2))
    cartan = float(np.abs(lie - (d_contr + i_domega)).max())
    return GeneratorReport(
        cons,
        violated,
        cartan,
        float(np.abs(lie).max()),
        h,
        passed=not violated and cartan < cartan_tol,
    )


def filiform_chart_algebra() -> StratifiedAlgebra:
    return filiform(3)
