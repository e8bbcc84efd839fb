"""Group mollification, pullback decay rates, Hölder seminorms and Young sums."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .algebra import StratifiedAlgebra, abelian, heisenberg, lcm_of_weights
from .errors import ChartError, StructuralError
from .group import coframe_coords, dilate_coords, frame_coords, multiply_coords, quasi_metric_coords
from .maps import SampledMap

KERNEL_NOTE = "compactly supported bump exp(-1/(1-s)) with group dilation scaling in place of the heat kernel"


class MollifierKernel:
    """Smooth bump ``exp(-1/(1-s))`` on a homogeneous box, normalised to unit mass.

    ``s(w) = sum_i (n |w_i|^{1/wt_i})^{2L}`` with L the lcm of the weights, so
    the support lies in the unit quasi-metric ball and ``s`` is a polynomial.
    Integrals use a tensor midpoint rule with ``nodes`` points per axis.
    """

    def __init__(self, algebra: StratifiedAlgebra, nodes: int = 17):
        self.algebra = algebra
        self.nodes = nodes
        self.w = np.asarray(algebra.weights, float)
        self.n = algebra.total_dim
        self.L = lcm_of_weights(algebra)
        self.halfwidth = float(self.n) ** (-self.w)
        # s = sum (coef_i * w_i)^{2L/wt_i} with integer exponents
        self._exp = (2 * self.L / self.w).astype(int)
        self._coef = float(self.n) ** (2 * self.L)

    def s(self, W) -> np.ndarray:
        W = np.asarray(W, float)
        return self._coef * np.sum(W ** self._exp, axis=-1)

    def profile(self, W) -> np.ndarray:
        s = self.s(W)
        out = np.zeros_like(s)
        inside = s < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - s[inside]))
        return out

    def grad_profile(self, W) -> np.ndarray:
        W = np.asarray(W, float)
        s = self.s(W)
        p = self.profile(W)
        ds = self._coef * self._exp * W ** (self._exp - 1)
        fac = np.zeros_like(s)
        inside = s < 1.0
        fac[inside] = -p[inside] / (1.0 - s[inside]) ** 2
        return fac[..., None] * ds

    @cached_property
    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Midpoint nodes ``w_q`` and weights ``c_q`` with ``sum c_q = 1``."""
        axes = []
        for r in self.halfwidth:
            h = 2 * r / self.nodes
            axes.append(-r + h * (np.arange(self.nodes) + 0.5))
        W = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.n)
        p = self.profile(W)
        keep = p > 0
        W, p = W[keep], p[keep]
        self._mass_sum = p.sum()
        return W, p / p.sum()

    def derivative_weights(self, i: int) -> np.ndarray:
        """Weights for ``(X_i profile)(w_q)``, rescaled so that ``sum_q w_{q,i} d_q = -1``.

        The exact first moment is -1 (integration by parts against unit mass);
        the 17-node midpoint rule gets it 2% wrong on the steep bump, which
        would bias every directional derivative by that factor.
        """
        W, _ = self.quadrature
        Xi = frame_coords(self.algebra, W)[:, :, i]
        d = np.einsum("qk,qk->q", self.grad_profile(W), Xi)
        return d / -float(W[:, i] @ d)

    @cached_property
    def volume_mass(self) -> float:
        W, _ = self.quadrature
        return float(self._mass_sum * np.prod(2 * self.halfwidth / self.nodes))

    def marginal(self, index: int, points: int = 2001, inner: int = 121):
        """Marginal density ``m`` of coordinate ``index`` and its derivative ``m'`` on a fine grid.

        Returns ``(b, m, dm, db)``; the trapezoid sum of m over b is 1.
        """
        r = self.halfwidth
        b = np.linspace(-r[index], r[index], points)
        others = [k for k in range(self.n) if k != index]
        axes = [(-r[k] + (2 * r[k] / inner) * (np.arange(inner) + 0.5)) for k in others]
        cell = np.prod([2 * r[k] / inner for k in others]) if others else 1.0
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(others)) if others else np.zeros((1, 0))
        # s is additive over coordinates: split off the b term once
        s_rest = self._coef * np.sum(grid ** self._exp[others], axis=-1) if others else np.zeros(1)
        s_b = self._coef * b ** self._exp[index]
        ds_b = self._coef * self._exp[index] * b ** (self._exp[index] - 1)
        m = np.empty(points)
        dm = np.empty(points)
        step = max(1, 4_000_000 // s_rest.size)
        for t0 in range(0, points, step):
            S = s_b[t0 : t0 + step, None] + s_rest[None, :]
            inside = S < 1.0
            P = np.zeros_like(S)
            P[inside] = np.exp(-1.0 / (1.0 - S[inside]))
            G = np.zeros_like(S)
            G[inside] = -P[inside] / (1.0 - S[inside]) ** 2
            m[t0 : t0 + step] = P.sum(axis=1) * cell
            dm[t0 : t0 + step] = G.sum(axis=1) * ds_b[t0 : t0 + step] * cell
        db = b[1] - b[0]
        mass = np.trapezoid(m, b) if hasattr(np, "trapezoid") else np.trapz(m, b)
        return b, m / mass, dm / mass, db

    def metadata(self) -> dict:
        return {
            "kernel": KERNEL_NOTE,
            "algebra": self.algebra.name,
            "nodes_per_axis": self.nodes,
            "lcm_weight": self.L,
            "support_halfwidth": self.halfwidth.tolist(),
        }


# mollified maps ---------------------------------------------------------------------------


class MollifiedMap:
    """``F_eps(p) = sum_q c_q F(p * (delta_eps w_q)^{-1})``.

    ``directional(p, i)`` differentiates the kernel instead of F:
    ``X_i F_eps(p) = eps^{-wt_i} sum_q F(p * (delta_eps w_q)^{-1}) (X_i profile)(w_q)``.
    """

    def __init__(self, F: Callable, eps: float, kernel: MollifierKernel, target: StratifiedAlgebra | None = None, chart=None):
        if eps <= 0:
            raise ValueError("epsilon must be positive")
        self.F, self.eps, self.kernel = F, float(eps), kernel
        self.source = kernel.algebra
        self.target = target
        self.chart = chart

    def _sample_points(self, pts):
        W, _ = self.kernel.quadrature
        q = -dilate_coords(self.source, self.eps, W)  # inverse of delta_eps w in exponential coordinates
        P = multiply_coords(self.source, pts[:, None, :], q[None, :, :])
        if self.chart is not None and not np.all(self.chart.contains(P)):
            raise ChartError("mollifier support leaves the domain chart; shrink the box by eps")
        return P

    def _apply(self, pts, weights):
        pts = np.atleast_2d(np.asarray(pts, float))
        out = []
        for chunk in np.array_split(pts, max(1, pts.shape[0] // 256)):
            P = self._sample_points(chunk)
            vals = np.asarray(self.F(P.reshape(-1, self.source.total_dim)))
            vals = vals.reshape(P.shape[:2] + (-1,))
            out.append(np.einsum("pqm,q->pm", vals, weights))
        return np.concatenate(out)

    def __call__(self, pts) -> np.ndarray:
        return self._apply(pts, self.kernel.quadrature[1])

    def directional(self, pts, i: int) -> np.ndarray:
        scale = self.eps ** (-self.kernel.w[i])
        return scale * self._apply(pts, self.kernel.derivative_weights(i))

    def sample(self, lower, upper, shape) -> SampledMap:
        lower = np.asarray(lower, float)
        upper = np.asarray(upper, float)
        axes = [np.linspace(lo, hi, n) for lo, hi, n in zip(lower, upper, shape)]
        X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        vals = self(X.reshape(-1, lower.size)).reshape(tuple(shape) + (-1,))
        return SampledMap(lower, upper, vals)


def group_convolve(f, eps: float, kernel: MollifierKernel | None = None, target: StratifiedAlgebra | None = None) -> MollifiedMap:
    """Mollify a sampled map (or a callable) over the source group of ``kernel``.

    Returns a :class:`MollifiedMap` that evaluates at arbitrary points; call
    ``.sample`` to grid it.  Points whose kernel support leaves a sampled
    map's box raise :class:`ChartError`.
    """
    if kernel is None:
        if not isinstance(f, SampledMap):
            raise StructuralError("a kernel is required for callables")
        kernel = MollifierKernel(abelian(f.dim_in))
    chart = f if isinstance(f, SampledMap) else None
    return MollifiedMap(f, eps, kernel, target, chart)


# shear lifts ---------------------------------------------------------------------------------


class ShearLift:
    """Contact lift ``F(x, y, z) = (x + h(y), y, z + H(y) - y h(y)/2)`` on H^1, with H' = h.

    When ``series = (a, omega)`` describes ``h = sum a_k cos(omega_k y)`` the
    mollification is evaluated term by term from the Fourier data of the
    kernel marginal; otherwise by a fine trapezoid rule over the marginal.
    """

    def __init__(self, h: Callable, H: Callable, series=None, name: str = "shear"):
        self.h, self.H = h, H
        self.series = None if series is None else (np.asarray(series[0], float), np.asarray(series[1], float))
        self.name = name
        self.algebra = heisenberg(1)

    def __call__(self, pts) -> np.ndarray:
        p = np.asarray(pts, float)
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        hy = self.h(y)
        return np.stack([x + hy, y, z + self.H(y) - 0.5 * y * hy], axis=-1)

    def mollified(self, eps: float, kernel: MollifierKernel) -> "MollifiedShear":
        return MollifiedShear(self, eps, kernel)


class _MarginalCache:
    def __init__(self):
        self.store = {}

    def get(self, kernel: MollifierKernel):
        key = id(kernel)
        if key not in self.store:
            self.store[key] = (kernel, kernel.marginal(1))
        return self.store[key][1]


_MARGINALS = _MarginalCache()

# beyond this frequency the marginal transforms are below double precision
_SPECTRAL_CUTOFF = 4000.0


def _trap_weights(n: int, db: float) -> np.ndarray:
    w = np.full(n, db)
    w[0] = w[-1] = 0.5 * db
    return w


def marginal_transforms(kernel: MollifierKernel, u) -> tuple[np.ndarray, np.ndarray]:
    """``mhat(u) = int cos(u b) m(b) db`` and ``S(u) = int b sin(u b) m(b) db``."""
    b, m, _, db = _MARGINALS.get(kernel)
    u = np.asarray(u, float)
    mh = np.zeros_like(u)
    S = np.zeros_like(u)
    live = np.abs(u) <= _SPECTRAL_CUTOFF
    if np.any(live):
        w = _trap_weights(b.size, db) * m
        ub = np.outer(u[live], b)
        mh[live] = np.cos(ub) @ w
        S[live] = np.sin(ub) @ (w * b)
    return mh, S


class MollifiedShear:
    """Exact-kernel mollification of a :class:`ShearLift` over H^1.

    ``F_eps = (x + h_eps(y), y, z + Phi_eps(y))`` with
    ``Phi_eps = H_eps - y h_eps / 2 + eps (b h)_eps / 2``.
    """

    def __init__(self, shear: ShearLift, eps: float, kernel: MollifierKernel):
        if not kernel.algebra.same_as(shear.algebra):
            raise StructuralError("shear lifts are mollified over heisenberg:1")
        self.shear, self.eps, self.kernel = shear, float(eps), kernel
        self.source = self.target = shear.algebra

    def _pieces(self, y):
        """``h_eps, h_eps', H_eps, (bh)_eps, (bh)_eps'`` at y."""
        e = self.eps
        if self.shear.series is not None:
            a, om = self.shear.series
            mh, S = marginal_transforms(self.kernel, om * e)
            Y = np.multiply.outer(y, om)
            c, s = np.cos(Y), np.sin(Y)
            return (
                c @ (a * mh),
                -(s @ (a * om * mh)),
                s @ (a * mh / om),
                s @ (a * S),
                c @ (a * om * S),
            )
        b, m, dm, db = _MARGINALS.get(self.kernel)
        w = _trap_weights(b.size, db)
        Y = y[:, None] - e * b[None, :]
        hv = self.shear.h(Y)
        Hv = self.shear.H(Y)
        # d/dy of int u(y - eps b) k(b) db is (1/eps) int u(y - eps b) k'(b) db
        return (
            hv @ (w * m),
            (hv @ (w * dm)) / e,
            Hv @ (w * m),
            hv @ (w * b * m),
            (hv @ (w * (m + b * dm))) / e,
        )

    def __call__(self, pts) -> np.ndarray:
        p = np.atleast_2d(np.asarray(pts, float))
        x, y, z = p[:, 0], p[:, 1], p[:, 2]
        h_e, _, H_e, bh_e, _ = self._pieces(y)
        return np.stack([x + h_e, y, z + H_e - 0.5 * y * h_e + 0.5 * self.eps * bh_e], axis=-1)

    def directional(self, pts, i: int) -> np.ndarray:
        p = np.atleast_2d(np.asarray(pts, float))
        x, y = p[:, 0], p[:, 1]
        one = np.ones_like(y)
        if i == 0:  # X_1 = d_x - y/2 d_z
            return np.stack([one, 0 * one, -0.5 * y], axis=-1)
        if i == 1:  # X_2 = d_y + x/2 d_z
            h_e, dh_e, _, _, dbh_e = self._pieces(y)
            dphi = h_e - 0.5 * h_e - 0.5 * y * dh_e + 0.5 * self.eps * dbh_e
            return np.stack([dh_e, one, dphi + 0.5 * x], axis=-1)
        if i == 2:
            return np.stack([0 * one, 0 * one, one], axis=-1)
        raise IndexError("heisenberg:1 has frame indices 0, 1, 2")


def weierstrass(y, N: int) -> np.ndarray:
    """Partial sum ``sum_{n<=N} 9^{-n} cos(27^n pi y)``."""
    if N < 0:
        raise ValueError("N must be nonnegative")
    y = np.asarray(y, float)
    out = np.zeros_like(y)
    for n in range(N + 1):
        out = out + 9.0 ** (-n) * np.cos(27.0**n * math.pi * y)
    return out


def weierstrass_tail_bound(N: int) -> float:
    return (1.0 / 9.0) ** (N + 1) / (1.0 - 1.0 / 9.0)


def weierstrass_shear(N: int = 6) -> ShearLift:
    a = 9.0 ** -np.arange(N + 1)
    om = math.pi * 27.0 ** np.arange(N + 1)
    return ShearLift(
        lambda y: weierstrass(y, N),
        lambda y: np.sum([ak * np.sin(wk * np.asarray(y)) / wk for ak, wk in zip(a, om)], axis=0),
        series=(a, om),
        name=f"weierstrass-shear:{N}",
    )


def abs_shear() -> ShearLift:
    """``h(y) = |y|``: Lipschitz but not C^1 at y = 0."""
    return ShearLift(np.abs, lambda y: 0.5 * y * np.abs(y), name="abs-shear")


def square_shear() -> ShearLift:
    """``h(y) = y^2``: the contact lift of ``(a + b^2, b)``."""
    return ShearLift(np.square, lambda y: y**3 / 3.0, name="square-shear")


SHEARS = {
    "weierstrass-shear": weierstrass_shear,
    "abs-shear": abs_shear,
    "square-shear": square_shear,
}


# pullback derivatives and slopes ------------------------------------------------------------


def pullback_derivative(f_eps, omega_index: int, X_index: int, p, source=None, target=None) -> np.ndarray:
    """``(f_eps^* omega_j)(X_i)`` at p (indices 0-based).

    Uses ``f_eps.directional`` when available, otherwise the chain rule with
    the central-difference Jacobian of a sampled map.
    """
    p = np.atleast_2d(np.asarray(p, float))
    target = target or getattr(f_eps, "target", None)
    source = source or getattr(f_eps, "source", None)
    if target is None or source is None:
        raise StructuralError("source and target algebras are required")
    if hasattr(f_eps, "directional"):
        v = f_eps.directional(p, X_index)
    else:
        if not np.all(f_eps.contains(p, margin=1.0)):
            raise ChartError("probe point has no full central-difference stencil")
        v = np.einsum("nmk,nk->nm", f_eps.jacobian(p), frame_coords(source, p)[:, :, X_index])
    q = f_eps(p)
    row = coframe_coords(target, q)[:, omega_index, :]
    return np.einsum("nm,nm->n", row, v)


@dataclass
class DecayFit:
    eps: np.ndarray
    sups: np.ndarray
    slope: float | None
    intercept: float | None
    residual: float | None
    window: tuple[int, int]
    at_noise_floor: bool
    certified: bool
    note: str = ""
    meta: dict = field(default_factory=dict)


NOISE_FLOOR = 1e-13


def mollify(f, eps: float, kernel: MollifierKernel, target=None):
    if hasattr(f, "mollified"):
        return f.mollified(eps, kernel)
    return group_convolve(f, eps, kernel, target)


def default_probes(y_values: Sequence[float] = tuple(np.linspace(-0.5, 0.5, 33))) -> np.ndarray:
    """Probe points ``(0.1, y, 0)`` with y on a symmetric grid that contains 0."""
    y = np.asarray(y_values, float)
    return np.stack([np.full_like(y, 0.1), y, np.zeros_like(y)], axis=-1)


def decay_sups(f, omega_index: int, X_index: int, eps_grid, kernel: MollifierKernel, probes, target=None, jobs: int = 1):
    def one(e):
        fe = mollify(f, e, kernel, target)
        return float(np.abs(pullback_derivative(fe, omega_index, X_index, probes)).max())

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return np.array(list(pool.map(one, eps_grid)))
    return np.array([one(e) for e in eps_grid])


def fit_slope(eps, sups, beta: float | None = None, floor: float = NOISE_FLOOR) -> DecayFit:
    """Least-squares slope of log sup against log eps.

    With 8 or more scales the two largest and two smallest are dropped.  When
    ``beta <= 1/2`` the fit is reported but never certified.
    """
    eps = np.asarray(eps, float)
    sups = np.asarray(sups, float)
    if eps.size < 4:
        raise ValueError("need at least 4 epsilon values")
    order = np.argsort(eps)
    eps, sups = eps[order], sups[order]
    lo, hi = (2, eps.size - 2) if eps.size >= 8 else (0, eps.size)
    e, s = eps[lo:hi], sups[lo:hi]
    guard_note = ""
    certified = True
    if beta is not None and beta <= 0.5:
        certified = False
        guard_note = "beta <= 1/2: rate not certified for lifting conclusions"
    if np.any(s <= floor):
        return DecayFit(eps, sups, None, None, None, (lo, hi), True, False, "at noise floor")
    A = np.stack([np.log(e), np.ones_like(e)], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(s), rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - np.log(s)) ** 2)))
    return DecayFit(eps, sups, float(coef[0]), float(coef[1]), resid, (lo, hi), False, certified, guard_note)


def decay_slope(
    f,
    omega_index: int,
    X_index: int,
    eps_grid,
    kernel: MollifierKernel | None = None,
    probes=None,
    beta: float | None = None,
    target=None,
    jobs: int = 1,
) -> DecayFit:
    """Sup over probes of ``|(f_eps^* omega_j)(X_i)|`` per eps and its log-log slope."""
    eps_grid = np.asarray(eps_grid, float)
    if eps_grid.size < 4:
        raise ValueError("need at least 4 epsilon values")
    if kernel is None:
        alg = getattr(f, "algebra", None)
        if alg is None:
            raise StructuralError("a kernel is required")
        kernel = MollifierKernel(alg)
    probes = default_probes() if probes is None else np.atleast_2d(probes)
    sups = decay_sups(f, omega_index, X_index, eps_grid, kernel, probes, target, jobs)
    fit = fit_slope(eps_grid, sups, beta)
    w_omega = (target or kernel.algebra).weights[omega_index]
    w_X = kernel.algebra.weights[X_index]
    in_regime = w_omega > w_X
    if not in_regime:
        # the rate is only claimed when omega outweighs X; report the fit without judgment
        fit.certified = False
        fit.note = "; ".join(filter(None, [fit.note, f"outside weight regime (omega weight {w_omega} <= X weight {w_X})"]))
    fit.meta = kernel.metadata() | {"omega_index": omega_index, "X_index": X_index, "beta": beta, "in_weight_regime": bool(in_regime)}
    return fit


# Hölder seminorm ---------------------------------------------------------------------------


@dataclass
class HoelderSample:
    map: object
    beta: float
    seminorm: float
    pairs: int
    separation_decades: float


def hoelder_seminorm(
    f,
    beta: float,
    pair_budget: int = 10000,
    lower=None,
    upper=None,
    seed: int = 0,
    source: StratifiedAlgebra | None = None,
    target: StratifiedAlgebra | None = None,
    min_sep: float = 1e-4,
    max_sep: float | None = None,
) -> HoelderSample:
    """Lower bound for ``sup d(f x, f y) / d(x, y)^beta`` over seeded random pairs.

    Pairs are drawn as a prefix-stable stream, so the estimate is
    nondecreasing in ``pair_budget``.  Separations are log-uniform from
    ``min_sep`` to ``max_sep`` (default: the box diameter); a small
    ``max_sep`` gives the localized seminorm over nearby pairs.  Distances are
    the quasi-metric of the given algebras (Euclidean when omitted).
    """
    if not (0 < beta <= 1):
        raise ValueError("beta must lie in (0, 1]")
    if isinstance(f, SampledMap):
        lower = f.lower if lower is None else lower
        upper = f.upper if upper is None else upper
    if lower is None or upper is None:
        raise StructuralError("a domain box is required")
    lower = np.atleast_1d(np.asarray(lower, float))
    upper = np.atleast_1d(np.asarray(upper, float))
    k = lower.size
    diam = float(np.max(upper - lower)) if max_sep is None else float(max_sep)
    if not 0 < min_sep < diam:
        raise ValueError("need 0 < min_sep < max_sep")
    rng = np.random.default_rng(seed)
    U = rng.random((pair_budget, 2 * k + 1))
    x = lower + U[:, :k] * (upper - lower)
    dirs = U[:, k : 2 * k] - 0.5
    dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-300)
    r = min_sep * (diam / min_sep) ** U[:, 2 * k]
    y = np.clip(x + r[:, None] * dirs, lower, upper)

    def call(P):
        out = np.asarray(f(P if k > 1 else P[:, 0]), float)
        return out.reshape(P.shape[0], -1)

    fx, fy = call(x), call(y)

    def dist(alg, a, b):
        if alg is None:
            return np.linalg.norm(a - b, axis=1)
        return quasi_metric_coords(alg, a, b)

    dx = dist(source, x, y)
    df = dist(target, fx, fy)
    ok = dx > 0
    ratios = df[ok] / dx[ok] ** beta
    decades = float(np.log10(dx[ok].max() / dx[ok].min())) if ok.sum() > 1 else 0.0
    return HoelderSample(f, beta, float(ratios.max(initial=0.0)), int(ok.sum()), decades)


# Young integral -------------------------------------------------------------------------------


@dataclass
class YoungResult:
    value: float
    levels: list
    sums: list
    deltas: list
    ratio_bound: float
    tag: str


def _as_path(p, a, b) -> Callable:
    if callable(p):
        return p
    arr = np.asarray(p, float)
    t = np.linspace(a, b, arr.size)
    return lambda s: np.interp(s, t, arr)


def young_integral(f, g, levels: Sequence[int] = range(4, 15), alpha: float = 1.0, beta: float = 1.0, a: float = 0.0, b: float = 1.0, tag: str = "mid") -> YoungResult:
    """Riemann-Stieltjes sums ``sum f(tau_i) (g(t_{i+1}) - g(t_i))`` on dyadic partitions.

    ``f`` and ``g`` are callables or uniformly sampled arrays on ``[a, b]``;
    ``tag`` picks the left endpoint or midpoint of each interval.
    """
    if alpha + beta <= 1:
        raise ValueError(f"Young integration needs alpha + beta > 1, got {alpha + beta:g}")
    if tag not in ("mid", "left"):
        raise ValueError("tag must be 'mid' or 'left'")
    F = _as_path(f, a, b)
    G = _as_path(g, a, b)
    levels = list(levels)
    sums = []
    for L in levels:
        t = np.linspace(a, b, 2**L + 1)
        tau = 0.5 * (t[:-1] + t[1:]) if tag == "mid" else t[:-1]
        fv = np.broadcast_to(np.asarray(F(tau), float), tau.shape)
        sums.append(float(np.dot(fv, np.diff(np.asarray(G(t), float)))))
    deltas = [abs(s1 - s0) for s0, s1 in zip(sums, sums[1:])]
    return YoungResult(sums[-1], levels, sums, deltas, 2.0 ** (1.0 - alpha - beta), tag)


def deltas_decay_from(deltas: Sequence[float], start: int, floor: float = 1e-12) -> bool:
    """Nonincreasing from index ``start`` on, treating values below ``floor`` as converged."""
    d = list(deltas)[start:]
    return all(d1 <= d0 or d1 <= floor for d0, d1 in zip(d, d[1:]))
