"""Symplectic checks on Heisenberg bases, the Moser correction and quaternionic rigidity."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import quaternionic_forms
from .errors import ChartError, DegeneracyError, StructuralError, ValidationError
from .extension import gauss_nodes, top_wedge_coefficient
from .maps import SampledMap


def standard_J(n: int) -> np.ndarray:
    """``sum dx_i ^ dy_i`` in the ordering ``(x_1..x_n, y_1..y_n)``."""
    if n < 1:
        raise StructuralError("n must be at least 1")
    I = np.eye(n)
    Z = np.zeros((n, n))
    return np.block([[Z, I], [-I, Z]])


@dataclass(frozen=True, eq=False)
class SymplecticStructure:
    n: int
    matrices: tuple[np.ndarray, ...]
    kind: str = "standard"

    def __post_init__(self):
        for M in self.matrices:
            M.setflags(write=False)
            if np.abs(M + M.T).max() > 0:
                raise ValidationError("structure matrix is not antisymmetric")
            if np.abs(M @ M + np.eye(M.shape[0])).max() > 1e-12:
                raise ValidationError("structure matrix does not square to -I")
        if self.kind == "quaternionic":
            J1, J2, J3 = self.matrices
            if np.abs(J1 @ J2 - J3).max() > 0:
                raise ValidationError("J3 differs from J1 J2")

    @property
    def J(self) -> np.ndarray:
        return self.matrices[0]

    def to_csv(self) -> str:
        rows = []
        for k, M in enumerate(self.matrices, start=1):
            for a, row in enumerate(M):
                rows.append(f"{k},{a + 1}," + ",".join(repr(float(v)) for v in row))
        return "matrix,row," + ",".join(f"c{b + 1}" for b in range(self.matrices[0].shape[1])) + "\n" + "\n".join(rows) + "\n"


def standard_structure(n: int) -> SymplecticStructure:
    return SymplecticStructure(n, (standard_J(n),))


def quaternionic_structure(n: int) -> SymplecticStructure:
    """``J1``, ``J2`` and ``J3 = J1 J2`` on ``R^{4n}`` with coordinate blocks ``(x, y, z, w)``.

    J1 and J2 are the matrices of ``dx^dy + dz^dw`` and ``dx^dz + dw^dy``;
    their product is the matrix of ``-(dx^dw + dy^dz)``.
    """
    if n < 1:
        raise StructuralError("quaternionic structure needs n >= 1")
    J1, J2, _ = quaternionic_forms(n)
    return SymplecticStructure(n, (J1, J2, J1 @ J2), kind="quaternionic")


def _square_even(A, J):
    A = np.asarray(A, float)
    J = np.asarray(J, float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise StructuralError("matrix must be square")
    if A.shape[0] % 2:
        raise StructuralError("symplectic checks need even dimension")
    if J.shape != A.shape:
        raise StructuralError(f"dimension mismatch: A is {A.shape}, J is {J.shape}")
    return A, J


def symplectic_defect(A, J=None, lam: float = 1.0) -> float:
    """``max |A^T J A - lam J|``."""
    A = np.asarray(A, float)
    if J is None:
        J = standard_J(max(A.shape[0] // 2, 1))
    A, J = _square_even(A, J)
    return float(np.abs(A.T @ J @ A - lam * J).max())


def lambda_from_det(A, n: int) -> float:
    """``det(A)^{1/n}``, using the real odd root when n is odd."""
    A = np.asarray(A, float)
    if n < 1:
        raise ValueError("n must be at least 1")
    d = float(np.linalg.det(A))
    if d < 0 and n % 2 == 0:
        raise ValueError(f"negative determinant {d:g} has no real root of even order {n}")
    return float(np.sign(d) * abs(d) ** (1.0 / n))


def quaternion_right_matrix(q) -> np.ndarray:
    """Matrix of ``p -> p q`` on ``R^4 = {x + y i + z j + w k}``."""
    a, b, c, d = np.asarray(q, float)
    return np.array(
        [
            [a, -b, -c, -d],
            [b, a, d, -c],
            [c, -d, a, b],
            [d, c, -b, a],
        ]
    )


def random_unit_quaternion(rng: np.random.Generator) -> np.ndarray:
    q = rng.standard_normal(4)
    return q / np.linalg.norm(q)


@dataclass
class RigidityReport:
    residuals: tuple[float, float, float]
    orthogonality: float
    triggered: bool
    assertion_holds: bool | None
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.assertion_holds is not False


def quaternionic_rigidity_check(A, tol: float = 1e-8, factor: float = 10.0) -> RigidityReport:
    """Residuals ``|A^T J_i A - J_i|`` and ``|A A^T - I|``.

    Orthogonality is asserted only when all three structures are preserved:
    preserving J1 and J2 alone does not force ``A A^T = I``.
    """
    A = np.asarray(A, float)
    m = A.shape[0]
    if A.ndim != 2 or A.shape[1] != m or m % 4:
        raise StructuralError("quaternionic check needs a 4n x 4n matrix")
    if abs(np.linalg.det(A)) < 1e-12:
        raise DegeneracyError("matrix is singular")
    S = quaternionic_structure(m // 4)
    res = tuple(float(np.abs(A.T @ J @ A - J).max()) for J in S.matrices)
    orth = float(np.abs(A @ A.T - np.eye(m)).max())
    triggered = all(r < tol for r in res)
    holds = (orth < factor * tol) if triggered else None
    return RigidityReport(res, orth, triggered, holds, tol)


# sampled forms --------------------------------------------------------------------------


def _interp_field(lower, upper, field_values):
    shape = field_values.shape[: lower.size]
    return SampledMap(lower, upper, field_values.reshape(shape + (-1,)))


def exterior_derivative_1form(alpha: np.ndarray, spacing) -> np.ndarray:
    """Central-difference ``(d alpha)_{ij} = d_i alpha_j - d_j alpha_i`` on the grid."""
    k = alpha.shape[-1]
    grads = np.gradient(alpha, *spacing, axis=tuple(range(k)), edge_order=2)
    if k == 1:
        grads = [grads]
    D = np.stack(grads, axis=-2)  # [..., i, j] = d_i alpha_j
    return D - np.swapaxes(D, -1, -2)


def exterior_derivative_2form(eta: np.ndarray, spacing) -> np.ndarray:
    k = eta.shape[-1]
    grads = np.gradient(eta, *spacing, axis=tuple(range(k)), edge_order=2)
    if k == 1:
        grads = [grads]
    D = np.stack(grads, axis=-3)  # [..., i, j, l] = d_i eta_jl
    return D + np.transpose(D, tuple(range(D.ndim - 3)) + (D.ndim - 2, D.ndim - 1, D.ndim - 3)) + np.transpose(
        D, tuple(range(D.ndim - 3)) + (D.ndim - 1, D.ndim - 3, D.ndim - 2)
    )


@dataclass
class PrimitiveResult:
    alpha: np.ndarray
    residual: float


def poincare_primitive(
    eta: np.ndarray, lower, upper, quad_order: int = 2, closed_tol: float = 1e-6, panels: int | None = None
) -> PrimitiveResult:
    """Radial homotopy primitive about the box centre.

    ``eta`` holds a 2-form at every node, shape ``grid + (k, k)``; the result
    satisfies ``d alpha = eta`` up to the reported grid residual.  The ray
    integral uses composite Gauss rules with one panel per grid cell by
    default: the interpolated integrand has a kink at every cell crossing, so
    a single high-order rule stalls at first order.
    """
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    eta = np.asarray(eta, float)
    k = lower.size
    shape = eta.shape[:k]
    if eta.shape[k:] != (k, k):
        raise StructuralError("eta must carry a k x k matrix at each node")
    spacing = (upper - lower) / (np.asarray(shape) - 1)
    if k > 2:
        d_eta = exterior_derivative_2form(eta, spacing)
        inner = tuple(slice(1, n - 1) for n in shape)
        if np.abs(d_eta[inner]).max(initial=0.0) > closed_tol:
            raise ValidationError("eta is not closed within tolerance")
    interp = _interp_field(lower, upper, eta)
    c = 0.5 * (lower + upper)
    axes = [np.linspace(lo, hi, n) for lo, hi, n in zip(lower, upper, shape)]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1) - c
    m = max(shape) - 1 if panels is None else int(panels)
    s1, w1 = gauss_nodes(quad_order)
    s = ((np.arange(m)[:, None] + s1[None, :]) / m).ravel()
    w = np.tile(w1 / m, m)
    alpha = np.zeros(shape + (k,))
    for t, wt in zip(s, w):
        E = interp(c + t * X).reshape(shape + (k, k))
        alpha += wt * t * np.einsum("...i,...ij->...j", X, E)
    d_alpha = exterior_derivative_1form(alpha, spacing)
    return PrimitiveResult(alpha, float(np.abs(d_alpha - eta).max(initial=0.0)))


# Moser correction -------------------------------------------------------------------------


def _pfaffian_field(M: np.ndarray) -> np.ndarray:
    m = M.shape[-1]
    if m == 2:
        return M[..., 0, 1]
    if m == 4:
        return M[..., 0, 1] * M[..., 2, 3] - M[..., 0, 2] * M[..., 1, 3] + M[..., 0, 3] * M[..., 1, 2]
    flat = M.reshape(-1, m, m)
    return np.array([top_wedge_coefficient(0.5 * (A - A.T)) for A in flat]).reshape(M.shape[:-2])


def pullback_error(f: SampledMap, J: np.ndarray) -> np.ndarray:
    """``eta = Df^T J Df - J`` at every node."""
    D = f.node_jacobian()
    return np.einsum("...ai,ab,...bj->...ij", D, J, D) - J


@dataclass
class MoserResult:
    map: SampledMap
    flow: np.ndarray
    eta_before: float
    eta_after: float
    primitive_residual: float
    min_pfaffian: float
    meta: dict = field(default_factory=dict)

    @property
    def reduction(self) -> float:
        return self.eta_before / self.eta_after if self.eta_after > 0 else float("inf")


def _interior(arr: np.ndarray, k: int) -> np.ndarray:
    return arr[tuple(slice(1, n - 1) for n in arr.shape[:k])]


def moser_flow(
    f: SampledMap,
    J: np.ndarray | None = None,
    steps: int = 32,
    guard: float = 0.1,
    chart_tol: float = 1e-9,
    inset: float = 0.0,
) -> MoserResult:
    """Correct ``f`` to ``g = f o Psi`` with ``g^* omega`` closer to ``omega``.

    ``omega_t = omega + t eta``; the field solves ``iota_X omega_t = -alpha``
    with ``d alpha = eta`` and is integrated from every node by RK4 on a
    fixed grid of ``steps`` in t.  With ``inset > 0`` the flow starts from the
    nodes of a box shrunk by that fraction of the width on every side, leaving
    room for trajectories that move outward; the corrected map lives there.
    """
    k = f.dim_in
    if f.dim_out != k or k % 2:
        raise StructuralError("Moser correction needs a map R^{2n} -> R^{2n}")
    J = standard_J(k // 2) if J is None else np.asarray(J, float)
    eta = pullback_error(f, J)
    prim = poincare_primitive(eta, f.lower, f.upper)
    eta_i = _interp_field(f.lower, f.upper, eta)
    alpha_i = _interp_field(f.lower, f.upper, prim.alpha)

    ts = np.linspace(0.0, 1.0, 2 * steps + 1)
    pf = np.stack([_pfaffian_field(J + t * eta) for t in ts])
    min_pf = float(np.abs(pf).min())
    if min_pf <= guard:
        raise DegeneracyError(f"omega_t degenerates on the grid: min |Pfaffian| = {min_pf:.3g} <= {guard}")

    def field(x, t):
        E = eta_i(x).reshape(x.shape[:-1] + (k, k))
        a = alpha_i(x)
        Wt = J + t * E
        return -np.linalg.solve(np.swapaxes(Wt, -1, -2), a[..., None])[..., 0]

    lo = f.lower - chart_tol * (f.upper - f.lower)
    hi = f.upper + chart_tol * (f.upper - f.lower)

    def guard_chart(x):
        if np.any(x < lo) or np.any(x > hi):
            raise ChartError("Moser flow exits the chart")
        return np.clip(x, f.lower, f.upper)

    if not 0.0 <= inset < 0.5:
        raise ValueError("inset must lie in [0, 0.5)")
    width = f.upper - f.lower
    lower_in, upper_in = f.lower + inset * width, f.upper - inset * width
    start = SampledMap.from_function(lambda y: y, lower_in, upper_in, f.shape)
    x = start.nodes().reshape(-1, k).copy()
    h = 1.0 / steps
    for i in range(steps):
        t = i * h
        k1 = field(x, t)
        k2 = field(guard_chart(x + 0.5 * h * k1), t + 0.5 * h)
        k3 = field(guard_chart(x + 0.5 * h * k2), t + 0.5 * h)
        k4 = field(guard_chart(x + h * k3), t + h)
        x = guard_chart(x + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0)
    psi = x.reshape(f.shape + (k,))
    g = SampledMap(lower_in, upper_in, f(x).reshape(f.shape + (f.dim_out,)), source=f.source, target=f.target)
    before = float(np.abs(_interior(eta, k)).max(initial=0.0))
    after = float(np.abs(_interior(pullback_error(g, J), k)).max(initial=0.0))
    return MoserResult(g, psi, before, after, prim.residual, min_pf, {"steps": steps, "guard": guard, "inset": inset})


def moser_correct(
    f: SampledMap, J: np.ndarray | None = None, steps: int = 32, guard: float = 0.1, inset: float = 0.0
) -> SampledMap:
    return moser_flow(f, J, steps, guard, inset=inset).map


# area checks --------------------------------------------------------------------------------


@dataclass
class AreaReport:
    max_det_defect: float
    probe_ratios: list
    max_ratio_defect: float


def _polygon_area(P: np.ndarray) -> float:
    x, y = P[:, 0], P[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def area_preserving_check(f: SampledMap, samples_per_side: int = 64) -> AreaReport:
    """Jacobian-determinant defect on interior nodes and area ratios on probe rectangles."""
    if f.dim_in != 2 or f.dim_out != 2:
        raise StructuralError("area check needs a map R^2 -> R^2")
    D = _interior(f.node_jacobian(), 2)
    det = D[..., 0, 0] * D[..., 1, 1] - D[..., 0, 1] * D[..., 1, 0]
    lo, hi = f.lower, f.upper
    w = hi - lo
    ratios = []
    s = np.linspace(0.0, 1.0, samples_per_side, endpoint=False)
    for a0, b0, sz in [(0.25, 0.25, 0.5), (0.0, 0.0, 0.5), (0.5, 0.5, 0.5), (0.1, 0.4, 0.3)]:
        p = lo + np.array([a0, b0]) * w
        dx, dy = sz * w[0], sz * w[1]
        corners = [p, p + [dx, 0], p + [dx, dy], p + [0, dy]]
        boundary = np.vstack([c0 + s[:, None] * (c1 - c0) for c0, c1 in zip(corners, corners[1:] + corners[:1])])
        ratios.append(_polygon_area(f(boundary)) / (dx * dy))
    return AreaReport(
        float(np.abs(det - 1.0).max(initial=0.0)),
        ratios,
        float(max(abs(r - 1.0) for r in ratios)),
    )


@dataclass
class QCBoundReport:
    det_defect: float
    sigma_min: float
    sigma_max: float
    lower_bound: float
    upper_bound: float
    within: bool


def qc_bound_check(f: SampledMap, lam: float, K: float, tol: float = 1e-6) -> QCBoundReport:
    """Singular values of Df at interior nodes against the bi-Lipschitz window for det = lam, ratio <= K."""
    if f.dim_in != 2 or f.dim_out != 2:
        raise StructuralError("bound check needs a map R^2 -> R^2")
    D = _interior(f.node_jacobian(), 2).reshape(-1, 2, 2)
    det = np.linalg.det(D)
    sv = np.linalg.svd(D, compute_uv=False)
    lo = abs(lam) ** 0.5 / K**0.5
    hi = abs(lam) ** 0.5 * K**0.5
    ratio_ok = np.all(sv[:, 0] / sv[:, 1] <= K * (1 + tol))
    within = bool(ratio_ok and sv.min() >= lo * (1 - tol) and sv.max() <= hi * (1 + tol))
    return QCBoundReport(float(np.abs(det - lam).max()), float(sv.min()), float(sv.max()), lo, hi, within)
