"""Command-line driver: one subcommand per library operation family."""

from __future__ import annotations

import argparse
import ast
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import algebra as alg_mod
from . import curves, extension, group, hoelder, lifting, symplectic
from .errors import ChartError, DegeneracyError, NotLiftableError, StructuralError, ValidationError
from .forms import lie_differential_d0
from .maps import SampledMap, load_map, map_from_dict, save_map

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NOT_LIFTABLE = 3
EXIT_USAGE = 64
EXIT_DATA = 65

DEFAULT_OUT = "carnotlift-out"
DEFAULT_RESOLUTION = 64


class UsageError(Exception):
    pass


class CheckFailed(Exception):
    """A report-based check ran but did not pass (exit 2)."""


# formatting ------------------------------------------------------------------------------


def fmt(x: float) -> str:
    x = float(x)
    if x == 0.0 or 1e-4 <= abs(x) < 1e16:
        return np.format_float_positional(x, trim="-")
    return repr(x)


def fmt_vec(v) -> str:
    return ",".join(fmt(x) for x in np.asarray(v, float).reshape(-1))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.replace(" ", "").split(",") if t != ""])
    except ValueError as exc:
        raise UsageError(f"cannot parse vector {text!r}: {exc}") from exc


def parse_matrix(text: str) -> np.ndarray:
    """Rows separated by ';', entries by ','."""
    try:
        rows = [[float(t) for t in r.split(",")] for r in text.replace(" ", "").split(";") if r]
        return np.array(rows, dtype=float)
    except ValueError as exc:
        raise UsageError(f"cannot parse matrix {text!r}: {exc}") from exc


def parse_eps_grid(text: str) -> np.ndarray:
    """``2^-4..2^-10`` (integer exponent range) or a comma list."""
    text = text.replace(" ", "")
    if ".." in text and "^" in text:
        a, b = text.split("..")
        base1, e1 = a.split("^")
        base2, e2 = b.split("^")
        if float(base1) != float(base2):
            raise UsageError("eps grid range must use one base")
        lo, hi = int(e1), int(e2)
        step = 1 if hi >= lo else -1
        return float(base1) ** np.arange(lo, hi + step, step, dtype=float)
    return parse_vector(text)


def parse_levels(text: str) -> list[int]:
    if ".." in text:
        a, b = text.split("..")
        return list(range(int(a), int(b) + 1))
    return [int(t) for t in text.split(",")]


_SAFE_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt, "abs": np.abs, "log": np.log, "tanh": np.tanh}
_SAFE_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
)


def parse_field(expr: str, names=("x1", "x2", "x3", "x4")) -> Callable:
    """Scalar field from an arithmetic expression in ``x1..x4``."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise UsageError(f"cannot parse expression {expr!r}: {exc.msg}") from exc
    for node in ast.walk(tree):
        if not isinstance(node, _SAFE_NODES):
            raise UsageError(f"expression {expr!r} uses unsupported syntax {type(node).__name__}")
        if isinstance(node, ast.Name) and node.id not in names and node.id not in _SAFE_FUNCS and node.id != "pi":
            raise UsageError(f"unknown name {node.id!r} in {expr!r}")
    code = compile(tree, "<field>", "eval")

    def fn(x):
        env = {n: x[..., i] for i, n in enumerate(names)}
        env.update(_SAFE_FUNCS, pi=math.pi)
        out = eval(code, {"__builtins__": {}}, env)
        return np.broadcast_to(np.asarray(out, float), x.shape[:-1]).copy()

    return fn


# run context --------------------------------------------------------------------------------


@dataclass
class Context:
    command: str
    args: argparse.Namespace
    out: Path
    summary: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)

    def path(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        return self.out / name

    def write_csv(self, name: str, header, rows) -> Path:
        p = self.path(name)
        with p.open("w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for r in rows:
                fh.write(",".join(v if isinstance(v, str) else repr(float(v)) if not isinstance(v, (int, np.integer)) else str(int(v)) for v in r) + "\n")
        self.artifacts.append(p.name)
        return p

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text)
        self.artifacts.append(p.name)
        return p


# loaders ------------------------------------------------------------------------------------


def _algebra(args) -> alg_mod.StratifiedAlgebra:
    if not args.group:
        raise UsageError("--group is required")
    try:
        return alg_mod.load_algebra(args.group)
    except KeyError as exc:
        raise UsageError(str(exc)) from exc


def _extensions(args):
    """Source and target extensions from --extension/--extension2 or --group."""
    spec = args.extension or args.group or "heisenberg:1"
    try:
        e1 = extension.load_extension(spec)
        e2 = extension.load_extension(args.extension2) if getattr(args, "extension2", None) else e1
    except (KeyError, FileNotFoundError) as exc:
        raise ValueError(f"cannot load extension {spec!r}: {exc}") from exc
    return e1, e2


def _element(alg, text, default=None) -> group.GroupElement:
    if text is None:
        if default is None:
            raise UsageError("a point is required")
        return group.GroupElement(default, alg)
    v = parse_vector(text)
    if v.size != alg.total_dim:
        raise ValueError(f"point {text!r} has {v.size} coordinates, algebra {alg.name} needs {alg.total_dim}")
    return group.GroupElement(v, alg)


def _named_map(spec: str, k: int, resolution: int) -> SampledMap:
    """Map file path, or ``name[:arg]`` for a built-in map sampled on [-1, 1]^k."""
    if Path(spec).exists():
        return load_map(spec).sampled
    name, _, arg = spec.partition(":")
    builtin: str | dict = name
    if name == "linear":
        if not arg:
            raise UsageError("linear needs a matrix, e.g. linear:2,1;1,1")
        M = parse_matrix(arg)
        k = M.shape[1]
        builtin = {"name": name, "matrix": M.tolist()}
    elif name == "scale-x" and arg:
        builtin = {"name": name, "factor": float(arg)}
    elif name == "weierstrass-shear" and arg:
        builtin = {"name": name, "N": int(arg)}
    data = {"lower": [-1.0] * k, "upper": [1.0] * k, "shape": [resolution + 1] * k, "builtin": builtin}
    return map_from_dict(data, origin=spec).sampled


def _base_map(args, k: int) -> SampledMap:
    if not args.map:
        raise UsageError("--map is required")
    return _named_map(args.map, k, args.resolution)


def _lift_if_base(F: SampledMap, e1, e2, args):
    if F.dim_in == e1.n_base:
        return lifting.lift_map(F, e1, e2, seed=args.seed, jobs=args.jobs, tol_per_length=args.tol or lifting.DEFECT_TOL_PER_LENGTH)
    if F.dim_in != e1.extended.total_dim:
        raise StructuralError("map dimension matches neither base nor extended group")
    return F


# subcommands --------------------------------------------------------------------------------

COMMANDS: dict[str, tuple[Callable, tuple[str, ...], Callable | None, str]] = {}


def command(name: str, ops: tuple[str, ...], help: str, extra: Callable | None = None):
    def deco(fn):
        COMMANDS[name] = (fn, ops, extra, help)
        return fn

    return deco


def _opt(*flags, **kw):
    return lambda p: p.add_argument(*flags, **kw)


def _multi(*adders):
    def apply(p):
        for a in adders:
            a(p)

    return apply


_P = _opt("--p", help="point, comma separated coordinates")
_Q = _opt("--q", help="second point")


@command("validate-algebra", ("validate",), "check antisymmetry, grading and Jacobi")
def cmd_validate(ctx: Context) -> int:
    a = _algebra(ctx.args)
    rep = alg_mod.validate(a)
    ctx.summary.update(
        algebra=a.name,
        dimension=a.total_dim,
        layers=list(a.layer_dims),
        valid=rep.ok,
        violations=[{"kind": v.kind, "indices": list(v.indices), "detail": v.detail} for v in rep.violations],
        warnings=list(rep.warnings),
    )
    if rep.ok:
        ctx.summary["line"] = f"valid: {a.name} dims {list(a.layer_dims)}"
        return EXIT_OK
    ctx.summary["line"] = f"invalid: {a.name}: " + "; ".join(str(v) for v in rep.violations)
    return EXIT_VALIDATION


@command("mul", ("multiply",), "group product p*q", _multi(_P, _Q))
def cmd_mul(ctx: Context) -> int:
    a = _algebra(ctx.args)
    r = group.multiply(_element(a, ctx.args.p), _element(a, ctx.args.q))
    ctx.summary.update(result=r.coords, line=fmt_vec(r.coords))
    return EXIT_OK


@command("quotient", ("left_quotient", "inverse", "quasi_metric"), "p^{-1}*q, p^{-1} and d_K(p, q)", _multi(_P, _Q))
def cmd_quotient(ctx: Context) -> int:
    a = _algebra(ctx.args)
    p, q = _element(a, ctx.args.p), _element(a, ctx.args.q)
    r = group.left_quotient(p, q)
    ctx.summary.update(result=r.coords, inverse=group.inverse(p).coords, quasi_metric=group.quasi_metric(p, q), line=fmt_vec(r.coords))
    return EXIT_OK


@command("dilate", ("dilate",), "delta_lambda(p)", _multi(_P, _opt("--lam", type=float, required=True)))
def cmd_dilate(ctx: Context) -> int:
    a = _algebra(ctx.args)
    r = group.dilate(ctx.args.lam, _element(a, ctx.args.p))
    ctx.summary.update(result=r.coords, line=fmt_vec(r.coords))
    return EXIT_OK


def _matrix_rows(M):
    return [[i + 1] + list(row) for i, row in enumerate(M)]


@command("frame", ("left_invariant_frame",), "left-invariant frame at p (column i is X_i)", _P)
def cmd_frame(ctx: Context) -> int:
    a = _algebra(ctx.args)
    p = _element(a, ctx.args.p, np.zeros(a.total_dim))
    M = group.left_invariant_frame(p)
    ctx.write_csv("frame.csv", ["row"] + [f"X{j + 1}" for j in range(a.total_dim)], _matrix_rows(M))
    ctx.summary.update(point=p.coords, frame=M, line=f"frame of {a.name} at {fmt_vec(p.coords)} written")
    return EXIT_OK


@command("coframe", ("contact_coframe",), "contact coframe at p (row j is omega_j)", _P)
def cmd_coframe(ctx: Context) -> int:
    a = _algebra(ctx.args)
    p = _element(a, ctx.args.p, np.zeros(a.total_dim))
    M = group.contact_coframe(p)
    ctx.write_csv("coframe.csv", ["form"] + [f"dx{j + 1}" for j in range(a.total_dim)], _matrix_rows(M))
    ctx.summary.update(point=p.coords, coframe=M, line=f"coframe of {a.name} at {fmt_vec(p.coords)} written")
    return EXIT_OK


@command("build-extension", ("build_extension", "lie_differential_d0"), "build and validate a central extension")
def cmd_build_extension(ctx: Context) -> int:
    e1, _ = _extensions(ctx.args)
    d0 = lie_differential_d0(e1.cocycle_form)
    rep = alg_mod.validate(e1.extended)
    ctx.write_text("extended_algebra.json", json.dumps(_jsonable(e1.extended.to_json_dict()), indent=1, sort_keys=True) + "\n")
    ctx.summary.update(
        extended=e1.extended.name,
        base_dims=list(e1.base.layer_dims),
        fiber_layers=list(e1.fiber_layers),
        cocycle_d0_max=float(np.abs(d0.values).max(initial=0.0)),
        extended_valid=rep.ok,
        line=f"extension {e1.extended.name}: dims {list(e1.extended.layer_dims)}, d0 rho max {np.abs(d0.values).max(initial=0.0):.3g}",
    )
    return EXIT_OK if rep.ok else EXIT_VALIDATION


@command("potential", ("potential_form",), "potential 1-form alpha at base points", _P)
def cmd_potential(ctx: Context) -> int:
    e1, _ = _extensions(ctx.args)
    x = parse_vector(ctx.args.p) if ctx.args.p else np.zeros(e1.n_base)
    if x.size != e1.n_base:
        raise ValueError(f"base point needs {e1.n_base} coordinates")
    C = e1.potential.coefficients(x[None])[0]
    ctx.write_csv("potential.csv", ["fiber"] + [f"dx{j + 1}" for j in range(e1.n_base)], _matrix_rows(C))
    dres = float(np.abs(e1.potential.exterior_derivative_fd(x[None])[0] - e1.potential.rho_in_coordinates(x[None])[0]).max())
    ctx.summary.update(point=x, coefficients=C, d_alpha_minus_rho=dres, line=f"alpha at {fmt_vec(x)}: " + ";".join(fmt_vec(r) for r in C))
    return EXIT_OK


@command(
    "obstruction",
    ("hom_obstruction", "graded_hom_compose"),
    "obstruction phi o rho_1 - L^* rho_2 and a compensating mu",
    _multi(_opt("--L", required=True, help="matrix rows ';' separated"), _opt("--phi", required=True), _opt("--extension2")),
)
def cmd_obstruction(ctx: Context) -> int:
    e1, e2 = _extensions(ctx.args)
    L = parse_matrix(ctx.args.L)
    phi = parse_matrix(ctx.args.phi)
    res = extension.hom_obstruction(L, phi, e1, e2)
    ctx.summary.update(obstruction=res.obstruction.values, residual=res.residual, mu=None if res.mu is None else res.mu)
    if res.mu is not None:
        psi = extension.graded_hom_compose(extension.GradedMapTriple(L, phi, res.mu, e1, e2))
        hres = extension.homomorphism_residual(psi, e1.extended, e2.extended)
        ctx.summary.update(psi=psi, homomorphism_residual=hres)
        ctx.summary["line"] = f"mu found (residual {res.residual:.3g}); psi bracket residual {hres:.3g}"
    else:
        ctx.summary["line"] = f"no graded mu: obstruction residual {res.residual:.6g}"
    return EXIT_OK


def _control(args, alg) -> curves.Control:
    spec = args.curve
    if not spec:
        raise UsageError("--curve is required")
    if spec.startswith("square-loop"):
        side = float(spec.partition(":")[2] or 1.0)
        return curves.square_loop_control(side)
    if spec.startswith("constant:"):
        u = parse_vector(spec.partition(":")[2])
        return curves.Control(np.array([0.0, 1.0]), np.vstack([u, u]), kind="constant")
    c = curves.load_curve(spec)
    return curves.Control(c.times, c.points, kind=args.control_kind)


@command(
    "endpoint",
    ("endpoint",),
    "integrate a horizontal control from a start point",
    _multi(_opt("--start"), _opt("--control-kind", default="linear", choices=["linear", "constant"])),
)
def cmd_endpoint(ctx: Context) -> int:
    a = _algebra(ctx.args)
    u = _control(ctx.args, a)
    start = _element(a, ctx.args.start, np.zeros(a.total_dim))
    c = curves.endpoint(u, start)
    ctx.write_text("curve.csv", curves.curve_to_csv(c))
    ctx.summary.update(endpoint=c.end, nodes=c.times.size, line=fmt_vec(c.end))
    return EXIT_OK


def _base_curve(spec: str) -> curves.HorizontalCurve:
    if spec.startswith("circle"):
        n = int(spec.partition(":")[2] or 4097)
        return curves.circle_curve(n)
    return curves.load_curve(spec)


@command("lift-curve", ("horizontal_lift", "line_integral"), "horizontal lift of a base curve", _opt("--start"))
def cmd_lift_curve(ctx: Context) -> int:
    e1, _ = _extensions(ctx.args)
    if not ctx.args.curve:
        raise UsageError("--curve is required")
    base = _base_curve(ctx.args.curve)
    G = e1.extended
    start = _element(G, ctx.args.start, e1.join(base.start, np.zeros(e1.n_fiber)))
    lifted = curves.horizontal_lift(base, start, e1)
    inc = curves.line_integral(e1.potential, base)
    ctx.write_text("lifted_curve.csv", curves.curve_to_csv(lifted))
    ctx.summary.update(fiber_increment=inc, end=lifted.end, nonhorizontal_defect=lifted.nonhorizontal_defect(), line=f"fiber increment {fmt_vec(inc)}")
    return EXIT_OK


def _write_witness(ctx: Context, loop) -> None:
    loop = np.asarray(loop)
    ctx.write_csv("witness_loop.csv", ["t"] + [f"x{i + 1}" for i in range(loop.shape[1])], [[t] + list(r) for t, r in zip(np.linspace(0, 1, loop.shape[0]), loop)])


@command("check-lift", ("closed_loop_defect",), "closed-loop defect over the probe family", _opt("--extension2"))
def cmd_check_lift(ctx: Context) -> int:
    e1, e2 = _extensions(ctx.args)
    f = _base_map(ctx.args, e1.n_base)
    tol = ctx.args.tol or lifting.DEFECT_TOL_PER_LENGTH
    rep = lifting.check_liftable(f, e1, e2, seed=ctx.args.seed, tol_per_length=tol, jobs=ctx.args.jobs)
    rows = [[i, d.length] + list(d.defect) for i, d in enumerate(rep.defects)]
    ctx.write_csv("defects.csv", ["loop", "length"] + [f"defect{v + 1}" for v in range(e2.n_fiber)], rows)
    ctx.summary.update(passed=rep.passed, loops=len(rep.defects), max_defect=rep.max_defect, max_ratio=rep.max_ratio, tolerance_per_length=tol)
    if rep.passed:
        ctx.summary["line"] = f"liftable: max defect {rep.max_defect:.3g} over {len(rep.defects)} loops"
        return EXIT_OK
    _write_witness(ctx, rep.witness_loop)
    ctx.summary.update(witness_index=rep.witness_index, witness_loop=rep.witness_loop, witness_defect=rep.witness_defect)
    ctx.summary["line"] = f"not liftable at tolerance {tol:g}: loop {rep.witness_index} defect {fmt_vec(rep.witness_defect)}"
    return EXIT_NOT_LIFTABLE


@command("lift-map", ("lift_map",), "construct the contact lift of a base map", _opt("--extension2"))
def cmd_lift_map(ctx: Context) -> int:
    e1, e2 = _extensions(ctx.args)
    f = _base_map(ctx.args, e1.n_base)
    F = lifting.lift_map(f, e1, e2, seed=ctx.args.seed, jobs=ctx.args.jobs, tol_per_length=ctx.args.tol or lifting.DEFECT_TOL_PER_LENGTH)
    nodes = F.nodes().reshape(-1, F.dim_in)
    err = float(np.abs(e2.project(F.values.reshape(-1, F.dim_out)) - f(e1.project(nodes))).max())
    save_map(F, ctx.path("lifted_map.json"), payload="lifted_map.csv")
    ctx.artifacts += ["lifted_map.json", "lifted_map.csv"]
    ctx.summary.update(phi=F.phi, projection_error=err, shape=list(F.shape), line=f"lifted: phi {fmt_vec(F.phi)}, projection error {err:.3g}")
    return EXIT_OK


@command("fiber-hom", ("fiber_hom_extract",), "fiber homomorphism of a lift", _opt("--extension2"))
def cmd_fiber_hom(ctx: Context) -> int:
    e1, e2 = _extensions(ctx.args)
    F = _lift_if_base(_base_map(ctx.args, e1.n_base), e1, e2, ctx.args)
    rep = lifting.fiber_hom_extract(F, e1, e2)
    ctx.summary.update(Phi=rep.Phi, deviation=rep.deviation, linearity_residual=rep.linearity_residual, probes=rep.n_probes)
    ctx.summary["line"] = f"Phi {';'.join(fmt_vec(r) for r in rep.Phi)} deviation {rep.deviation:.3g} linearity {rep.linearity_residual:.3g}"
    return EXIT_OK


@command(
    "pansu",
    ("pansu_quotient",),
    "finite-lambda Pansu quotients of a lift",
    _multi(_P, _opt("--h"), _opt("--lam", default="1e-1,1e-2,1e-3"), _opt("--extension2")),
)
def cmd_pansu(ctx: Context) -> int:
    e1, e2 = _extensions(ctx.args)
    F = _lift_if_base(_base_map(ctx.args, e1.n_base), e1, e2, ctx.args)
    G1, G2 = e1.extended, e2.extended
    g = _element(G1, ctx.args.p, getattr(F, "g", F.center))
    lams = parse_vector(ctx.args.lam)
    out = {}
    if ctx.args.h:
        h = _element(G1, ctx.args.h)
        for lam in lams:
            out[fmt(lam)] = lifting.pansu_quotient(F, g, h, lam, G1, G2, chart=F).coords
        last = out[fmt(lams[-1])]
        ctx.summary["line"] = f"quotient at lambda {fmt(lams[-1])}: {fmt_vec(last)}"
    else:
        rows = []
        for lam in lams:
            M = lifting.pansu_matrix(F, g.coords, lam, G1, G2, chart=F)
            out[fmt(lam)] = M
            rows += [[lam, i + 1] + list(r) for i, r in enumerate(M)]
        ctx.write_csv("pansu.csv", ["lambda", "row"] + [f"c{j + 1}" for j in range(G1.total_dim)], rows)
        ctx.summary["line"] = f"pansu matrix at lambda {fmt(lams[-1])}: " + ";".join(fmt_vec(r) for r in out[fmt(lams[-1])])
    ctx.summary.update(point=g.coords, quotients=out)
    return EXIT_OK


def _mollified_base(f: SampledMap, eps: float) -> SampledMap:
    kernel = hoelder.MollifierKernel(alg_mod.abelian(f.dim_in))
    margin = eps * float(kernel.halfwidth.max())
    lo, hi = f.lower + margin, f.upper - margin
    return hoelder.group_convolve(f, eps, kernel).sample(lo, hi, f.shape)


@command(
    "moser-correct",
    ("moser_correct", "poincare_primitive"),
    "Moser-flow correction of a (mollified) map",
    _opt("--inset", type=float, default=0.0, help="start the flow from a box shrunk by this fraction per side"),
)
def cmd_moser(ctx: Context) -> int:
    args = ctx.args
    f = _base_map(args, 2)
    if args.eps:
        f = _mollified_base(f, args.eps)
    res = symplectic.moser_flow(f, inset=args.inset)
    g = res.map
    gg = symplectic.moser_correct(g, inset=args.inset)
    idem = float(np.abs(gg.values - g(gg.nodes())).max())
    D = g.node_jacobian()[g.interior_slices()]
    det_def = float(np.abs(np.linalg.det(D) - 1.0).max())
    save_map(g, ctx.path("corrected_map.json"), payload="corrected_map.csv")
    ctx.artifacts += ["corrected_map.json", "corrected_map.csv"]
    ctx.summary.update(
        eta_before=res.eta_before,
        eta_after=res.eta_after,
        primitive_residual=res.primitive_residual,
        min_pfaffian=res.min_pfaffian,
        max_det_defect=det_def,
        idempotency=idem,
        eps=args.eps,
        line=f"corrected: max |det Dg - 1| {det_def:.3g}, eta {res.eta_before:.3g} -> {res.eta_after:.3g}, idempotency {idem:.3g}",
    )
    return EXIT_OK


@command("area-check", ("area_preserving_check", "symplectic_defect", "lambda_from_det"), "determinant and area-ratio report")
def cmd_area(ctx: Context) -> int:
    f = _base_map(ctx.args, 2)
    rep = symplectic.area_preserving_check(f)
    Jc = f.jacobian(f.center[None])[0]
    lam = symplectic.lambda_from_det(Jc, 1)
    sd = symplectic.symplectic_defect(Jc, symplectic.standard_J(1), lam)
    ctx.summary.update(max_det_defect=rep.max_det_defect, probe_ratios=rep.probe_ratios, lambda_at_center=lam, symplectic_defect_at_center=sd)
    ctx.summary["line"] = f"max |det - 1| {rep.max_det_defect:.3g}; probe ratios {fmt_vec(rep.probe_ratios)}"
    if ctx.args.tol is not None and rep.max_det_defect > ctx.args.tol:
        return EXIT_VALIDATION
    return EXIT_OK


@command(
    "quaternionic-check",
    ("quaternionic_structure", "quaternionic_rigidity_check", "top_wedge_coefficient"),
    "quaternionic structure and orthogonality rigidity",
    _multi(_opt("--n", type=int, default=1), _opt("--count", type=int, default=1000), _opt("--matrix")),
)
def cmd_quaternionic(ctx: Context) -> int:
    n = ctx.args.n
    S = symplectic.quaternionic_structure(n)
    ctx.write_text("quaternionic_structure.csv", S.to_csv())
    product_ok = bool(np.array_equal(S.matrices[0] @ S.matrices[1], S.matrices[2]))
    pf = [symplectic.top_wedge_coefficient(J) for J in S.matrices]
    rng = np.random.default_rng(ctx.args.seed)
    if ctx.args.matrix:
        mats = [parse_matrix(ctx.args.matrix)]
    else:
        mats = [np.kron(symplectic.quaternion_right_matrix(symplectic.random_unit_quaternion(rng)), np.eye(n)) for _ in range(ctx.args.count)]
    reps = [symplectic.quaternionic_rigidity_check(A) for A in mats]
    rows = [[i] + list(r.residuals) + [r.orthogonality, int(r.triggered)] for i, r in enumerate(reps)]
    ctx.write_csv("rigidity.csv", ["matrix", "res_J1", "res_J2", "res_J3", "orthogonality", "triggered"], rows)
    worst = max(r.orthogonality for r in reps)
    failed = [i for i, r in enumerate(reps) if not r.ok]
    ctx.summary.update(n=n, J3_equals_J1J2=product_ok, pfaffians=pf, matrices=len(mats), max_orthogonality=worst, failed=failed)
    ctx.summary["line"] = f"{len(mats)} matrices, max |AA^T - I| {worst:.3g}, J3 = J1 J2: {product_ok}"
    return EXIT_OK if product_ok and not failed else EXIT_VALIDATION


def _shear_or_map(args):
    """A named shear lift, or a sampled map on the --group chart (default H^1)."""
    spec = args.map or "weierstrass-shear:6"
    name, _, arg = spec.partition(":")
    if name in hoelder.SHEARS:
        f = hoelder.SHEARS[name](int(arg)) if arg else hoelder.SHEARS[name]()
        return f, f.algebra
    a = _algebra(args) if args.group else alg_mod.heisenberg(1)
    return _named_map(spec, a.total_dim, args.resolution), a


@command(
    "decay-experiment",
    ("group_convolve", "pullback_derivative", "decay_slope"),
    "sup |(f_eps^* omega_j)(X_i)| against eps and its fitted slope",
    _multi(_opt("--omega", type=int, default=3), _opt("--X", type=int, default=2), _opt("--probes", type=int, default=33)),
)
def cmd_decay(ctx: Context) -> int:
    args = ctx.args
    f, target = _shear_or_map(args)
    eps = parse_eps_grid(args.eps_grid or "2^-4..2^-10")
    kernel = hoelder.MollifierKernel(target)
    if isinstance(f, SampledMap):
        c = f.center
        probes = c + 0.25 * (f.upper - f.lower) * np.linspace(-1, 1, args.probes)[:, None] * np.eye(f.dim_in)[1]
    else:
        probes = hoelder.default_probes(np.linspace(-0.5, 0.5, args.probes))
    fit = hoelder.decay_slope(f, args.omega - 1, args.X - 1, eps, kernel, probes=probes, beta=args.beta, target=target, jobs=args.jobs)
    rows = [[e, s, args.omega, args.X] for e, s in zip(fit.eps, fit.sups)]
    ctx.write_csv("decay.csv", ["epsilon", "sup_value", "omega_index", "X_index"], rows)
    ctx.summary.update(
        slope=fit.slope, intercept=fit.intercept, residual=fit.residual, window=list(fit.window),
        at_noise_floor=fit.at_noise_floor, certified=fit.certified, note=fit.note, beta=args.beta, kernel=fit.meta,
    )
    slope = "at noise floor" if fit.slope is None else f"{fit.slope:.4f}"
    ctx.summary["line"] = f"slope {slope} (omega {args.omega}, X {args.X}, {len(eps)} scales)"
    return EXIT_OK


def _path_spec(spec: str):
    name, _, arg = spec.partition(":")
    if name == "weierstrass":
        N = int(arg or 6)
        return lambda t: hoelder.weierstrass(t, N)
    if name == "identity":
        return lambda t: np.asarray(t, float)
    if name == "constant":
        c = float(arg)
        return lambda t: np.full_like(np.asarray(t, float), c)
    c = curves.load_curve(spec)
    return np.asarray(c.points[:, 0])


@command("seminorm", ("hoelder_seminorm",), "lower bound for the beta-Hölder seminorm", _opt("--budget", type=int, default=10000))
def cmd_seminorm(ctx: Context) -> int:
    args = ctx.args
    beta = args.beta if args.beta is not None else 1.0
    spec = args.map or "weierstrass:6"
    if spec.partition(":")[0] in ("weierstrass", "identity", "constant"):
        fn = _path_spec(spec)
        est = hoelder.hoelder_seminorm(fn, beta, args.budget, lower=[0.0], upper=[1.0], seed=args.seed)
    else:
        f = _base_map(args, 2)
        est = hoelder.hoelder_seminorm(f, beta, args.budget, seed=args.seed)
    ctx.summary.update(seminorm=est.seminorm, beta=beta, pairs=est.pairs, separation_decades=est.separation_decades, note="lower bound")
    ctx.summary["line"] = f"[f]_{fmt(beta)} >= {est.seminorm:.6g} over {est.pairs} pairs"
    return EXIT_OK


@command(
    "young",
    ("young_integral",),
    "Riemann-Stieltjes sums on dyadic partitions",
    _multi(
        _opt("--f", default="weierstrass:6"),
        _opt("--g", default="weierstrass:6"),
        _opt("--levels", default="4..14"),
        _opt("--alpha", type=float, default=2.0 / 3.0),
        _opt("--tag", default="mid", choices=["mid", "left"]),
    ),
)
def cmd_young(ctx: Context) -> int:
    args = ctx.args
    beta = args.beta if args.beta is not None else 2.0 / 3.0
    res = hoelder.young_integral(_path_spec(args.f), _path_spec(args.g), parse_levels(args.levels), alpha=args.alpha, beta=beta, tag=args.tag)
    rows = [[L, s, (res.deltas[i - 1] if i else "")] for i, (L, s) in enumerate(zip(res.levels, res.sums))]
    ctx.write_csv("young.csv", ["level", "sum", "delta"], rows)
    ctx.summary.update(value=res.value, sums=res.sums, deltas=res.deltas, ratio_bound=res.ratio_bound, tag=res.tag)
    ctx.summary["line"] = f"integral {res.value!r} at level {res.levels[-1]}"
    return EXIT_OK


@command("weierstrass", ("weierstrass",), "partial sums of the lacunary cosine series", _multi(_opt("--N", type=int, default=6), _opt("--y"), _opt("--points", type=int, default=1025)))
def cmd_weierstrass(ctx: Context) -> int:
    args = ctx.args
    y = parse_vector(args.y) if args.y else np.linspace(0.0, 1.0, args.points)
    v = hoelder.weierstrass(y, args.N)
    ctx.write_csv("weierstrass.csv", ["y", "value"], zip(y, v))
    ctx.summary.update(N=args.N, tail_bound=hoelder.weierstrass_tail_bound(args.N), count=int(y.size), max=float(np.max(v)), min=float(np.min(v)))
    ctx.summary["line"] = fmt_vec(v) if y.size <= 8 else f"{y.size} values written"
    return EXIT_OK


@command(
    "filiform-generator",
    ("contact_generator_check",),
    "constraints and Cartan residual of a filiform contact generator",
    _multi(_opt("--p4", default="x3 + x1*x2"), _opt("--p2", default=None), _opt("--h", type=float, default=1e-2)),
)
def cmd_filiform(ctx: Context) -> int:
    args = ctx.args
    p4 = parse_field(args.p4)
    p2 = parse_field(args.p2) if args.p2 else None
    rep = lifting.contact_generator_check(p4, p2, h=args.h)
    ctx.summary.update(constraints=rep.constraint_residuals, violated=rep.violated, cartan_residual=rep.cartan_residual, lie_derivative_max=rep.lie_derivative_max, h=rep.h, passed=rep.passed)
    if rep.violated:
        ctx.summary["line"] = "violated: " + ", ".join(rep.violated)
        return EXIT_VALIDATION
    ctx.summary["line"] = f"constraints hold; Cartan residual {rep.cartan_residual:.3g} at h={fmt(args.h)}"
    return EXIT_OK if rep.passed else EXIT_VALIDATION


# parser ----------------------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--group")
    p.add_argument("--extension")
    p.add_argument("--map")
    p.add_argument("--curve")
    p.add_argument("--eps", type=float)
    p.add_argument("--eps-grid")
    p.add_argument("--beta", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=DEFAULT_OUT)
    p.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION, help="grid cells per axis for named maps")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="carnotlift", description="Carnot group arithmetic, contact lifting and Hölder experiments")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, (_, ops, extra, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        _add_common(sp)
        if extra is not None:
            extra(sp)
    return parser


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        build_parser().print_help()
        return EXIT_OK if argv else EXIT_USAGE
    if argv[0] not in COMMANDS:
        print(f"carnotlift: unknown subcommand {argv[0]!r}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"carnotlift {argv[0]}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.seed < 0 or args.seed >= 2**64:
        print("carnotlift: --seed must be a 64-bit unsigned integer", file=sys.stderr)
        return EXIT_USAGE
    out = Path(os.environ.get("CARNOT_LIFT_OUT") or args.out)
    ctx = Context(args.command, args, out)
    handler = COMMANDS[args.command][0]
    try:
        code = handler(ctx)
    except UsageError as exc:
        print(f"carnotlift {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NotLiftableError as exc:
        if exc.witness_loop is not None:
            _write_witness(ctx, exc.witness_loop)
        ctx.summary.update(error=str(exc), witness_loop=exc.witness_loop, witness_defect=exc.defect)
        ctx.summary["line"] = str(exc)
        code = EXIT_NOT_LIFTABLE
    except (ValidationError, CheckFailed, DegeneracyError, ChartError, StructuralError) as exc:
        ctx.summary.update(error=f"{type(exc).__name__}: {exc}", witness=getattr(exc, "witness", None))
        ctx.summary["line"] = f"{type(exc).__name__}: {exc}"
        code = EXIT_VALIDATION
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"carnotlift {args.command}: malformed input: {exc}", file=sys.stderr)
        return EXIT_DATA
    manifest = {
        "command": args.command,
        "inputs": {k: getattr(args, k) for k in ("group", "extension", "map", "curve") if getattr(args, k, None)},
        "parameters": {k: v for k, v in sorted(vars(args).items()) if k not in ("command", "out", "group", "extension", "map", "curve")},
        "seed": args.seed,
    }
    summary = {"manifest": manifest, "exit_code": code, "artifacts": ctx.artifacts, **ctx.summary}
    if args.command in ("decay-experiment",):
        summary["kernel_note"] = hoelder.KERNEL_NOTE
    ctx.path("summary.json").write_text(json.dumps(_jsonable(summary), indent=1, sort_keys=True) + "\n")
    print(ctx.summary.get("line", args.command))
    return code


def main() -> None:
    sys.exit(run())
