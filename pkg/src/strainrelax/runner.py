"""End-to-end hierarchy driver: truncation schedule, solves, extraction.

For each requested order the truncation radius either comes fixed from the
problem file or follows a doubling schedule that stops once the optimum is
insensitive to the bound.  The reported lower bound uses the final (largest)
radius; minimizer extraction uses the first solve of the schedule, whose
tighter support localizes the measure best.
"""

from __future__ import annotations

import datetime as _dt
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__, sdp
from .energy import check_frame_indifference, check_sos_convexity
from .envelope import envelope_value, is_spectral_oracle_energy
from .errors import SolverError, ValidationError
from .extract import (DeformationField, barycenter_from_relaxation,
                      boundary_trace_error, quasiconvex_objective, wireframe)
from .moments import (MomentRelaxation, ProblemSpec, admissible_random_deformation,
                      assemble_relaxation, auto_radius, occupation_moments,
                      r_min, spec_to_json_obj)

RADIUS_REL_TOL = 1e-5
MAX_DOUBLINGS = 6


@dataclass
class PipelineOptions:
    orders: tuple[int, ...] | None = None     # default: spec.orders
    radius: float | None = None               # overrides spec.R
    force_auto_radius: bool = False
    extract_degree: int | None = None         # default: d = r
    tol_feas: float = 1e-8
    tol_gap: float = 1e-7
    max_iters: int = 200
    seed: int = 0
    quad_grid: tuple[int, int] = (80, 80)
    envelope_method: str = "auto"
    wireframe_lines: int = 7
    wireframe_points: int = 80
    parallel_orders: bool = False


@dataclass
class OrderResult:
    order: int
    radius_used: float
    radius_schedule: list[float]
    lower_bound: float
    solver_status: str
    iterations: int
    wall_time: float
    gap_rel: float
    barycentric_value: float | None
    boundary_trace_error: float | None
    extraction_degree: int | None
    field: DeformationField | None = None
    wireframe_rows: np.ndarray | None = None
    relaxation: MomentRelaxation | None = None
    solution: sdp.Solution | None = None

    def to_json_obj(self) -> dict:
        return {
            "order": self.order,
            "R_used": self.radius_used,
            "R_schedule": self.radius_schedule,
            "J_mom": self.lower_bound,
            "solver_status": self.solver_status,
            "iterations": self.iterations,
            "wall_time_s": self.wall_time,
            "relative_gap": self.gap_rel,
            "barycentric_value": self.barycentric_value,
            "boundary_trace_error": self.boundary_trace_error,
            "extraction_degree": self.extraction_degree,
        }


@dataclass
class RunReport:
    spec_echo: dict
    orders: list[OrderResult] = field(default_factory=list)
    envelope_crosscheck: dict | None = None
    monotone: bool = True
    seed: int = 0
    version: str = __version__
    started: str = ""
    finished: str = ""

    def to_json_obj(self) -> dict:
        return {
            "tool": "strainrelax",
            "version": self.version,
            "started": self.started,
            "finished": self.finished,
            "seed": self.seed,
            "spec": self.spec_echo,
            "orders": [o.to_json_obj() for o in self.orders],
            "bounds_nondecreasing": self.monotone,
            "envelope_crosscheck": self.envelope_crosscheck,
        }


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def solve_with_radius_schedule(spec: ProblemSpec, r: int,
                               opts: PipelineOptions):
    """Run the doubling schedule; returns (results, schedule).

    results[i] = (radius, relaxation, solution); the first entry is the
    extraction solve, the last carries the reported bound.
    """
    solver_opts = sdp.SolverOptions(tol_feas=opts.tol_feas, tol_gap=opts.tol_gap,
                                    max_iters=opts.max_iters)
    fixed = opts.radius if opts.radius is not None else (
        None if opts.force_auto_radius else spec.R)
    if fixed is not None:
        relax = assemble_relaxation(spec, r, R=fixed)
        sol = relax.solve(solver_opts)
        return [(fixed, relax, sol)], [fixed]

    radius = auto_radius(spec)
    schedule = [radius]
    relax = assemble_relaxation(spec, r, R=radius)
    sol = relax.solve(solver_opts)
    results = [(radius, relax, sol)]
    for _ in range(MAX_DOUBLINGS):
        radius2 = 2.0 * radius
        relax2 = assemble_relaxation(spec, r, R=radius2)
        sol2 = relax2.solve(solver_opts)
        schedule.append(radius2)
        results.append((radius2, relax2, sol2))
        if sol.status == "optimal" and sol2.status == "optimal" and \
                abs(sol2.obj_primal - sol.obj_primal) \
                <= RADIUS_REL_TOL * (1.0 + abs(sol2.obj_primal)):
            break
        radius, sol = radius2, sol2
    return results, schedule


def run_order(spec: ProblemSpec, r: int, opts: PipelineOptions) -> OrderResult:
    t0 = time.monotonic()
    results, schedule = solve_with_radius_schedule(spec, r, opts)
    radius_b, relax_b, sol_b = results[-1]     # bound solve
    radius_e, relax_e, sol_e = results[0]      # extraction solve

    if sol_b.status == "infeasible-detected":
        raise ValidationError(
            f"order {r}: the truncated moment problem is infeasible at "
            f"R = {radius_b:.4g}; the truncation radius cannot represent the "
            "boundary data (configuration error)")
    if sol_b.status not in ("optimal",):
        raise SolverError(
            f"order {r}: solver returned {sol_b.status} ({sol_b.detail})")

    bary_val = None
    btrace = None
    fld = None
    wf = None
    d = opts.extract_degree if opts.extract_degree is not None else r
    if sol_e.status == "optimal":
        fld = barycenter_from_relaxation(sol_e.z, relax_e, d=d)
        btrace = boundary_trace_error(fld, spec)
        env = _envelope_oracle(spec, opts)
        if env is not None:
            bary_val = quasiconvex_objective(fld, env, opts.quad_grid)
        wf = wireframe(fld, opts.wireframe_lines, opts.wireframe_points)

    return OrderResult(
        order=r, radius_used=radius_b, radius_schedule=schedule,
        lower_bound=sol_b.obj_primal, solver_status=sol_b.status,
        iterations=sol_b.iterations, wall_time=time.monotonic() - t0,
        gap_rel=sol_b.gap_rel, barycentric_value=bary_val,
        boundary_trace_error=btrace, extraction_degree=d if fld else None,
        field=fld, wireframe_rows=wf, relaxation=relax_b, solution=sol_b)


def _envelope_oracle(spec: ProblemSpec, opts: PipelineOptions):
    method = opts.envelope_method
    energy = spec.energy
    if method == "auto" and energy.wtilde.degree > 2 \
            and not is_spectral_oracle_energy(energy):
        return None
    return lambda F: envelope_value(F, energy, method=method)


def run_pipeline(spec: ProblemSpec, opts: PipelineOptions | None = None) -> RunReport:
    opts = opts or PipelineOptions()
    orders = tuple(opts.orders) if opts.orders else spec.orders
    rmin = r_min(spec)
    for r in orders:
        if r < rmin:
            raise ValidationError(f"order {r} is below the minimal order {rmin}")
    report = RunReport(spec_echo=spec_to_json_obj(spec), seed=opts.seed,
                       started=_now())
    if opts.parallel_orders and len(orders) > 1:
        with ThreadPoolExecutor(max_workers=min(4, len(orders))) as pool:
            results = list(pool.map(lambda r: run_order(spec, r, opts), orders))
    else:
        results = [run_order(spec, r, opts) for r in orders]
    report.orders = results
    for prev, cur in zip(results, results[1:]):
        if cur.lower_bound < prev.lower_bound - 1e-6 * (1 + abs(prev.lower_bound)):
            report.monotone = False
    report.finished = _now()
    return report


# --------------------------------------------------------------------------
# property / verification suite
# --------------------------------------------------------------------------

@dataclass
class VerifyOutcome:
    passed: bool
    checks: dict

    def to_json_obj(self) -> dict:
        return {"passed": self.passed, "checks": self.checks}


def verify_spec(spec: ProblemSpec, seed: int = 0, trials: int = 100,
                oracle_fields: int = 10) -> VerifyOutcome:
    """Property suite: model assumptions, oracle feasibility, solver health."""
    rng = np.random.default_rng(seed)
    checks: dict = {}

    fi = check_frame_indifference(spec.energy, trials=trials, seed=seed)
    checks["frame_indifference"] = {
        "passed": bool(fi.passed), "max_deviation": fi.max_deviation}

    cert = check_sos_convexity(spec.energy.wtilde)
    checks["sos_convexity"] = {"passed": cert.certified, "status": cert.status,
                               "detail": cert.detail}

    sup = spec.boundary_sup()
    radius_ok = spec.R is None or spec.R > sup
    checks["truncation_radius"] = {
        "passed": bool(radius_ok),
        "boundary_sup": sup,
        "R": spec.R,
        "detail": "" if radius_ok else
        f"R = {spec.R} cannot represent boundary data with sup |y| = {sup:.4g} "
        "(the moment problem would be infeasible)"}

    # occupation-moment oracle at the minimal order
    r = r_min(spec)
    worst_row = 0.0
    worst_eig = 0.0
    if radius_ok:
        fields = [admissible_random_deformation(spec, rng) for _ in range(oracle_fields)]
        sup_needed = max(_field_radius(f, spec) for f in fields)
        radius = max(spec.R or 0.0, auto_radius(spec), 1.05 * sup_needed)
        relax = assemble_relaxation(spec, r, R=radius)
        for f in fields:
            z = occupation_moments(f, spec, r, relax.scaling)
            resid = float(np.max(np.abs(relax.program.eq @ z - relax.program.eq_rhs)))
            worst_row = max(worst_row, resid)
            for blk in relax.program.blocks:
                worst_eig = min(worst_eig,
                                float(np.linalg.eigvalsh(blk.apply(z))[0]))
        checks["occupation_oracle"] = {
            "passed": bool(worst_row <= 1e-9 and worst_eig >= -1e-8),
            "max_stokes_residual": worst_row,
            "min_block_eigenvalue": worst_eig,
            "fields": oracle_fields}

    # solver certification on the analytic 2x2 instance
    blk = sdp.PSDBlock.from_entries(2, np.array([[0.0, 1.0], [1.0, 0.0]]),
                                    [0, 1], [0, 1], [0, 1], [1.0, 1.0], 2)
    prog = sdp.ConicProgram(m=2, c=np.array([1.0, 1.0]), blocks=[blk])
    sol = sdp.solve(prog)
    cert_ok = False
    if sol.status == "optimal":
        c2 = sdp.certify(prog, sol)
        cert_ok = c2.passed and abs(sol.obj_primal - 2.0) <= 1e-8
    checks["solver_certification"] = {
        "passed": bool(cert_ok), "objective": sol.obj_primal,
        "status": sol.status}

    passed = all(entry["passed"] for entry in checks.values())
    return VerifyOutcome(passed=passed, checks=checks)


def _field_radius(fields, spec: ProblemSpec, samples: int = 21) -> float:
    """Max of sqrt(|y|^2 + |grad y|^2) on a dense sample of the box."""
    space = spec.space
    grids = [np.linspace(lo, hi, samples) for lo, hi in spec.box]
    worst = 0.0
    grads = [[f.differentiate(i) for i in range(spec.n)] for f in fields]
    import itertools
    for combo in itertools.product(*grids):
        point = np.zeros(space.arity)
        point[:spec.n] = combo
        norm2 = sum(f.evaluate(point) ** 2 for f in fields)
        norm2 += sum(g.evaluate(point) ** 2 for row in grads for g in row)
        worst = max(worst, norm2)
    return float(np.sqrt(worst))
