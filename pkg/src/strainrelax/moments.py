"""Order-r moment relaxation of the occupation-measure formulation.

A stored-energy minimization over deformations y with prescribed boundary
values becomes a linear program over the occupation measure of
x -> (x, y(x), grad y(x)).  Truncating to moments of degree <= 2r gives an
SDP: positive semidefinite moment and localizing matrices over the compact
set  box x { |y|^2 + |Z|^2 <= R^2 },  linear equality rows from the
divergence theorem applied to polynomial test fields, and the energy moments
as the objective.

Assembly works in affinely rescaled variables (box mapped to [-1, 1] per
axis, (y, Z) shrunk by 1/R) so that all tracked moments stay O(volume);
`VariableScaling.identity` disables this for oracle-style exact checks.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

from . import sdp
from .energy import EnergyDensity, energy_from_json_obj, energy_to_json_obj
from .errors import StructuralError, ValidationError
from .poly import (Polynomial, VariableSpace, graded_lex_key, monomials_up_to)


# --------------------------------------------------------------------------
# problem specification
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ProblemSpec:
    """Domain box, boundary deformation, energy model and truncation radius."""

    n: int
    box: tuple[tuple[float, float], ...]
    energy: EnergyDensity
    boundary: tuple[Polynomial, ...]
    R: float | None = None          # None means automatic schedule
    orders: tuple[int, ...] = (2,)

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "boundary", tuple(self.boundary))
        object.__setattr__(self, "orders", tuple(int(r) for r in self.orders))
        if len(box) != self.n:
            raise ValidationError(f"box needs {self.n} axis ranges")
        for lo, hi in box:
            if not hi > lo:
                raise ValidationError(f"degenerate box axis [{lo}, {hi}]")
        if self.energy.n != self.n:
            raise ValidationError("energy dimension differs from problem dimension")
        if len(self.boundary) != self.n:
            raise ValidationError(f"boundary data needs {self.n} components")
        space = self.space
        xblock = set(range(self.n))
        for j, p in enumerate(self.boundary):
            if p.space != space:
                raise ValidationError(f"boundary component {j} lives in a foreign space")
            if not p.variables_used() <= xblock:
                raise ValidationError(f"boundary component {j} must depend on x only")
        if self.R is not None:
            sup = self.boundary_sup()
            if self.R <= sup:
                raise ValidationError(
                    f"truncation radius R = {self.R} cannot represent the boundary "
                    f"data (sup |y_boundary| ~ {sup:.4g}); raise R")

    @property
    def space(self) -> VariableSpace:
        return VariableSpace(self.n)

    def volume(self) -> float:
        return math.prod(hi - lo for lo, hi in self.box)

    def boundary_values_at(self, x: np.ndarray) -> np.ndarray:
        point = np.zeros(self.space.arity)
        point[:self.n] = x
        return np.array([p.evaluate(point) for p in self.boundary])

    def boundary_gradient_at(self, x: np.ndarray) -> np.ndarray:
        point = np.zeros(self.space.arity)
        point[:self.n] = x
        return np.array([[self.boundary[j].differentiate(i).evaluate(point)
                          for i in range(self.n)] for j in range(self.n)])

    def boundary_samples(self, per_edge: int = 64) -> np.ndarray:
        """Points covering all facets of the box."""
        pts = []
        for axis in range(self.n):
            for value in self.box[axis]:
                ranges = [np.linspace(lo, hi, per_edge) for i, (lo, hi)
                          in enumerate(self.box) if i != axis]
                for combo in itertools.product(*ranges):
                    p = list(combo)
                    p.insert(axis, value)
                    pts.append(p)
        return np.asarray(pts)

    def boundary_sup(self, per_edge: int = 128) -> float:
        return max(float(np.linalg.norm(self.boundary_values_at(x)))
                   for x in self.boundary_samples(per_edge))

    def boundary_gradient_sup(self, per_edge: int = 64) -> float:
        return max(float(np.linalg.norm(self.boundary_gradient_at(x)))
                   for x in self.boundary_samples(per_edge))


def r_min(spec: ProblemSpec) -> int:
    """Minimal relaxation order: half-degrees of the energy and constraints."""
    return max((spec.energy.w.degree + 1) // 2, 1)


def auto_radius(spec: ProblemSpec) -> float:
    """Starting truncation radius of the doubling schedule."""
    return 2.0 * (1.0 + spec.boundary_sup())


# --------------------------------------------------------------------------
# variable scaling
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class VariableScaling:
    """Affine substitution x = center + halfwidth * x', y = R y', Z = R Z'."""

    center: tuple[float, ...]
    halfwidth: tuple[float, ...]
    yz_scale: float

    @classmethod
    def identity(cls, n: int) -> "VariableScaling":
        return cls(center=(0.0,) * n, halfwidth=(1.0,) * n, yz_scale=1.0)

    @classmethod
    def for_box(cls, box, R: float) -> "VariableScaling":
        return cls(center=tuple((lo + hi) / 2 for lo, hi in box),
                   halfwidth=tuple((hi - lo) / 2 for lo, hi in box),
                   yz_scale=float(R))

    def is_identity(self) -> bool:
        return (self.yz_scale == 1.0 and all(c == 0.0 for c in self.center)
                and all(h == 1.0 for h in self.halfwidth))

    def original_from_scaled(self, space: VariableSpace) -> dict[int, Polynomial]:
        """Substitution expressing original variables in scaled ones."""
        n = space.n
        subs = {}
        for i in range(n):
            subs[space.x(i)] = (Polynomial.constant(space, self.center[i])
                                + Polynomial.variable(space, space.x(i))
                                * self.halfwidth[i])
        for j in range(n):
            subs[space.y(j)] = Polynomial.variable(space, space.y(j)) * self.yz_scale
        for j in range(n):
            for i in range(n):
                k = space.z(j, i)
                subs[k] = Polynomial.variable(space, k) * self.yz_scale
        return subs

    def scaled_from_original(self, space: VariableSpace) -> dict[int, Polynomial]:
        n = space.n
        subs = {}
        for i in range(n):
            subs[space.x(i)] = (Polynomial.variable(space, space.x(i))
                                - self.center[i]) * (1.0 / self.halfwidth[i])
        for j in range(n):
            subs[space.y(j)] = Polynomial.variable(space, space.y(j)) * (1.0 / self.yz_scale)
        for j in range(n):
            for i in range(n):
                k = space.z(j, i)
                subs[k] = Polynomial.variable(space, k) * (1.0 / self.yz_scale)
        return subs

    def scaled_point(self, space: VariableSpace, x: np.ndarray) -> np.ndarray:
        out = np.zeros(space.arity)
        for i in range(space.n):
            out[i] = (x[i] - self.center[i]) / self.halfwidth[i]
        return out


# --------------------------------------------------------------------------
# monomial basis
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MonomialBasis:
    """Graded-lex monomials of degree <= 2r with exact position lookup."""

    space: VariableSpace
    order: int
    entries: tuple[tuple[int, ...], ...] = field(default=())
    index: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def size(self) -> int:
        return len(self.entries)

    def half_size(self, drop: int = 0) -> int:
        """Number of monomials of degree <= order - drop (a basis prefix)."""
        deg = self.order - drop
        return sum(1 for e in self.entries if sum(e) <= deg)

    def position(self, alpha) -> int:
        return self.index[tuple(alpha)]


def build_basis(space: VariableSpace, r: int) -> MonomialBasis:
    if r < 1:
        raise ValidationError(f"relaxation order must be >= 1, got {r}")
    entries = tuple(monomials_up_to(space.arity, 2 * r))
    index = {e: k for k, e in enumerate(entries)}
    return MonomialBasis(space=space, order=r, entries=entries, index=index)


# --------------------------------------------------------------------------
# divergence and boundary machinery
# --------------------------------------------------------------------------

def divergence(phi: Sequence[Polynomial]) -> Polynomial:
    """Total divergence sum_i (d_x_i phi_i + sum_j d_y_j phi_i * Z_ji)."""
    if not phi:
        raise ValidationError("empty test field")
    space = phi[0].space
    n = space.n
    if len(phi) != n:
        raise ValidationError(f"test field needs {n} components")
    zblock = set(space.blocks[2])
    out = Polynomial.zero(space)
    for i, comp in enumerate(phi):
        if comp.space != space:
            raise ValidationError("test field components live in different spaces")
        if comp.variables_used() & zblock:
            raise ValidationError("test fields may depend on (x, y) only")
        out = out + comp.differentiate(space.x(i))
        for j in range(n):
            out = out + comp.differentiate(space.y(j)) \
                * Polynomial.variable(space, space.z(j, i))
    return out


def boundary_functional(phi: Sequence[Polynomial], spec: ProblemSpec) -> float:
    """Exact facet-integrated boundary pairing of phi with the outward normal.

    Composes y := y_boundary(x) into each component, then integrates over the
    two facets carrying that component's normal direction.
    """
    space = spec.space
    n = spec.n
    subs = {space.y(j): spec.boundary[j] for j in range(n)}
    total = 0.0
    for i in range(n):
        comp = phi[i].compose(subs)
        for is_hi in (True, False):
            value = spec.box[i][1] if is_hi else spec.box[i][0]
            sign = 1.0 if is_hi else -1.0
            total += sign * comp.integrate_edge(i, value, spec.box)
    return total


def _scaled_problem_polys(spec: ProblemSpec, scaling: VariableScaling):
    """Energy polynomial and support constraints in the scaled variables."""
    space = spec.space
    n = spec.n
    w_scaled = spec.energy.w.compose(scaling.original_from_scaled(space))
    gs = []
    if scaling.is_identity():
        for i in range(n):
            lo, hi = spec.box[i]
            xi = Polynomial.variable(space, space.x(i))
            gs.append((xi - lo) * (hi - xi))
        ball = Polynomial.constant(space, float((spec.R or 1.0)) ** 2)
    else:
        for i in range(n):
            xi = Polynomial.variable(space, space.x(i))
            gs.append(Polynomial.constant(space, 1.0) - xi * xi)
        ball = Polynomial.constant(space, 1.0)
    for k in list(space.blocks[1]) + list(space.blocks[2]):
        v = Polynomial.variable(space, k)
        ball = ball - v * v
    gs.append(ball)
    return w_scaled, gs


def stokes_rows(spec: ProblemSpec, r: int,
                scaling: VariableScaling | None = None):
    """Equality rows ell_z(D phi) = b(phi) for phi = b(x, y) e_i, deg b <= 2r-1.

    Returns (rows, rhs) with rows as {moment position: coefficient} maps over
    the order-r basis.  With a scaling attached, test monomials live in the
    scaled (x', y') variables, which spans the same constraint space with far
    better conditioning.
    """
    space = spec.space
    n = spec.n
    scaling = scaling or VariableScaling.identity(n)
    basis = build_basis(space, r)
    xy_vars = list(space.blocks[0]) + list(space.blocks[1])
    hw = scaling.halfwidth
    inv_subs = scaling.scaled_from_original(space)

    rows: list[dict[int, float]] = []
    rhs: list[float] = []
    for i in range(n):
        for bm in monomials_up_to(len(xy_vars), 2 * r - 1):
            expo = [0] * space.arity
            for pos, var in enumerate(xy_vars):
                expo[var] = bm[pos]
            bpoly = Polynomial(space, {tuple(expo): 1.0})
            # scaled divergence of b(x', y') e_i:
            #   (1/h_i) d_x'_i b + sum_j d_y'_j b * Z'_ji
            dphi = bpoly.differentiate(space.x(i)) * (1.0 / hw[i])
            for j in range(n):
                dphi = dphi + bpoly.differentiate(space.y(j)) \
                    * Polynomial.variable(space, space.z(j, i))
            assert dphi.degree <= 2 * r, "test-field degree cap violated"
            row = {}
            for alpha, coef in dphi.term_map().items():
                pos = basis.position(alpha)
                row[pos] = row.get(pos, 0.0) + coef
            # boundary pairing of the scaled monomial: compose the inverse
            # scaling, then y := y_boundary(x), and integrate the two facets
            comp = bpoly.compose(inv_subs)
            phi = [Polynomial.zero(space)] * n
            phi = list(phi)
            phi[i] = comp
            rows.append(row)
            rhs.append(boundary_functional(phi, spec))
    return rows, rhs


def localizing_structure(g: Polynomial, basis: MonomialBasis, r: int):
    """Index table of the localizing matrix of g against the half basis.

    Entry (a, b) of the block is sum over terms (delta, coef) of g of
    coef * z[position(alpha_a + alpha_b + delta)].  Returned as flat entry
    arrays (variable, row, col, value) covering both triangles.
    """
    r_j = (g.degree + 1) // 2
    if g.degree > 2 * r:
        raise ValidationError("localizing polynomial degree exceeds the basis")
    half = [e for e in basis.entries if sum(e) <= r - r_j]
    side = len(half)
    kidx, rows, cols, vals = [], [], [], []
    terms = g.term_map()
    for a in range(side):
        for b in range(a, side):
            prod = tuple(u + v for u, v in zip(half[a], half[b]))
            for delta, coef in terms.items():
                k = basis.position(tuple(u + v for u, v in zip(prod, delta)))
                kidx.append(k); rows.append(a); cols.append(b); vals.append(coef)
                if a != b:
                    kidx.append(k); rows.append(b); cols.append(a); vals.append(coef)
    return side, kidx, rows, cols, vals


@dataclass
class MomentRelaxation:
    """Assembled order-r relaxation, ready for the conic solver."""

    spec: ProblemSpec
    order: int
    radius: float
    basis: MonomialBasis
    scaling: VariableScaling
    program: sdp.ConicProgram
    n_stokes_rows: int
    n_independent_rows: int

    def solve(self, opts: sdp.SolverOptions | None = None) -> sdp.Solution:
        return sdp.solve(self.program, opts)

    def moment_of(self, z: np.ndarray, alpha) -> float:
        """Moment of a scaled-basis monomial from the solution vector."""
        return float(z[self.basis.position(alpha)])

    def mean_gradient(self, z: np.ndarray) -> np.ndarray:
        """ell_z(Z) / volume, mapped back to original variables."""
        space = self.spec.space
        out = np.zeros((self.spec.n, self.spec.n))
        for j in range(self.spec.n):
            for i in range(self.spec.n):
                expo = [0] * space.arity
                expo[space.z(j, i)] = 1
                out[j, i] = self.moment_of(z, expo) * self.scaling.yz_scale
        return out / self.spec.volume()


def assemble_relaxation(spec: ProblemSpec, r: int, R: float | None = None,
                        scale: bool = True,
                        dedup_tol: float = 1e-10) -> MomentRelaxation:
    """Build the order-r moment SDP over the truncated support set.

    Stokes rows are deduplicated by rank-revealing QR so the equality system
    handed to the interior-point solver has full row rank.
    """
    rmin = r_min(spec)
    if r < rmin:
        raise ValidationError(
            f"relaxation order {r} is below the minimal order {rmin} "
            f"(energy degree {spec.energy.w.degree})")
    radius = float(R if R is not None else (spec.R if spec.R is not None
                                            else auto_radius(spec)))
    sup = spec.boundary_sup()
    if radius <= sup:
        raise ValidationError(
            f"truncation radius {radius:.4g} is below the boundary data "
            f"magnitude {sup:.4g}; the moment problem would be infeasible")
    space = spec.space
    scaling = (VariableScaling.for_box(spec.box, radius) if scale
               else VariableScaling.identity(spec.n))
    basis = build_basis(space, r)

    spec_r = spec if (spec.R == radius) else ProblemSpec(
        n=spec.n, box=spec.box, energy=spec.energy, boundary=spec.boundary,
        R=radius, orders=spec.orders)
    w_scaled, gs = _scaled_problem_polys(spec_r, scaling)

    m = basis.size
    c = np.zeros(m)
    for alpha, coef in w_scaled.term_map().items():
        c[basis.position(alpha)] += coef

    blocks = [sdp.PSDBlock.from_entries(
        *_moment_block(Polynomial.constant(space, 1.0), basis, r), m)]
    for g in gs:
        blocks.append(sdp.PSDBlock.from_entries(*_moment_block(g, basis, r), m))

    rows, rhs = stokes_rows(spec_r, r, scaling)
    eq, eq_rhs, kept = _dedup_rows(rows, rhs, m, dedup_tol)

    program = sdp.ConicProgram(m=m, c=c, blocks=blocks, eq=eq, eq_rhs=eq_rhs)
    return MomentRelaxation(spec=spec_r, order=r, radius=radius, basis=basis,
                            scaling=scaling, program=program,
                            n_stokes_rows=len(rows), n_independent_rows=kept)


def _moment_block(g: Polynomial, basis: MonomialBasis, r: int):
    side, kidx, rows, cols, vals = localizing_structure(g, basis, r)
    return side, np.zeros((side, side)), kidx, rows, cols, vals


def _dedup_rows(rows, rhs, m, tol):
    E = np.zeros((len(rows), m))
    for rr, row in enumerate(rows):
        for k, v in row.items():
            E[rr, k] = v
    q, rmat, piv = sla.qr(E.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(rmat))
    if len(diag) == 0 or diag[0] == 0.0:
        raise ValidationError("all Stokes rows vanished")
    rank = int(np.sum(diag > tol * diag[0]))
    keep = np.sort(piv[:rank])
    eq = sps.csr_matrix(E[keep])
    return eq, np.asarray(rhs, dtype=float)[keep], rank


# --------------------------------------------------------------------------
# occupation-moment oracle
# --------------------------------------------------------------------------

def occupation_moments(y: Sequence[Polynomial], spec: ProblemSpec, r: int,
                       scaling: VariableScaling | None = None) -> np.ndarray:
    """Exact moments of the occupation measure of a polynomial deformation.

    z_alpha = integral over the box of b_alpha(x, y(x), grad y(x)) dx, with
    b_alpha read in the scaled variables when a scaling is given.  Serves as
    the feasibility and upper-bound oracle for the relaxation.
    """
    space = spec.space
    n = spec.n
    scaling = scaling or VariableScaling.identity(n)
    if len(y) != n:
        raise ValidationError(f"deformation needs {n} components")
    xblock = set(range(n))
    for comp in y:
        if comp.space != space or not comp.variables_used() <= xblock:
            raise ValidationError("deformation components must be x-only polynomials")
    basis = build_basis(space, r)

    # substitution into scaled basis monomials: x' = (x - c)/h, y' = y(x)/R,
    # Z'_ji = (d y_j / d x_i)/R
    subs = dict(scaling.scaled_from_original(space))
    inv_r = 1.0 / scaling.yz_scale
    for j in range(n):
        subs[space.y(j)] = y[j] * inv_r
        for i in range(n):
            subs[space.z(j, i)] = y[j].differentiate(space.x(i)) * inv_r

    # powers of each substituted variable, built on demand
    powers: dict[tuple[int, int], Polynomial] = {}

    def power(k: int, e: int) -> Polynomial:
        key = (k, e)
        if key not in powers:
            if e == 0:
                powers[key] = Polynomial.constant(space, 1.0)
            else:
                powers[key] = power(k, e - 1) * subs[k]
        return powers[key]

    out = np.zeros(basis.size)
    for pos, alpha in enumerate(basis.entries):
        term = Polynomial.constant(space, 1.0)
        for k, e in enumerate(alpha):
            if e:
                term = term * power(k, e)
        val = term.integrate_box(spec.box)
        out[pos] = val if isinstance(val, float) else float(
            val.coefficient((0,) * space.arity))
    return out


def admissible_random_deformation(spec: ProblemSpec, rng, degree: int = 2,
                                  amplitude: float = 0.3) -> list[Polynomial]:
    """Boundary data plus a random polynomial bubble vanishing on all facets."""
    space = spec.space
    n = spec.n
    bubble = Polynomial.constant(space, 1.0)
    for i in range(n):
        lo, hi = spec.box[i]
        xi = Polynomial.variable(space, space.x(i))
        bubble = bubble * (xi - lo) * (hi - xi)
    out = []
    for j in range(n):
        q = Polynomial.zero(space)
        for alpha in monomials_up_to(n, degree):
            expo = [0] * space.arity
            expo[:n] = alpha
            q = q + Polynomial(space, {tuple(expo): float(rng.normal()) * amplitude})
        out.append(spec.boundary[j] + bubble * q)
    return out


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def spec_to_json_obj(spec: ProblemSpec) -> dict:
    return {
        "n": spec.n,
        "box": [[lo, hi] for lo, hi in spec.box],
        "energy": energy_to_json_obj(spec.energy),
        "boundary": [p.to_json_obj() for p in spec.boundary],
        "R": "auto" if spec.R is None else spec.R,
        "orders": list(spec.orders),
    }


def spec_from_json_obj(obj: dict) -> ProblemSpec:
    try:
        n = int(obj["n"])
        energy = energy_from_json_obj(obj["energy"])
        space = VariableSpace(n)
        boundary = tuple(Polynomial.from_json_obj(space, item)
                         for item in obj["boundary"])
        radius = obj.get("R", "auto")
        radius = None if radius in (None, "auto") else float(radius)
        return ProblemSpec(
            n=n,
            box=tuple((float(lo), float(hi)) for lo, hi in obj["box"]),
            energy=energy,
            boundary=boundary,
            R=radius,
            orders=tuple(int(r) for r in obj.get("orders", [2])),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ValidationError(f"malformed problem file: {exc!r}") from exc


def load_spec(path) -> ProblemSpec:
    with open(path) as f:
        return spec_from_json_obj(json.load(f))


def save_spec(spec: ProblemSpec, path) -> None:
    with open(path, "w") as f:
        json.dump(spec_to_json_obj(spec), f, indent=2)
