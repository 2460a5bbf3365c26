"""Approximate minimizer recovery from an optimal moment vector.

The conditional barycenter of the occupation measure is fitted with a
polynomial ansatz per component by solving the normal equations of the
L2 regression of y against x-monomials, all of whose coefficients are
moments already present in the solution vector.  The recovered field is then
re-evaluated through the quasiconvexified objective by midpoint quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import SolverError, ValidationError
from .moments import MomentRelaxation, ProblemSpec, VariableScaling
from .poly import Polynomial, VariableSpace, monomials_up_to


@dataclass(frozen=True)
class DeformationField:
    """Polynomial deformation components over the x block of the domain box."""

    components: tuple[Polynomial, ...]
    box: tuple[tuple[float, float], ...]
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        space = self.components[0].space
        n = space.n
        xblock = set(range(n))
        for j, p in enumerate(self.components):
            if p.space != space:
                raise ValidationError("components live in different spaces")
            if not p.variables_used() <= xblock:
                raise ValidationError(f"component {j} must depend on x only")

    @property
    def n(self) -> int:
        return self.components[0].space.n

    @property
    def space(self) -> VariableSpace:
        return self.components[0].space

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        point = np.zeros(self.space.arity)
        point[:self.n] = x
        return np.array([p.evaluate(point) for p in self.components])

    def gradient_polynomials(self) -> list[list[Polynomial]]:
        return [[p.differentiate(i) for i in range(self.n)]
                for p in self.components]

    def gradient_at(self, x: np.ndarray,
                    grads: list[list[Polynomial]] | None = None) -> np.ndarray:
        grads = grads or self.gradient_polynomials()
        point = np.zeros(self.space.arity)
        point[:self.n] = x
        return np.array([[g.evaluate(point) for g in row] for row in grads])


def _x_monomials(n: int, d: int) -> list[tuple[int, ...]]:
    return monomials_up_to(n, d)


def barycenter(z: np.ndarray, basis, spec: ProblemSpec, d: int | None = None,
               scaling: VariableScaling | None = None,
               regularization: float = 1e-12) -> DeformationField:
    """Fit the conditional barycenter with a degree-d polynomial per component.

    Solves (integral of phi phi^T dmu) c_j = integral of phi y_j dmu, where
    phi collects the x-monomials of degree <= d; every entry of the system is
    a moment contained in z.  Gram factorization is Cholesky with a small
    diagonal shift; irreparable singularity raises with the conditioning cited.
    """
    space = spec.space
    n = spec.n
    scaling = scaling or VariableScaling.identity(n)
    d = d if d is not None else basis.order
    if d < 0:
        raise ValidationError("ansatz degree must be nonnegative")
    xmons = _x_monomials(n, d)
    nb = len(xmons)

    def pos_of(xalpha, yj=None):
        expo = [0] * space.arity
        expo[:n] = xalpha
        if yj is not None:
            expo[space.y(yj)] += 1
        return basis.position(tuple(expo))

    gram = np.zeros((nb, nb))
    for a in range(nb):
        for b in range(a, nb):
            s = tuple(u + v for u, v in zip(xmons[a], xmons[b]))
            gram[a, b] = gram[b, a] = z[pos_of(s)]

    shift = regularization * max(1.0, float(np.max(np.diag(gram))))
    try:
        chol = sla.cho_factor(gram + shift * np.eye(nb), lower=True)
    except sla.LinAlgError as exc:
        cond = float(np.linalg.cond(gram))
        raise SolverError(
            f"barycenter Gram matrix is singular beyond regularization "
            f"(condition number {cond:.3e})") from exc

    comps = []
    yscale = scaling.yz_scale
    for j in range(n):
        rhs = np.array([z[pos_of(xmons[a], yj=j)] for a in range(nb)]) * yscale
        coef = sla.cho_solve(chol, rhs)
        # polynomial in the scaled x variables, then back to original x
        terms = {}
        for a, xalpha in enumerate(xmons):
            if coef[a] != 0.0:
                expo = [0] * space.arity
                expo[:n] = xalpha
                terms[tuple(expo)] = float(coef[a])
        p_scaled = Polynomial(space, terms)
        back = scaling.scaled_from_original(space)
        comps.append(p_scaled.compose({space.x(i): back[space.x(i)]
                                       for i in range(n)}))
    return DeformationField(
        components=tuple(comps), box=spec.box,
        provenance={"relaxation_order": basis.order, "extraction_degree": d})


def barycenter_from_relaxation(z: np.ndarray, relax: MomentRelaxation,
                               d: int | None = None) -> DeformationField:
    return barycenter(z, relax.basis, relax.spec, d=d, scaling=relax.scaling)


def quasiconvex_objective(fld: DeformationField,
                          envelope_fn: Callable[[np.ndarray], float],
                          grid: tuple[int, int] = (80, 80)) -> float:
    """Midpoint-rule integral of W_quasi(grad field) over the domain box."""
    if fld.n != 2:
        raise ValidationError("quadrature grid is two-dimensional")
    nx, ny = grid
    (lox, hix), (loy, hiy) = fld.box
    grads = fld.gradient_polynomials()
    total = 0.0
    for ii in range(nx):
        xv = lox + (ii + 0.5) / nx * (hix - lox)
        for jj in range(ny):
            yv = loy + (jj + 0.5) / ny * (hiy - loy)
            total += envelope_fn(fld.gradient_at(np.array([xv, yv]), grads))
    area = (hix - lox) * (hiy - loy)
    return total / (nx * ny) * area


def wireframe(fld: DeformationField, lines: int = 7, pts: int = 80) -> np.ndarray:
    """Reference wireframe points and their images under the field.

    Rows: (line_id, t, x1, x2, y1, y2) where t parametrizes each of the
    `lines` horizontal then `lines` vertical grid lines with `pts` samples.
    """
    if lines < 2 or pts < 2:
        raise ValidationError("wireframe needs at least 2 lines and 2 points")
    (lox, hix), (loy, hiy) = fld.box
    rows = []
    line_id = 0
    for k in range(lines):  # horizontal lines: x2 fixed
        x2v = loy + k / (lines - 1) * (hiy - loy)
        for t in range(pts):
            x1v = lox + t / (pts - 1) * (hix - lox)
            img = fld.evaluate(np.array([x1v, x2v]))
            rows.append((line_id, t / (pts - 1), x1v, x2v, img[0], img[1]))
        line_id += 1
    for k in range(lines):  # vertical lines: x1 fixed
        x1v = lox + k / (lines - 1) * (hix - lox)
        for t in range(pts):
            x2v = loy + t / (pts - 1) * (hiy - loy)
            img = fld.evaluate(np.array([x1v, x2v]))
            rows.append((line_id, t / (pts - 1), x1v, x2v, img[0], img[1]))
        line_id += 1
    return np.array(rows)


def boundary_trace_error(fld: DeformationField, spec: ProblemSpec,
                         per_edge: int = 200) -> float:
    """Sup-norm mismatch between the field and the boundary data on the facets."""
    worst = 0.0
    for x in spec.boundary_samples(per_edge):
        worst = max(worst, float(np.max(np.abs(
            fld.evaluate(x) - spec.boundary_values_at(x)))))
    return worst
