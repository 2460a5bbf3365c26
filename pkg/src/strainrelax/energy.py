"""Stored-energy densities that are frame indifferent and convex in the strain.

A model is given by a reduced density wtilde(C) over the independent entries
of the symmetric strain C, together with its composition w(Z) = wtilde(Z^T Z)
over the deformation-gradient block.  Constructors cover the isotropic
Saint Venant-Kirchhoff family and quadratic anisotropic stiffness forms; the
checks validate the modelling assumptions (frame indifference, SOS convexity
of wtilde, two-sided growth) numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import UnsupportedEnergyError, ValidationError
from .poly import CoordSpace, Polynomial, VariableSpace


def strain_coords(n: int) -> list[tuple[int, int]]:
    """(i, j) pairs of the independent entries of symmetric C: diagonal first."""
    pairs = [(i, i) for i in range(n)]
    pairs += [(i, j) for i in range(n) for j in range(i + 1, n)]
    return pairs


def strain_space(n: int) -> CoordSpace:
    names = tuple(f"C{i + 1}{j + 1}" for i, j in strain_coords(n))
    return CoordSpace(names)


def strain_substitution(n: int) -> dict[int, Polynomial]:
    """Substitution C_ij := (Z^T Z)_ij mapping strain coords into the Z block."""
    space = VariableSpace(n)
    subs: dict[int, Polynomial] = {}
    for k, (i, j) in enumerate(strain_coords(n)):
        acc = Polynomial.zero(space)
        for row in range(n):
            acc = acc + (Polynomial.variable(space, space.z(row, i))
                         * Polynomial.variable(space, space.z(row, j)))
        subs[k] = acc
    return subs


def compose_with_strain(wtilde: Polynomial, n: int) -> Polynomial:
    """w(Z) = wtilde(Z^T Z): composition of the reduced density with C = Z^T Z."""
    return wtilde.compose(strain_substitution(n), space=VariableSpace(n))


@dataclass(frozen=True)
class StiffnessForm:
    """Voigt stiffness data for quadratic strain energies (n = 2).

    D acts on a(F) = (X11, X22, 2*X12) with X = F^T F - I.  For isotropic
    construction the Lame parameters are kept and D is the standard plane
    stiffness matrix [[lam+2mu, lam, 0], [lam, lam+2mu, 0], [0, 0, mu]].
    """

    D: np.ndarray
    lam: float | None = None
    mu: float | None = None

    def __post_init__(self):
        D = np.asarray(self.D, dtype=float)
        if D.shape != (3, 3):
            raise ValidationError(f"stiffness matrix must be 3x3, got {D.shape}")
        if not np.allclose(D, D.T, atol=1e-12):
            raise ValidationError("stiffness matrix must be symmetric")
        object.__setattr__(self, "D", D)

    @property
    def nu(self) -> float | None:
        """Poisson ratio lam / (2 (lam + mu)) for isotropic forms."""
        if self.lam is None or self.mu is None:
            return None
        return self.lam / (2.0 * (self.lam + self.mu))

    @classmethod
    def isotropic(cls, lam: float, mu: float) -> "StiffnessForm":
        D = np.array([[lam + 2 * mu, lam, 0.0],
                      [lam, lam + 2 * mu, 0.0],
                      [0.0, 0.0, mu]])
        return cls(D=D, lam=lam, mu=mu)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.D)[0])


@dataclass(frozen=True)
class EnergyDensity:
    """A stored energy w(Z) = wtilde(Z^T Z) with the strain density attached.

    The construction invariant w = wtilde composed with C = Z^T Z holds for
    every public constructor; tests may build mismatched instances directly
    to exercise the validators.
    """

    n: int
    wtilde: Polynomial
    w: Polynomial
    p_growth: int
    kind: str = "custom"
    stiffness: StiffnessForm | None = None

    @property
    def space(self) -> VariableSpace:
        return VariableSpace(self.n)

    def w_at(self, F: np.ndarray) -> float:
        """Evaluate w at a deformation gradient matrix."""
        F = np.asarray(F, dtype=float)
        point = np.zeros(self.space.arity)
        for j in range(self.n):
            for i in range(self.n):
                point[self.space.z(j, i)] = F[j, i]
        return self.w.evaluate(point)

    def wtilde_at(self, C: np.ndarray) -> float:
        """Evaluate wtilde at a symmetric strain matrix."""
        C = np.asarray(C, dtype=float)
        point = [C[i, j] for i, j in strain_coords(self.n)]
        return self.wtilde.evaluate(point)


def svk_energy(lam: float, mu: float, n: int = 2) -> EnergyDensity:
    """Saint Venant-Kirchhoff density (lam/2) tr(E)^2 + mu tr(E^2), E = (C-I)/2."""
    if lam < 0 or mu < 0:
        raise ValidationError(f"Lame parameters must be nonnegative, got ({lam}, {mu})")
    if lam == 0 and mu == 0:
        raise ValidationError("Lame parameters cannot both vanish")
    sp = strain_space(n)
    coords = strain_coords(n)
    pos = {pair: k for k, pair in enumerate(coords)}

    def entry(i: int, j: int) -> Polynomial:
        key = (i, j) if i <= j else (j, i)
        p = Polynomial.variable(sp, pos[key])
        if i == j:
            p = p - 1.0
        return p.scale(0.5)  # E = (C - I)/2

    tr_e = Polynomial.zero(sp)
    for i in range(n):
        tr_e = tr_e + entry(i, i)
    tr_e2 = Polynomial.zero(sp)
    for i in range(n):
        for j in range(n):
            tr_e2 = tr_e2 + entry(i, j) * entry(j, i)
    wtilde = (tr_e * tr_e).scale(lam / 2.0) + tr_e2.scale(mu)
    w = compose_with_strain(wtilde, n)
    stiff = StiffnessForm.isotropic(lam, mu) if n == 2 else None
    return EnergyDensity(n=n, wtilde=wtilde, w=w, p_growth=w.degree,
                         kind="svk", stiffness=stiff)


def anisotropic_energy(D, n: int = 2) -> EnergyDensity:
    """Quadratic density a(F)^T D a(F), a = (X11, X22, 2 X12), X = F^T F - I."""
    if n != 2:
        raise ValidationError("the Voigt stiffness form is implemented for n = 2")
    stiff = D if isinstance(D, StiffnessForm) else StiffnessForm(D=np.asarray(D, float))
    w_eig = np.linalg.eigvalsh(stiff.D)
    if w_eig[0] <= 1e-10:
        raise ValidationError(
            f"stiffness matrix must be positive definite; smallest eigenvalue {w_eig[0]:.3e}")
    sp = strain_space(2)
    c11 = Polynomial.variable(sp, 0)
    c22 = Polynomial.variable(sp, 1)
    c12 = Polynomial.variable(sp, 2)
    a = [c11 - 1.0, c22 - 1.0, c12.scale(2.0)]
    wtilde = Polynomial.zero(sp)
    for p in range(3):
        for q in range(3):
            coef = stiff.D[p, q]
            if coef != 0.0:
                wtilde = wtilde + (a[p] * a[q]).scale(coef)
    w = compose_with_strain(wtilde, 2)
    return EnergyDensity(n=2, wtilde=wtilde, w=w, p_growth=w.degree,
                         kind="anisotropic", stiffness=stiff)


def custom_energy(wtilde: Polynomial, n: int) -> EnergyDensity:
    """Wrap an arbitrary strain density; w is derived by composition."""
    if wtilde.space != strain_space(n):
        raise ValidationError("wtilde must live in the strain coordinate space")
    w = compose_with_strain(wtilde, n)
    return EnergyDensity(n=n, wtilde=wtilde, w=w, p_growth=w.degree, kind="custom")


# --------------------------------------------------------------------------
# model checks
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckReport:
    passed: bool
    max_deviation: float
    trials: int
    detail: str = ""


def random_rotation(rng: np.random.Generator, n: int) -> np.ndarray:
    if n == 2:
        t = rng.uniform(0.0, 2.0 * math.pi)
        return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    return q * np.sign(np.diag(r))


def check_frame_indifference(e: EnergyDensity, trials: int = 100,
                             seed: int = 0) -> CheckReport:
    """Sample |w(RF) - w(F)| over random rotations R and gradients F."""
    if trials < 1:
        raise ValidationError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    ok = True
    for _ in range(trials):
        F = rng.normal(size=(e.n, e.n))
        R = random_rotation(rng, e.n)
        wf = e.w_at(F)
        dev = abs(e.w_at(R @ F) - wf)
        tol = 1e-9 * (1.0 + abs(wf))
        worst = max(worst, dev)
        if dev > tol:
            ok = False
    return CheckReport(passed=ok, max_deviation=worst, trials=trials)


def check_growth(e: EnergyDensity, samples: int = 200,
                 radii: Sequence[float] = (1.0, 2.0, 4.0, 8.0, 16.0),
                 seed: int = 0) -> "GrowthReport":
    """Randomized falsification of the two-sided p-growth bounds.

    Estimates inf w(F)/|F|^p and sup w(F)/(1 + |F|^p) over spheres of growing
    radius.  A vanishing lower estimate flags a degenerate direction; this is
    a sampling heuristic, not a proof.
    """
    if samples < 1:
        raise ValidationError("samples must be at least 1")
    rng = np.random.default_rng(seed)
    p = e.p_growth
    c1 = math.inf
    c2 = 0.0
    for radius in radii:
        for _ in range(samples):
            d = rng.normal(size=(e.n, e.n))
            F = d / np.linalg.norm(d) * radius
            val = e.w_at(F)
            fro = np.linalg.norm(F)
            c1 = min(c1, val / fro ** p)
            c2 = max(c2, val / (1.0 + fro ** p))
    degenerate = c1 < 1e-8 * max(c2, 1.0)
    return GrowthReport(c1=c1, c2=c2, degenerate=degenerate,
                        samples=samples, radii=tuple(radii))


@dataclass(frozen=True)
class GrowthReport:
    c1: float
    c2: float
    degenerate: bool
    samples: int
    radii: tuple[float, ...]

    @property
    def passed(self) -> bool:
        return not self.degenerate and self.c2 < math.inf


def hessian(wtilde: Polynomial) -> list[list[Polynomial]]:
    """Symmetric matrix of second partials in the strain coordinates."""
    s = wtilde.space.arity
    grads = [wtilde.differentiate(k) for k in range(s)]
    return [[grads[i].differentiate(j) for j in range(s)] for i in range(s)]


@dataclass(frozen=True)
class SOSCertificate:
    status: str  # "certified" | "refuted" | "indeterminate"
    detail: str = ""
    eigenvalues: np.ndarray | None = None
    gram: np.ndarray | None = None
    gram_basis: tuple = field(default=())

    @property
    def certified(self) -> bool:
        return self.status == "certified"


def constant_hessian_matrix(wtilde: Polynomial) -> np.ndarray | None:
    """The Hessian as a float matrix when wtilde is quadratic, else None."""
    if wtilde.degree > 2:
        return None
    H = hessian(wtilde)
    s = len(H)
    out = np.zeros((s, s))
    zero_alpha = (0,) * wtilde.space.arity
    for i in range(s):
        for j in range(s):
            out[i, j] = H[i][j].coefficient(zero_alpha)
    return out


def check_sos_convexity(wtilde: Polynomial, tol: float = 1e-10) -> SOSCertificate:
    """Certify that the Hessian of wtilde admits an SOS representation.

    Quadratic densities reduce to a PSD eigenvalue test on the constant
    Hessian.  Otherwise a Gram feasibility SDP for v^T H(C) v as an SOS in
    (C, v) runs on the conic solver; solver breakdown yields "indeterminate"
    rather than a refutation.
    """
    const = constant_hessian_matrix(wtilde)
    if const is not None:
        eigs = np.linalg.eigvalsh(const)
        if eigs[0] >= -tol:
            return SOSCertificate(status="certified", eigenvalues=eigs,
                                  gram=const, detail="constant Hessian PSD")
        return SOSCertificate(status="refuted", eigenvalues=eigs,
                              detail=f"constant Hessian has eigenvalue {eigs[0]:.3e}")
    return _sos_convexity_gram(wtilde, tol)


def _sos_convexity_gram(wtilde: Polynomial, tol: float) -> SOSCertificate:
    """Gram SDP for v^T H(C) v over the joint (C, v) variables."""
    from . import sdp as sdp_mod

    s = wtilde.space.arity
    H = hessian(wtilde)
    hdeg = max(h.degree for row in H for h in row)
    half = (hdeg + 1) // 2

    # joint space: s strain coords then s direction coords
    names = tuple(wtilde.space.names) + tuple(f"v{i + 1}" for i in range(s))
    joint = CoordSpace(names)

    def lift(p: Polynomial) -> Polynomial:
        return Polynomial(joint, {alpha + (0,) * s: c for alpha, c in p.term_map().items()})

    target = Polynomial.zero(joint)
    for i in range(s):
        for j in range(s):
            vi = Polynomial.variable(joint, s + i)
            vj = Polynomial.variable(joint, s + j)
            target = target + lift(H[i][j]) * vi * vj

    # SOS basis: v_i * (strain monomials of degree <= half)
    from .poly import monomials_up_to
    cmons = monomials_up_to(s, half)
    basis = [alpha + tuple(1 if k == i else 0 for k in range(s))
             for i in range(s) for alpha in cmons]
    nb = len(basis)

    # decision variables: upper triangle of the Gram matrix Q
    pairs = [(a, b) for a in range(nb) for b in range(a, nb)]
    var_of = {p: k for k, p in enumerate(pairs)}
    m = len(pairs)

    # PSD block: Q itself
    kidx, rows, cols, vals = [], [], [], []
    for (a, b), k in var_of.items():
        kidx.append(k); rows.append(a); cols.append(b); vals.append(1.0)
        if a != b:
            kidx.append(k); rows.append(b); cols.append(a); vals.append(1.0)
    block = sdp_mod.PSDBlock.from_entries(nb, np.zeros((nb, nb)),
                                          kidx, rows, cols, vals, m)

    # equalities: sum over (a,b) of Q_ab * basis_a*basis_b matches target coeffs
    coeff_rows: dict[tuple, dict[int, float]] = {}
    for (a, b), k in var_of.items():
        alpha = tuple(u + v for u, v in zip(basis[a], basis[b]))
        mult = 1.0 if a == b else 2.0
        coeff_rows.setdefault(alpha, {})[k] = coeff_rows.setdefault(alpha, {}).get(k, 0.0) + mult
    tmap = target.term_map()
    all_alphas = sorted(set(coeff_rows) | set(tmap), key=lambda t: (sum(t), t))
    import scipy.sparse as sps
    data, ri, ci, rhs = [], [], [], []
    for rno, alpha in enumerate(all_alphas):
        for k, v in coeff_rows.get(alpha, {}).items():
            data.append(v); ri.append(rno); ci.append(k)
        rhs.append(tmap.get(alpha, 0.0))
    E = sps.csr_matrix((data, (ri, ci)), shape=(len(all_alphas), m))

    # minimize trace(Q) to keep the feasibility problem bounded
    c = np.zeros(m)
    for a in range(nb):
        c[var_of[(a, a)]] = 1.0
    prog = sdp_mod.ConicProgram(m=m, c=c, blocks=[block], eq=E, eq_rhs=np.asarray(rhs))
    try:
        sol = sdp_mod.solve(prog, sdp_mod.SolverOptions(tol_feas=1e-9, tol_gap=1e-9))
    except Exception as exc:  # noqa: BLE001
        return SOSCertificate(status="indeterminate", detail=f"solver error: {exc}")
    if sol.status == "optimal":
        Q = np.zeros((nb, nb))
        for (a, b), k in var_of.items():
            Q[a, b] = Q[b, a] = sol.z[k]
        eigs = np.linalg.eigvalsh(Q)
        if eigs[0] >= -1e3 * tol * max(1.0, eigs[-1]):
            return SOSCertificate(status="certified", gram=Q, eigenvalues=eigs,
                                  gram_basis=tuple(basis),
                                  detail="Gram representation found")
        return SOSCertificate(status="indeterminate", eigenvalues=eigs,
                              detail="solution not PSD within tolerance")
    if sol.status == "infeasible-detected":
        return SOSCertificate(status="refuted",
                              detail="no SOS Gram representation in the monomial basis")
    return SOSCertificate(status="indeterminate", detail=f"solver status {sol.status}")


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def energy_to_json_obj(e: EnergyDensity) -> dict:
    obj = {"kind": e.kind, "n": e.n, "wtilde": e.wtilde.to_json_obj()}
    if e.stiffness is not None:
        obj["D"] = [float(v) for v in e.stiffness.D.ravel()]
        if e.stiffness.lam is not None:
            obj["lam"] = e.stiffness.lam
            obj["mu"] = e.stiffness.mu
    return obj


def energy_from_json_obj(obj: dict) -> EnergyDensity:
    kind = obj.get("kind", "custom")
    n = int(obj.get("n", 2))
    if kind == "svk":
        return svk_energy(float(obj["lam"]), float(obj["mu"]), n)
    if kind == "anisotropic":
        D = np.asarray(obj["D"], dtype=float).reshape(3, 3)
        return anisotropic_energy(D, n)
    if kind == "custom":
        wtilde = Polynomial.from_json_obj(strain_space(n), obj["wtilde"])
        return custom_energy(wtilde, n)
    raise ValidationError(f"unknown energy kind {kind!r}")
