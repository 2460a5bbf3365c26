"""Pointwise quasiconvex envelopes for strain-convex stored energies.

Two routes compute the envelope value at a deformation gradient F:

* the projection program  inf { wtilde(F^T F + P) : P positive semidefinite },
  solved as one small linear SDP after lifting the quadratic objective into an
  epigraph variable with a Schur-complement block;
* the closed-form spectral truncation, which is exact for the particular
  density |F^T F - I|^2 and serves as an independent oracle for the first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import sdp
from .energy import EnergyDensity, constant_hessian_matrix, strain_coords
from .errors import SolverError, UnsupportedEnergyError, ValidationError
from .poly import Polynomial


@dataclass(frozen=True)
class EnvelopeQuery:
    F: np.ndarray
    energy: EnergyDensity
    tol: float = 1e-8

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        if F.shape != (self.energy.n, self.energy.n):
            raise ValidationError(
                f"F must be {self.energy.n}x{self.energy.n}, got {F.shape}")
        if not np.all(np.isfinite(F)):
            raise ValidationError("F must be finite")
        object.__setattr__(self, "F", F)
        if self.tol <= 0:
            raise ValidationError("tolerance must be positive")


@dataclass(frozen=True)
class ProjectionResult:
    value: float
    P_star: np.ndarray
    solution: sdp.Solution


def quadratic_parts(wtilde: Polynomial):
    """Split a quadratic strain density into (alpha, beta, Gamma):
    wtilde(u) = alpha + beta.u + u.Gamma.u over the strain coordinates."""
    if wtilde.degree > 2:
        raise UnsupportedEnergyError(
            "the projection SDP lift requires a quadratic strain density; "
            "use the moment relaxation route for higher-degree models")
    s = wtilde.space.arity
    alpha = 0.0
    beta = np.zeros(s)
    gamma = np.zeros((s, s))
    for expo, coef in wtilde.term_map().items():
        nz = [(i, e) for i, e in enumerate(expo) if e]
        total = sum(e for _, e in nz)
        if total == 0:
            alpha = coef
        elif total == 1:
            beta[nz[0][0]] = coef
        elif len(nz) == 1:  # u_i^2
            gamma[nz[0][0], nz[0][0]] += coef
        else:  # u_i u_j
            i, j = nz[0][0], nz[1][0]
            gamma[i, j] += coef / 2.0
            gamma[j, i] += coef / 2.0
    return alpha, beta, gamma


def _psd_factor(gamma: np.ndarray, tol: float) -> np.ndarray:
    """L with L^T L = gamma (rows may be fewer than s for semidefinite gamma).

    Pivoted Cholesky first; an eigenvalue square root covers the semidefinite
    fallback.  A negative eigenvalue beyond tolerance refuses the model.
    """
    s = gamma.shape[0]
    try:
        c, piv, rank, info = sla.lapack.dpstrf(gamma, lower=0)
        if info >= 0:
            L = np.triu(c)[:rank]
            perm = np.argsort(piv - 1)
            return L[:, perm]
    except Exception:  # noqa: BLE001 - fall through to the eigenvalue route
        pass
    w, v = np.linalg.eigh(gamma)
    if w[0] < -tol * max(1.0, abs(w[-1])):
        raise UnsupportedEnergyError(
            f"strain density is not convex: Hessian eigenvalue {w[0]:.3e}")
    keep = w > tol * max(1.0, abs(w[-1]))
    return (v[:, keep] * np.sqrt(w[keep])).T


def project_envelope(q: EnvelopeQuery,
                     opts: sdp.SolverOptions | None = None) -> ProjectionResult:
    """Envelope value by the semidefinite projection program.

    The strain density must be quadratic with a positive semidefinite Hessian
    (the certified scope of the formula here); other SOS-convex models go
    through the moment relaxation instead.
    """
    energy = q.energy
    n = energy.n
    const_h = constant_hessian_matrix(energy.wtilde)
    if const_h is None:
        raise UnsupportedEnergyError(
            "projection SDP supports quadratic strain densities; "
            "for higher-degree SOS-convex models use the order-r_min moment "
            "relaxation with linear boundary data")
    if np.linalg.eigvalsh(const_h)[0] < -1e-10 * max(1.0, abs(const_h).max()):
        raise UnsupportedEnergyError(
            "strain density is not convex; the projection formula is not certified")

    alpha, beta, gamma = quadratic_parts(energy.wtilde)
    coords = strain_coords(n)
    s = len(coords)
    u0 = np.array([(q.F.T @ q.F)[i, j] for i, j in coords])
    L = _psd_factor(gamma, 1e-12)
    rank = L.shape[0]

    # variables: p (s entries of P in strain ordering) then the epigraph t
    m = s + 1
    c = np.zeros(m)
    c[:s] = beta
    c[s] = 1.0

    blocks = []
    # P itself must be PSD (off-diagonal coordinates appear mirrored)
    kidx, rows, cols, vals = [], [], [], []
    for k, (i, j) in enumerate(coords):
        kidx.append(k); rows.append(i); cols.append(j); vals.append(1.0)
        if i != j:
            kidx.append(k); rows.append(j); cols.append(i); vals.append(1.0)
    blocks.append(sdp.PSDBlock.from_entries(n, np.zeros((n, n)),
                                            kidx, rows, cols, vals, m))
    # Schur lift: [[I_rank, L u], [u^T L^T, t]] >= 0  <=>  t >= |L u|^2
    side = rank + 1
    const = np.zeros((side, side))
    const[:rank, :rank] = np.eye(rank)
    lu0 = L @ u0
    const[:rank, side - 1] = lu0
    const[side - 1, :rank] = lu0
    kidx, rows, cols, vals = [], [], [], []
    for r_ in range(rank):
        for k in range(s):
            if L[r_, k] != 0.0:
                kidx.append(k); rows.append(r_); cols.append(side - 1); vals.append(L[r_, k])
                kidx.append(k); rows.append(side - 1); cols.append(r_); vals.append(L[r_, k])
    kidx.append(s); rows.append(side - 1); cols.append(side - 1); vals.append(1.0)
    blocks.append(sdp.PSDBlock.from_entries(side, const, kidx, rows, cols, vals, m))

    prog = sdp.ConicProgram(m=m, c=c, blocks=blocks)
    sol = sdp.solve(prog, opts or sdp.SolverOptions(tol_feas=q.tol, tol_gap=q.tol))
    if sol.status != "optimal":
        raise SolverError(f"projection SDP did not reach optimality: {sol.status} "
                          f"({sol.detail})")
    P = np.zeros((n, n))
    for k, (i, j) in enumerate(coords):
        P[i, j] = P[j, i] = sol.z[k]
    value = alpha + float(beta @ (u0 + sol.z[:s])) + float(sol.z[s])
    return ProjectionResult(value=value, P_star=P, solution=sol)


def spectral_truncation_envelope(F: np.ndarray) -> float:
    """Closed-form envelope of |F^T F - I_2|^2 by spectral truncation.

    The squared singular values are taken from the symmetric eigensolve of
    F^T F; only their excess over 1 contributes.
    """
    F = np.asarray(F, dtype=float)
    if F.shape != (2, 2):
        raise ValidationError("the spectral truncation formula is for 2x2 gradients")
    ev = np.linalg.eigvalsh(F.T @ F)
    return float(sum(max(e - 1.0, 0.0) ** 2 for e in ev))


def is_spectral_oracle_energy(energy: EnergyDensity) -> bool:
    """True when the energy is exactly |F^T F - I_2|^2 (coefficient match)."""
    if energy.n != 2:
        return False
    from .energy import svk_energy
    return energy.wtilde == svk_energy(0.0, 4.0).wtilde


def envelope_value(F: np.ndarray, energy: EnergyDensity,
                   method: str = "auto", tol: float = 1e-8) -> float:
    """Dispatch to the spectral oracle or the projection SDP."""
    if method not in ("auto", "spectral", "projection"):
        raise ValidationError(f"unknown envelope method {method!r}")
    if method == "spectral" or (method == "auto" and is_spectral_oracle_energy(energy)):
        if not is_spectral_oracle_energy(energy):
            raise UnsupportedEnergyError(
                "spectral truncation applies only to the zero-Poisson density "
                "|F^T F - I|^2; use --method projection")
        return spectral_truncation_envelope(F)
    return project_envelope(EnvelopeQuery(F=np.asarray(F, float), energy=energy,
                                          tol=tol)).value


def envelope_surface(energy: EnergyDensity, s1_grid, s2_grid,
                     method: str = "auto") -> np.ndarray:
    """Rows (s1, s2, W, W_quasi) over a singular-value grid.

    Gradients are evaluated at diag(s1, s2); for the isotropic models covered
    here the envelope depends on the singular values only.
    """
    s1_grid = np.asarray(s1_grid, dtype=float)
    s2_grid = np.asarray(s2_grid, dtype=float)
    if np.any(s1_grid < 0) or np.any(s2_grid < 0):
        raise ValidationError("singular values must be nonnegative")
    rows = []
    for s1 in s1_grid:
        for s2 in s2_grid:
            F = np.diag([s1, s2])
            rows.append((s1, s2, energy.w_at(F), envelope_value(F, energy, method)))
    return np.array(rows)
