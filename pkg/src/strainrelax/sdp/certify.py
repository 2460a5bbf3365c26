"""Independent certification of solver output.

Everything is recomputed from the program data and the returned point; no
solver-internal residuals are trusted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .program import ConicProgram, Solution


@dataclass(frozen=True)
class Certificate:
    passed: bool
    primal_residual: float
    dual_residual: float
    min_block_eig: float
    min_dual_eig: float
    complementarity: float
    gap_abs: float
    gap_rel: float
    weak_duality_ok: bool
    detail: str = ""


def certify(prog: ConicProgram, sol: Solution,
            tol_feas: float = 1e-7, tol_gap: float = 1e-7) -> Certificate:
    """Re-derive feasibility, complementarity and the weak-duality sandwich."""
    if sol.status != "optimal":
        raise ValidationError(
            f"certification requires an optimal solution, got status {sol.status!r}")
    z = np.asarray(sol.z, dtype=float)

    # primal feasibility
    if prog.eq is not None:
        pres = float(np.linalg.norm(prog.eq @ z - prog.eq_rhs)
                     / (1.0 + np.linalg.norm(prog.eq_rhs)))
    else:
        pres = 0.0
    min_eig = np.inf
    blocks = prog.block_values(z)
    for mat in blocks:
        scale = 1.0 + np.linalg.norm(mat)
        min_eig = min(min_eig, float(np.linalg.eigvalsh(mat)[0]) / scale)

    # dual feasibility: c + E^T y - sum_j P_j^T vec(Y_j) = 0, Y_j PSD
    rx = prog.c.copy()
    if prog.eq is not None:
        rx += prog.eq.T @ sol.y_eq
    min_dual = np.inf
    for blk, Y in zip(prog.blocks, sol.cone_duals):
        rx -= blk.adjoint_operator(prog.m) @ np.asarray(Y).ravel()
        min_dual = min(min_dual, float(np.linalg.eigvalsh(Y)[0])
                       / (1.0 + np.linalg.norm(Y)))
    dres = float(np.linalg.norm(rx) / (1.0 + np.linalg.norm(prog.c)))

    # objectives and complementarity
    pobj = float(prog.c @ z)
    dobj = 0.0
    if prog.eq is not None:
        dobj -= float(prog.eq_rhs @ sol.y_eq)
    comp = 0.0
    for blk, mat, Y in zip(prog.blocks, blocks, sol.cone_duals):
        dobj -= float(np.tensordot(blk.const, Y))
        comp = max(comp, abs(float(np.tensordot(mat, Y)))
                   / (1.0 + abs(pobj)))
    gap = pobj - dobj
    relgap = abs(gap) / max(1.0, abs(pobj))
    weak_ok = dobj <= pobj + tol_gap * max(1.0, abs(pobj))

    passed = (pres <= tol_feas and dres <= tol_feas
              and min_eig >= -tol_feas and min_dual >= -tol_feas
              and comp <= 10.0 * tol_gap and relgap <= 10.0 * tol_gap
              and weak_ok)
    detail = "" if passed else "certification thresholds violated"
    return Certificate(passed=passed, primal_residual=pres, dual_residual=dres,
                       min_block_eig=float(min_eig), min_dual_eig=float(min_dual),
                       complementarity=comp, gap_abs=gap, gap_rel=relgap,
                       weak_duality_ok=weak_ok, detail=detail)
