"""Primal-dual interior-point solver for LMI-form SDPs.

Path-following on the homogeneous self-dual embedding with Nesterov-Todd
scaling and a Mehrotra predictor-corrector step.  Equality constraints are
eliminated from the augmented KKT system through the Schur complement of the
scaled block system, with dynamic diagonal regularization.  The method is
deterministic: identical inputs and options reproduce the iteration path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from ..errors import RankDeficientEqualityError, SolverError
from .backend import kernel
from .program import ConicProgram, Solution, SolverOptions

_SQRT_EPS = math.sqrt(np.finfo(float).eps)


@dataclass
class _Scaling:
    """Nesterov-Todd scaling data for one PSD block."""

    R: np.ndarray
    Rinv: np.ndarray
    lam: np.ndarray  # scaled point, diagonal
    Wm: np.ndarray   # (R R^T)^{-1}, the weight in the Schur complement
    Sig: np.ndarray  # R R^T

    @classmethod
    def identity(cls, side: int) -> "_Scaling":
        eye = np.eye(side)
        return cls(R=eye.copy(), Rinv=eye.copy(), lam=np.ones(side),
                   Wm=eye.copy(), Sig=eye.copy())

    @classmethod
    def from_pair(cls, s: np.ndarray, z: np.ndarray) -> "_Scaling":
        try:
            Ls = sla.cholesky(s, lower=True)
            Lz = sla.cholesky(z, lower=True)
        except sla.LinAlgError as exc:
            raise _LossOfPositivity(str(exc)) from exc
        U, sig, Vt = sla.svd(Lz.T @ Ls)
        if sig[-1] <= 0.0:
            raise _LossOfPositivity("rank-deficient scaling point")
        rs = np.sqrt(sig)
        R = np.ascontiguousarray(Ls @ (Vt.T / rs))
        Rinv = np.ascontiguousarray((U / rs).T @ Lz.T)
        Wm = np.ascontiguousarray(Rinv.T @ Rinv)
        Sig = np.ascontiguousarray(R @ R.T)
        return cls(R=R, Rinv=Rinv, lam=sig.copy(), Wm=Wm, Sig=Sig)

    def scale_s(self, mat: np.ndarray) -> np.ndarray:
        """W^{-T} s = Rinv s Rinv^T."""
        return self.Rinv @ mat @ self.Rinv.T

    def scale_z(self, mat: np.ndarray) -> np.ndarray:
        """W z = R^T z R."""
        return self.R.T @ mat @ self.R

    def unscale(self, mat: np.ndarray) -> np.ndarray:
        """W^T u = R u R^T."""
        return self.R @ mat @ self.R.T


class _LossOfPositivity(Exception):
    pass


def _sym(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


def _max_cone_step(lam: np.ndarray, direction: np.ndarray) -> float:
    """Largest t with diag(lam) + t * direction still PSD (inf if unbounded)."""
    inv_sqrt = 1.0 / np.sqrt(lam)
    scaled = direction * inv_sqrt[:, None] * inv_sqrt[None, :]
    rho = sla.eigvalsh(_sym(scaled))[0]
    return math.inf if rho >= 0.0 else -1.0 / rho


class _KKT:
    """Factorization of the scaled augmented system, equalities eliminated."""

    def __init__(self, prog: ConicProgram, reg: float):
        self.prog = prog
        self.reg = reg
        m = prog.m
        self.structs = [blk.schur_structure(m) for blk in prog.blocks]
        self.lins = [blk.linear_operator(m) for blk in prog.blocks]
        self.linTs = [blk.adjoint_operator(m) for blk in prog.blocks]
        self.eq = prog.eq
        self.eqT_dense = prog.eq.toarray().T if prog.eq is not None else None
        self.H = np.zeros((m, m))
        self.L = None
        self.LS = None
        self.scalings: list[_Scaling] = []

    def _build_schur(self, scalings) -> None:
        H = self.H
        H.fill(0.0)
        for (cols, offs, a, b, v, gather), sc in zip(self.structs, scalings):
            kernel.schur_accumulate(H, sc.Wm, cols, offs, a, b, v, gather)

    def factor(self, scalings: list[_Scaling]) -> None:
        self.scalings = scalings
        m = self.prog.m
        delta = self.reg
        for attempt in range(7):
            self._build_schur(scalings)
            self.H[np.arange(m), np.arange(m)] += delta
            try:
                # in-place factor; H is rebuilt next iteration anyway
                self.L = sla.cholesky(self.H, lower=True, overwrite_a=True,
                                      check_finite=False)
                break
            except sla.LinAlgError:
                delta *= 100.0
                if attempt == 6:
                    raise SolverError("Schur complement lost positive definiteness")
        if self.eq is not None:
            V = sla.solve_triangular(self.L, self.eqT_dense, lower=True,
                                     check_finite=False)
            S = V.T @ V
            p = S.shape[0]
            delta_s = self.reg
            for attempt in range(7):
                try:
                    self.LS = sla.cholesky(S + delta_s * np.eye(p),
                                           lower=True, check_finite=False)
                    break
                except sla.LinAlgError:
                    delta_s *= 100.0
                    if attempt == 6:
                        raise RankDeficientEqualityError(
                            "equality constraints are rank deficient beyond regularization")

    def _solve_hx(self, rhs: np.ndarray) -> np.ndarray:
        return sla.cho_solve((self.L, True), rhs, check_finite=False)

    def _solve_core(self, bx, by, bz):
        rhs1 = bx.copy()
        for linT, sc, bz_j in zip(self.linTs, self.scalings, bz):
            rhs1 -= linT @ (sc.Wm @ bz_j @ sc.Wm).ravel()
        if self.eq is not None:
            u = self._solve_hx(rhs1)
            sy = self.eq @ u - by
            y = sla.cho_solve((self.LS, True), sy, check_finite=False)
            x = self._solve_hx(rhs1 - self.eq.T @ y)
        else:
            y = np.zeros(0)
            x = self._solve_hx(rhs1)
        z = []
        for lin, sc, bz_j in zip(self.lins, self.scalings, bz):
            px = (lin @ x).reshape(bz_j.shape)
            z.append(-sc.Wm @ (px + bz_j) @ sc.Wm)
        return x, y, z

    def _apply(self, x, y, z):
        """The scaled KKT operator (for iterative refinement)."""
        row1 = np.zeros(self.prog.m)
        if self.eq is not None:
            row1 += self.eq.T @ y
        for linT, zj in zip(self.linTs, z):
            row1 -= linT @ zj.ravel()
        row2 = self.eq @ x if self.eq is not None else np.zeros(0)
        row3 = []
        for lin, sc, zj in zip(self.lins, self.scalings, z):
            px = (lin @ x).reshape(zj.shape)
            row3.append(-px - sc.Sig @ zj @ sc.Sig)
        return row1, row2, row3

    def solve(self, bx, by, bz, refine: int = 1):
        x, y, z = self._solve_core(bx, by, bz)
        for _ in range(refine):
            r1, r2, r3 = self._apply(x, y, z)
            res_x = bx - r1
            res_y = by - r2 if self.eq is not None else by
            res_z = [bz_j - r3_j for bz_j, r3_j in zip(bz, r3)]
            dx, dy, dz = self._solve_core(res_x, res_y, res_z)
            x = x + dx
            y = y + dy
            z = [zj + dzj for zj, dzj in zip(z, dz)]
        return x, y, z


def solve(prog: ConicProgram, opts: SolverOptions | None = None) -> Solution:
    """Solve the conic program; see module docstring for the method."""
    opts = opts or SolverOptions()
    if not prog.blocks:
        raise SolverError("the interior-point solver needs at least one PSD block")
    m = prog.m
    sides = [blk.side for blk in prog.blocks]
    consts = [blk.const for blk in prog.blocks]
    c = prog.c
    f = prog.eq_rhs if prog.eq is not None else np.zeros(0)
    deg = sum(sides)
    norm_c = 1.0 + np.linalg.norm(c)
    norm_f = 1.0 + np.linalg.norm(f)
    norm_h = [1.0 + np.linalg.norm(h) for h in consts]

    kkt = _KKT(prog, opts.regularization)

    def fsolve(bx, by, bz):
        return kkt.solve(bx, by, bz, refine=1)

    # ---- initialization at the identity scaling -------------------------
    kkt.factor([_Scaling.identity(s) for s in sides])
    x0, _, zt = fsolve(np.zeros(m), f, [h.copy() for h in consts])
    s = [-zj for zj in zt]
    shift = -min(float(sla.eigvalsh(sj)[0]) for sj in s)
    if shift >= -_SQRT_EPS:
        s = [sj + (1.0 + shift) * np.eye(sj.shape[0]) for sj in s]
    x1, y, z = fsolve(-c, np.zeros(len(f)), [np.zeros_like(h) for h in consts])
    shift = -min(float(sla.eigvalsh(zj)[0]) for zj in z)
    if shift >= -_SQRT_EPS:
        z = [zj + (1.0 + shift) * np.eye(zj.shape[0]) for zj in z]
    x = x0
    s = [_sym(sj) for sj in s]
    z = [_sym(zj) for zj in z]
    tau, kappa = 1.0, 1.0
    best_score = math.inf
    best_state = None

    def finish(status: str, iters: int, detail: str = "") -> Solution:
        t = tau if tau > 0 else 1.0
        zz = x / t
        y_eq = y / t
        zc = [zj / t for zj in z]
        sc = [sj / t for sj in s]
        pcost = float(c @ zz)
        dcost = -float(f @ y_eq) - sum(float(np.tensordot(h, zj))
                                       for h, zj in zip(consts, zc))
        pres, dres = _residual_norms(prog, zz, y_eq, zc, sc, norm_c, norm_f, norm_h)
        gap = sum(float(np.tensordot(sj, zj)) for sj, zj in zip(sc, zc))
        relgap = gap / max(1.0, abs(pcost))
        return Solution(status=status, z=zz, obj_primal=pcost, obj_dual=dcost,
                        y_eq=y_eq, cone_duals=zc, slacks=sc, iterations=iters,
                        primal_residual=pres, dual_residual=dres,
                        gap_abs=gap, gap_rel=relgap, detail=detail)

    for it in range(opts.max_iters):
        # residuals of the homogeneous system
        rx = c * tau
        if prog.eq is not None:
            rx += prog.eq.T @ y
        for linT, zj in zip(kkt.linTs, z):
            rx -= linT @ zj.ravel()
        ry = f * tau - (prog.eq @ x if prog.eq is not None else np.zeros(0))
        rz = []
        for lin, h, sj in zip(kkt.lins, consts, s):
            rz.append((lin @ x).reshape(sj.shape) + h * tau - sj)
        hz = sum(float(np.tensordot(h, zj)) for h, zj in zip(consts, z))
        rt = -float(c @ x) - float(f @ y) - hz - kappa

        gap = sum(float(np.tensordot(sj, zj)) for sj, zj in zip(s, z))
        mu = (gap + tau * kappa) / (deg + 1)

        pcost = float(c @ x) / tau
        dcost = (-float(f @ y) - hz) / tau
        pres = max([np.linalg.norm(ry) / tau / norm_f]
                   + [np.linalg.norm(rj) / tau / nh for rj, nh in zip(rz, norm_h)])
        dres = np.linalg.norm(rx) / tau / norm_c
        gap_dehom = gap / (tau * tau)
        relgap = gap_dehom / max(1.0, abs(pcost))
        if opts.verbose:
            print(f"iter {it:3d}: pcost={pcost:+.9e} dcost={dcost:+.9e} "
                  f"pres={pres:.2e} dres={dres:.2e} gap={relgap:.2e} "
                  f"tau={tau:.2e} kappa={kappa:.2e}")
        if pres <= opts.tol_feas and dres <= opts.tol_feas and \
                (relgap <= opts.tol_gap or gap_dehom <= opts.tol_gap):
            return finish("optimal", it)

        # keep the best iterate; bail out if the end game degrades numerically
        score = max(pres, dres, relgap)
        if score < best_score:
            best_score = score
            best_state = (x.copy(), y.copy(), [sj.copy() for sj in s],
                          [zj.copy() for zj in z], tau, kappa)
        elif (best_score < 1e-4 and score > 10.0 * best_score
              and best_state is not None):
            # only meaningful near convergence: early relative-gap swings
            # (e.g. the cost crossing zero) are not numerical trouble
            x, y, s, z, tau, kappa = best_state
            return finish("numerical-failure", it,
                          detail="endgame lost accuracy; best iterate reached "
                                 f"max(pres, dres, relgap) = {best_score:.2e}")

        # infeasibility certificates (meaningful as tau -> 0)
        ip = float(f @ y) + hz
        if ip < 0.0:
            cert = np.linalg.norm(rx - c * tau) / norm_c / (-ip)
            if cert <= opts.tol_feas:
                return finish("infeasible-detected", it,
                              detail="primal infeasibility certificate found")
        ducost = float(c @ x)
        if ducost < 0.0:
            num = max([np.linalg.norm(ry - f * tau) / norm_f]
                      + [np.linalg.norm(rj - h * tau) / nh
                         for rj, h, nh in zip(rz, consts, norm_h)])
            if num / (-ducost) <= opts.tol_feas:
                return finish("infeasible-detected", it,
                              detail="dual infeasibility certificate found "
                                     "(primal unbounded)")

        # Nesterov-Todd scaling and KKT factorization
        try:
            scalings = [_Scaling.from_pair(sj, zj) for sj, zj in zip(s, z)]
            kkt.factor(scalings)
        except (_LossOfPositivity, SolverError) as exc:
            return finish("numerical-failure", it, detail=str(exc))

        v_x, v_y, v_z = fsolve(-c, f, [h.copy() for h in consts])
        # kappa/tau - (c.vx + f.vy + h.vz) equals kappa/tau + |W vz|^2 exactly;
        # the quadratic form avoids the cancellation of the raw difference.
        denom = kappa / tau + sum(
            float(np.sum(sc_j.scale_z(vzj) ** 2))
            for sc_j, vzj in zip(scalings, v_z))
        if not math.isfinite(denom) or denom <= 0.0:
            return finish("numerical-failure", it, detail="singular tau system")

        lam2 = [np.diag(sc_j.lam ** 2) for sc_j in scalings]

        def newton_raw(dx, dy, dz, dtau_rhs, ds_list, dkappa_rhs):
            dst = []
            for sc_j, ds_j in zip(scalings, ds_list):
                denom_l = sc_j.lam[:, None] + sc_j.lam[None, :]
                dst.append(2.0 * ds_j / denom_l)
            dzt = [dz_j + sc_j.unscale(dst_j)
                   for dz_j, sc_j, dst_j in zip(dz, scalings, dst)]
            u_x, u_y, u_z = fsolve(dx, -dy, [-d for d in dzt])
            huz = sum(float(np.tensordot(h, uzj)) for h, uzj in zip(consts, u_z))
            dtau = (dtau_rhs + dkappa_rhs / tau
                    + float(c @ u_x) + float(f @ u_y) + huz) / denom
            dxv = u_x + dtau * v_x
            dyv = u_y + dtau * v_y
            dzv = [uzj + dtau * vzj for uzj, vzj in zip(u_z, v_z)]
            # recover ds from the primal linearization -G dx + h dtau - ds = dz
            # (exact in the refined quantities) rather than unscaling the
            # complementarity row, which amplifies error as mu -> 0
            dsv = [_sym((lin @ dxv).reshape(h.shape) + h * dtau - dz_j)
                   for lin, h, dz_j in zip(kkt.lins, consts, dz)]
            dkappa = (dkappa_rhs - kappa * dtau) / tau
            return dxv, dyv, dzv, dsv, dtau, dkappa

        def newton_apply(dxv, dyv, dzv, dsv, dtau, dkappa):
            """The full HSDE Newton operator, for outer refinement."""
            r1 = c * dtau
            if prog.eq is not None:
                r1 += prog.eq.T @ dyv
            for linT, dzj in zip(kkt.linTs, dzv):
                r1 -= linT @ dzj.ravel()
            r2 = f * dtau - (prog.eq @ dxv if prog.eq is not None else np.zeros(0))
            r3 = [(lin @ dxv).reshape(h.shape) + h * dtau - dsj
                  for lin, h, dsj in zip(kkt.lins, consts, dsv)]
            hdz = sum(float(np.tensordot(h, dzj)) for h, dzj in zip(consts, dzv))
            r4 = -float(c @ dxv) - float(f @ dyv) - hdz - dkappa
            r5 = []
            for sc_j, dsj, dzj in zip(scalings, dsv, dzv):
                M = sc_j.scale_s(dsj) + sc_j.scale_z(dzj)
                r5.append(_sym(sc_j.lam[:, None] * M + M * sc_j.lam[None, :]) * 0.5)
            r6 = tau * dkappa + kappa * dtau
            return r1, r2, r3, r4, r5, r6

        def newton(dx, dy, dz, dtau_rhs, ds_list, dkappa_rhs):
            sol_d = newton_raw(dx, dy, dz, dtau_rhs, ds_list, dkappa_rhs)
            for _ in range(opts.refinement_steps):
                a1, a2, a3, a4, a5, a6 = newton_apply(*sol_d)
                corr = newton_raw(dx - a1, dy - a2,
                                  [dj - aj for dj, aj in zip(dz, a3)],
                                  dtau_rhs - a4,
                                  [dj - aj for dj, aj in zip(ds_list, a5)],
                                  dkappa_rhs - a6)
                sol_d = (sol_d[0] + corr[0], sol_d[1] + corr[1],
                         [u + w for u, w in zip(sol_d[2], corr[2])],
                         [u + w for u, w in zip(sol_d[3], corr[3])],
                         sol_d[4] + corr[4], sol_d[5] + corr[5])
            return sol_d

        def max_step(dz_list, ds_list, dtau, dkappa):
            alpha = math.inf
            for sc_j, dzj, dsj in zip(scalings, dz_list, ds_list):
                alpha = min(alpha, _max_cone_step(sc_j.lam, sc_j.scale_z(dzj)))
                alpha = min(alpha, _max_cone_step(sc_j.lam, sc_j.scale_s(dsj)))
            if dtau < 0.0:
                alpha = min(alpha, -tau / dtau)
            if dkappa < 0.0:
                alpha = min(alpha, -kappa / dkappa)
            # trust region on the homogenizing variable: near the central path
            # the true relative change of tau is small, so a large one signals
            # a poorly conditioned tau system
            if dtau != 0.0:
                alpha = min(alpha, 0.5 * tau / abs(dtau))
            return alpha

        # predictor (affine) direction
        aff = newton(-rx, -ry, [-r for r in rz], -rt,
                     [-l2 for l2 in lam2], -tau * kappa)
        a_x, a_y, a_z, a_s, a_tau, a_kappa = aff
        alpha_aff = min(1.0, max_step(a_z, a_s, a_tau, a_kappa))
        gap_aff = sum(float(np.tensordot(sj + alpha_aff * dsj, zj + alpha_aff * dzj))
                      for sj, dsj, zj, dzj in zip(s, a_s, z, a_z))
        mu_aff = (gap_aff + (tau + alpha_aff * a_tau) * (kappa + alpha_aff * a_kappa)) \
            / (deg + 1)
        sigma = min(1.0, max(1e-4, (mu_aff / mu) ** 3))

        # corrector
        ds_comb = []
        for sc_j, l2, dsj, dzj in zip(scalings, lam2, a_s, a_z):
            corr = _sym(sc_j.scale_s(dsj) @ sc_j.scale_z(dzj))
            ds_comb.append(sigma * mu * np.eye(l2.shape[0]) - l2 - corr)
        one_m_sigma = 1.0 - sigma
        comb = newton(-one_m_sigma * rx, -one_m_sigma * ry,
                      [-one_m_sigma * r for r in rz], -one_m_sigma * rt,
                      ds_comb, sigma * mu - tau * kappa - a_tau * a_kappa)
        d_x, d_y, d_z, d_s, d_tau, d_kappa = comb
        alpha = min(1.0, opts.step_fraction * max_step(d_z, d_s, d_tau, d_kappa))
        if not math.isfinite(alpha) or alpha <= 0.0:
            return finish("numerical-failure", it, detail="no usable step length")

        x = x + alpha * d_x
        y = y + alpha * d_y
        s = [_sym(sj + alpha * dsj) for sj, dsj in zip(s, d_s)]
        z = [_sym(zj + alpha * dzj) for zj, dzj in zip(z, d_z)]
        tau += alpha * d_tau
        kappa += alpha * d_kappa
        if tau <= 0.0 or kappa < 0.0:
            return finish("numerical-failure", it, detail="tau left the cone")

    return finish("max-iters", opts.max_iters)


def _residual_norms(prog, zz, y_eq, zc, sc, norm_c, norm_f, norm_h):
    """De-homogenized primal/dual residual norms (used for reporting)."""
    if prog.eq is not None:
        pres = np.linalg.norm(prog.eq @ zz - prog.eq_rhs) / norm_f
    else:
        pres = 0.0
    for blk, sj, nh in zip(prog.blocks, sc, norm_h):
        pres = max(pres, np.linalg.norm(blk.apply(zz) - sj) / nh)
    rx = prog.c.copy()
    if prog.eq is not None:
        rx += prog.eq.T @ y_eq
    for blk, zj in zip(prog.blocks, zc):
        rx -= blk.adjoint_operator(prog.m) @ zj.ravel()
    dres = np.linalg.norm(rx) / norm_c
    return float(pres), float(dres)
