"""Conic solver: analytic instances, random suites, certification, formats."""

import io

import numpy as np
import pytest
import scipy.sparse as sps

import strainrelax.sdp as sdp
from strainrelax.errors import StructuralError, ValidationError
from strainrelax.sdp import _schur_py
from strainrelax.sdp.backend import kernel


def analytic_2x2():
    """min z1 + z2 s.t. [[z1, 1], [1, z2]] PSD; optimum 2 at (1, 1)."""
    blk = sdp.PSDBlock.from_entries(2, np.array([[0.0, 1.0], [1.0, 0.0]]),
                                    [0, 1], [0, 1], [0, 1], [1.0, 1.0], 2)
    return sdp.ConicProgram(m=2, c=np.array([1.0, 1.0]), blocks=[blk])


def random_feasible(m, sides, p, rng):
    """Instance with strictly feasible primal and dual points by construction."""
    psd_blocks = []
    zstar = rng.normal(size=m)
    E = None
    for s in sides:
        k, r, c, v = [], [], [], []
        for var in range(m):
            for _ in range(int(rng.integers(1, 4))):
                a, b = rng.integers(0, s, size=2)
                val = float(rng.normal())
                k.append(var); r.append(int(a)); c.append(int(b)); v.append(val)
                if a != b:
                    k.append(var); r.append(int(b)); c.append(int(a)); v.append(val)
        lin = sps.csr_matrix((v, (np.array(r) * s + np.array(c), k)),
                             shape=(s * s, m))
        q = rng.normal(size=(s, s))
        const = q @ q.T + 0.5 * np.eye(s) - (lin @ zstar).reshape(s, s)
        psd_blocks.append(sdp.PSDBlock.from_entries(
            s, 0.5 * (const + const.T), k, r, c, v, m))
    eq = rhs = None
    if p:
        E = rng.normal(size=(p, m))
        eq, rhs = sps.csr_matrix(E), E @ zstar
    cvec = np.zeros(m)
    for blk in psd_blocks:
        q = rng.normal(size=(blk.side, blk.side))
        cvec += blk.adjoint_operator(m) @ (q @ q.T + 0.3 * np.eye(blk.side)).ravel()
    if p:
        cvec += E.T @ rng.normal(size=p)
    return sdp.ConicProgram(m=m, c=cvec, blocks=psd_blocks, eq=eq, eq_rhs=rhs)


class TestAnalyticInstances:
    def test_trivial_scalar(self):
        blk = sdp.PSDBlock.from_entries(1, np.array([[0.0]]), [0], [0], [0],
                                        [1.0], 1)
        sol = sdp.solve(sdp.ConicProgram(m=1, c=np.array([1.0]), blocks=[blk]))
        assert sol.status == "optimal"
        assert sol.obj_primal == pytest.approx(0.0, abs=1e-8)

    def test_2x2_against_brute_force_grid(self):
        # independent oracle: feasibility is z1 z2 >= 1, z1, z2 >= 0
        grid = np.linspace(0.0, 3.0, 1201)
        best = min(z1 + z2 for z1 in grid for z2 in grid
                   if z1 * z2 >= 1.0 and z1 >= 0.0)
        assert best == pytest.approx(2.0, abs=2e-3)
        sol = sdp.solve(analytic_2x2())
        assert sol.status == "optimal"
        assert sol.obj_primal == pytest.approx(2.0, abs=1e-8)
        assert np.allclose(sol.z, [1.0, 1.0], atol=1e-6)

    def test_infeasible_detected(self):
        blk = sdp.PSDBlock.from_entries(1, np.array([[-1.0]]), [], [], [], [], 1)
        sol = sdp.solve(sdp.ConicProgram(m=1, c=np.array([0.0]), blocks=[blk]))
        assert sol.status == "infeasible-detected"

    def test_unbounded_detected(self):
        blk = sdp.PSDBlock.from_entries(1, np.array([[0.0]]), [0], [0], [0],
                                        [1.0], 1)
        sol = sdp.solve(sdp.ConicProgram(m=1, c=np.array([-1.0]), blocks=[blk]))
        assert sol.status == "infeasible-detected"
        assert "unbounded" in sol.detail


class TestRandomSuite:
    def test_random_feasible_certified(self):
        rng = np.random.default_rng(12)
        opts = sdp.SolverOptions(tol_feas=1e-7, tol_gap=1e-7)
        for _ in range(20):
            m = int(rng.integers(5, 40))
            sides = [int(rng.integers(2, 25))
                     for _ in range(int(rng.integers(1, 3)))]
            p = int(rng.integers(0, min(m, 10)))
            prog = random_feasible(m, sides, p, rng)
            sol = sdp.solve(prog, opts)
            assert sol.status == "optimal", sol.detail
            assert sol.iterations <= 100
            cert = sdp.certify(prog, sol)
            assert cert.passed, cert

    def test_determinism_bitwise(self):
        rng = np.random.default_rng(3)
        prog = random_feasible(12, [6], 3, rng)
        s1 = sdp.solve(prog)
        s2 = sdp.solve(prog)
        assert s1.iterations == s2.iterations
        assert np.array_equal(s1.z, s2.z)
        assert s1.obj_primal == s2.obj_primal

    def test_objective_scale_equivariance(self):
        # argmin invariance at 1e-8 needs a well-conditioned minimizer
        prog = analytic_2x2()
        scaled = sdp.ConicProgram(m=2, c=4.0 * prog.c, blocks=prog.blocks)
        s1, s4 = sdp.solve(prog), sdp.solve(scaled)
        assert np.abs(s1.z - s4.z).max() <= 1e-8
        assert s4.obj_primal == pytest.approx(4.0 * s1.obj_primal, rel=1e-8)
        # on a generic instance the value still scales exactly
        rng = np.random.default_rng(5)
        prog = random_feasible(10, [7], 2, rng)
        sol = sdp.solve(prog)
        scaled = sdp.ConicProgram(m=prog.m, c=4.0 * prog.c, blocks=prog.blocks,
                                  eq=prog.eq, eq_rhs=prog.eq_rhs)
        sol2 = sdp.solve(scaled)
        assert sol2.obj_primal == pytest.approx(4.0 * sol.obj_primal,
                                                rel=1e-7, abs=1e-7)


class TestCertify:
    def test_certified_clean_solution(self):
        sol = sdp.solve(analytic_2x2())
        cert = sdp.certify(analytic_2x2(), sol)
        assert cert.passed
        assert cert.primal_residual <= 1e-7
        assert cert.weak_duality_ok

    def test_tampered_solution_flagged(self):
        prog = analytic_2x2()
        sol = sdp.solve(prog)
        bad = sdp.Solution(**{**sol.__dict__})
        bad.z = sol.z + np.array([0.0, -1e-3])
        cert = sdp.certify(prog, bad)
        assert not cert.passed

    def test_refuses_non_optimal(self):
        blk = sdp.PSDBlock.from_entries(1, np.array([[-1.0]]), [], [], [], [], 1)
        prog = sdp.ConicProgram(m=1, c=np.array([0.0]), blocks=[blk])
        sol = sdp.solve(prog)
        with pytest.raises(ValidationError):
            sdp.certify(prog, sol)


class TestProgramValidation:
    def test_asymmetric_const_rejected(self):
        with pytest.raises(StructuralError):
            sdp.PSDBlock.from_entries(2, np.array([[0.0, 1.0], [0.0, 0.0]]),
                                      [], [], [], [], 1)

    def test_asymmetric_coefficients_rejected(self):
        with pytest.raises(StructuralError):
            sdp.PSDBlock.from_entries(2, np.zeros((2, 2)),
                                      [0], [0], [1], [1.0], 1)

    def test_variable_out_of_range(self):
        with pytest.raises(StructuralError):
            sdp.PSDBlock.from_entries(2, np.zeros((2, 2)),
                                      [5], [0], [0], [1.0], 2)

    def test_needs_block_or_equality(self):
        with pytest.raises(StructuralError):
            sdp.ConicProgram(m=1, c=np.array([1.0]), blocks=[])


class TestKernels:
    def _structure(self, rng, side=9, m=7):
        k, a, b, v = [], [], [], []
        for var in range(m):
            for _ in range(int(rng.integers(1, 5))):
                i, j = rng.integers(0, side, size=2)
                val = float(rng.normal())
                k.append(var); a.append(int(i)); b.append(int(j)); v.append(val)
                if i != j:
                    k.append(var); a.append(int(j)); b.append(int(i)); v.append(val)
        return sdp.PSDBlock(side, np.zeros((side, side)), k, a, b, v)

    def test_backends_match_brute_force(self):
        rng = np.random.default_rng(17)
        for _ in range(5):
            side, m = 9, 7
            blk = self._structure(rng, side, m)
            cols, offs, a, b, v, gather = blk.schur_structure(m)
            q = rng.normal(size=(side, side))
            Wm = np.ascontiguousarray(q @ q.T + side * np.eye(side))
            H1 = np.zeros((m, m))
            H2 = np.zeros((m, m))
            kernel.schur_accumulate(H1, Wm, cols, offs, a, b, v, gather)
            _schur_py.schur_accumulate(H2, Wm, cols, offs, a, b, v, gather)
            # brute-force oracle
            bmats = [np.zeros((side, side)) for _ in range(m)]
            for kk, aa, bb, vv in zip(blk.var_index, blk.row, blk.col, blk.coef):
                bmats[kk][aa, bb] += vv
            href = np.array([[np.tensordot(bmats[i], Wm @ bmats[j] @ Wm)
                              for j in range(m)] for i in range(m)])
            assert np.allclose(H1, href, rtol=1e-10, atol=1e-10)
            assert np.allclose(H2, href, rtol=1e-10, atol=1e-10)

    def test_backends_bitwise_equal_on_moment_structure(self):
        from strainrelax.moments import ProblemSpec, assemble_relaxation
        from strainrelax.energy import svk_energy
        from strainrelax.poly import Polynomial, VariableSpace
        space = VariableSpace(2)
        x1, x2 = (Polynomial.variable(space, i) for i in range(2))
        spec = ProblemSpec(n=2, box=((0, 1), (0, 1)), energy=svk_energy(0, 4),
                           boundary=(x1 * 1.1 + x2 * 0.3, x2 * 0.9), R=8.0)
        relax = assemble_relaxation(spec, 2)
        m = relax.program.m
        rng = np.random.default_rng(0)
        for blk in relax.program.blocks:
            cols, offs, a, b, v, gather = blk.schur_structure(m)
            q = rng.normal(size=(blk.side, blk.side))
            Wm = np.ascontiguousarray(q @ q.T + blk.side * np.eye(blk.side))
            H1 = np.zeros((m, m))
            H2 = np.zeros((m, m))
            kernel.schur_accumulate(H1, Wm, cols, offs, a, b, v, gather)
            _schur_py.schur_accumulate(H2, Wm, cols, offs, a, b, v, gather)
            assert np.max(np.abs(H1 - H2)) == 0.0


class TestTextFormat:
    def test_round_trip(self):
        rng = np.random.default_rng(23)
        prog = random_feasible(8, [4, 3], 3, rng)
        text = sdp.program_to_text(prog)
        prog2 = sdp.program_from_text(text)
        assert prog2.m == prog.m
        assert np.array_equal(prog2.c, prog.c)
        assert len(prog2.blocks) == len(prog.blocks)
        z = rng.normal(size=prog.m)
        for b1, b2 in zip(prog.blocks, prog2.blocks):
            assert np.array_equal(b1.apply(z), b2.apply(z))
        assert np.array_equal(prog.eq.toarray(), prog2.eq.toarray())
        assert np.array_equal(prog.eq_rhs, prog2.eq_rhs)

    def test_round_trip_stable_text(self):
        rng = np.random.default_rng(29)
        prog = random_feasible(6, [5], 2, rng)
        text = sdp.program_to_text(prog)
        text2 = sdp.program_to_text(sdp.program_from_text(text))
        assert text == text2

    def test_solve_after_round_trip_matches(self):
        rng = np.random.default_rng(31)
        prog = random_feasible(10, [6], 2, rng)
        sol1 = sdp.solve(prog)
        sol2 = sdp.solve(sdp.program_from_text(sdp.program_to_text(prog)))
        assert sol1.obj_primal == pytest.approx(sol2.obj_primal, abs=1e-9)

    def test_rejects_foreign_file(self):
        with pytest.raises(ValidationError):
            sdp.read_program(io.StringIO("not an sdp file\n"))
