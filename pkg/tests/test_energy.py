"""Energy models: constructors, invariants, model checks, serialization."""

import numpy as np
import pytest

from strainrelax.energy import (EnergyDensity, StiffnessForm, anisotropic_energy,
                                check_frame_indifference, check_growth,
                                check_sos_convexity, compose_with_strain,
                                constant_hessian_matrix, custom_energy,
                                energy_from_json_obj, energy_to_json_obj,
                                hessian, strain_space, svk_energy)
from strainrelax.errors import ValidationError
from strainrelax.poly import Polynomial, VariableSpace


def frobenius_distance_energy():
    """|Z^T Z - I|^2 expanded directly in the Z block."""
    space = VariableSpace(2)

    def z(j, i):
        return Polynomial.variable(space, space.z(j, i))

    out = Polynomial.zero(space)
    for i in range(2):
        for l in range(2):
            c_il = z(0, i) * z(0, l) + z(1, i) * z(1, l)
            if i == l:
                c_il = c_il - 1.0
            out = out + c_il * c_il
    return out


class TestSVK:
    def test_zero_poisson_is_frobenius_distance(self):
        e = svk_energy(0.0, 4.0)
        # coefficient-exact comparison after normalization
        assert e.w == frobenius_distance_energy()

    def test_natural_state(self):
        assert svk_energy(0.0, 4.0).w_at(np.eye(2)) == pytest.approx(0.0, abs=1e-14)

    def test_poisson_ratio(self):
        assert svk_energy(2.0, 2.0).stiffness.nu == pytest.approx(0.25)

    def test_negative_parameters_rejected(self):
        with pytest.raises(ValidationError):
            svk_energy(-1.0, 4.0)
        with pytest.raises(ValidationError):
            svk_energy(0.0, 0.0)

    def test_growth_exponent(self):
        assert svk_energy(0.0, 4.0).p_growth == 4

    def test_isotropic_stiffness_matches_voigt_layout(self):
        st = StiffnessForm.isotropic(2.0, 3.0)
        expect = np.array([[8.0, 2.0, 0.0], [2.0, 8.0, 0.0], [0.0, 0.0, 3.0]])
        assert np.array_equal(st.D, expect)

    def test_dimension_generic_construction(self):
        e = svk_energy(1.0, 1.0, n=3)
        assert e.w.degree == 4
        F = np.eye(3)
        assert e.w_at(F) == pytest.approx(0.0, abs=1e-14)


class TestAnisotropic:
    D_PAPER = np.array([[20.0, 2.0, 0.0], [2.0, 5.0, 0.0], [0.0, 0.0, 3.0]])

    def test_paper_model_builds(self):
        e = anisotropic_energy(self.D_PAPER)
        # spot value: W(F) = a^T D a with a = (X11, X22, 2 X12)
        F = np.array([[1.2, 0.3], [0.0, 0.8]])
        X = F.T @ F - np.eye(2)
        a = np.array([X[0, 0], X[1, 1], 2 * X[0, 1]])
        assert e.w_at(F) == pytest.approx(float(a @ self.D_PAPER @ a), rel=1e-12)

    def test_diagonal_reproduces_zero_poisson(self):
        # a-weighted diag(4,4,2)/4 gives exactly |C - I|^2
        e = anisotropic_energy(np.diag([4.0, 4.0, 2.0]) / 4.0)
        assert e.wtilde == svk_energy(0.0, 4.0).wtilde
        assert e.w == svk_energy(0.0, 4.0).w

    def test_indefinite_rejected_with_eigenvalue(self):
        with pytest.raises(ValidationError, match="eigenvalue"):
            anisotropic_energy(np.diag([1.0, 1.0, -1.0]))

    def test_asymmetric_rejected(self):
        bad = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        with pytest.raises(ValidationError):
            anisotropic_energy(bad)


class TestCompositionInvariant:
    @pytest.mark.parametrize("make", [
        lambda: svk_energy(0.0, 4.0),
        lambda: svk_energy(2.0, 2.0),
        lambda: anisotropic_energy(TestAnisotropic.D_PAPER),
    ])
    def test_w_equals_wtilde_of_ztz(self, make):
        e = make()
        rng = np.random.default_rng(0)
        for _ in range(1000):
            Z = rng.normal(size=(2, 2))
            lhs = e.w_at(Z)
            rhs = e.wtilde_at(Z.T @ Z)
            assert abs(lhs - rhs) <= 1e-12 * (1.0 + abs(lhs))


class TestFrameIndifference:
    def test_svk_passes(self):
        rep = check_frame_indifference(svk_energy(0.0, 4.0), trials=100, seed=1)
        assert rep.passed and rep.max_deviation <= 1e-9

    def test_anisotropic_passes(self):
        e = anisotropic_energy(TestAnisotropic.D_PAPER)
        rep = check_frame_indifference(e, trials=100, seed=1)
        assert rep.passed

    def test_broken_density_fails(self):
        space = VariableSpace(2)
        w_bad = Polynomial.variable(space, space.z(0, 0))
        wtilde = Polynomial.variable(strain_space(2), 0)
        broken = EnergyDensity(n=2, wtilde=wtilde, w=w_bad, p_growth=1)
        rep = check_frame_indifference(broken, trials=50, seed=2)
        assert not rep.passed
        assert rep.max_deviation > 0.0

    def test_trials_validated(self):
        with pytest.raises(ValidationError):
            check_frame_indifference(svk_energy(0.0, 4.0), trials=0)


class TestHessian:
    def test_frobenius_quadratic(self):
        # wtilde = |C - I|^2 has constant Hessian 2*diag(1, 1, 2)
        H = constant_hessian_matrix(svk_energy(0.0, 4.0).wtilde)
        assert np.allclose(H, np.diag([2.0, 2.0, 4.0]))

    def test_quartic_entry(self):
        sp = strain_space(2)
        c11 = Polynomial.variable(sp, 0)
        w4 = c11 * c11 * c11 * c11
        H = hessian(w4)
        assert H[0][0] == c11 * c11 * 12.0
        assert H[1][1].is_zero() and H[0][1].is_zero()

    def test_linear_has_zero_hessian(self):
        sp = strain_space(2)
        lin = Polynomial.variable(sp, 0) + Polynomial.variable(sp, 2) * 3.0
        assert all(h.is_zero() for row in hessian(lin) for h in row)


class TestSOSConvexity:
    def test_svk_certified(self):
        cert = check_sos_convexity(svk_energy(0.0, 4.0).wtilde)
        assert cert.certified
        assert cert.eigenvalues is not None and cert.eigenvalues[0] >= -1e-10

    def test_quartic_certified_by_gram_sdp(self):
        sp = strain_space(2)
        c11 = Polynomial.variable(sp, 0)
        cert = check_sos_convexity(c11 * c11 * c11 * c11)
        assert cert.certified
        assert cert.gram is not None

    def test_concave_refuted(self):
        sp = strain_space(2)
        w = Polynomial.zero(sp)
        for k in range(3):
            v = Polynomial.variable(sp, k)
            w = w - v * v
        cert = check_sos_convexity(w)
        assert cert.status == "refuted"

    def test_agrees_with_direct_eigen_test_on_quadratics(self):
        rng = np.random.default_rng(4)
        sp = strain_space(2)
        for _ in range(10):
            B = rng.normal(size=(3, 3))
            sym = 0.5 * (B + B.T)
            terms = {}
            for i in range(3):
                for j in range(3):
                    e = [0, 0, 0]
                    e[i] += 1
                    e[j] += 1
                    terms[tuple(e)] = terms.get(tuple(e), 0.0) + sym[i, j]
            w = Polynomial(sp, terms)
            cert = check_sos_convexity(w)
            direct = np.linalg.eigvalsh(2.0 * sym)[0] >= -1e-10
            assert cert.certified == direct


class TestGrowth:
    def test_zero_poisson_growth(self):
        rep = check_growth(svk_energy(0.0, 4.0), samples=100, seed=0)
        assert rep.c1 > 0 and not rep.degenerate

    def test_quadratic_norm_energy(self):
        # w = |Z|^2 has c1 = c2 = 1 on every sample
        space = VariableSpace(2)
        w = Polynomial.zero(space)
        for k in space.blocks[2]:
            v = Polynomial.variable(space, k)
            w = w + v * v
        sp = strain_space(2)
        wtilde = Polynomial.variable(sp, 0) + Polynomial.variable(sp, 1)
        e = EnergyDensity(n=2, wtilde=wtilde, w=w, p_growth=2)
        rep = check_growth(e, samples=50, seed=0)
        assert rep.c1 == pytest.approx(1.0, rel=1e-9)
        assert rep.c2 == pytest.approx(1.0, rel=0.2)

    def test_degenerate_direction_flagged(self):
        space = VariableSpace(2)
        z11 = Polynomial.variable(space, space.z(0, 0))
        sp = strain_space(2)
        e = EnergyDensity(n=2, wtilde=Polynomial.variable(sp, 0),
                          w=z11 * z11, p_growth=4)
        rep = check_growth(e, samples=200, seed=0)
        assert rep.degenerate


class TestSerialization:
    @pytest.mark.parametrize("make", [
        lambda: svk_energy(0.0, 4.0),
        lambda: svk_energy(2.0, 2.0),
        lambda: anisotropic_energy(TestAnisotropic.D_PAPER),
        lambda: custom_energy(svk_energy(1.0, 3.0).wtilde, 2),
    ])
    def test_round_trip(self, make):
        e = make()
        e2 = energy_from_json_obj(energy_to_json_obj(e))
        assert e2.wtilde == e.wtilde
        assert e2.w == e.w

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValidationError):
            energy_from_json_obj({"kind": "ogden", "n": 2})


def test_compose_with_strain_spot_check():
    # C11 -> Z11^2 + Z21^2
    sp = strain_space(2)
    space = VariableSpace(2)
    out = compose_with_strain(Polynomial.variable(sp, 0), 2)
    z11 = Polynomial.variable(space, space.z(0, 0))
    z21 = Polynomial.variable(space, space.z(1, 0))
    assert out == z11 * z11 + z21 * z21
