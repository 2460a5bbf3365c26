"""Polynomial arithmetic: exactness, calculus rules, integration, round trips."""

import json

import numpy as np
import pytest

from strainrelax.errors import StructuralError
from strainrelax.poly import (Polynomial, VariableSpace, graded_lex_key,
                              monomials_up_to)

SPACE = VariableSpace(2)  # arity 8: x1 x2 y1 y2 Z11 Z12 Z21 Z22


def var(k):
    return Polynomial.variable(SPACE, k)


def rand_poly(rng, deg=3, nterms=6, int_coeffs=True):
    terms = {}
    mons = monomials_up_to(SPACE.arity, deg)
    for _ in range(nterms):
        alpha = mons[rng.integers(len(mons))]
        c = int(rng.integers(-5, 6)) if int_coeffs else float(rng.normal())
        terms[alpha] = terms.get(alpha, 0.0) + c
    return Polynomial(SPACE, terms)


class TestArithmetic:
    def test_add_same_monomial(self):
        assert (var(0) + var(0)) == var(0) * 2.0

    def test_difference_of_squares(self):
        x1, x2 = var(0), var(1)
        assert (x1 + x2) * (x1 - x2) == x1 * x1 - x2 * x2

    def test_scale_by_zero_annihilates(self):
        p = var(0) * var(0)
        assert p.scale(0.0).is_zero()
        assert p.scale(0.0).term_map() == {}

    def test_mismatched_spaces_rejected(self):
        other = Polynomial.variable(VariableSpace(3), 0)
        with pytest.raises(StructuralError):
            var(0) + other
        with pytest.raises(StructuralError):
            var(0) * other

    def test_zero_coefficients_never_stored(self):
        p = var(0) - var(0)
        assert p.term_map() == {}
        q = Polynomial(SPACE, {(1,) + (0,) * 7: 0.0})
        assert q.is_zero()

    def test_ring_axioms_bit_exact(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            a, b, c = (rand_poly(rng) for _ in range(3))
            assert (a + b) + c == a + (b + c)
            assert (a * b) * c == a * (b * c)
            assert a * (b + c) == a * b + a * c
            assert a * b == b * a


class TestCalculus:
    def test_power_rule(self):
        p = var(0) * var(0)
        assert p.differentiate(0) == var(0) * 2.0

    def test_product_of_distinct_vars(self):
        p = var(0) * var(SPACE.y(0)) * var(SPACE.z(0, 0))
        assert p.differentiate(SPACE.y(0)) == var(0) * var(SPACE.z(0, 0))

    def test_absent_variable(self):
        p = var(0) * var(0)
        assert p.differentiate(SPACE.z(0, 0)).is_zero()

    def test_product_rule_exact(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            a, b = rand_poly(rng), rand_poly(rng)
            k = int(rng.integers(SPACE.arity))
            lhs = (a * b).differentiate(k)
            rhs = a.differentiate(k) * b + a * b.differentiate(k)
            assert lhs == rhs

    def test_index_bounds(self):
        with pytest.raises(StructuralError):
            var(0).differentiate(SPACE.arity)


class TestEvaluation:
    def test_simple(self):
        p = var(0) * var(0) + var(1)
        pt = np.zeros(8)
        pt[0], pt[1] = 2.0, 3.0
        assert p.evaluate(pt) == 7.0

    def test_zero_poly(self):
        assert Polynomial.zero(SPACE).evaluate(np.ones(8)) == 0.0

    def test_energy_well(self):
        # |Z^T Z - I|^2 pattern vanishes at Z = I
        from strainrelax.energy import svk_energy
        e = svk_energy(0.0, 4.0)
        assert e.w_at(np.eye(2)) == pytest.approx(0.0, abs=1e-14)

    def test_compose_evaluate_commutes(self):
        rng = np.random.default_rng(11)
        for _ in range(15):
            f = rand_poly(rng, deg=4, int_coeffs=False)
            subs = {k: rand_poly(rng, deg=2, int_coeffs=False)
                    for k in range(3)}
            pt = rng.normal(size=SPACE.arity)
            sub_pt = pt.copy()
            for k, g in subs.items():
                sub_pt[k] = g.evaluate(pt)
            direct = f.evaluate(sub_pt)
            composed = f.compose(subs).evaluate(pt)
            assert composed == pytest.approx(direct, rel=1e-12, abs=1e-12)

    def test_composition_degree(self):
        # |C - I|^2 with C = Z^T Z is degree 4 in Z
        from strainrelax.energy import svk_energy
        assert svk_energy(0.0, 4.0).w.degree == 4

    def test_substitution_passthrough(self):
        # substituting C11 := Z11^2 + Z21^2 in the bare variable reproduces it
        sub = var(SPACE.z(0, 0)) * var(SPACE.z(0, 0)) \
            + var(SPACE.z(1, 0)) * var(SPACE.z(1, 0))
        assert var(0).compose({0: sub}) == sub


class TestIntegration:
    BOX = ((0.0, 1.0), (0.0, 1.0))

    def test_bilinear(self):
        assert (var(0) * var(1)).integrate_box(self.BOX) == pytest.approx(0.25)

    def test_volume(self):
        one = Polynomial.constant(SPACE, 1.0)
        assert one.integrate_box(self.BOX) == pytest.approx(1.0)

    def test_square(self):
        assert (var(0) * var(0)).integrate_box(self.BOX) == pytest.approx(1 / 3)

    def test_partial_result_is_polynomial(self):
        p = var(0) * var(SPACE.y(0))
        out = p.integrate_box(self.BOX)
        assert isinstance(out, Polynomial)
        assert out == var(SPACE.y(0)) * 0.5

    def test_fixed_values(self):
        p = var(0) * var(SPACE.y(0))
        out = p.integrate_box(self.BOX, fixed={SPACE.y(0): 2.0})
        assert out == pytest.approx(1.0)

    def test_edge_examples(self):
        # over {x2 = 1, x1 in [0,1]}: integral of x1 is 1/2
        assert var(0).integrate_edge(1, 1.0, self.BOX) == pytest.approx(0.5)
        # over {x1 = 0}: integral of x1 vanishes
        assert var(0).integrate_edge(0, 0.0, self.BOX) == pytest.approx(0.0)

    def test_divergence_theorem_on_edges(self):
        # sum over the 4 unit-square edges of x.n equals 2 |Omega|
        total = 0.0
        for axis in range(2):
            total += var(axis).integrate_edge(axis, 1.0, self.BOX)
            total -= var(axis).integrate_edge(axis, 0.0, self.BOX)
        assert total == pytest.approx(2.0)

    def test_fundamental_theorem(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            # x-only polynomial
            mons = monomials_up_to(2, 4)
            p = Polynomial(SPACE, {m + (0,) * 6: float(rng.normal())
                                   for m in mons})
            dp = p.differentiate(0)
            box_val = dp.integrate_box(self.BOX)
            box_val = box_val if isinstance(box_val, float) else 0.0
            edge_val = (p.integrate_edge(0, 1.0, self.BOX)
                        - p.integrate_edge(0, 0.0, self.BOX))
            assert box_val == pytest.approx(edge_val, rel=1e-12, abs=1e-12)

    def test_non_facet_rejected(self):
        with pytest.raises(StructuralError):
            var(0).integrate_edge(0, 0.5, self.BOX)

    def test_edge_requires_x_only(self):
        with pytest.raises(StructuralError):
            var(SPACE.y(0)).integrate_edge(0, 0.0, self.BOX)


class TestOrderingAndSerialization:
    def test_graded_lex_matches_enumeration(self):
        mons = monomials_up_to(3, 3)
        assert mons == sorted(mons, key=graded_lex_key)

    def test_terms_sorted(self):
        p = var(1) + var(0) * var(0) + 1.0
        degrees = [sum(a) for a, _ in p.terms()]
        assert degrees == sorted(degrees)

    def test_json_round_trip_bit_exact(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            p = rand_poly(rng, deg=5, nterms=10, int_coeffs=False)
            q = Polynomial.from_json(SPACE, p.to_json())
            assert q == p  # dict equality on floats is bitwise

    def test_json_handles_awkward_floats(self):
        vals = [1e-308, 1.7976931348623157e308, 0.1 + 0.2, -3.5e-17]
        p = Polynomial(SPACE, {tuple([k] + [0] * 7): v
                               for k, v in enumerate(vals)})
        text = json.dumps(p.to_json_obj())
        q = Polynomial.from_json_obj(SPACE, json.loads(text))
        assert q == p


class TestVariableSpace:
    def test_block_layout(self):
        sp = VariableSpace(2)
        assert sp.arity == 8
        assert sp.blocks == ((0, 1), (2, 3), (4, 5, 6, 7))
        assert sp.z(1, 0) == 6
        assert sp.var_name(4) == "Z11"
        assert sp.var_name(2) == "y1"

    def test_dimension_generic(self):
        sp = VariableSpace(3)
        assert sp.arity == 15
        assert len(sp.blocks[2]) == 9

    def test_invalid_dimension(self):
        with pytest.raises(StructuralError):
            VariableSpace(0)
