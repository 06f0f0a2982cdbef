"""Tests for the windowed quadratic boson algebra.

The small hand-computed brackets here pin the normal-ordering and sign
conventions; the operator-level checks against the level-m family pin
the contraction machinery end to end.
"""

import pytest
from hypothesis import given, settings, strategies as st

from vlike.boson_algebra import (
    ExactRadiusError,
    IndexCapError,
    OperatorWithValidity,
    QuadraticOperator,
    SpectrumMismatchError,
    WindowMismatchError,
    apply_first_order,
    commutator,
    equal_within,
)
from vlike.exact_core import HalfInt, Matrix, Q
from vlike.series import TruncatedSeries
from vlike.spectrum import catalog
from vlike.stress_tensor import build_l_of_nu, extract_lmk

DIM1 = catalog("dim1")
A2 = catalog("a2")
P1 = catalog("p1")


def one(x=1):
    return Matrix([[Q(x)]])


def op1(window, terms, constant=0):
    return QuadraticOperator.build(
        DIM1, window, [(HalfInt(p2), HalfInt(q2), one(c)) for p2, q2, c in terms], constant
    )


class TestCanonicalStorage:
    def test_transposed_feed_folds_to_same_storage(self):
        a = Matrix([[Q(1), Q(2)], [Q(3), Q(4)]])
        adj = A2.eta_inv @ a.T @ A2.eta
        direct = QuadraticOperator.build(A2, 4, [(HalfInt(-1), HalfInt(3), a)])
        swapped = QuadraticOperator.build(A2, 4, [(HalfInt(3), HalfInt(-1), adj)])
        assert direct == swapped
        assert list(direct.quad) == [(HalfInt(-1), HalfInt(3))]

    def test_diagonal_key_is_self_adjoint(self):
        a = Matrix([[Q(1), Q(2)], [Q(5), Q(7)]])
        op = QuadraticOperator.build(A2, 4, [(HalfInt(1), HalfInt(1), a)])
        stored = op.quad[(HalfInt(1), HalfInt(1))]
        assert stored == A2.eta_inv @ stored.T @ A2.eta

    def test_canonicalization_is_idempotent(self):
        op = op1(5, [(1, 3, 2), (3, 1, 5), (-1, -1, 1)])
        again = QuadraticOperator.build(DIM1, 5, [(p, q, a) for (p, q), a in op.quad.items()])
        assert again == op

    def test_zero_matrices_are_stripped(self):
        op = op1(4, [(1, 3, 1), (3, 1, -1)])
        assert op.quad == {} and op.is_zero

    def test_out_of_window_key_rejected(self):
        with pytest.raises(ValueError):
            op1(2, [(7, 1, 1)])

    def test_levels_and_band(self):
        op = op1(6, [(-1, 3, 1), (1, 1, 2), (-5, -7, 1)])
        assert op.levels() == {1, -6}
        assert op.band_radius() == 6


class TestLinearStructure:
    def test_add_scale_neg(self):
        a = op1(4, [(1, 1, 1)], constant=Q(1, 2))
        b = op1(4, [(1, 1, 2), (-1, 1, 1)])
        s = a + b * Q(3)
        assert s.quad[(HalfInt(1), HalfInt(1))] == one(7)
        assert s.quad[(HalfInt(-1), HalfInt(1))] == one(3)
        assert s.constant == Q(1, 2)
        assert (-a) + a == QuadraticOperator.zero(DIM1, 4)

    def test_window_mismatch_raises(self):
        with pytest.raises(WindowMismatchError):
            op1(4, [(1, 1, 1)]) + op1(5, [(1, 1, 1)])

    def test_spectrum_mismatch_raises(self):
        a = QuadraticOperator.build(A2, 4, [(HalfInt(1), HalfInt(1), Matrix.identity(2))])
        b = QuadraticOperator.build(P1, 4, [(HalfInt(1), HalfInt(1), Matrix.identity(2))])
        with pytest.raises(SpectrumMismatchError):
            commutator(a, b)


class TestSmallBrackets:
    """Brackets among single-pair operators, worked out by hand."""

    def test_disjoint_modes_commute(self):
        s = op1(4, [(-1, 1, 1)])
        t = op1(4, [(-3, 3, 1)])
        assert commutator(s, t).op.is_zero

    def test_number_operator_counts_quanta(self):
        # S = :a_{-1/2} a_{1/2}:, T = a_{1/2}^2; [S, T] = -2 T
        s = op1(4, [(-1, 1, 1)])
        t = op1(4, [(1, 1, 1)])
        b = commutator(s, t)
        assert equal_within(b, t * Q(-2), b.exact_radius)
        u = op1(4, [(-1, -1, 1)])
        bu = commutator(s, u)
        assert equal_within(bu, u * Q(2), bu.exact_radius)

    def test_level_zero_pairing_produces_constant(self):
        # [a_{1/2}^2, a_{-1/2}^2] = 4 :a_{-1/2} a_{1/2}: + 2
        t = op1(6, [(1, 1, 1)])
        u = op1(6, [(-1, -1, 1)])
        b = commutator(t, u)
        expected = op1(6, [(-1, 1, 4)], constant=2)
        assert equal_within(b, expected, b.exact_radius)
        assert b.central_exact

    def test_no_constant_off_level_zero(self):
        t = op1(6, [(1, 1, 1)])
        w = op1(6, [(-1, -3, 1)])
        assert commutator(t, w).op.constant == 0

    def test_antisymmetry_both_routing_orders(self):
        a = op1(8, [(-1, 1, 1), (1, 3, 2)])  # band 2
        b = op1(8, [(1, 5, 1), (-1, -5, 3)])  # band 6
        ab = commutator(a, b)
        ba = commutator(b, a)
        assert equal_within(ab, -ba, min(ab.exact_radius, ba.exact_radius))

    def test_bilinearity(self):
        a = op1(8, [(-1, 1, 1)])
        b = op1(8, [(1, 1, 1), (-3, 1, 2)])
        c = op1(8, [(-1, -1, 1), (1, 3, 1)])
        lhs = commutator(a + b * Q(2), c)
        rhs = commutator(a, c) + commutator(b, c) * Q(2)
        assert equal_within(lhs, rhs, min(lhs.exact_radius, rhs.exact_radius))


class TestLevelFamilyBrackets:
    def test_dim1_sl2_bracket(self):
        w = 8
        l1 = extract_lmk(build_l_of_nu(DIM1, 1, w), 0)
        lm1 = extract_lmk(build_l_of_nu(DIM1, -1, w), 0)
        l0 = extract_lmk(build_l_of_nu(DIM1, 0, w), 0)
        b = commutator(l1, lm1)
        assert b.central_exact
        assert equal_within(b, l0 * Q(2), b.exact_radius)

    def test_dim1_central_bracket_value(self):
        w = 8
        l12 = extract_lmk(build_l_of_nu(DIM1, 1, w), 1)
        lm1 = extract_lmk(build_l_of_nu(DIM1, -1, w), 0)
        b = commutator(l12, lm1)
        assert b.op.quad == {}
        assert b.op.constant == Q(-1, 2)

    @pytest.mark.parametrize("window", [8, 10])
    def test_central_value_is_window_stable(self, window):
        l12 = extract_lmk(build_l_of_nu(A2, 1, window), 1)
        lm1 = extract_lmk(build_l_of_nu(A2, -1, window), 0)
        b = commutator(l12, lm1)
        assert b.op.constant == Q(-1)  # -dim/2 for the two-point spectrum
        assert b.central_exact

    @settings(max_examples=6, deadline=None)
    @given(
        st.sampled_from(["dim1", "a2", "p1"]),
        st.lists(
            st.tuples(st.integers(-1, 3), st.integers(0, 2)), min_size=3, max_size=3
        ),
    )
    def test_jacobi_identity(self, name, picks):
        s = catalog(name)
        w = 10
        ops = []
        for m, k in picks:
            lnu = build_l_of_nu(s, m, w)
            op = extract_lmk(lnu, min(k, (m + 1) // 2))
            ops.append(op)
        a, b, c = ops
        total = (
            commutator(a, commutator(b, c))
            + commutator(b, commutator(c, a))
            + commutator(c, commutator(a, b))
        )
        zero = QuadraticOperator.zero(s, w)
        assert equal_within(total, zero, total.exact_radius)


class TestValidityTracking:
    def test_commutator_radius_shrinks_by_smaller_band(self):
        a = op1(9, [(-1, 3, 1)])  # band 1
        b = op1(9, [(1, 9, 1)])  # band 5
        assert commutator(a, b).exact_radius == 9 - 1

    def test_wrapped_operands_propagate_radius(self):
        a = op1(9, [(-1, 3, 1)])
        b = op1(9, [(1, 5, 1)])
        first = commutator(a, b)
        second = commutator(first, a)
        assert second.exact_radius == first.exact_radius - 1

    def test_sum_of_wrapped_takes_min_radius(self):
        x = OperatorWithValidity(op1(9, [(1, 1, 1)]), 7)
        y = OperatorWithValidity(op1(9, [(1, 3, 1)]), 4)
        assert (x + y).exact_radius == 4

    def test_equal_within_rejects_overreach(self):
        x = OperatorWithValidity(op1(9, [(1, 1, 1)]), 3)
        with pytest.raises(ExactRadiusError):
            equal_within(x, op1(9, []), 5)

    def test_equal_within_reports_witness(self):
        a = op1(6, [(1, 3, 1)], constant=1)
        b = op1(6, [(1, 3, 2)], constant=1)
        res = equal_within(a, b, 4)
        assert not res.equal and "3/2" in res.witness
        res2 = equal_within(a, a * Q(1), 4)
        assert res2.equal and res2.witness is None

    def test_exhausted_radius_raises(self):
        a = op1(4, [(-1, 7, 1)])  # band 3
        b = OperatorWithValidity(op1(4, [(1, 7, 1)]), 2)  # band 4, radius 2
        with pytest.raises(ExactRadiusError):
            commutator(b, a)


class TestSerialization:
    def test_round_trip(self):
        a = Matrix([[Q(1, 3), Q(0)], [Q(-2), Q(7, 5)]])
        op = QuadraticOperator.build(
            A2, 6, [(HalfInt(-3), HalfInt(5), a), (HalfInt(1), HalfInt(1), Matrix.identity(2))],
            constant=Q(-5, 8),
        )
        data = op.to_json_dict()
        assert data["window"] == 6
        assert all(set(t) == {"p", "q", "matrix"} for t in data["terms"])
        back = QuadraticOperator.from_json_dict(data, A2)
        assert back == op

    def test_serial_keys_are_twice_notation(self):
        op = op1(4, [(1, 3, 1)])
        term = op.to_json_dict()["terms"][0]
        assert term["p"] == "1/2" and term["q"] == "3/2"


class TestDictionaryApplication:
    def kit(self, kmax=3, cap=4):
        f = (
            TruncatedSeries.var(0, 0, 1, kmax, cap)
            * TruncatedSeries.var(0, 1, 1, kmax, cap)
            + TruncatedSeries.var(0, 1, 1, kmax, cap) ** 2
        )
        return f, kmax, cap

    def test_mixed_term_is_first_order(self):
        # :a_{-1/2} a^{3/2}: acts as t~^0 d/dt^1
        f, kmax, cap = self.kit()
        op = op1(4, [(-1, 3, 1)])
        res = apply_first_order(op, f)
        t0 = TruncatedSeries.var(0, 0, 1, kmax, cap)
        t1 = TruncatedSeries.var(0, 1, 1, kmax, cap)
        assert res.first_order == t0 * (t0 + t1 * 2)
        assert res.quadratic_diff.is_zero and res.multiplication.is_zero

    def test_annihilation_pair_is_second_order(self):
        f, kmax, cap = self.kit()
        op = op1(4, [(1, 1, 1)])
        res = apply_first_order(op, f)
        t1 = TruncatedSeries.var(0, 1, 1, kmax, cap)
        assert res.quadratic_diff == t1 * t1

    def test_creation_pair_carries_dilaton_shift(self):
        f, kmax, cap = self.kit()
        op = op1(4, [(-3, -1, 1)])
        res = apply_first_order(op, f)
        t0 = TruncatedSeries.var(0, 0, 1, kmax, cap)
        t1 = TruncatedSeries.var(0, 1, 1, kmax, cap)
        assert res.multiplication == -(t1 - 1) * t0

    def test_eta_contraction_for_two_flavours(self):
        kmax, cap = 2, 4
        f = TruncatedSeries.var(0, 0, 2, kmax, cap) * TruncatedSeries.var(1, 0, 2, kmax, cap)
        op = QuadraticOperator.build(A2, 4, [(HalfInt(-1), HalfInt(1), Matrix.identity(2))])
        res = apply_first_order(op, f)
        assert res.first_order == f * 2

    def test_cap_violation_raises_or_restricts(self):
        f, kmax, cap = self.kit(kmax=1)
        op = op1(6, [(-1, 9, 1), (-1, 3, 1)])
        with pytest.raises(IndexCapError):
            apply_first_order(op, f)
        res = apply_first_order(op, f, restrict=True)
        t0 = TruncatedSeries.var(0, 0, 1, kmax, cap)
        t1 = TruncatedSeries.var(0, 1, 1, kmax, cap)
        assert res.first_order == t0 * (t0 + t1 * 2)

    def test_string_operator_residual_shape(self):
        # dim1 L_{-1,0} = sum t~_m d/dt_{m-1} + t_0^2/2 eps^-2
        kmax, cap = 4, 3
        w = 6
        lm1 = extract_lmk(build_l_of_nu(DIM1, -1, w), 0)
        f = TruncatedSeries.var(0, 0, 1, kmax, cap) ** 3 * Q(1, 6)
        res = apply_first_order(lm1, f, restrict=True)
        t0 = TruncatedSeries.var(0, 0, 1, kmax, cap)
        t1 = TruncatedSeries.var(0, 1, 1, kmax, cap)
        assert res.multiplication == t0 * t0 * Q(1, 2)
        assert res.first_order == (t1 - 1) * t0 * t0 * Q(1, 2)
        assert res.quadratic_diff.is_zero
