"""Tests for bracket coefficients: fitting, closed forms, generating routes.

The three routes to the same numbers keep each other honest: the fit is
pure operator algebra, the generating route is pure polynomial algebra,
and the closed forms are frozen expressions.  Where the published text
admits two readings, the fitted value decides and the tests pin which
reading survives.
"""

from math import comb

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vlike.boson_algebra import commutator, equal_within
from vlike.exact_core import Q, Q0
from vlike.lie_structure import (
    CheckReport,
    StructureConstantTable,
    closed_form_constants,
    expected_central,
    exploratory_generation_report,
    fit_structure_constants,
    first_family_two_block,
    generating_formula_constants,
    structure_constant_table,
    verify_commutative_family,
    verify_first_family_form,
    verify_generating_identities,
    verify_half_twist,
    verify_independence_of_manifold,
    verify_prop_univ,
    verify_r_deformed_generating,
    verify_shift_relations,
    verify_structure_constants,
)
from vlike.spectrum import catalog
from vlike.stress_tensor import build_l_of_nu, extract_lmk

DIM1 = catalog("dim1")
A2 = catalog("a2")
P1 = catalog("p1")
ALL = [DIM1, A2, P1]


def lmk(s, m, k, window):
    return extract_lmk(build_l_of_nu(s, m, window), k)


class TestFitting:
    @pytest.mark.parametrize("s", ALL, ids=["dim1", "a2", "p1"])
    def test_plain_virasoro_pair(self, s):
        coeffs, central = fit_structure_constants(s, 2, 0, 1, 0, 7 + s.r_max)
        assert coeffs[0] == 1
        assert all(coeffs[h] == 0 for h in coeffs if h > 0)
        assert central == 0

    def test_lowering_member_is_diagonal(self):
        # bracket with the level--1 member only moves the level down
        coeffs, central = fit_structure_constants(A2, -1, 0, 3, 1, 8)
        assert coeffs == {0: Q0, 1: Q(-4)}
        assert central == 0

    @pytest.mark.parametrize("s", [DIM1, A2], ids=["dim1", "a2"])
    def test_central_pair(self, s):
        coeffs, central = fit_structure_constants(s, 1, 1, -1, 0, 7)
        assert all(c == 0 for c in coeffs.values())
        assert central == Q(-s.dim, 2)
        coeffs, central = fit_structure_constants(s, -1, 0, 1, 1, 7)
        assert central == Q(s.dim, 2)

    def test_no_central_off_the_special_pair(self):
        _, central = fit_structure_constants(A2, 2, 1, -1, 0, 8)
        assert central == 0

    def test_rejects_bad_levels(self):
        with pytest.raises(ValueError):
            fit_structure_constants(DIM1, -2, 0, 1, 0, 8)
        with pytest.raises(ValueError):
            fit_structure_constants(DIM1, -1, 0, -1, 0, 8)
        with pytest.raises(ValueError):
            fit_structure_constants(DIM1, 2, 2, 1, 0, 8)

    def test_antisymmetry_of_fit(self):
        a, ca = fit_structure_constants(DIM1, 3, 1, 2, 0, 9)
        b, cb = fit_structure_constants(DIM1, 2, 0, 3, 1, 9)
        assert a == {h: -c for h, c in b.items()}
        assert ca == -cb


class TestClosedForms:
    def test_plain_virasoro_row(self):
        for m, n in [(-1, 1), (0, 0), (3, 2), (4, -1)]:
            hmax = (m + n + 1) // 2
            for h in range(hmax + 1):
                want = Q(m - n) if h == 0 else Q0
                assert closed_form_constants(m, 0, n, 0, h) == want

    def test_delta_readings_differ_where_expected(self):
        # the lone Kronecker term of the level-1 display
        assert closed_form_constants(1, 0, 2, 1, 1, kronecker_reading="printed") == Q(-1, 2)
        assert closed_form_constants(1, 0, 2, 1, 1, kronecker_reading="diag") == Q(-3, 2)
        # at l = 0 both readings collapse to the plain Virasoro row
        assert closed_form_constants(1, 0, 3, 0, 0) == Q(-2)

    def test_top_prefactor_readings(self):
        # k = 2 separates the printed (2k)! from the consistent 2
        assert closed_form_constants(3, 2, 2, 0, 2) == Q(36, 5)
        assert (
            closed_form_constants(3, 2, 2, 0, 2, top_prefactor="consistent") == Q(3, 5)
        )
        assert (
            closed_form_constants(3, 2, 2, 0, 3, top_prefactor="consistent") == Q(9)
        )
        # k = 1: the two coincide
        for h in range(3):
            assert closed_form_constants(1, 1, 2, 0, h) == closed_form_constants(
                1, 1, 2, 0, h, top_prefactor="consistent"
            )

    def test_level_raising_shapes(self):
        # bracket with the plain level-1 member, delta sitting at h = k
        assert closed_form_constants(2, 1, 1, 0, 0) == Q0
        assert closed_form_constants(2, 1, 1, 0, 1) == Q(3, 2)
        # bracket with the nu^2 level-1 member
        assert closed_form_constants(2, 1, 1, 1, 1) == Q0
        assert closed_form_constants(2, 1, 1, 1, 2) == Q(-2 * comb(4, 2), 4)

    def test_cross_branch_overlap_is_consistent(self):
        # (m,k) = (3,2) against (n,l) = (1,0) is covered by both the
        # top-member formula and the level-raising shape, on h <= 2
        for h in range(3):
            top = closed_form_constants(3, 2, 1, 0, h, top_prefactor="consistent")
            raising = Q(2 * (2 * h - 8 + 3), 5 * 3) * comb(2 * h, 2) + (
                Q(2) if h == 2 else Q0
            )
            if h < 2:
                raising = Q0
            assert top == raising

    def test_uncovered_tuples_return_none(self):
        assert closed_form_constants(2, 1, 2, 1, 2) is None
        assert closed_form_constants(4, 2, 3, 1, 3) is None

    def test_out_of_band_h_is_zero(self):
        assert closed_form_constants(1, 0, 1, 0, 5) == Q0
        assert closed_form_constants(-1, 0, 2, 1, -1) == Q0

    def test_bad_indices_raise(self):
        with pytest.raises(ValueError):
            closed_form_constants(1, 2, 1, 0, 0)
        with pytest.raises(ValueError):
            closed_form_constants(1, 0, 1, 0, 0, kronecker_reading="guess")
        with pytest.raises(ValueError):
            closed_form_constants(1, 0, 1, 0, 0, top_prefactor="guess")

    def test_swap_antisymmetry(self):
        for h in range(3):
            assert closed_form_constants(3, 1, -1, 0, h) == -closed_form_constants(
                -1, 0, 3, 1, h
            )


class TestGeneratingFormula:
    def test_reproduces_fit_on_sample_pairs(self):
        for m, n in [(2, 1), (3, 2), (4, 3), (1, 1), (-1, 2)]:
            gen = generating_formula_constants(m, n)
            window = max(abs(m), abs(n), abs(m + n)) + 3
            for k in range((m + 1) // 2 + 1):
                for l in range((n + 1) // 2 + 1):
                    coeffs, _ = fit_structure_constants(DIM1, m, k, n, l, window)
                    for h, c in coeffs.items():
                        assert gen.entries[(m, k, n, l, h)] == c, (m, k, n, l, h)

    def test_plain_row_matches_closed_form(self):
        gen = generating_formula_constants(2, 1)
        assert gen.entries[(2, 0, 1, 0, 0)] == 1
        assert gen.entries[(2, 0, 1, 0, 1)] == 0
        assert gen.entries[(2, 0, 1, 0, 2)] == 0

    def test_combined_level_minus_one_edge(self):
        gen = generating_formula_constants(0, -1)
        assert gen.entries == {(0, 0, -1, 0, 0): Q(1)}

    def test_below_minus_one_rejected(self):
        with pytest.raises(ValueError):
            generating_formula_constants(-1, -1)

    def test_max_h_filters_output(self):
        gen = generating_formula_constants(3, 2, max_h=1)
        assert all(h <= 1 for (_, _, _, _, h) in gen.entries)

    @given(
        m=st.integers(min_value=-1, max_value=3),
        n=st.integers(min_value=-1, max_value=3),
    )
    @settings(max_examples=12, deadline=None)
    def test_antisymmetry_property(self, m, n):
        if m + n < -1:
            return
        a = generating_formula_constants(m, n)
        b = generating_formula_constants(n, m)
        for (mm, k, nn, l, h), c in a.entries.items():
            assert b.entries[(nn, l, mm, k, h)] == -c

    def test_below_diagonal_vanishing(self):
        gen = generating_formula_constants(3, 4)
        for (_, k, _, l, h), c in gen.entries.items():
            if h < k + l:
                assert c == 0


class TestVerifyStructureConstants:
    @pytest.mark.parametrize("s", ALL, ids=["dim1", "a2", "p1"])
    def test_mixed_pair_passes(self, s):
        report = verify_structure_constants(s, 1, 2, 7 + s.r_max)
        assert report.ok, report.mismatches
        assert report.info["kronecker_reading"] == "diag"

    def test_top_prefactor_resolves_to_consistent(self):
        report = verify_structure_constants(DIM1, 3, 2, 9)
        assert report.ok, report.mismatches
        assert report.info["top_prefactor"] == "consistent"

    def test_report_serializes(self):
        report = verify_structure_constants(DIM1, 0, 0, 6)
        d = report.to_json_dict()
        assert d["ok"] is True
        assert d["window"] == 6
        assert isinstance(d["mismatches"], list)


class TestUniversalBrackets:
    @pytest.mark.parametrize("s", [DIM1, A2], ids=["dim1", "a2"])
    @pytest.mark.parametrize("m,k", [(2, 1), (3, 1), (1, 0), (-1, 0), (4, 2)])
    def test_level_raising_with_plain_member(self, s, m, k):
        report = verify_prop_univ(m, k, "L10", s, abs(m) + 3 + s.r_max)
        assert report.ok, report.mismatches

    @pytest.mark.parametrize("s", [DIM1, A2], ids=["dim1", "a2"])
    @pytest.mark.parametrize("m,k", [(2, 1), (3, 2), (-1, 0), (0, 0)])
    def test_level_raising_with_nu2_member(self, s, m, k):
        report = verify_prop_univ(m, k, "L12", s, abs(m) + 3 + s.r_max)
        assert report.ok, report.mismatches

    def test_unknown_selector_rejected(self):
        with pytest.raises(ValueError):
            verify_prop_univ(1, 0, "L20", DIM1, 6)

    @pytest.mark.parametrize("s", [DIM1, A2], ids=["dim1", "a2"])
    @pytest.mark.parametrize("k", [1, 2])
    def test_top_member_raising_example(self, s, k):
        # [L_{1,0}, L_{2k-1,2k}] collapses to a single top member
        window = 2 * k + 3 + s.r_max
        a = lmk(s, 1, 0, window)
        b = lmk(s, 2 * k - 1, k, window)
        bracket = commutator(a, b)
        want = lmk(s, 2 * k, k, window) * Q(-2 * (2 * k - 1), 2 * k + 1)
        res = equal_within(bracket, want, bracket.exact_radius)
        assert res.equal, res.witness

    @pytest.mark.parametrize("s", [DIM1, A2], ids=["dim1", "a2"])
    @pytest.mark.parametrize("l", [1, 2])
    def test_nu2_member_raising_example(self, s, l):
        # [L_{1,2}, L_{2l,2l}] climbs the commuting family's diagonal
        window = 2 * l + 3 + s.r_max
        a = lmk(s, 1, 1, window)
        b = lmk(s, 2 * l, l, window)
        bracket = commutator(a, b)
        want = lmk(s, 2 * l + 1, l + 1, window) * Q(2 * l + 1)
        res = equal_within(bracket, want, bracket.exact_radius)
        assert res.equal, res.witness


class TestHalfTwist:
    def test_central_pair_dim1(self):
        report = verify_half_twist(1, -1, DIM1, 7)
        assert report.ok, report.mismatches

    def test_central_scales_with_dimension(self):
        a = build_l_of_nu(A2, 1, 7).eval(Q(1, 2))
        b = build_l_of_nu(A2, -1, 7).eval(Q(1, 2))
        bracket = commutator(a, b)
        want = build_l_of_nu(A2, 0, 7).eval(Q(1, 2)) * Q(2)
        diff = bracket - want
        assert diff.op.constant == Q(-2, 8)

    @pytest.mark.parametrize("m,n", [(2, 0), (3, 1), (0, -1)])
    def test_plain_shape(self, m, n):
        report = verify_half_twist(m, n, A2, 8)
        assert report.ok, report.mismatches

    @pytest.mark.parametrize("m", [-1, 0, 2])
    def test_self_bracket_vanishes(self, m):
        report = verify_half_twist(m, m, DIM1, 7)
        assert report.ok, report.mismatches

    def test_combined_level_below_minus_one(self):
        report = verify_half_twist(-1, -1, A2, 7)
        assert report.ok, report.mismatches


class TestCommutingFamily:
    def test_first_two_members_dim1(self):
        report = verify_commutative_family(1, 2, DIM1, 10)
        assert report.ok, report.mismatches

    def test_self_bracket(self):
        report = verify_commutative_family(1, 1, DIM1, 8)
        assert report.ok, report.mismatches

    def test_deeper_pair_a2(self):
        report = verify_commutative_family(2, 3, A2, 14)
        assert report.ok, report.mismatches

    def test_family_indices_start_at_one(self):
        with pytest.raises(ValueError):
            verify_commutative_family(0, 1, DIM1, 8)


class TestFirstFamilyForm:
    @pytest.mark.parametrize("s", ALL, ids=["dim1", "a2", "p1"])
    @pytest.mark.parametrize("k", [1, 2])
    def test_two_block_equality(self, s, k):
        window = 2 * k + s.r_max + 2
        report = verify_first_family_form(s, k, window)
        assert report.ok, report.mismatches

    def test_two_block_builder_shape(self):
        op = first_family_two_block(DIM1, 1, 6)
        # the finite square part contributes one diagonal key
        from vlike.exact_core import HalfInt

        assert (HalfInt(1), HalfInt(1)) in op.quad
        assert op.constant == 0

    def test_family_index_validates(self):
        with pytest.raises(ValueError):
            first_family_two_block(DIM1, 0, 6)


class TestShiftRelations:
    @pytest.mark.parametrize("s", [DIM1, P1], ids=["dim1", "p1"])
    @pytest.mark.parametrize("m,k", [(4, 2), (3, 0), (1, 1), (0, 0), (-1, 0)])
    def test_lowering_and_grading(self, s, m, k):
        report = verify_shift_relations(s, m, k, abs(m) + 3 + s.r_max)
        assert report.ok, report.mismatches


class TestIndependence:
    def test_deep_tuple_matches_across_catalog(self):
        report = verify_independence_of_manifold(3, 2, 2, 0)
        assert report.ok, report.mismatches
        assert report.info["coefficients"] == {0: "0", 1: "0", 2: "3/5", 3: "9"}

    def test_degenerate_plain_pair(self):
        report = verify_independence_of_manifold(1, 0, 1, 0)
        assert report.ok, report.mismatches
        assert report.info["coefficients"][0] == "0"

    def test_central_scales_with_dimension_but_table_does_not(self):
        report = verify_independence_of_manifold(1, 1, -1, 0)
        assert report.ok, report.mismatches
        for s in ALL:
            _, central = fit_structure_constants(s, 1, 1, -1, 0, 5 + s.r_max)
            assert central == Q(-s.dim, 2)


class TestGeneratingIdentities:
    def test_stated_caps(self):
        report = verify_generating_identities(6, 10)
        assert report.ok, report.mismatches

    def test_small_caps(self):
        report = verify_generating_identities(3, 6)
        assert report.ok, report.mismatches

    def test_r_deformed_on_p1(self):
        report = verify_r_deformed_generating(P1, y_cap=8, x_cap=5)
        assert report.ok, report.mismatches

    def test_r_deformed_trivial_without_r(self):
        report = verify_r_deformed_generating(DIM1, y_cap=6, x_cap=4)
        assert report.ok, report.mismatches


class TestStructureConstantTableExport:
    def test_csv_is_deterministic(self):
        t1 = structure_constant_table(DIM1, [(1, -1), (0, 1)], 6)
        t2 = structure_constant_table(DIM1, [(0, 1), (1, -1)], 6)
        assert t1.to_csv() == t2.to_csv()

    def test_csv_shape(self):
        table = structure_constant_table(DIM1, [(1, -1)], 6)
        text = table.to_csv()
        lines = text.strip().split("\n")
        assert lines[0] == "m,k,n,l,h,value"
        id_rows = [ln for ln in lines if ",id," in ln]
        assert len(id_rows) == 2  # (k,l) in {(0,0),(1,0)}
        assert "1,1,-1,0,id,-1/2" in lines

    def test_record_accumulates(self):
        table = StructureConstantTable()
        table.record(1, 0, 1, 0, {0: Q0, 1: Q(2)}, Q(1, 3))
        assert table.entries[(1, 0, 1, 0, 1)] == 2
        assert table.central[(1, 0, 1, 0)] == Q(1, 3)


class TestExpectedCentral:
    def test_only_the_two_special_pairs(self):
        assert expected_central(A2, 1, 1, -1, 0) == Q(-1)
        assert expected_central(A2, -1, 0, 1, 1) == Q(1)
        assert expected_central(A2, 1, 0, -1, 0) == Q0
        assert expected_central(A2, 2, 1, -2, 0) == Q0


class TestExploratoryGeneration:
    def test_low_levels_generate_dim1(self):
        report = exploratory_generation_report(DIM1, 10)
        assert isinstance(report, CheckReport)
        assert report.info["in_span"]["L(3,4)"] is True
        assert report.ok
