"""Spectrum axioms, graded powers of the nilpotent part, catalog and JSON."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vlike.exact_core import Matrix, NuPolynomial, Q, neg_one_pow, qify
from vlike.spectrum import (
    SpectrumData,
    SpectrumFormatError,
    catalog,
    graded_power,
    load_spectrum,
    spectrum_from_json_dict,
    spectrum_to_json_dict,
    validate,
)


def three_dim_example() -> SpectrumData:
    # mu spread 2 with a grade-1 part; the transpose rule for the
    # antidiagonal pairing forces the two entries of R_1 to be equal.
    return SpectrumData(
        3,
        [[0, 0, 1], [0, 1, 0], [1, 0, 0]],
        [Q(-1), Q(0), Q(1)],
        {1: [[0, 0, 0], [1, 0, 0], [0, 1, 0]]},
    )


def test_catalog_entries_validate():
    for name in ("dim1", "a2", "p1"):
        rep = validate(catalog(name))
        assert rep.ok, f"{name}:\n{rep}"


def test_catalog_unknown_name():
    with pytest.raises(KeyError):
        catalog("e8")


def test_p1_shape():
    s = catalog("p1")
    assert s.dim == 2
    assert s.mu == (Q(-1, 2), Q(1, 2))
    assert s.r_parts[1][1, 0] == 2
    assert s.r_max == 1


def test_corrupted_grading_detected():
    # entry sits at (row 0, col 1) where mu_0 - mu_1 = -1, not +1
    s = SpectrumData(
        2,
        [[0, 1], [1, 0]],
        [Q(-1, 2), Q(1, 2)],
        {1: [[0, 3], [0, 0]]},
    )
    rep = validate(s)
    assert not rep.ok
    assert any("grading" in c.name for c in rep.failures())


def test_structural_errors_reported_first():
    s = SpectrumData(2, [[1, 0, 0], [0, 1, 0]], [Q(0), Q(0)])
    rep = validate(s)
    assert not rep.ok
    assert rep.checks[0].name.startswith("shapes")
    assert len(rep.checks) == 1  # algebraic checks skipped


def test_degenerate_eta_detected():
    s = SpectrumData(2, [[1, 1], [1, 1]], [Q(0), Q(0)])
    rep = validate(s)
    assert any(c.name == "eta nondegenerate" and not c.passed for c in rep.checks)


def test_graded_power_trivial_cases():
    s = catalog("p1")
    g0 = graded_power(s, 0)
    assert set(g0.parts) == {0} and g0.parts[0] == Matrix.identity(2)
    g1 = graded_power(s, 1)
    assert set(g1.parts) == {1} and g1.parts[1] == s.r_parts[1]
    # R is nilpotent of order 2 here
    assert graded_power(s, 2).parts == {}


def test_graded_power_sums_to_dense_power():
    for s in (catalog("dim1"), catalog("a2"), catalog("p1"), three_dim_example()):
        dense = Matrix.identity(s.dim)
        for k in range(5):
            g = graded_power(s, k)
            assert g.dense(s.dim) == dense, (s, k)
            dense = dense @ s.r_dense()


def test_graded_power_transpose_rule():
    for s in (catalog("p1"), three_dim_example()):
        for k in range(4):
            for r, part in graded_power(s, k).parts.items():
                want = part * Q(neg_one_pow(k + r))
                assert s.eta_inv @ part.T @ s.eta == want, (k, r)


@settings(max_examples=25)
@given(st.lists(st.integers(-4, 4), min_size=4, max_size=4))
def test_graded_power_intertwines_diagonal_functions(coeffs):
    f = NuPolynomial(list(map(Q, coeffs)))
    for s in (catalog("p1"), three_dim_example()):
        for k in range(3):
            for r, part in graded_power(s, k).parts.items():
                left = Matrix.diag([f(m) for m in s.mu]) @ part
                right = part @ Matrix.diag([f(m + r) for m in s.mu])
                assert left == right, (k, r)


def test_rescale_r_keeps_axioms():
    s = catalog("p1").rescale_r(Q(3, 5))
    assert validate(s).ok
    assert s.r_parts[1][1, 0] == Q(6, 5)
    with pytest.raises(ValueError):
        s.rescale_r(0)


def test_json_round_trip(tmp_path):
    for name in ("dim1", "a2", "p1"):
        s = catalog(name)
        d = spectrum_to_json_dict(s)
        s2 = spectrum_from_json_dict(json.loads(json.dumps(d)))
        assert s == s2 and s2.charge == s.charge
    p = tmp_path / "spec.json"
    p.write_text(json.dumps(spectrum_to_json_dict(catalog("p1"))))
    assert load_spectrum(p) == catalog("p1")


def test_json_errors(tmp_path):
    with pytest.raises(SpectrumFormatError):
        spectrum_from_json_dict({"dim": 1, "eta": [["1"]]})  # missing mu
    with pytest.raises(SpectrumFormatError):
        spectrum_from_json_dict(
            {"dim": 1, "eta": [["one"]], "mu": ["0"], "R": {}}
        )
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(SpectrumFormatError):
        load_spectrum(bad)


def test_spectrum_equality_ignores_charge():
    a = catalog("a2")
    b = SpectrumData(a.dim, a.eta, a.mu, a.r_parts, charge=None)
    assert a == b
