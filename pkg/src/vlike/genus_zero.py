"""Polynomial Frobenius structures, calibrations, and genus-zero checks.

Everything here is exact.  Potentials are polynomials in the flat
coordinates with rational coefficients, calibrations come out of the
defining recursion in closed polynomial form, and the genus-zero free
energy is a truncated series whose coefficients are exact rationals.
Because a windowed operator applied to a truncated series proves nothing
beyond a computable total degree, every verification entry point states
the degree it actually certifies.
"""

from __future__ import annotations

import json

from .boson_algebra import OperatorWithValidity, apply_first_order
from .exact_core import Matrix, Q, Q0, Q1, q_str, qify
from .lie_structure import CheckReport
from .series import TruncatedSeries
from .spectrum import SpectrumData, ValidationReport
from .stress_tensor import build_l_of_nu, extract_lmk


class PotentialFormatError(ValueError):
    """Raised for malformed potential files or constructor input."""


class CalibrationError(ValueError):
    """The calibration recursion cannot be continued as requested."""


class VPoly:
    """Exact polynomial in the flat coordinates v^0 .. v^{dim-1}.

    Keys are exponent tuples; only nonzero coefficients are stored.  This
    is deliberately a plain polynomial ring, not a quotient: calibration
    building needs honest integration and differentiation, and silent
    degree truncation would corrupt both.
    """

    __slots__ = ("dim", "terms")

    def __init__(self, dim: int, terms=None):
        self.dim = dim
        self.terms: dict[tuple, Q] = {}
        if terms:
            for e, c in terms.items():
                e = tuple(int(x) for x in e)
                if len(e) != dim or any(x < 0 for x in e):
                    raise ValueError(f"bad exponent tuple {e} for dimension {dim}")
                c = qify(c)
                if c != 0:
                    self.terms[e] = self.terms.get(e, Q0) + c
        for e in [e for e, c in self.terms.items() if c == 0]:
            del self.terms[e]

    @staticmethod
    def zero(dim: int) -> "VPoly":
        return VPoly(dim)

    @staticmethod
    def const(c, dim: int) -> "VPoly":
        return VPoly(dim, {(0,) * dim: qify(c)})

    @staticmethod
    def var(i: int, dim: int) -> "VPoly":
        e = [0] * dim
        e[i] = 1
        return VPoly(dim, {tuple(e): Q1})

    def _check(self, other: "VPoly"):
        if self.dim != other.dim:
            raise ValueError("polynomial rings differ in dimension")

    def __add__(self, other):
        if not isinstance(other, VPoly):
            return NotImplemented
        self._check(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            v = out.get(e, Q0) + c
            if v == 0:
                out.pop(e, None)
            else:
                out[e] = v
        res = VPoly(self.dim)
        res.terms = out
        return res

    def __sub__(self, other):
        if not isinstance(other, VPoly):
            return NotImplemented
        return self + (-other)

    def __neg__(self):
        res = VPoly(self.dim)
        res.terms = {e: -c for e, c in self.terms.items()}
        return res

    def __mul__(self, other):
        if isinstance(other, VPoly):
            self._check(other)
            out: dict[tuple, Q] = {}
            for ea, ca in self.terms.items():
                for eb, cb in other.terms.items():
                    e = tuple(x + y for x, y in zip(ea, eb))
                    v = out.get(e, Q0) + ca * cb
                    if v == 0:
                        out.pop(e, None)
                    else:
                        out[e] = v
            res = VPoly(self.dim)
            res.terms = out
            return res
        try:
            c = qify(other)
        except TypeError:
            return NotImplemented
        return self.scale(c)

    __rmul__ = __mul__

    def scale(self, c) -> "VPoly":
        c = qify(c)
        res = VPoly(self.dim)
        if c != 0:
            res.terms = {e: c * v for e, v in self.terms.items()}
        return res

    def diff(self, i: int) -> "VPoly":
        out: dict[tuple, Q] = {}
        for e, c in self.terms.items():
            if e[i] == 0:
                continue
            ne = list(e)
            ne[i] -= 1
            out[tuple(ne)] = c * e[i]
        res = VPoly(self.dim)
        res.terms = out
        return res

    def eval_rational(self, point) -> Q:
        acc = Q0
        for e, c in self.terms.items():
            term = c
            for x, p in zip(point, e):
                for _ in range(p):
                    term = term * qify(x)
            acc += term
        return acc

    def constant_term(self) -> Q:
        return self.terms.get((0,) * self.dim, Q0)

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=-1)

    def min_degree(self) -> int:
        return min((sum(e) for e in self.terms), default=-1)

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def monomials(self):
        for e in sorted(self.terms):
            yield e, self.terms[e]

    def __eq__(self, other):
        if not isinstance(other, VPoly):
            return NotImplemented
        return self.dim == other.dim and self.terms == other.terms

    __hash__ = None

    def __repr__(self):
        return f"VPoly(dim={self.dim}, terms={len(self.terms)})"


def _primitive_from_gradient(components: list[VPoly], dim: int) -> VPoly:
    """Polynomial with the given gradient and zero constant term.

    Uses the radial homotopy: integrating each component along the ray
    from the origin turns a monomial c v^m in component b into
    c v^(m + e_b) / (|m| + 1).  The caller is responsible for closedness
    of the input; this routine does not symmetrize.
    """
    out: dict[tuple, Q] = {}
    for b, comp in enumerate(components):
        for e, c in comp.terms.items():
            ne = list(e)
            ne[b] += 1
            key = tuple(ne)
            out[key] = out.get(key, Q0) + c / (sum(e) + 1)
    res = VPoly(dim)
    res.terms = {e: c for e, c in out.items() if c != 0}
    return res


class FrobeniusPotential:
    """A polynomial potential together with its scaling data.

    Stores the potential F plus the weights and shifts of the scaling
    field E = sum_b (w_b v^b + r_b) d/dv^b and the charge d.  The pairing
    eta is read off the third derivatives along the unity direction v^0,
    and mu is derived from the weights via mu_b = 1 - d/2 - w_b.  The
    constructor is permissive; :meth:`validate` is the authority on
    whether the stored data is actually a Frobenius structure.
    """

    __slots__ = (
        "dim",
        "potential",
        "charge",
        "euler_weights",
        "euler_shifts",
        "eta",
        "mu",
        "_eta_inv",
        "_c3",
        "_c_mixed",
    )

    def __init__(self, dim, potential, charge, euler_weights, euler_shifts=None):
        self.dim = int(dim)
        if self.dim <= 0:
            raise PotentialFormatError("dimension must be positive")
        if not isinstance(potential, VPoly) or potential.dim != self.dim:
            raise PotentialFormatError("potential must be a VPoly of matching dimension")
        self.potential = potential
        self.charge = qify(charge)
        self.euler_weights = tuple(qify(w) for w in euler_weights)
        self.euler_shifts = tuple(
            qify(r) for r in (euler_shifts if euler_shifts is not None else [0] * self.dim)
        )
        if len(self.euler_weights) != self.dim or len(self.euler_shifts) != self.dim:
            raise PotentialFormatError("scaling data length differs from dimension")
        half = Q(1, 2)
        self.mu = tuple(Q1 - half * self.charge - w for w in self.euler_weights)
        self._eta_inv = None
        self._c3: dict[tuple, VPoly] = {}
        self._c_mixed: dict[tuple, list[VPoly]] = {}
        # constant parts only; validate() flags any v-dependence left over
        self.eta = Matrix(
            [
                [self.third_derivative(0, a, b).constant_term() for b in range(self.dim)]
                for a in range(self.dim)
            ]
        )

    @property
    def eta_inv(self) -> Matrix:
        if self._eta_inv is None:
            self._eta_inv = self.eta.inverse()
        return self._eta_inv

    def third_derivative(self, a: int, b: int, g: int) -> VPoly:
        key = tuple(sorted((a, b, g)))
        if key not in self._c3:
            self._c3[key] = self.potential.diff(key[0]).diff(key[1]).diff(key[2])
        return self._c3[key]

    def structure_row(self, a: int, b: int) -> list[VPoly]:
        """The multiplication coefficients c_{ab}^s, index s raised."""
        key = (a, b) if a <= b else (b, a)
        if key not in self._c_mixed:
            row = []
            for s in range(self.dim):
                acc = VPoly.zero(self.dim)
                for rho in range(self.dim):
                    coef = self.eta_inv[s, rho]
                    if coef == 0:
                        continue
                    acc = acc + self.third_derivative(key[0], key[1], rho).scale(coef)
                row.append(acc)
            self._c_mixed[key] = row
        return self._c_mixed[key]

    def euler_apply(self, f: VPoly) -> VPoly:
        """The scaling field applied to a polynomial."""
        out: dict[tuple, Q] = {}
        for e, c in f.terms.items():
            w = Q0
            for b in range(self.dim):
                if e[b]:
                    w += self.euler_weights[b] * e[b]
            if w != 0:
                out[e] = out.get(e, Q0) + w * c
        res = VPoly(self.dim)
        res.terms = {e: c for e, c in out.items() if c != 0}
        for b in range(self.dim):
            if self.euler_shifts[b] != 0:
                res = res + f.diff(b).scale(self.euler_shifts[b])
        return res

    def validate(self) -> ValidationReport:
        """Check the Frobenius axioms for the stored polynomial data."""
        rep = ValidationReport()
        l = self.dim

        bad = next(
            (
                (a, b)
                for a in range(l)
                for b in range(l)
                if self.third_derivative(0, a, b).degree() > 0
            ),
            None,
        )
        rep.add(
            "pairing from third derivatives along the unity direction is constant",
            bad is None,
            None if bad is None else f"entry {bad} depends on v",
        )
        if bad is not None:
            return rep

        det = self.eta.det()
        rep.add("pairing nondegenerate", det != 0, None if det != 0 else "det = 0")
        if det == 0:
            return rep

        # associativity as exact polynomial identities
        wdvv_ok = True
        witness = None
        for a in range(l):
            for d in range(l):
                for b in range(l):
                    for g in range(b + 1, l):
                        lhs = VPoly.zero(l)
                        rhs = VPoly.zero(l)
                        for s in range(l):
                            rowbg = self.structure_row(a, b)[s]
                            rowgb = self.structure_row(a, g)[s]
                            lhs = lhs + rowbg * self.third_derivative(s, g, d)
                            rhs = rhs + rowgb * self.third_derivative(s, b, d)
                        if lhs != rhs:
                            wdvv_ok = False
                            witness = f"indices a={a}, d={d}, pair ({b},{g})"
        rep.add("associativity of the induced product", wdvv_ok, witness)

        bad = next(
            (
                (a, b)
                for a in range(l)
                for b in range(l)
                if self.eta[a, b] != 0
                and self.euler_weights[a] + self.euler_weights[b] != 2 - self.charge
            ),
            None,
        )
        rep.add(
            "weights pair to 2 - d wherever the pairing is nonzero",
            bad is None,
            None if bad is None else f"entry {bad}",
        )

        resid = self.euler_apply(self.potential) - self.potential.scale(3 - self.charge)
        hom_ok = resid.degree() <= 2
        rep.add(
            "potential scales with eigenvalue 3 - d up to quadratic terms",
            hom_ok,
            None if hom_ok else f"residual has degree {resid.degree()}",
        )
        return rep

    def __repr__(self):
        return (
            f"FrobeniusPotential(dim={self.dim}, charge={q_str(self.charge)}, "
            f"terms={len(self.potential.terms)})"
        )


_POTENTIAL_CATALOG = {
    "dim1": {
        "dim": 1,
        "potential": [{"exponents": [3], "coeff": "1/6"}],
        "charge": "0",
        "euler_weights": ["1"],
        "euler_shifts": ["0"],
    },
    "a2": {
        "dim": 2,
        "potential": [
            {"exponents": [2, 1], "coeff": "1/2"},
            {"exponents": [0, 4], "coeff": "1/72"},
        ],
        "charge": "1/3",
        "euler_weights": ["1", "2/3"],
        "euler_shifts": ["0", "0"],
    },
}


def potential_catalog(name: str) -> FrobeniusPotential:
    """A validated catalog potential, one of "dim1" or "a2".

    The catalog is polynomial-only; the spectrum catalog's third entry has
    no polynomial potential and is exercised by the operator modules
    alone.
    """
    try:
        raw = _POTENTIAL_CATALOG[name]
    except KeyError:
        raise KeyError(
            f"unknown potential {name!r}; have {sorted(_POTENTIAL_CATALOG)}"
        ) from None
    p = potential_from_json_dict(raw)
    rep = p.validate()
    if not rep.ok:  # pragma: no cover - catalog is fixed and valid
        raise AssertionError(f"catalog potential {name} fails validation:\n{rep}")
    return p


def potential_from_json_dict(d: dict) -> FrobeniusPotential:
    """Build a potential from the documented JSON shape.

    {"dim": l, "potential": [{"exponents": [..], "coeff": "p/q"}, ...],
     "charge": "p/q", "euler_weights": [...], "euler_shifts": [...]}
    """
    try:
        dim = int(d["dim"])
        terms: dict[tuple, Q] = {}
        for entry in d["potential"]:
            e = tuple(int(x) for x in entry["exponents"])
            terms[e] = terms.get(e, Q0) + qify(entry["coeff"])
        poly = VPoly(dim, terms)
        return FrobeniusPotential(
            dim,
            poly,
            d["charge"],
            d["euler_weights"],
            d.get("euler_shifts"),
        )
    except PotentialFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise PotentialFormatError(f"bad potential data: {exc}") from exc


def potential_to_json_dict(p: FrobeniusPotential) -> dict:
    return {
        "dim": p.dim,
        "potential": [
            {"exponents": list(e), "coeff": q_str(c)} for e, c in p.potential.monomials()
        ],
        "charge": q_str(p.charge),
        "euler_weights": [q_str(w) for w in p.euler_weights],
        "euler_shifts": [q_str(r) for r in p.euler_shifts],
    }


def load_potential(path) -> FrobeniusPotential:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PotentialFormatError(f"not valid JSON: {exc}") from exc
    return potential_from_json_dict(raw)


class Calibration:
    """Flat-section tails theta(alpha, k) for k up to a fixed depth.

    Holds the table produced by :func:`build_calibration` and caches the
    gradients and the two-index pairing polynomials derived from it.
    """

    __slots__ = ("potential", "k_max", "_table", "_grad", "_pair_cache", "_pair_level")

    def __init__(self, potential: FrobeniusPotential, k_max: int, table: dict):
        self.potential = potential
        self.k_max = k_max
        self._table = table
        self._grad: dict[tuple, VPoly] = {}
        self._pair_cache: dict[tuple, VPoly] = {}
        self._pair_level: dict[tuple, int] = {}

    def theta(self, alpha: int, k: int) -> VPoly:
        if not (0 <= alpha < self.potential.dim and 0 <= k <= self.k_max):
            raise ValueError(f"theta({alpha},{k}) outside the built range k <= {self.k_max}")
        return self._table[(alpha, k)]

    def gradient(self, alpha: int, k: int, gamma: int) -> VPoly:
        key = (alpha, k, gamma)
        if key not in self._grad:
            self._grad[key] = self.theta(alpha, k).diff(gamma)
        return self._grad[key]


def build_calibration(p: FrobeniusPotential, k_max: int) -> Calibration:
    """Solve the flat-section recursion in polynomials up to depth k_max.

    Level k+1 is the second primitive of the known Hessian
    H_bg = c_bg^s d_s theta(alpha, k), with all integration constants
    (constant and linear coefficients) set to zero.  That choice is the
    unique one compatible with the scaling condition as long as the
    eigenvalue k+1+mu_a+mu_b never vanishes; a vanishing eigenvalue would
    leave the linear coefficients genuinely undetermined, so it raises
    instead of picking silently.
    """
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    l = p.dim
    table: dict[tuple, VPoly] = {}
    for a in range(l):
        lowered = VPoly.zero(l)
        for b in range(l):
            if p.eta[a, b] != 0:
                lowered = lowered + VPoly.var(b, l).scale(p.eta[a, b])
        table[(a, 0)] = lowered

    for k in range(k_max):
        for a in range(l):
            for b in range(l):
                if k + 1 + p.mu[a] + p.mu[b] == 0:
                    raise CalibrationError(
                        f"resonant scaling eigenvalue at theta({a},{k + 1}), "
                        f"direction {b}: the linear coefficient is undetermined"
                    )
            grads = [table[(a, k)].diff(s) for s in range(l)]
            hess = []
            for b in range(l):
                row = []
                for g in range(l):
                    acc = VPoly.zero(l)
                    crow = p.structure_row(b, g)
                    for s in range(l):
                        if not crow[s].is_zero and not grads[s].is_zero:
                            acc = acc + crow[s] * grads[s]
                    row.append(acc)
                hess.append(row)

            # both integration steps need a closed input; a failure here
            # means the potential was not associative or not polynomial
            # in the way the recursion assumes
            for b in range(l):
                for g in range(b):
                    if hess[b][g] != hess[g][b]:
                        raise CalibrationError(
                            f"hessian for theta({a},{k + 1}) is not symmetric"
                        )
            for lam in range(l):
                for b in range(lam):
                    for g in range(l):
                        if hess[b][g].diff(lam) != hess[lam][g].diff(b):
                            raise CalibrationError(
                                f"hessian for theta({a},{k + 1}) is not integrable"
                            )

            grad_next = [
                _primitive_from_gradient(hess[b], l) for b in range(l)
            ]
            theta_next = _primitive_from_gradient(grad_next, l)
            if theta_next.diff(0) != table[(a, k)]:
                raise CalibrationError(
                    f"primitive normalization failed at theta({a},{k + 1})"
                )
            table[(a, k + 1)] = theta_next
    return Calibration(p, k_max, table)


def _require_same_potential(p: FrobeniusPotential, cal: Calibration):
    if cal.potential is not p:
        raise ValueError("calibration was built from a different potential instance")


def _pairing_coefficient(cal: Calibration, alpha: int, a: int, beta: int, b: int) -> VPoly:
    """The (z^a w^b) coefficient of the gradient pairing of two sections."""
    p = cal.potential
    l = p.dim
    acc = VPoly.zero(l)
    for s in range(l):
        gs = cal.gradient(alpha, a, s)
        if gs.is_zero:
            continue
        for r in range(l):
            coef = p.eta_inv[s, r]
            if coef == 0:
                continue
            gr = cal.gradient(beta, b, r)
            if gr.is_zero:
                continue
            acc = acc + (gs * gr).scale(coef)
    return acc


def omega(p: FrobeniusPotential, cal: Calibration, alpha: int, i: int, beta: int, j: int) -> VPoly:
    """Two-index pairing polynomial extracted from the gradient pairing.

    The pairing of sections at spectral arguments z and w, minus its
    constant part, is divisible by z + w; the quotient's (z^i, w^j)
    coefficient is returned.  Divisibility is exactly the orthogonality
    relation for the calibration, and the division asserts it level by
    level rather than assuming it.
    """
    _require_same_potential(p, cal)
    if i < 0 or j < 0:
        raise ValueError("indices must be nonnegative")
    if i + j + 1 > cal.k_max:
        raise ValueError(
            f"pairing index ({i},{j}) needs depth {i + j + 1}, have {cal.k_max}"
        )
    key_pair = (alpha, beta)
    level = cal._pair_level.get(key_pair, 0)
    target = i + j + 2  # build through S-level i+j+1
    l = p.dim
    while level < target:
        n = level
        # S-level n determines the quotient at level n-1; s_row[t] holds
        # the coefficient with z-exponent n-t, w-exponent t, matching the
        # peel-off order below (cross-flavour pairs are not symmetric)
        s_row = []
        for t in range(n + 1):
            a, b = n - t, t
            val = _pairing_coefficient(cal, alpha, a, beta, b)
            if a == 0 and b == 0:
                val = val - VPoly.const(p.eta[alpha, beta], l)
            s_row.append(val)
        if n == 0:
            if not s_row[0].is_zero:
                raise CalibrationError(
                    "gradient pairing has the wrong constant part at level 0"
                )
        else:
            # peel the quotient off one coefficient at a time; the final
            # row closing to zero is the orthogonality relation
            quots = {}
            carry = s_row[0]
            quots[(n - 1, 0)] = carry
            for t in range(1, n + 1):
                nxt = s_row[t] - carry
                if t == n:
                    if not nxt.is_zero:
                        raise CalibrationError(
                            f"gradient pairing is not divisible at level {n}"
                        )
                    break
                quots[(n - 1 - t, t)] = nxt
                carry = nxt
            for (qi, qj), poly in quots.items():
                cal._pair_cache[(alpha, qi, beta, qj)] = poly
                cal._pair_cache[(beta, qj, alpha, qi)] = poly
        level += 1
        cal._pair_level[key_pair] = level
        cal._pair_level[(beta, alpha)] = level
    return cal._pair_cache[(alpha, i, beta, j)]


def verify_calibration(p: FrobeniusPotential, cal: Calibration) -> CheckReport:
    """Structural checks: base sections, recursion, primitive rule."""
    _require_same_potential(p, cal)
    l = p.dim
    mismatches = []
    for a in range(l):
        want = VPoly.zero(l)
        for b in range(l):
            if p.eta[a, b] != 0:
                want = want + VPoly.var(b, l).scale(p.eta[a, b])
        if cal.theta(a, 0) != want:
            mismatches.append(f"theta({a},0) is not the lowered coordinate")
    for k in range(cal.k_max):
        for a in range(l):
            nxt = cal.theta(a, k + 1)
            if nxt.constant_term() != 0:
                mismatches.append(f"theta({a},{k + 1}) has a constant term")
            if nxt.diff(0) != cal.theta(a, k):
                mismatches.append(f"primitive rule fails at theta({a},{k + 1})")
            for b in range(l):
                for g in range(b, l):
                    want = VPoly.zero(l)
                    crow = p.structure_row(b, g)
                    for s in range(l):
                        want = want + crow[s] * cal.gradient(a, k, s)
                    if nxt.diff(b).diff(g) != want:
                        mismatches.append(
                            f"recursion fails at theta({a},{k + 1}), pair ({b},{g})"
                        )
    return CheckReport(
        name=f"calibration structure to depth {cal.k_max}",
        ok=not mismatches,
        mismatches=mismatches,
        info={"k_max": cal.k_max},
    )


def verify_calibration_orthogonality(p: FrobeniusPotential, cal: Calibration) -> CheckReport:
    """Alternating level sums of the gradient pairing collapse to eta.

    This is the divisibility statement behind :func:`omega`, checked here
    directly for every flavour pair through level k_max - 1.
    """
    _require_same_potential(p, cal)
    l = p.dim
    mismatches = []
    for alpha in range(l):
        for beta in range(l):
            for n in range(cal.k_max):
                acc = VPoly.zero(l)
                for a in range(n + 1):
                    b = n - a
                    term = _pairing_coefficient(cal, alpha, a, beta, b)
                    acc = acc + (term if b % 2 == 0 else -term)
                want = (
                    VPoly.const(p.eta[alpha, beta], l) if n == 0 else VPoly.zero(l)
                )
                if acc != want:
                    mismatches.append(f"pair ({alpha},{beta}) fails at level {n}")
    return CheckReport(
        name=f"calibration orthogonality to level {cal.k_max - 1}",
        ok=not mismatches,
        mismatches=mismatches,
        info={"k_max": cal.k_max},
    )


def verify_calibration_scaling(
    p: FrobeniusPotential, cal: Calibration, k_limit: int | None = None
) -> CheckReport:
    """Each gradient component is a scaling eigenvector.

    Covers the vanishing-nilpotent-part case only, which is all the
    polynomial catalog contains: the scaling field applied to
    d theta(alpha,k)/dv^b must reproduce it with eigenvalue
    k + mu_a + mu_b.
    """
    _require_same_potential(p, cal)
    if k_limit is None:
        k_limit = cal.k_max
    k_limit = min(k_limit, cal.k_max)
    mismatches = []
    for k in range(k_limit + 1):
        for a in range(p.dim):
            for b in range(p.dim):
                g = cal.gradient(a, k, b)
                resid = p.euler_apply(g) - g.scale(k + p.mu[a] + p.mu[b])
                if not resid.is_zero:
                    mismatches.append(f"theta({a},{k}) direction {b}")
    return CheckReport(
        name=f"calibration scaling to depth {k_limit}",
        ok=not mismatches,
        mismatches=mismatches,
        info={"k_limit": k_limit},
    )


class SeriesPowerCache:
    """Monomial evaluations at a fixed series point, shared across calls.

    Every point component is expected to have positive minimum degree
    (true for the topological solution), so high powers die against the
    degree cap and are short-circuited to zero without being multiplied
    out.
    """

    __slots__ = ("point", "dim", "kmax", "cap", "_pows", "_monos", "_mins")

    def __init__(self, point: list[TruncatedSeries]):
        if not point:
            raise ValueError("empty evaluation point")
        self.point = point
        first = point[0]
        self.dim, self.kmax, self.cap = first.dim, first.kmax, first.degree_cap
        self._pows: list[list[TruncatedSeries]] = [[None] for _ in point]
        self._monos: dict[tuple, TruncatedSeries] = {}
        self._mins = [min(s.parts, default=None) for s in point]

    def _zero(self) -> TruncatedSeries:
        return TruncatedSeries.zero(self.dim, self.kmax, self.cap)

    def power(self, f: int, m: int) -> TruncatedSeries:
        if m == 0:
            return TruncatedSeries.const(1, self.dim, self.kmax, self.cap)
        md = self._mins[f]
        if md is None or md * m > self.cap:
            return self._zero()
        pows = self._pows[f]
        while len(pows) <= m:
            prev = pows[-1] if len(pows) > 1 else self.point[f]
            if len(pows) == 1:
                pows.append(self.point[f])
                continue
            pows.append(prev * self.point[f])
        return pows[m]

    def monomial(self, exps: tuple) -> TruncatedSeries:
        if exps in self._monos:
            return self._monos[exps]
        bound = 0
        for f, e in enumerate(exps):
            if e == 0:
                continue
            md = self._mins[f]
            if md is None:
                bound = self.cap + 1
                break
            bound += md * e
        if bound > self.cap:
            out = self._zero()
        else:
            out = None
            for f, e in enumerate(exps):
                if e == 0:
                    continue
                pw = self.power(f, e)
                out = pw if out is None else out * pw
            if out is None:
                out = TruncatedSeries.const(1, self.dim, self.kmax, self.cap)
        self._monos[exps] = out
        return out


def compose_at(poly: VPoly, cache: SeriesPowerCache) -> TruncatedSeries:
    """Evaluate a coordinate polynomial at a cached series point."""
    out = TruncatedSeries.zero(cache.dim, cache.kmax, cache.cap)
    for e, c in poly.terms.items():
        s = cache.monomial(e)
        if not s.is_zero:
            out = out + s.scale(c)
    return out


def _ttilde(dim: int, kmax: int, cap: int, alpha: int, k: int) -> TruncatedSeries:
    """Shifted time variable: the shift sits at flavour 0, index 1."""
    s = TruncatedSeries.var(alpha, k, dim, kmax, cap)
    if alpha == 0 and k == 1:
        s = s - 1
    return s


def topological_solution(
    p: FrobeniusPotential, cal: Calibration, kcap: int, dcap: int
) -> list[TruncatedSeries]:
    """The distinguished stationary solution as truncated series.

    Solves the stationarity condition of the shifted linear functional,
    v_g = t_{g,0} + sum_{k>=1} t^{a,k} d theta(a,k)/dv^g at v, by plain
    fixed-point iteration.  Each pass gains one order in the positive
    time variables, so the degree cap bounds the number of passes; if the
    iterate is still moving after that many, the caps are inconsistent
    and an error is raised.
    """
    _require_same_potential(p, cal)
    if kcap < 0 or dcap < 1:
        raise ValueError("caps must satisfy kcap >= 0, dcap >= 1")
    if cal.k_max < kcap:
        raise ValueError(f"calibration depth {cal.k_max} is below the index cap {kcap}")
    l = p.dim
    t0_low = []
    for g in range(l):
        acc = TruncatedSeries.zero(l, kcap, dcap)
        for a in range(l):
            if p.eta[a, g] != 0:
                acc = acc + TruncatedSeries.var(a, 0, l, kcap, dcap).scale(p.eta[a, g])
        t0_low.append(acc)

    current = [TruncatedSeries.var(a, 0, l, kcap, dcap) for a in range(l)]
    for _ in range(dcap + 1):
        cache = SeriesPowerCache(current)
        lowered = []
        for g in range(l):
            acc = t0_low[g]
            for k in range(1, kcap + 1):
                for a in range(l):
                    grad = cal.gradient(a, k, g)
                    if grad.is_zero:
                        continue
                    comp = compose_at(grad, cache)
                    if comp.is_zero:
                        continue
                    acc = acc + comp * TruncatedSeries.var(a, k, l, kcap, dcap)
            lowered.append(acc)
        nxt = []
        for a in range(l):
            acc = TruncatedSeries.zero(l, kcap, dcap)
            for g in range(l):
                coef = p.eta_inv[a, g]
                if coef != 0:
                    acc = acc + lowered[g].scale(coef)
            nxt.append(acc)
        if nxt == current:
            return current
        current = nxt
    raise ArithmeticError(
        "stationary-point iteration failed to close within the degree cap"
    )


def verify_topological_solution(
    p: FrobeniusPotential, cal: Calibration, kcap: int, dcap: int
) -> CheckReport:
    """Initial condition, stationarity, and the flow consistency check.

    The flow identity (time derivative of the solution against the
    x-derivative of the next gradient) loses one degree to the
    x-derivative, so it is compared through dcap - 1; the other two hold
    through the full cap.
    """
    vtop = topological_solution(p, cal, kcap, dcap)
    l = p.dim
    mismatches = []

    for a in range(l):
        expect = TruncatedSeries.var(a, 0, l, kcap, dcap)
        if vtop[a].subs_zero_above(0) != expect:
            mismatches.append(f"initial condition fails for component {a}")

    cache = SeriesPowerCache(vtop)
    for g in range(l):
        acc = TruncatedSeries.zero(l, kcap, dcap)
        for k in range(kcap + 1):
            for a in range(l):
                grad = cal.gradient(a, k, g)
                if grad.is_zero:
                    continue
                comp = compose_at(grad, cache)
                if comp.is_zero:
                    continue
                acc = acc + comp * _ttilde(l, kcap, dcap, a, k)
        if not acc.is_zero:
            mismatches.append(f"stationarity residual nonzero in direction {g}")

    flow_depth = min(kcap, cal.k_max - 1)
    for b in range(l):
        for k in range(flow_depth + 1):
            rhs_low = [
                compose_at(cal.gradient(b, k + 1, g), cache).diff(0, 0) for g in range(l)
            ]
            for a in range(l):
                rhs = TruncatedSeries.zero(l, kcap, dcap)
                for g in range(l):
                    coef = p.eta_inv[a, g]
                    if coef != 0:
                        rhs = rhs + rhs_low[g].scale(coef)
                lhs = vtop[a].diff(b, k)
                if lhs.truncate(dcap - 1) != rhs.truncate(dcap - 1):
                    mismatches.append(
                        f"flow identity fails for component {a} at time ({b},{k})"
                    )
    return CheckReport(
        name=f"topological solution checks (K={kcap}, D={dcap})",
        ok=not mismatches,
        mismatches=mismatches,
        info={"index_cap": kcap, "degree_cap": dcap, "flow_checked_to": dcap - 1},
    )


def genus_zero_free_energy(
    p: FrobeniusPotential,
    cal: Calibration,
    kcap: int,
    dcap: int,
    vtop: list[TruncatedSeries] | None = None,
) -> TruncatedSeries:
    """The quadratic shifted-time form of the pairing at the solution.

    Pairs (i, j) whose composed polynomial cannot reach the degree cap
    are skipped using the scaling bound; pairs that could contribute but
    exceed the calibration depth raise, because silently dropping them
    would fake a different series.
    """
    _require_same_potential(p, cal)
    if vtop is None:
        vtop = topological_solution(p, cal, kcap, dcap)
    l = p.dim
    cache = SeriesPowerCache(vtop)
    total = TruncatedSeries.zero(l, kcap, dcap)
    max_w = max(p.euler_weights)
    scaling_usable = all(r == 0 for r in p.euler_shifts) and max_w > 0

    slots = [(a, i) for a in range(l) for i in range(kcap + 1)]
    half = Q(1, 2)
    for s1 in range(len(slots)):
        a, i = slots[s1]
        for s2 in range(s1, len(slots)):
            b, j = slots[s2]
            level = i + j + 1
            if level > cal.k_max:
                if scaling_usable and (level + p.mu[a] + p.mu[b]) > dcap * max_w:
                    continue
                raise ValueError(
                    f"pair ({a},{i});({b},{j}) needs calibration depth {level}, "
                    f"have {cal.k_max}"
                )
            w = omega(p, cal, a, i, b, j)
            comp = compose_at(w, cache)
            if comp.is_zero:
                continue
            term = comp * _ttilde(l, kcap, dcap, a, i)
            term = term * _ttilde(l, kcap, dcap, b, j)
            total = total + (term.scale(half) if s1 == s2 else term)
    return total


def check_genus_zero_constraint(
    p: FrobeniusPotential,
    cal: Calibration,
    op,
    kcap: int,
    dcap: int,
    f0: TruncatedSeries | None = None,
    label: str = "",
) -> CheckReport:
    """Order-checked vanishing of one operator's leading conjugation term.

    Translates the operator through the time-variable dictionary and
    collects the three graded pieces whose sum is the most singular
    coefficient of the conjugated operator applied to the exponential of
    the free energy.  The certified degree is min(dcap - 1, kcap + 1):
    one degree is lost to the constant part of the shifted time variable
    against the derivative of a capped series, and modes referencing time
    indices beyond kcap are dropped, which can only disturb degrees
    above kcap + 1.
    """
    _require_same_potential(p, cal)
    if isinstance(op, OperatorWithValidity):
        op = op.op
    for (pp, qq) in op.quad:
        if pp.twice > 0 and (pp.to_index() > kcap or qq.to_index() > kcap):
            raise ValueError(
                "second-order term reaches past the index cap; raise kcap"
            )
    if f0 is None:
        f0 = genus_zero_free_energy(p, cal, kcap, dcap)
    app = apply_first_order(op, f0, restrict=True)
    residual = app.residual()
    verified = min(dcap - 1, kcap + 1)
    trimmed = residual.truncate(verified)
    mismatches = []
    if not trimmed.is_zero:
        deg = min(trimmed.parts)
        key = min(trimmed.parts[deg])
        exps = trimmed.unpack(key)
        mismatches.append(
            f"residual at degree {deg}, exponents {exps}: "
            f"{q_str(trimmed.parts[deg][key])}"
        )
    name = "genus-zero constraint" + (f" {label}" if label else "")
    return CheckReport(
        name=name,
        ok=not mismatches,
        window=op.window,
        mismatches=mismatches,
        info={
            "verified_degree": verified,
            "degree_cap": dcap,
            "index_cap": kcap,
        },
    )


def _require_compatible(p: FrobeniusPotential, s: SpectrumData):
    if s.dim != p.dim or s.eta != p.eta or tuple(s.mu) != tuple(p.mu):
        raise ValueError("spectrum and potential disagree on (eta, mu)")
    if s.r_parts:
        raise ValueError(
            "polynomial genus-zero checks cover vanishing nilpotent part only"
        )


def verify_genus_zero(
    p: FrobeniusPotential,
    s: SpectrumData,
    m_max: int = 3,
    kcap: int = 8,
    dcap: int = 8,
    window: int | None = None,
) -> list[CheckReport]:
    """Constraint reports for every operator with level at most m_max.

    Builds the free energy once and reuses it across the whole family;
    each report carries its own certified degree.
    """
    _require_compatible(p, s)
    if window is None:
        window = max(3, m_max + s.r_max + 2)
    depth = max(dcap, kcap + 1)
    cal = build_calibration(p, depth)
    vtop = topological_solution(p, cal, kcap, dcap)
    f0 = genus_zero_free_energy(p, cal, kcap, dcap, vtop=vtop)
    reports = []
    for m in range(-1, m_max + 1):
        lnu = build_l_of_nu(s, m, window)
        for kk in range((m + 1) // 2 + 1):
            op = extract_lmk(lnu, kk)
            reports.append(
                check_genus_zero_constraint(
                    p, cal, op, kcap, dcap, f0=f0, label=f"L({m},{2 * kk})"
                )
            )
    return reports
