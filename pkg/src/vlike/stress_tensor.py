"""Coefficient matrices and assembly of the level-m operators L_m(nu).

The raw coefficient N^p_q(r, nu) is defined through Gamma functions, but
the reflection formula collapses it to a polynomial: with total level
m = p + q + r >= -1,

    N^p_q(r, nu) = (-1)^{q+1/2} (m+1)!
                   sum_k (R^k)_r / k!  d^k/dnu^k  binom(nu + mu + p + r, m+1),

where the binomial is the falling-factorial polynomial of degree m+1
evaluated on the diagonal matrix mu, and the grade-r part of R^k acts
from the left.  :func:`gamma_oracle` keeps the transcendental definition
alive as an independent numerical cross-check for R = 0.

The symmetrized coefficient M = (N(nu) + N(-nu))/2 enters the operator

    L_m(nu) = 1/2 sum_{p+q+r=m} :a_p M^p_q(r,nu) a^q:
              + delta_{m,0}/4 * tr(1/4 - mu^2),

assembled here over a finite window.  :func:`build_l_of_nu` feeds the
raw N matrices through the canonical storage of
:class:`~vlike.boson_algebra.QuadraticOperator`; the (p,q) <-> (q,p)
folding reproduces M exactly when the transpose symmetry
eta^{-1} N^p_q(r,nu)^T eta = N^q_p(r,-nu) holds, so vanishing of the odd
nu-powers is checked, not assumed.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

from .boson_algebra import QuadraticOperator
from .exact_core import (
    HalfInt,
    Matrix,
    NuPolynomial,
    Q,
    Q0,
    Q1,
    binom_poly,
    neg_one_pow,
    nu_matrix_coefficient,
    nu_matrix_flip,
    qify,
)
from .spectrum import SpectrumData, graded_power


class WindowTooSmallError(ValueError):
    """The requested window cannot hold all modes of the requested level."""


class PoleProximityError(ValueError):
    """A Gamma-function argument fell too close to a nonpositive integer."""


@dataclass(frozen=True)
class CoefficientKey:
    """Index (p, q, r) of one coefficient matrix: modes p, q and R-grade r."""

    p: HalfInt
    q: HalfInt
    r: int

    def __post_init__(self):
        if self.p.twice % 2 == 0 or self.q.twice % 2 == 0:
            raise ValueError("mode levels must be half-odd integers")
        if self.r < 0:
            raise ValueError("R-grade must be nonnegative")

    @property
    def level(self) -> int:
        t = self.p.twice + self.q.twice
        return t // 2 + self.r


def n_matrix(s: SpectrumData, key: CoefficientKey) -> Matrix:
    """The matrix N^p_q(r, nu) with :class:`NuPolynomial` entries."""
    m = key.level
    if m < -1:
        raise ValueError(f"total level {m} below -1")
    p_shift = key.p.as_q() + key.r
    coef = Q(neg_one_pow((key.q.twice + 1) // 2) * factorial(m + 1))
    diag = Matrix.diag(
        [binom_poly(mu + p_shift, m + 1) * coef for mu in s.mu],
        zero=NuPolynomial.zero(),
    )
    out = None
    for k in range(key.r + 1):
        rk = graded_power(s, k).parts.get(key.r)
        if rk is None:
            if k == 0 and key.r == 0:
                rk = Matrix.identity(s.dim)
            else:
                diag = diag.map(lambda e: e.deriv())
                continue
        term = (rk * Q(1, factorial(k))) @ diag
        out = term if out is None else out + term
        diag = diag.map(lambda e: e.deriv())
    if out is None:
        out = Matrix.zeros(s.dim, s.dim, zero=NuPolynomial.zero())
    return out


def m_matrix(s: SpectrumData, key: CoefficientKey) -> Matrix:
    """The nu-even symmetrization (N(nu) + N(-nu)) / 2."""
    n = n_matrix(s, key)
    return (n + nu_matrix_flip(n)) * Q(1, 2)


def gamma_oracle(s: SpectrumData, key: CoefficientKey, nu, digits: int = 40):
    """Evaluate N^p_q(r, nu) numerically from the Gamma-function form.

    Only valid for spectra with R = 0 (so the matrix is diagonal and the
    exponential factor is trivial); r > 0 then gives the zero matrix.
    Raises :class:`PoleProximityError` when either Gamma argument sits
    within 1e-6 of a nonpositive integer.  Returns a list of float rows.
    """
    if s.r_parts:
        raise ValueError("gamma oracle requires a spectrum with R = 0")
    import mpmath

    p = key.p.as_q()
    q = key.q.as_q()
    out = [[0.0] * s.dim for _ in range(s.dim)]
    if key.r > 0:
        return out
    with mpmath.workdps(digits):
        nu_v = _to_mpf(mpmath, nu)
        for alpha, mu in enumerate(s.mu):
            mu_v = _to_mpf(mpmath, mu)
            z1 = mu_v + nu_v + _to_mpf(mpmath, p) + key.r + 1
            z2 = -mu_v - nu_v + _to_mpf(mpmath, q) + 1
            for z in (z1, z2):
                nearest = mpmath.nint(z)
                if nearest <= 0 and abs(z - nearest) < 1e-6:
                    raise PoleProximityError(
                        f"Gamma argument {float(z)} within 1e-6 of a pole"
                    )
            val = (
                mpmath.gamma(z1)
                * mpmath.cos(mpmath.pi * (mu_v + nu_v))
                * mpmath.gamma(z2)
                / mpmath.pi
            )
            out[alpha][alpha] = float(val)
    return out


def _to_mpf(mpmath, x):
    if isinstance(x, float):
        return mpmath.mpf(x)
    x = qify(x)
    num, den = x.numerator, x.denominator
    return mpmath.mpf(int(num)) / mpmath.mpf(int(den))


class NuOperator:
    """A polynomial in nu^2 whose coefficients are quadratic operators."""

    __slots__ = ("spectrum", "level", "window", "parts")

    def __init__(self, spectrum: SpectrumData, level: int, window: int, parts: dict):
        self.spectrum = spectrum
        self.level = level
        self.window = window
        self.parts = {d: op for d, op in parts.items() if not op.is_zero}

    @property
    def nu_degree(self) -> int:
        return max(self.parts, default=0)

    def coefficient(self, d: int) -> QuadraticOperator:
        op = self.parts.get(d)
        if op is None:
            return QuadraticOperator.zero(self.spectrum, self.window)
        return op

    def eval(self, x) -> QuadraticOperator:
        """Substitute a rational value for nu."""
        x = qify(x)
        acc = QuadraticOperator.zero(self.spectrum, self.window)
        for d, op in self.parts.items():
            acc = acc + op * (x**d)
        return acc

    def __repr__(self):
        return (
            f"NuOperator(level={self.level}, window={self.window}, "
            f"degrees={sorted(self.parts)})"
        )


def build_l_of_nu(s: SpectrumData, m: int, window: int) -> NuOperator:
    """Assemble L_m(nu) on the given window, split by powers of nu.

    Requires window >= |m| + r_max + 2 so that every mode pair of level m
    fits with room to spare.  The returned parts are indexed by even
    powers; surviving odd powers mean the transpose symmetry of the
    coefficients failed, and raise ArithmeticError.
    """
    if m < -1:
        raise ValueError("level must be >= -1")
    if window < abs(m) + s.r_max + 2:
        raise WindowTooSmallError(
            f"window {window} too small for level {m} (need >= {abs(m) + s.r_max + 2})"
        )
    half = Q(1, 2)
    w2 = 2 * window + 1
    buckets: dict[int, list] = {}
    for r in range(s.r_max + 1):
        for pt in range(-w2, w2 + 1, 2):
            qt = 2 * (m - r) - pt
            if abs(qt) > w2:
                continue
            p, q = HalfInt(pt), HalfInt(qt)
            n = n_matrix(s, CoefficientKey(p, q, r)) * half
            degree = max((e.degree for e in n.data), default=-1)
            for d in range(degree + 1):
                c = nu_matrix_coefficient(n, d)
                if not c.is_zero:
                    buckets.setdefault(d, []).append((p, q, c))
    constant = Q0
    if m == 0:
        constant = sum((Q(1, 4) - mu * mu for mu in s.mu), Q0) * Q(1, 4)
    parts = {}
    for d, terms in sorted(buckets.items()):
        op = QuadraticOperator.build(s, window, terms, constant=constant if d == 0 else Q0)
        if d % 2 == 1:
            if not op.is_zero:
                raise ArithmeticError(
                    f"odd nu-power {d} of L_{m} did not cancel; "
                    "coefficient transpose symmetry is broken"
                )
            continue
        parts[d] = op
    if 0 not in parts and constant != 0:
        parts[0] = QuadraticOperator(s, window, constant=constant)
    return NuOperator(s, m, window, parts)


def extract_lmk(lnu: NuOperator, k: int) -> QuadraticOperator:
    """The coefficient operator of nu^{2k}; zero beyond the nu-degree."""
    if k < 0:
        raise ValueError("nu-power index must be nonnegative")
    return lnu.coefficient(2 * k)
