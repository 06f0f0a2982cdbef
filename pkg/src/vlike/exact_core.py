"""Exact scalar, polynomial and matrix arithmetic.

Everything downstream sits on the types defined here: arbitrary-precision
rationals, half-integers, polynomials in a single indeterminate ``nu``,
dense matrices over either, small multivariate polynomials, and the
special-number combinatorics (Stirling numbers, Bernoulli numbers,
binomial polynomials).  All arithmetic is exact; the only floating point
in the package lives in the numeric oracle of :mod:`vlike.stress_tensor`.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from fractions import Fraction
from math import comb, factorial
from typing import Iterable, Sequence

try:
    from gmpy2 import mpq as Q
except ImportError:  # pragma: no cover - gmpy2 is a hard dependency, Fraction is the escape hatch
    Q = Fraction

Q0 = Q(0)
Q1 = Q(1)
QHALF = Q(1, 2)


def qify(x) -> Q:
    """Coerce ``x`` to an exact rational.

    Accepts ints, rationals, :class:`fractions.Fraction`, and strings like
    ``"-3/7"`` or ``"5"`` (the on-disk format used by the JSON/CSV interfaces).
    """
    if isinstance(x, Q):
        return x
    if isinstance(x, int):
        return Q(x)
    if isinstance(x, str):
        return Q(x.strip())
    if isinstance(x, Fraction):
        return Q(x.numerator, x.denominator)
    raise TypeError(f"cannot interpret {x!r} as a rational")


def q_str(x) -> str:
    """Render a rational as ``"p/q"`` (or ``"p"`` when the denominator is 1)."""
    return str(qify(x))


def neg_one_pow(n: int) -> int:
    """(-1)**n for any integer n, as an int."""
    return 1 if n % 2 == 0 else -1


# ---------------------------------------------------------------------------
# Half-integers


class HalfInt:
    """An element of (1/2)Z, stored exactly as twice its value.

    Boson mode indices are genuine half-integers (odd ``twice``); even
    ``twice`` is permitted so that sums such as p+q stay in the same type.
    Ordering and arithmetic are integer operations on ``twice``.  Equality
    holds only between HalfInt instances; use comparisons (``p > 0``) for
    mixed tests against ints.
    """

    __slots__ = ("twice",)

    def __init__(self, twice: int):
        self.twice = twice

    @staticmethod
    def of(n: int) -> "HalfInt":
        return HalfInt(2 * n)

    @staticmethod
    def from_index(k: int) -> "HalfInt":
        """The mode index k + 1/2 attached to the time variable t^{., k}."""
        return HalfInt(2 * k + 1)

    @property
    def is_integer(self) -> bool:
        return self.twice % 2 == 0

    def as_q(self) -> Q:
        return Q(self.twice, 2)

    def to_index(self) -> int:
        """Inverse of :meth:`from_index`: the k with self = k + 1/2."""
        if self.twice % 2 == 0:
            raise ValueError(f"{self} is not of the form k + 1/2")
        return (self.twice - 1) // 2

    def __int__(self) -> int:
        if self.twice % 2:
            raise ValueError(f"{self} is not an integer")
        return self.twice // 2

    def _twice_of(self, other) -> int:
        if isinstance(other, HalfInt):
            return other.twice
        if isinstance(other, int):
            return 2 * other
        return NotImplemented

    def __add__(self, other):
        t = self._twice_of(other)
        return NotImplemented if t is NotImplemented else HalfInt(self.twice + t)

    __radd__ = __add__

    def __sub__(self, other):
        t = self._twice_of(other)
        return NotImplemented if t is NotImplemented else HalfInt(self.twice - t)

    def __rsub__(self, other):
        t = self._twice_of(other)
        return NotImplemented if t is NotImplemented else HalfInt(t - self.twice)

    def __neg__(self) -> "HalfInt":
        return HalfInt(-self.twice)

    def __abs__(self) -> "HalfInt":
        return HalfInt(abs(self.twice))

    def __eq__(self, other):
        return isinstance(other, HalfInt) and self.twice == other.twice

    def __hash__(self):
        return hash(self.twice)

    def __lt__(self, other):
        t = self._twice_of(other)
        return NotImplemented if t is NotImplemented else self.twice < t

    def __le__(self, other):
        t = self._twice_of(other)
        return NotImplemented if t is NotImplemented else self.twice <= t

    def __gt__(self, other):
        t = self._twice_of(other)
        return NotImplemented if t is NotImplemented else self.twice > t

    def __ge__(self, other):
        t = self._twice_of(other)
        return NotImplemented if t is NotImplemented else self.twice >= t

    def serial(self) -> str:
        """Wire format: always ``"t/2"`` with t = twice, e.g. ``"-3/2"``."""
        return f"{self.twice}/2"

    @staticmethod
    def parse(text: str) -> "HalfInt":
        num, _, den = text.partition("/")
        if den.strip() != "2":
            raise ValueError(f"expected 't/2', got {text!r}")
        return HalfInt(int(num))

    def __str__(self) -> str:
        if self.twice % 2 == 0:
            return str(self.twice // 2)
        return f"{self.twice}/2"

    def __repr__(self) -> str:
        return f"HalfInt({self})"


# ---------------------------------------------------------------------------
# Special numbers

_table_lock = threading.Lock()
_s1_rows: list[list[int]] = [[1]]
_s2_rows: list[list[int]] = [[1]]
_bernoulli: list[Q] = [Q1]


def stirling_first_unsigned(n: int, k: int) -> int:
    """Unsigned Stirling number of the first kind [n, k].

    Defined by the rising-factorial expansion
    x(x+1)...(x+n-1) = sum_k [n, k] x^k, so [3, 1] = 2 and [4, 2] = 11.
    Returns 0 outside 0 <= k <= n.
    """
    if n < 0 or k < 0 or k > n:
        return 0
    if n >= len(_s1_rows):
        with _table_lock:
            while len(_s1_rows) <= n:
                m = len(_s1_rows) - 1
                prev = _s1_rows[-1]
                row = [0] * (m + 2)
                for j in range(m + 2):
                    row[j] = (prev[j - 1] if 1 <= j <= m + 1 else 0) + m * (
                        prev[j] if j <= m else 0
                    )
                _s1_rows.append(row)
    return _s1_rows[n][k]


def stirling_second(n: int, k: int) -> int:
    """Stirling number of the second kind {n, k}: partitions of an n-set into
    k nonempty blocks.  {3, 2} = 3, {4, 2} = 7; zero outside 0 <= k <= n."""
    if n < 0 or k < 0 or k > n:
        return 0
    if n >= len(_s2_rows):
        with _table_lock:
            while len(_s2_rows) <= n:
                m = len(_s2_rows) - 1
                prev = _s2_rows[-1]
                row = [0] * (m + 2)
                for j in range(m + 2):
                    row[j] = (prev[j - 1] if 1 <= j <= m + 1 else 0) + j * (
                        prev[j] if j <= m else 0
                    )
                _s2_rows.append(row)
    return _s2_rows[n][k]


def bernoulli(n: int) -> Q:
    """Bernoulli number B_n with the B_1 = -1/2 convention.

    Grown on demand from sum_{j<=n} binom(n+1, j) B_j = 0 (n >= 1); only the
    even-index values reach the operator constructions, so the B_1 sign is a
    determinism choice, not an observable one.
    """
    if n < 0:
        raise ValueError("Bernoulli numbers need n >= 0")
    if n >= len(_bernoulli):
        with _table_lock:
            while len(_bernoulli) <= n:
                m = len(_bernoulli)
                acc = Q0
                for j in range(m):
                    acc += comb(m + 1, j) * _bernoulli[j]
                _bernoulli.append(-acc / (m + 1))
    return _bernoulli[n]


def binom_q(x: Q, n: int) -> Q:
    """binom(x, n) for rational x and integer n >= 0, as a falling product."""
    if n < 0:
        return Q0
    acc = Q1
    for i in range(n):
        acc *= x - i
    return acc / factorial(n)


assert stirling_first_unsigned(3, 1) == 2 and stirling_first_unsigned(4, 2) == 11
assert stirling_second(3, 2) == 3 and stirling_second(4, 2) == 7
assert bernoulli(2) == Q(1, 6) and bernoulli(3) == 0 and bernoulli(4) == Q(-1, 30)


# ---------------------------------------------------------------------------
# Univariate polynomials in nu


class NuPolynomial:
    """Polynomial in one indeterminate with exact rational coefficients.

    Coefficients are stored by ascending degree with trailing zeros trimmed,
    so ``degree`` is len(coeffs) - 1 and the zero polynomial has degree -1.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable = ()):
        cs = [qify(c) for c in coeffs]
        while cs and cs[-1] == 0:
            cs.pop()
        self.coeffs = tuple(cs)

    @staticmethod
    def zero() -> "NuPolynomial":
        return NuPolynomial(())

    @staticmethod
    def const(c) -> "NuPolynomial":
        return NuPolynomial((qify(c),))

    @staticmethod
    def nu() -> "NuPolynomial":
        return NuPolynomial((Q0, Q1))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    def __bool__(self) -> bool:
        return bool(self.coeffs)

    def coefficient(self, k: int) -> Q:
        return self.coeffs[k] if 0 <= k < len(self.coeffs) else Q0

    def _coerce(self, other):
        if isinstance(other, NuPolynomial):
            return other
        try:
            return NuPolynomial.const(qify(other))
        except TypeError:
            return None

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        a, b = self.coeffs, o.coeffs
        if len(a) < len(b):
            a, b = b, a
        out = list(a)
        for i, c in enumerate(b):
            out[i] += c
        return NuPolynomial(out)

    __radd__ = __add__

    def __neg__(self):
        return NuPolynomial(tuple(-c for c in self.coeffs))

    def __sub__(self, other):
        o = self._coerce(other)
        return NotImplemented if o is None else self + (-o)

    def __rsub__(self, other):
        o = self._coerce(other)
        return NotImplemented if o is None else o + (-self)

    def __mul__(self, other):
        if isinstance(other, NuPolynomial):
            if not self.coeffs or not other.coeffs:
                return NuPolynomial(())
            out = [Q0] * (len(self.coeffs) + len(other.coeffs) - 1)
            for i, a in enumerate(self.coeffs):
                if a == 0:
                    continue
                for j, b in enumerate(other.coeffs):
                    out[i + j] += a * b
            return NuPolynomial(out)
        try:
            c = qify(other)
        except TypeError:
            return NotImplemented
        return NuPolynomial(tuple(c * a for a in self.coeffs))

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative power of a polynomial")
        out = NuPolynomial.const(1)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other):
        o = self._coerce(other)
        return NotImplemented if o is None else self.coeffs == o.coeffs

    def __hash__(self):
        return hash(self.coeffs)

    def __call__(self, x) -> Q:
        x = qify(x)
        acc = Q0
        for c in reversed(self.coeffs):
            acc = acc * x + c
        return acc

    def flip_sign(self) -> "NuPolynomial":
        """The substitution nu -> -nu."""
        return NuPolynomial(
            tuple(c if i % 2 == 0 else -c for i, c in enumerate(self.coeffs))
        )

    def deriv(self) -> "NuPolynomial":
        return NuPolynomial(tuple(i * c for i, c in enumerate(self.coeffs) if i > 0))

    @property
    def is_even(self) -> bool:
        return all(c == 0 for c in self.coeffs[1::2])

    def __str__(self) -> str:
        if not self.coeffs:
            return "0"
        bits = []
        for i, c in enumerate(self.coeffs):
            if c == 0:
                continue
            if i == 0:
                bits.append(q_str(c))
            elif i == 1:
                bits.append(f"{q_str(c)}*nu")
            else:
                bits.append(f"{q_str(c)}*nu^{i}")
        return " + ".join(bits)

    def __repr__(self) -> str:
        return f"NuPolynomial({list(map(q_str, self.coeffs))})"


def binom_poly(shift, n: int) -> NuPolynomial:
    """The binomial polynomial binom(nu + shift, n), exactly.

    ``shift`` may be a rational (the usual case: the polynomial variable is
    added to it) or a NuPolynomial, which is then used verbatim as the
    binomial's argument.  binom(a, n) = a(a-1)...(a-n+1)/n!.

    >>> binom_poly(Q(3), 2)(0)
    mpq(3,1)
    """
    if n < 0:
        raise ValueError("binom_poly needs n >= 0")
    if isinstance(shift, NuPolynomial):
        arg = shift
    else:
        arg = NuPolynomial((qify(shift), Q1))
    out = NuPolynomial.const(1)
    for i in range(n):
        out = out * (arg - i)
    return out * Q(1, factorial(n))


# ---------------------------------------------------------------------------
# Dense matrices

# The entry ring is anything supporting +, -, * and == 0: rationals for eta,
# mu, R_s; NuPolynomial for the stress-tensor coefficient matrices; truncated
# MultiPoly entries for the deformed generating-function checks.  Division
# (det, inverse, solve) is only ever invoked on rational entries.


class Matrix:
    """Dense row-major matrix over an exact coefficient ring."""

    __slots__ = ("rows", "cols", "data")

    def __init__(self, rows_of_entries: Iterable[Iterable]):
        data = []
        nrows = 0
        ncols = None
        for row in rows_of_entries:
            row = list(row)
            if ncols is None:
                ncols = len(row)
            elif len(row) != ncols:
                raise ValueError("ragged rows")
            data.extend(row)
            nrows += 1
        if not nrows or not ncols:
            raise ValueError("matrix must be nonempty")
        self.rows = nrows
        self.cols = ncols
        self.data = data

    @staticmethod
    def from_flat(rows: int, cols: int, data: Sequence) -> "Matrix":
        if len(data) != rows * cols:
            raise ValueError("entry count mismatch")
        m = object.__new__(Matrix)
        m.rows, m.cols, m.data = rows, cols, list(data)
        return m

    @staticmethod
    def zeros(rows: int, cols: int, zero=Q0) -> "Matrix":
        return Matrix.from_flat(rows, cols, [zero] * (rows * cols))

    @staticmethod
    def identity(n: int, one=Q1, zero=Q0) -> "Matrix":
        m = Matrix.zeros(n, n, zero)
        for i in range(n):
            m.data[i * n + i] = one
        return m

    @staticmethod
    def diag(entries: Sequence, zero=Q0) -> "Matrix":
        n = len(entries)
        m = Matrix.zeros(n, n, zero)
        for i, e in enumerate(entries):
            m.data[i * n + i] = e
        return m

    def __getitem__(self, ij):
        i, j = ij
        if not (0 <= i < self.rows and 0 <= j < self.cols):
            raise IndexError(ij)
        return self.data[i * self.cols + j]

    def row(self, i: int) -> list:
        return self.data[i * self.cols : (i + 1) * self.cols]

    def __add__(self, other):
        if not isinstance(other, Matrix):
            return NotImplemented
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise ValueError("shape mismatch")
        return Matrix.from_flat(
            self.rows, self.cols, [a + b for a, b in zip(self.data, other.data)]
        )

    def __sub__(self, other):
        if not isinstance(other, Matrix):
            return NotImplemented
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise ValueError("shape mismatch")
        return Matrix.from_flat(
            self.rows, self.cols, [a - b for a, b in zip(self.data, other.data)]
        )

    def __neg__(self):
        return Matrix.from_flat(self.rows, self.cols, [-a for a in self.data])

    def __mul__(self, scalar):
        if isinstance(scalar, Matrix):
            raise TypeError("use @ for matrix products")
        return Matrix.from_flat(self.rows, self.cols, [a * scalar for a in self.data])

    def __rmul__(self, scalar):
        if isinstance(scalar, Matrix):
            raise TypeError("use @ for matrix products")
        return Matrix.from_flat(self.rows, self.cols, [scalar * a for a in self.data])

    def __matmul__(self, other):
        if not isinstance(other, Matrix):
            return NotImplemented
        if self.cols != other.rows:
            raise ValueError("inner dimension mismatch")
        n, k, m = self.rows, self.cols, other.cols
        out = []
        for i in range(n):
            arow = self.data[i * k : (i + 1) * k]
            for j in range(m):
                acc = arow[0] * other.data[j]
                for t in range(1, k):
                    acc = acc + arow[t] * other.data[t * m + j]
                out.append(acc)
        return Matrix.from_flat(n, m, out)

    @property
    def T(self) -> "Matrix":
        return Matrix.from_flat(
            self.cols,
            self.rows,
            [self.data[i * self.cols + j] for j in range(self.cols) for i in range(self.rows)],
        )

    def map(self, fn) -> "Matrix":
        return Matrix.from_flat(self.rows, self.cols, [fn(a) for a in self.data])

    def trace(self):
        if self.rows != self.cols:
            raise ValueError("trace of a non-square matrix")
        acc = self.data[0]
        for i in range(1, self.rows):
            acc = acc + self.data[i * self.cols + i]
        return acc

    @property
    def is_zero(self) -> bool:
        return all(a == 0 for a in self.data)

    def __eq__(self, other):
        if not isinstance(other, Matrix):
            return NotImplemented
        return (
            (self.rows, self.cols) == (other.rows, other.cols)
            and all(a == b for a, b in zip(self.data, other.data))
        )

    def __hash__(self):  # pragma: no cover - matrices are not used as keys
        return hash((self.rows, self.cols, tuple(self.data)))

    def det(self) -> Q:
        """Determinant by exact Gaussian elimination (rational entries)."""
        if self.rows != self.cols:
            raise ValueError("determinant of a non-square matrix")
        n = self.rows
        a = [list(map(qify, self.row(i))) for i in range(n)]
        det = Q1
        for col in range(n):
            piv = next((r for r in range(col, n) if a[r][col] != 0), None)
            if piv is None:
                return Q0
            if piv != col:
                a[col], a[piv] = a[piv], a[col]
                det = -det
            det *= a[col][col]
            inv = Q1 / a[col][col]
            for r in range(col + 1, n):
                if a[r][col] == 0:
                    continue
                f = a[r][col] * inv
                for c in range(col, n):
                    a[r][c] -= f * a[col][c]
        return det

    def inverse(self) -> "Matrix":
        """Exact inverse via Gauss-Jordan; rational entries only."""
        if self.rows != self.cols:
            raise ValueError("inverse of a non-square matrix")
        n = self.rows
        a = [list(map(qify, self.row(i))) + [Q1 if j == i else Q0 for j in range(n)] for i in range(n)]
        for col in range(n):
            piv = next((r for r in range(col, n) if a[r][col] != 0), None)
            if piv is None:
                raise ValueError("matrix is singular")
            a[col], a[piv] = a[piv], a[col]
            inv = Q1 / a[col][col]
            a[col] = [x * inv for x in a[col]]
            for r in range(n):
                if r != col and a[r][col] != 0:
                    f = a[r][col]
                    a[r] = [x - f * y for x, y in zip(a[r], a[col])]
        return Matrix([row[n:] for row in a])

    def __repr__(self) -> str:
        rows = [
            "[" + ", ".join(str(self.data[i * self.cols + j]) for j in range(self.cols)) + "]"
            for i in range(self.rows)
        ]
        return "Matrix([" + ", ".join(rows) + "])"


# The spec-facing names: both are the same dense implementation, the entry
# ring differs by usage.
RationalMatrix = Matrix
NuMatrix = Matrix


def nu_matrix_eval(m: Matrix, x) -> Matrix:
    """Evaluate every NuPolynomial entry at x, yielding a rational matrix."""
    x = qify(x)
    return m.map(lambda p: p(x) if isinstance(p, NuPolynomial) else qify(p))


def nu_matrix_flip(m: Matrix) -> Matrix:
    """Apply nu -> -nu entrywise."""
    return m.map(lambda p: p.flip_sign() if isinstance(p, NuPolynomial) else p)


def nu_matrix_coefficient(m: Matrix, k: int) -> Matrix:
    """The rational matrix of nu^k coefficients."""
    return m.map(
        lambda p: p.coefficient(k) if isinstance(p, NuPolynomial) else (qify(p) if k == 0 else Q0)
    )


# ---------------------------------------------------------------------------
# Small multivariate polynomials


class MultiPoly:
    """Sparse polynomial in a fixed, small number of variables.

    Optional per-variable caps turn the arithmetic into the quotient ring
    modulo (x_i^{caps_i + 1}): products silently drop monomials that exceed
    any cap, which is exactly the truncated-series arithmetic the bivariate
    generating-function identities are stated in.
    """

    __slots__ = ("nvars", "caps", "terms")

    def __init__(self, nvars: int, terms: dict | None = None, caps: Sequence | None = None):
        self.nvars = nvars
        self.caps = None if caps is None else tuple(caps)
        clean: dict[tuple, Q] = {}
        for exps, c in (terms or {}).items():
            exps = tuple(exps)
            if len(exps) != nvars:
                raise ValueError("exponent arity mismatch")
            c = qify(c)
            if c != 0 and self._within(exps):
                clean[exps] = clean.get(exps, Q0) + c
        self.terms = {e: c for e, c in clean.items() if c != 0}

    def _within(self, exps) -> bool:
        if self.caps is None:
            return True
        return all(c is None or e <= c for e, c in zip(exps, self.caps))

    @staticmethod
    def zero(nvars: int, caps=None) -> "MultiPoly":
        return MultiPoly(nvars, {}, caps)

    @staticmethod
    def const(c, nvars: int, caps=None) -> "MultiPoly":
        return MultiPoly(nvars, {(0,) * nvars: qify(c)}, caps)

    @staticmethod
    def var(i: int, nvars: int, caps=None) -> "MultiPoly":
        e = [0] * nvars
        e[i] = 1
        return MultiPoly(nvars, {tuple(e): Q1}, caps)

    def _merge_caps(self, other: "MultiPoly"):
        if self.caps is None:
            return other.caps
        if other.caps is None:
            return self.caps
        return tuple(
            a if b is None else (b if a is None else min(a, b))
            for a, b in zip(self.caps, other.caps)
        )

    def _coerce(self, other):
        if isinstance(other, MultiPoly):
            return other
        try:
            return MultiPoly.const(qify(other), self.nvars, self.caps)
        except TypeError:
            return None

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        if o.nvars != self.nvars:
            raise ValueError("variable count mismatch")
        caps = self._merge_caps(o)
        out = dict(self.terms)
        for e, c in o.terms.items():
            out[e] = out.get(e, Q0) + c
        return MultiPoly(self.nvars, out, caps)

    __radd__ = __add__

    def __neg__(self):
        return MultiPoly(self.nvars, {e: -c for e, c in self.terms.items()}, self.caps)

    def __sub__(self, other):
        o = self._coerce(other)
        return NotImplemented if o is None else self + (-o)

    def __rsub__(self, other):
        o = self._coerce(other)
        return NotImplemented if o is None else o + (-self)

    def __mul__(self, other):
        if isinstance(other, MultiPoly):
            if other.nvars != self.nvars:
                raise ValueError("variable count mismatch")
            caps = self._merge_caps(other)
            out: dict[tuple, Q] = {}
            for e1, c1 in self.terms.items():
                for e2, c2 in other.terms.items():
                    e = tuple(a + b for a, b in zip(e1, e2))
                    if caps is not None and any(
                        cap is not None and x > cap for x, cap in zip(e, caps)
                    ):
                        continue
                    out[e] = out.get(e, Q0) + c1 * c2
            return MultiPoly(self.nvars, out, caps)
        try:
            c = qify(other)
        except TypeError:
            return NotImplemented
        return MultiPoly(self.nvars, {e: c * v for e, v in self.terms.items()}, self.caps)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative power")
        out = MultiPoly.const(1, self.nvars, self.caps)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self.nvars == o.nvars and self.terms == o.terms

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self) -> bool:
        return bool(self.terms)

    def total_degree(self) -> int:
        return max((sum(e) for e in self.terms), default=-1)

    def degree_in(self, i: int) -> int:
        return max((e[i] for e in self.terms), default=-1)

    def coefficient_of(self, i: int, power: int) -> "MultiPoly":
        """The coefficient of x_i^power, as a polynomial with x_i removed
        from play (exponent forced to 0, arity unchanged)."""
        out = {}
        for e, c in self.terms.items():
            if e[i] == power:
                e2 = list(e)
                e2[i] = 0
                out[tuple(e2)] = c
        return MultiPoly(self.nvars, out, self.caps)

    def subs(self, i: int, value) -> "MultiPoly":
        value = qify(value)
        out: dict[tuple, Q] = {}
        for e, c in self.terms.items():
            e2 = list(e)
            k = e2[i]
            e2[i] = 0
            e2 = tuple(e2)
            out[e2] = out.get(e2, Q0) + c * value**k
        return MultiPoly(self.nvars, out, self.caps)

    def __call__(self, *point) -> Q:
        if len(point) != self.nvars:
            raise ValueError("point arity mismatch")
        point = [qify(x) for x in point]
        acc = Q0
        for e, c in self.terms.items():
            term = c
            for x, k in zip(point, e):
                term *= x**k
            acc += term
        return acc

    def __repr__(self) -> str:
        if not self.terms:
            return "MultiPoly(0)"
        bits = []
        for e in sorted(self.terms):
            mono = "*".join(f"x{i}^{k}" for i, k in enumerate(e) if k)
            c = q_str(self.terms[e])
            bits.append(f"{c}*{mono}" if mono else c)
        return "MultiPoly(" + " + ".join(bits) + ")"


def log1p_series(y_cap: int, nvars: int = 2, y_index: int = 1, caps=None) -> MultiPoly:
    """log(1+y) truncated at y^y_cap, as a MultiPoly in ``nvars`` variables."""
    terms = {}
    for n in range(1, y_cap + 1):
        e = [0] * nvars
        e[y_index] = n
        terms[tuple(e)] = Q(neg_one_pow(n + 1), n)
    return MultiPoly(nvars, terms, caps)


def pow_log_series(k: int, x_cap: int, y_cap: int) -> MultiPoly:
    """The bivariate truncated series (1+y)^x log^k(1+y) / k!.

    Variables are (x, y) = (var 0, var 1); arithmetic is capped at x-degree
    x_cap and y-degree y_cap.  The y-coefficients of the k = 0 case are the
    binomial polynomials binom(x, n); general k mixes in Stirling numbers,
    which is what the generating-function identity tests exercise.
    """
    caps = (x_cap, y_cap)
    # (1+y)^x = sum_n binom(x, n) y^n with binom(x, n) expanded in powers of x.
    pw = MultiPoly.zero(2, caps)
    for n in range(y_cap + 1):
        coeff = MultiPoly.const(Q(1, factorial(n)), 2, caps)
        for i in range(n):
            coeff = coeff * (MultiPoly.var(0, 2, caps) - i)
        pw = pw + coeff * MultiPoly(2, {(0, n): Q1}, caps)
    lg = log1p_series(y_cap, 2, 1, caps)
    out = pw
    for _ in range(k):
        out = out * lg
    return out * Q(1, factorial(k))


# ---------------------------------------------------------------------------
# Exact linear solving


@dataclass
class LinearSolution:
    """Outcome of an exact overdetermined solve.

    status is "ok" (unique solution, zero residual), "inconsistent"
    (witness_row indexes an input row whose equation the least-structure
    candidate violates), or "rank_deficient" (the column rank is not full;
    callers that rely on linear independence must treat this as an error).
    """

    status: str
    solution: tuple | None
    witness_row: int | None
    rank: int

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def solve_linear_exact(a: Matrix, b: Sequence) -> LinearSolution:
    """Solve A x = b exactly, requiring full column rank.

    A must have at least as many rows as columns.  Gaussian elimination over
    the rationals; on success the solution is verified against every original
    row, so "ok" really means zero residual.
    """
    if a.rows < a.cols:
        raise ValueError("need at least as many rows as columns")
    b = [qify(x) for x in b]
    if len(b) != a.rows:
        raise ValueError("right-hand side length mismatch")
    n, m = a.rows, a.cols
    rows = [[qify(x) for x in a.row(i)] + [b[i]] for i in range(n)]
    rank = 0
    for col in range(m):
        piv = next((r for r in range(rank, n) if rows[r][col] != 0), None)
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        inv = Q1 / rows[rank][col]
        rows[rank] = [x * inv for x in rows[rank]]
        for r in range(n):
            if r != rank and rows[r][col] != 0:
                f = rows[r][col]
                rows[r] = [x - f * y for x, y in zip(rows[r], rows[rank])]
        rank += 1
    if rank < m:
        return LinearSolution("rank_deficient", None, None, rank)
    # Reduced echelon with full column rank: the candidate is the b-column of
    # the first m rows (pivot columns are in order because every column got a
    # pivot).
    x = tuple(rows[i][m] for i in range(m))
    for i in range(n):
        acc = Q0
        for j in range(m):
            acc += qify(a[i, j]) * x[j]
        if acc != b[i]:
            return LinearSolution("inconsistent", None, i, rank)
    return LinearSolution("ok", x, None, rank)
