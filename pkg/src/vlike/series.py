"""Truncated multivariate power series in the time variables t^{alpha,k}.

A series lives in l*(kmax+1) variables, truncated by total degree.  Terms
are stored per total degree as dicts keyed by a packed monomial: each
variable gets a 5-bit exponent field inside one Python int, so monomial
multiplication is integer addition.  With degree caps <= 16 the fields
cannot carry into each other.

This is deliberately a plain commutative ring with derivations: the
dilaton-shifted variables and differential-operator dictionary live in
:mod:`vlike.boson_algebra`, the geometry in :mod:`vlike.genus_zero`.
"""

from __future__ import annotations

from .exact_core import Q, Q0, Q1, qify

_BITS = 5
_MASK = (1 << _BITS) - 1


class TruncatedSeries:
    """Polynomial/series in t^{alpha,k}, alpha < dim, 0 <= k <= kmax,
    truncated at total degree degree_cap."""

    __slots__ = ("dim", "kmax", "degree_cap", "parts")

    def __init__(self, dim: int, kmax: int, degree_cap: int, parts=None):
        if degree_cap < 0 or degree_cap > _MASK // 2:
            # per-variable exponents are bounded by the total degree; the
            # factor 2 keeps key addition carry-free during products
            raise ValueError(f"degree cap must be in 0..{_MASK // 2}")
        self.dim = dim
        self.kmax = kmax
        self.degree_cap = degree_cap
        self.parts: dict[int, dict[int, Q]] = parts if parts is not None else {}

    # -- construction -------------------------------------------------------

    @staticmethod
    def zero(dim: int, kmax: int, degree_cap: int) -> "TruncatedSeries":
        return TruncatedSeries(dim, kmax, degree_cap)

    @staticmethod
    def const(c, dim: int, kmax: int, degree_cap: int) -> "TruncatedSeries":
        c = qify(c)
        s = TruncatedSeries(dim, kmax, degree_cap)
        if c != 0:
            s.parts[0] = {0: c}
        return s

    @staticmethod
    def var(alpha: int, k: int, dim: int, kmax: int, degree_cap: int) -> "TruncatedSeries":
        s = TruncatedSeries(dim, kmax, degree_cap)
        if degree_cap >= 1:
            s.parts[1] = {1 << (_BITS * s.var_id(alpha, k)): Q1}
        return s

    def var_id(self, alpha: int, k: int) -> int:
        if not (0 <= alpha < self.dim and 0 <= k <= self.kmax):
            raise IndexError(f"variable t^({alpha},{k}) out of range")
        return alpha * (self.kmax + 1) + k

    def _compat(self, other: "TruncatedSeries"):
        if (self.dim, self.kmax, self.degree_cap) != (
            other.dim,
            other.kmax,
            other.degree_cap,
        ):
            raise ValueError("series rings differ (dim/kmax/degree cap)")

    def clone_shape(self) -> "TruncatedSeries":
        return TruncatedSeries(self.dim, self.kmax, self.degree_cap)

    # -- ring operations ----------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, TruncatedSeries):
            try:
                other = TruncatedSeries.const(qify(other), self.dim, self.kmax, self.degree_cap)
            except TypeError:
                return NotImplemented
        self._compat(other)
        out = {d: dict(terms) for d, terms in self.parts.items()}
        for d, terms in other.parts.items():
            dst = out.setdefault(d, {})
            for key, c in terms.items():
                v = dst.get(key, Q0) + c
                if v == 0:
                    dst.pop(key, None)
                else:
                    dst[key] = v
            if not dst:
                del out[d]
        return TruncatedSeries(self.dim, self.kmax, self.degree_cap, out)

    __radd__ = __add__

    def __neg__(self):
        return TruncatedSeries(
            self.dim,
            self.kmax,
            self.degree_cap,
            {d: {k: -c for k, c in terms.items()} for d, terms in self.parts.items()},
        )

    def __sub__(self, other):
        if isinstance(other, TruncatedSeries):
            return self + (-other)
        try:
            return self + (-qify(other))
        except TypeError:
            return NotImplemented

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> "TruncatedSeries":
        c = qify(c)
        if c == 0:
            return self.clone_shape()
        return TruncatedSeries(
            self.dim,
            self.kmax,
            self.degree_cap,
            {d: {k: c * v for k, v in terms.items()} for d, terms in self.parts.items()},
        )

    def __mul__(self, other):
        if isinstance(other, TruncatedSeries):
            self._compat(other)
            out: dict[int, dict[int, Q]] = {}
            cap = self.degree_cap
            for da, ta in self.parts.items():
                for db, tb in other.parts.items():
                    d = da + db
                    if d > cap:
                        continue
                    dst = out.setdefault(d, {})
                    for ka, ca in ta.items():
                        for kb, cb in tb.items():
                            key = ka + kb
                            v = dst.get(key, Q0) + ca * cb
                            if v == 0:
                                dst.pop(key, None)
                            else:
                                dst[key] = v
            return TruncatedSeries(
                self.dim, self.kmax, self.degree_cap, {d: t for d, t in out.items() if t}
            )
        try:
            return self.scale(qify(other))
        except TypeError:
            return NotImplemented

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative power of a series")
        out = TruncatedSeries.const(1, self.dim, self.kmax, self.degree_cap)
        base = self
        while n:
            if n & 1:
                out = out * base
            n >>= 1
            if n:
                base = base * base
        return out

    # -- calculus and extraction --------------------------------------------

    def diff(self, alpha: int, k: int) -> "TruncatedSeries":
        """Partial derivative with respect to t^{alpha,k}."""
        shift = _BITS * self.var_id(alpha, k)
        out: dict[int, dict[int, Q]] = {}
        for d, terms in self.parts.items():
            for key, c in terms.items():
                e = (key >> shift) & _MASK
                if e == 0:
                    continue
                dst = out.setdefault(d - 1, {})
                nk = key - (1 << shift)
                v = dst.get(nk, Q0) + c * e
                if v == 0:
                    dst.pop(nk, None)
                else:
                    dst[nk] = v
        return TruncatedSeries(
            self.dim, self.kmax, self.degree_cap, {d: t for d, t in out.items() if t}
        )

    def coefficient(self, exponents: dict) -> Q:
        """The coefficient of prod t^{alpha,k} ^ e for {(alpha,k): e}."""
        key = 0
        deg = 0
        for (alpha, k), e in exponents.items():
            key += e << (_BITS * self.var_id(alpha, k))
            deg += e
        return self.parts.get(deg, {}).get(key, Q0)

    def unpack(self, key: int) -> tuple:
        n = self.dim * (self.kmax + 1)
        return tuple((key >> (_BITS * i)) & _MASK for i in range(n))

    def monomials(self):
        """Yield (exponent tuple, coefficient) over all stored terms."""
        for d in sorted(self.parts):
            for key in sorted(self.parts[d]):
                yield self.unpack(key), self.parts[d][key]

    def truncate(self, new_cap: int) -> "TruncatedSeries":
        if new_cap >= self.degree_cap:
            out = TruncatedSeries(self.dim, self.kmax, new_cap)
            out.parts = {d: dict(t) for d, t in self.parts.items()}
            return out
        return TruncatedSeries(
            self.dim,
            self.kmax,
            new_cap,
            {d: dict(t) for d, t in self.parts.items() if d <= new_cap},
        )

    def degree_part(self, d: int) -> "TruncatedSeries":
        out = self.clone_shape()
        if d in self.parts:
            out.parts[d] = dict(self.parts[d])
        return out

    def subs_zero_above(self, kcut: int) -> "TruncatedSeries":
        """Set every t^{alpha,k} with k > kcut to zero."""
        out: dict[int, dict[int, Q]] = {}
        for d, terms in self.parts.items():
            for key, c in terms.items():
                exps = self.unpack(key)
                if any(
                    exps[a * (self.kmax + 1) + k]
                    for a in range(self.dim)
                    for k in range(kcut + 1, self.kmax + 1)
                ):
                    continue
                out.setdefault(d, {})[key] = c
        return TruncatedSeries(self.dim, self.kmax, self.degree_cap, out)

    @property
    def is_zero(self) -> bool:
        return not self.parts

    def max_degree(self) -> int:
        return max(self.parts, default=-1)

    def term_count(self) -> int:
        return sum(len(t) for t in self.parts.values())

    def __eq__(self, other):
        if not isinstance(other, TruncatedSeries):
            return NotImplemented
        return (
            (self.dim, self.kmax, self.degree_cap)
            == (other.dim, other.kmax, other.degree_cap)
            and self.parts == other.parts
        )

    __hash__ = None

    def __repr__(self):
        return (
            f"TruncatedSeries(dim={self.dim}, kmax={self.kmax}, "
            f"cap={self.degree_cap}, terms={self.term_count()})"
        )
