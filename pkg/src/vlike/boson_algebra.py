"""Normal-ordered quadratic boson operators on a finite mode window.

The modes a_{alpha,p} carry a flavour index alpha < dim and a half-integer
level p, with bracket

    [a_{alpha,p}, a_{beta,q}] = (-1)^{p-1/2} eta_{alpha beta} delta_{p+q,0}.

An operator here is

    sum over stored (p,q) of  :a_p A_{pq} a^q:  +  constant,

where a^q = eta^{-1} a_q (index raised on the second slot) and A_{pq} is a
dim x dim matrix.  Storage is canonical: keys have p <= q, and a term fed
in as (q,p) is folded through the transpose rule
:a_q B a^p: = :a_p (eta^{-1} B^T eta) a^q:, so equal operators have equal
storage.  Diagonal keys hold self-adjoint matrices A = eta^{-1} A^T eta.

The window W restricts levels to |p| <= W + 1/2.  Commutators of windowed
truncations agree with the untruncated commutators only on a smaller ball
of keys; :func:`commutator` tracks that exact radius explicitly instead of
pretending the whole window is trustworthy.
"""

from __future__ import annotations

from dataclasses import dataclass

from .exact_core import HalfInt, Matrix, Q, Q0, Q1, neg_one_pow, q_str, qify
from .series import TruncatedSeries
from .spectrum import SpectrumData


class WindowMismatchError(ValueError):
    """Binary operation on operators with different mode windows."""


class SpectrumMismatchError(ValueError):
    """Binary operation on operators over different spectra."""


class ExactRadiusError(ValueError):
    """The requested comparison or bracket has no exactly-known keys left."""


def _mode_sign(p: HalfInt) -> Q:
    # (-1)^{p-1/2} for half-integer p; p-1/2 = (p.twice-1)//2
    return neg_one_pow((p.twice - 1) // 2)


class QuadraticOperator:
    """Canonically stored quadratic + constant operator on a mode window."""

    __slots__ = ("spectrum", "window", "quad", "constant")

    def __init__(self, spectrum: SpectrumData, window: int, quad=None, constant=Q0):
        if window < 0:
            raise ValueError("window must be nonnegative")
        self.spectrum = spectrum
        self.window = window
        self.quad: dict[tuple[HalfInt, HalfInt], Matrix] = {}
        self.constant = qify(constant)
        if quad:
            for (p, q), a in quad.items():
                self._accumulate(p, q, a)
            self._strip()

    # -- building -----------------------------------------------------------

    @staticmethod
    def zero(spectrum: SpectrumData, window: int) -> "QuadraticOperator":
        return QuadraticOperator(spectrum, window)

    @staticmethod
    def build(spectrum: SpectrumData, window: int, terms, constant=Q0) -> "QuadraticOperator":
        """Assemble from (p, q, matrix) summands meaning :a_p A a^q:."""
        op = QuadraticOperator(spectrum, window, constant=constant)
        for p, q, a in terms:
            op._accumulate(p, q, a)
        op._strip()
        return op

    def _adjoint(self, a: Matrix) -> Matrix:
        s = self.spectrum
        return s.eta_inv @ a.T @ s.eta

    def _accumulate(self, p: HalfInt, q: HalfInt, a: Matrix):
        w2 = 2 * self.window + 1
        if abs(p.twice) > w2 or abs(q.twice) > w2:
            raise ValueError(f"mode key ({p},{q}) outside window {self.window}")
        if p.twice % 2 == 0 or q.twice % 2 == 0:
            raise ValueError("mode levels must be half-odd integers")
        if q < p:
            p, q, a = q, p, self._adjoint(a)
        elif q == p:
            half = Q(1, 2)
            a = (a + self._adjoint(a)) * half
        cur = self.quad.get((p, q))
        self.quad[(p, q)] = a if cur is None else cur + a

    def _strip(self):
        for key in [k for k, a in self.quad.items() if a.is_zero]:
            del self.quad[key]

    # -- linear structure ---------------------------------------------------

    def _check_peer(self, other: "QuadraticOperator"):
        if self.window != other.window:
            raise WindowMismatchError(
                f"windows differ: {self.window} vs {other.window}"
            )
        if self.spectrum != other.spectrum:
            raise SpectrumMismatchError("operators live over different spectra")

    def __add__(self, other):
        if isinstance(other, OperatorWithValidity):
            return NotImplemented
        if not isinstance(other, QuadraticOperator):
            return NotImplemented
        self._check_peer(other)
        out = QuadraticOperator(self.spectrum, self.window, constant=self.constant + other.constant)
        out.quad = dict(self.quad)
        for key, a in other.quad.items():
            cur = out.quad.get(key)
            out.quad[key] = a if cur is None else cur + a
        out._strip()
        return out

    def __sub__(self, other):
        if isinstance(other, OperatorWithValidity):
            return NotImplemented
        if not isinstance(other, QuadraticOperator):
            return NotImplemented
        return self + (other * Q(-1))

    def __neg__(self):
        return self * Q(-1)

    def __mul__(self, c):
        c = qify(c)
        out = QuadraticOperator(self.spectrum, self.window, constant=c * self.constant)
        if c != 0:
            out.quad = {key: a * c for key, a in self.quad.items()}
        return out

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, QuadraticOperator):
            return NotImplemented
        return (
            self.window == other.window
            and self.spectrum == other.spectrum
            and self.constant == other.constant
            and self.quad == other.quad
        )

    __hash__ = None

    # -- structure queries --------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not self.quad and self.constant == 0

    def levels(self) -> set:
        """Levels p+q present, as plain ints."""
        out = set()
        for p, q in self.quad:
            t = p.twice + q.twice
            assert t % 2 == 0
            out.add(t // 2)
        return out

    def band_radius(self) -> int:
        """max |p+q| over stored keys; 0 for a purely central operator."""
        return max((abs(p.twice + q.twice) // 2 for p, q in self.quad), default=0)

    def up_up_blocks(self) -> dict:
        """Symmetric coefficient blocks C_{pq} with both indices raised.

        The operator equals sum_{p,q} sum_{beta,eps} C_{pq}^{beta eps}
        :a_{beta,p} a_{eps,q}: over ordered level pairs, with
        C_{qp} = C_{pq}^T.  Recovered from storage by C = A eta^{-1},
        halved on off-diagonal keys because both orientations appear.
        """
        inv = self.spectrum.eta_inv
        half = Q(1, 2)
        out = {}
        for (p, q), a in self.quad.items():
            c = a @ inv
            if p == q:
                out[(p, p)] = c
            else:
                out[(p, q)] = c * half
                out[(q, p)] = c.T * half
        return out

    def trimmed(self, radius: int) -> "QuadraticOperator":
        """Drop keys with max(|p|, |q|) > radius + 1/2.  Constant kept."""
        r2 = 2 * radius + 1
        out = QuadraticOperator(self.spectrum, self.window, constant=self.constant)
        out.quad = {
            (p, q): a
            for (p, q), a in self.quad.items()
            if abs(p.twice) <= r2 and abs(q.twice) <= r2
        }
        return out

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        terms = []
        for (p, q) in sorted(self.quad, key=lambda k: (k[0].twice, k[1].twice)):
            a = self.quad[(p, q)]
            terms.append(
                {
                    "p": p.serial(),
                    "q": q.serial(),
                    "matrix": [[q_str(a[i, j]) for j in range(a.cols)] for i in range(a.rows)],
                }
            )
        return {"window": self.window, "constant": q_str(self.constant), "terms": terms}

    @staticmethod
    def from_json_dict(data: dict, spectrum: SpectrumData) -> "QuadraticOperator":
        op = QuadraticOperator(spectrum, int(data["window"]), constant=qify(data["constant"]))
        for term in data["terms"]:
            p = HalfInt.parse(term["p"])
            q = HalfInt.parse(term["q"])
            a = Matrix([[qify(x) for x in row] for row in term["matrix"]])
            op._accumulate(p, q, a)
        op._strip()
        return op

    def __repr__(self):
        return (
            f"QuadraticOperator(window={self.window}, keys={len(self.quad)}, "
            f"constant={self.constant})"
        )


@dataclass
class OperatorWithValidity:
    """An operator plus the key radius on which it is exactly known.

    Produced by :func:`commutator`: keys with max(|p|,|q|) <= exact_radius
    + 1/2 agree with the untruncated bracket; anything further out has
    been trimmed away.  central_exact records whether the scalar term is
    free of truncation (it is whenever the shared window comfortably
    exceeds both operands' level bands).
    """

    op: QuadraticOperator
    exact_radius: int
    central_exact: bool = True

    def __add__(self, other):
        o, r, ce = _unwrap(other)
        return OperatorWithValidity(
            self.op + o, min(self.exact_radius, r), self.central_exact and ce
        )

    __radd__ = __add__

    def __sub__(self, other):
        o, r, ce = _unwrap(other)
        return OperatorWithValidity(
            self.op - o, min(self.exact_radius, r), self.central_exact and ce
        )

    def __neg__(self):
        return OperatorWithValidity(-self.op, self.exact_radius, self.central_exact)

    def __mul__(self, c):
        return OperatorWithValidity(self.op * c, self.exact_radius, self.central_exact)

    __rmul__ = __mul__


def _unwrap(x) -> tuple[QuadraticOperator, int, bool]:
    if isinstance(x, OperatorWithValidity):
        return x.op, x.exact_radius, x.central_exact
    if isinstance(x, QuadraticOperator):
        return x, x.window, True
    raise TypeError(f"not an operator: {x!r}")


def commutator(a, b) -> OperatorWithValidity:
    """Bracket of two quadratic operators, with honest validity tracking.

    Accepts plain :class:`QuadraticOperator` values (fresh truncations,
    exact on their whole window) or :class:`OperatorWithValidity` results
    of earlier brackets.  The contraction is routed through the operand
    with the smaller level band, which maximizes the surviving radius:

        exact_radius(result) = min(r_a, r_b) - min(band_a, band_b).

    The scalar term is the trace of the double contraction; it is exact
    when min(r_a, r_b) >= max(band_a, band_b) + 1, recorded in
    ``central_exact``.
    """
    op_a, rad_a, _ = _unwrap(a)
    op_b, rad_b, _ = _unwrap(b)
    op_a._check_peer(op_b)
    s = op_a.spectrum
    band_a = op_a.band_radius()
    band_b = op_b.band_radius()
    if band_a <= band_b:
        x, y, sign = op_a, op_b, Q1
        band_x = band_a
    else:
        x, y, sign = op_b, op_a, Q(-1)
        band_x = band_b
    radius = min(rad_a, rad_b) - band_x
    if radius < 0:
        raise ExactRadiusError(
            "no exactly-known keys survive this bracket; enlarge the window"
        )

    cx = x.up_up_blocks()
    cy = y.up_up_blocks()
    by_first: dict[HalfInt, list] = {}
    for (u, v), m in cy.items():
        by_first.setdefault(u, []).append((v, m))

    eta = s.eta
    # t[(p,v)] = sum_q C^X_{pq} (-1)^{q-1/2} eta C^Y_{-q,v}
    t: dict[tuple[HalfInt, HalfInt], Matrix] = {}
    for (p, q), mx in cx.items():
        partners = by_first.get(-q)
        if not partners:
            continue
        left = mx @ (eta * _mode_sign(q))
        for v, my in partners:
            prod = left @ my
            cur = t.get((p, v))
            t[(p, v)] = prod if cur is None else cur + prod

    # quadratic part: E = 2 (T + T^T), fed back through the canonical
    # builder as up-up blocks (A = E eta)
    terms = []
    two = Q(2)
    r2 = 2 * radius + 1
    e_blocks: dict[tuple[HalfInt, HalfInt], Matrix] = {}
    for (p, v), m in t.items():
        cur = e_blocks.get((p, v))
        e_blocks[(p, v)] = m * two if cur is None else cur + m * two
        cur = e_blocks.get((v, p))
        mt = m.T * two
        e_blocks[(v, p)] = mt if cur is None else cur + mt
    for (p, v), m in e_blocks.items():
        if abs(p.twice) > r2 or abs(v.twice) > r2:
            continue
        terms.append((p, v, (m @ eta) * sign))

    # scalar: Z = 2 sum_p (-1)^{|p|-1/2} tr(T_{p,-p} eta); only level-zero
    # pairings contribute
    central = Q0
    for (p, v), m in t.items():
        if v != -p:
            continue
        central += neg_one_pow((abs(p.twice) - 1) // 2) * (m @ eta).trace()
    central = central * two * sign

    result = QuadraticOperator.build(s, op_a.window, terms, constant=central)
    central_exact = min(rad_a, rad_b) >= max(band_a, band_b) + 1
    return OperatorWithValidity(result, radius, central_exact)


@dataclass
class ComparisonResult:
    """Outcome of :func:`equal_within`, with a witness when unequal."""

    equal: bool
    witness: str | None = None

    def __bool__(self):
        return self.equal


def equal_within(a, b, radius: int) -> ComparisonResult:
    """Compare two operators on the key ball max(|p|,|q|) <= radius + 1/2.

    Both operands must be exactly known that far out; otherwise this
    raises :class:`ExactRadiusError` instead of comparing garbage.
    Constants are always compared.
    """
    op_a, rad_a, _ = _unwrap(a)
    op_b, rad_b, _ = _unwrap(b)
    op_a._check_peer(op_b)
    if radius > min(rad_a, rad_b):
        raise ExactRadiusError(
            f"radius {radius} exceeds exactly-known radius {min(rad_a, rad_b)}"
        )
    if op_a.constant != op_b.constant:
        return ComparisonResult(
            False,
            f"constant: {q_str(op_a.constant)} != {q_str(op_b.constant)}",
        )
    r2 = 2 * radius + 1
    keys = set(op_a.quad) | set(op_b.quad)
    zero = Matrix.zeros(op_a.spectrum.dim, op_a.spectrum.dim)
    for key in sorted(keys, key=lambda k: (abs(k[0].twice) + abs(k[1].twice), k[0].twice, k[1].twice)):
        p, q = key
        if abs(p.twice) > r2 or abs(q.twice) > r2:
            continue
        ma = op_a.quad.get(key, zero)
        mb = op_b.quad.get(key, zero)
        if ma != mb:
            return ComparisonResult(False, f"key ({p},{q}): matrices differ")
    return ComparisonResult(True)


# -- differential-operator dictionary ---------------------------------------


class IndexCapError(ValueError):
    """A mode referenced a time variable beyond the series ring's kmax."""


@dataclass
class FirstOrderApplication:
    """The epsilon^{-2} graded pieces of an operator applied to e^{F/eps^2}.

    Splitting the dictionary by mode signs, a quadratic operator is

        eps^2 (second order)  +  eps^0 (first order)  +  eps^{-2} (mult),

    and conjugation by e^{F/eps^2} contributes at order eps^{-2}:
    dF dF from the second-order piece, t-tilde dF from the first-order
    piece, and the multiplication piece itself.
    """

    quadratic_diff: TruncatedSeries
    first_order: TruncatedSeries
    multiplication: TruncatedSeries
    constant: Q

    def residual(self) -> TruncatedSeries:
        return self.quadratic_diff + self.first_order + self.multiplication


def apply_first_order(op, f: TruncatedSeries, restrict: bool = False) -> FirstOrderApplication:
    """Translate a quadratic operator through the time-variable dictionary
    and collect the order-eps^{-2} effect on exp(F/eps^2).

    Modes with positive level are eps d/dt^{alpha,p-1/2}; negative-level
    modes multiply by eps^{-1} (-1)^{p+1/2} eta_{alpha beta} ttilde^{beta}
    where ttilde^{alpha,k} = t^{alpha,k} - delta^{alpha,1} delta^{k,1}.
    With ``restrict`` unset, any mode beyond f's kmax raises
    :class:`IndexCapError`; with it set such summands are dropped, which
    equals applying the full operator and then restricting to the
    retained variables.
    """
    op, _, _ = _unwrap(op)
    s = op.spectrum
    dim, kmax, cap = s.dim, f.kmax, f.degree_cap
    if (f.dim,) != (dim,):
        raise ValueError("series flavour count differs from spectrum dimension")

    zero = TruncatedSeries.zero(dim, kmax, cap)
    out_dd = zero
    out_fo = zero
    out_mul = zero

    df_cache: dict[tuple[int, int], TruncatedSeries] = {}

    def dF(beta: int, j: int) -> TruncatedSeries:
        key = (beta, j)
        if key not in df_cache:
            df_cache[key] = f.diff(beta, j)
        return df_cache[key]

    tt_cache: dict[int, list[TruncatedSeries]] = {}

    def eta_ttilde(k: int) -> list[TruncatedSeries]:
        # component beta of eta . ttilde at time index k
        if k not in tt_cache:
            vec = []
            for beta in range(dim):
                acc = zero
                for sig in range(dim):
                    c = s.eta[beta, sig]
                    if c == 0:
                        continue
                    term = TruncatedSeries.var(sig, k, dim, kmax, cap)
                    if sig == 0 and k == 1:
                        term = term - 1
                    acc = acc + term.scale(c)
                vec.append(acc)
            tt_cache[k] = vec
        return tt_cache[k]

    def index_ok(k: int) -> bool:
        if k <= kmax:
            return True
        if restrict:
            return False
        raise IndexCapError(f"time index {k} exceeds series kmax {kmax}")

    for (p, q), a in sorted(
        op.quad.items(), key=lambda item: (item[0][0].twice, item[0][1].twice)
    ):
        c = a @ s.eta_inv
        if p.twice > 0:
            # both annihilation: eps^2 second-order piece
            jp, jq = p.to_index(), q.to_index()
            if not (index_ok(jp) and index_ok(jq)):
                continue
            for beta in range(dim):
                for eps_i in range(dim):
                    coef = c[beta, eps_i]
                    if coef == 0:
                        continue
                    out_dd = out_dd + (dF(beta, jp) * dF(eps_i, jq)).scale(coef)
        elif q.twice < 0:
            # both creation: eps^{-2} multiplication piece
            kp, kq = (-p).to_index(), (-q).to_index()
            if not (index_ok(kp) and index_ok(kq)):
                continue
            sgn = _mode_sign(-p) * _mode_sign(-q)
            vp, vq = eta_ttilde(kp), eta_ttilde(kq)
            for beta in range(dim):
                for eps_i in range(dim):
                    coef = c[beta, eps_i]
                    if coef == 0:
                        continue
                    out_mul = out_mul + (vp[beta] * vq[eps_i]).scale(coef * sgn)
        else:
            # creation-annihilation: eps^0 first-order piece
            kp, jq = (-p).to_index(), q.to_index()
            if not (index_ok(kp) and index_ok(jq)):
                continue
            sgn = _mode_sign(-p)
            vp = eta_ttilde(kp)
            for beta in range(dim):
                for eps_i in range(dim):
                    coef = c[beta, eps_i]
                    if coef == 0:
                        continue
                    out_fo = out_fo + (vp[beta] * dF(eps_i, jq)).scale(coef * sgn)

    return FirstOrderApplication(out_dd, out_fo, out_mul, op.constant)
