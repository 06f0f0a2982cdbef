"""Spectrum data (eta, mu, R) and its graded matrix calculus.

The triple consists of a symmetric nondegenerate pairing eta, a diagonal
grading operator mu, and a nilpotent part R split into graded pieces R_s
that raise mu-eigenvalues by s.  Everything else in the package consumes a
validated instance of this triple; nothing here ever computes the triple
from geometry, it is input.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .exact_core import Matrix, Q, Q0, Q1, neg_one_pow, q_str, qify


class SpectrumFormatError(ValueError):
    """Raised for malformed spectrum files or constructor input."""


class SpectrumData:
    """The validated-or-not triple (eta, mu, {R_s}) in dimension l.

    mu is stored as the diagonal sequence (the flat-coordinate normalization
    makes the grading operator diagonal); R_s are full l x l rational
    matrices, absent grades meaning zero.  charge is optional metadata.
    Instances are immutable; use :func:`validate` to check the axioms.
    """

    __slots__ = ("dim", "eta", "mu", "r_parts", "charge", "_eta_inv")

    def __init__(self, dim, eta, mu, r_parts=None, charge=None):
        self.dim = int(dim)
        if self.dim <= 0:
            raise SpectrumFormatError("dimension must be positive")
        self.eta = eta if isinstance(eta, Matrix) else Matrix(eta).map(qify)
        self.mu = tuple(qify(x) for x in mu)
        parts = {}
        for s, m in (r_parts or {}).items():
            s = int(s)
            if s <= 0:
                raise SpectrumFormatError("R grades must be positive integers")
            m = m if isinstance(m, Matrix) else Matrix(m).map(qify)
            if not m.is_zero:
                parts[s] = m
        self.r_parts = parts
        self.charge = None if charge is None else qify(charge)
        self._eta_inv = None

    @property
    def r_max(self) -> int:
        return max(self.r_parts, default=0)

    @property
    def eta_inv(self) -> Matrix:
        if self._eta_inv is None:
            self._eta_inv = self.eta.inverse()
        return self._eta_inv

    def r_dense(self) -> Matrix:
        """The full matrix R = sum_s R_s."""
        acc = Matrix.zeros(self.dim, self.dim)
        for m in self.r_parts.values():
            acc = acc + m
        return acc

    def rescale_r(self, factor) -> "SpectrumData":
        """A copy with every R_s multiplied by a nonzero rational.

        Any nonzero rescaling preserves all the axioms, so theorem checks
        must be insensitive to it; tests use this to confirm the catalog
        normalization is a convention and not an input the theorems see.
        """
        factor = qify(factor)
        if factor == 0:
            raise ValueError("rescaling factor must be nonzero")
        return SpectrumData(
            self.dim,
            self.eta,
            self.mu,
            {s: m * factor for s, m in self.r_parts.items()},
            self.charge,
        )

    def __eq__(self, other):
        if not isinstance(other, SpectrumData):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.eta == other.eta
            and self.mu == other.mu
            and self.r_parts == other.r_parts
        )

    __hash__ = None

    def __repr__(self):
        return (
            f"SpectrumData(dim={self.dim}, mu=({', '.join(map(q_str, self.mu))}),"
            f" grades={sorted(self.r_parts)})"
        )


@dataclass
class GradedMatrixPoly:
    """Graded parts of a polynomial in R: grade r maps mu-eigenvalue x to x+r.

    Each part P_r satisfies the intertwining rule f(mu) P_r = P_r f(mu + r)
    for any polynomial f, which is what lets derivative expansions act
    through diagonal matrices.
    """

    parts: dict[int, Matrix] = field(default_factory=dict)

    def part(self, r: int, dim: int) -> Matrix:
        return self.parts.get(r, Matrix.zeros(dim, dim))

    def dense(self, dim: int) -> Matrix:
        acc = Matrix.zeros(dim, dim)
        for m in self.parts.values():
            acc = acc + m
        return acc


@dataclass
class ValidationCheck:
    name: str
    passed: bool
    witness: str | None = None


@dataclass
class ValidationReport:
    checks: list[ValidationCheck] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, passed, witness=None):
        self.checks.append(ValidationCheck(name, bool(passed), witness))

    def failures(self) -> list[ValidationCheck]:
        return [c for c in self.checks if not c.passed]

    def __str__(self) -> str:
        lines = []
        for c in self.checks:
            mark = "pass" if c.passed else "FAIL"
            extra = f"  [{c.witness}]" if (c.witness and not c.passed) else ""
            lines.append(f"{mark}  {c.name}{extra}")
        return "\n".join(lines)

    def to_json_dict(self) -> dict:
        return {
            "ok": self.ok,
            "checks": [
                {"name": c.name, "passed": c.passed, "witness": c.witness}
                for c in self.checks
            ],
        }


def validate(s: SpectrumData) -> ValidationReport:
    """Check every spectrum axiom exactly, reporting witnesses on failure.

    Structural problems (shapes) are reported first and short-circuit the
    algebraic checks, which would otherwise raise.
    """
    rep = ValidationReport()
    l = s.dim
    shapes_ok = s.eta.rows == l and s.eta.cols == l and len(s.mu) == l
    for grade, m in s.r_parts.items():
        shapes_ok = shapes_ok and m.rows == l and m.cols == l
    rep.add("shapes: eta is l x l, mu has length l, each R_s is l x l", shapes_ok)
    if not shapes_ok:
        return rep

    sym = s.eta == s.eta.T
    rep.add("eta symmetric", sym)
    det = s.eta.det()
    rep.add("eta nondegenerate", det != 0, None if det != 0 else "det(eta) = 0")
    if not sym or det == 0:
        return rep

    # mu anti-selfadjointness wrt eta: since mu is diagonal this is exactly
    # (mu_a + mu_b) eta_{ab} = 0 for every entry.
    bad = next(
        (
            (a, b)
            for a in range(l)
            for b in range(l)
            if (s.mu[a] + s.mu[b]) * s.eta[a, b] != 0
        ),
        None,
    )
    rep.add(
        "mu anti-selfadjoint for eta",
        bad is None,
        None if bad is None else f"eta[{bad[0]},{bad[1]}] nonzero but mu sum is not",
    )

    for grade in sorted(s.r_parts):
        m = s.r_parts[grade]
        want = m * Q(neg_one_pow(grade + 1))
        got = s.eta_inv @ m.T @ s.eta
        rep.add(
            f"R_{grade} transpose rule (sign (-1)^(s+1))",
            got == want,
            None if got == want else "eta^-1 R_s^T eta mismatch",
        )
        bad = next(
            (
                (a, b)
                for a in range(l)
                for b in range(l)
                if m[a, b] != 0 and s.mu[a] - s.mu[b] != grade
            ),
            None,
        )
        rep.add(
            f"R_{grade} grading: entries only where mu_a - mu_b = {grade}",
            bad is None,
            None if bad is None else f"entry ({bad[0]},{bad[1]}) violates the grading",
        )

    if s.r_parts:
        spread = max(s.mu) - min(s.mu)
        ok = s.r_max <= spread
        rep.add(
            "largest grade bounded by the mu spread",
            ok,
            None if ok else f"r_max={s.r_max} > spread={q_str(spread)}",
        )
    return rep


def graded_power(s: SpectrumData, k: int) -> GradedMatrixPoly:
    """The graded decomposition of R^k.

    Recursion (R^k)_r = sum_s R_s (R^(k-1))_(r-s); grade-r parts vanish
    below r = k because every R_s raises the grade by at least one.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    l = s.dim
    current = {0: Matrix.identity(l)}
    for _ in range(k):
        nxt: dict[int, Matrix] = {}
        for grade, rs in s.r_parts.items():
            for r, m in current.items():
                prod = rs @ m
                if prod.is_zero:
                    continue
                key = grade + r
                nxt[key] = nxt[key] + prod if key in nxt else prod
        current = {r: m for r, m in nxt.items() if not m.is_zero}
    return GradedMatrixPoly(current)


_CATALOG: dict[str, dict] = {
    # one-dimensional: trivial pairing, vanishing mu and R
    "dim1": {
        "dim": 1,
        "eta": [["1"]],
        "mu": ["0"],
        "R": {},
        "charge": "0",
    },
    # two-dimensional polynomial example with antidiagonal pairing
    "a2": {
        "dim": 2,
        "eta": [["0", "1"], ["1", "0"]],
        "mu": ["-1/6", "1/6"],
        "R": {},
        "charge": "1/3",
    },
    # two-dimensional example with nontrivial nilpotent part; the entry value
    # 2 is a convention, any nonzero value obeys the axioms (tests rerun the
    # theorems with it rescaled)
    "p1": {
        "dim": 2,
        "eta": [["0", "1"], ["1", "0"]],
        "mu": ["-1/2", "1/2"],
        "R": {"1": [["0", "0"], ["2", "0"]]},
        "charge": "1",
    },
}


def catalog(name: str) -> SpectrumData:
    """A validated catalog entry: one of "dim1", "a2", "p1"."""
    try:
        raw = _CATALOG[name]
    except KeyError:
        raise KeyError(
            f"unknown catalog entry {name!r}; have {sorted(_CATALOG)}"
        ) from None
    s = spectrum_from_json_dict(raw)
    rep = validate(s)
    if not rep.ok:  # pragma: no cover - catalog is fixed and valid
        raise AssertionError(f"catalog entry {name} fails validation:\n{rep}")
    return s


def spectrum_from_json_dict(d: dict) -> SpectrumData:
    """Build SpectrumData from the documented JSON shape.

    {"dim": l, "eta": [[str]], "mu": [str], "R": {"s": [[str]]}, "charge": str?}
    with rationals as "p/q" strings (plain integers also accepted).
    """
    try:
        dim = int(d["dim"])
        eta = Matrix([[qify(x) for x in row] for row in d["eta"]])
        mu = [qify(x) for x in d["mu"]]
        r_parts = {
            int(grade): Matrix([[qify(x) for x in row] for row in m])
            for grade, m in (d.get("R") or {}).items()
        }
        charge = d.get("charge")
        return SpectrumData(dim, eta, mu, r_parts, charge)
    except SpectrumFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SpectrumFormatError(f"bad spectrum data: {exc}") from exc


def spectrum_to_json_dict(s: SpectrumData) -> dict:
    d = {
        "dim": s.dim,
        "eta": [[q_str(x) for x in s.eta.row(i)] for i in range(s.dim)],
        "mu": [q_str(x) for x in s.mu],
        "R": {
            str(grade): [[q_str(x) for x in m.row(i)] for i in range(s.dim)]
            for grade, m in sorted(s.r_parts.items())
        },
    }
    if s.charge is not None:
        d["charge"] = q_str(s.charge)
    return d


def load_spectrum(path) -> SpectrumData:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpectrumFormatError(f"not valid JSON: {exc}") from exc
    return spectrum_from_json_dict(raw)
