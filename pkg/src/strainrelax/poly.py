"""Sparse multivariate polynomial arithmetic over the (x, y, Z) variable blocks.

A polynomial is a map from exponent tuples to float coefficients.  Exponent
tuples double as the multi-index type: two multi-indices are equal iff their
exponent tuples are equal, and the degree is the exponent sum.  Terms are
kept normalized (no exact-0.0 coefficients are ever stored); term listing
order is graded lexicographic, with earlier variables ranked higher.

Variable layout for spatial dimension n: x_1..x_n, y_1..y_n, then the n*n
entries of Z row by row, where Z[j, i] stands for the partial derivative of
deformation component j along axis i.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import StructuralError

Exponents = tuple[int, ...]


def degree_of(alpha: Exponents) -> int:
    """Total degree of a multi-index."""
    return sum(alpha)


def split_index(alpha: Exponents, n: int) -> tuple[Exponents, Exponents, Exponents]:
    """Split a multi-index into its (x, y, Z) parts."""
    return alpha[:n], alpha[n:2 * n], alpha[2 * n:]


def graded_lex_key(alpha: Exponents):
    """Sort key giving graded lexicographic order (x_1 ranked above x_2, ...)."""
    return (sum(alpha), tuple(-e for e in alpha))


def monomials_up_to(arity: int, deg: int) -> list[Exponents]:
    """All exponent tuples of total degree <= deg, in graded-lex order."""
    out: list[Exponents] = []
    for d in range(deg + 1):
        for combo in itertools.combinations_with_replacement(range(arity), d):
            e = [0] * arity
            for c in combo:
                e[c] += 1
            out.append(tuple(e))
    return out


@dataclass(frozen=True)
class VariableSpace:
    """The (x, y, Z) variable block layout for spatial dimension n."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise StructuralError(f"spatial dimension must be positive, got {self.n}")

    @property
    def arity(self) -> int:
        return 2 * self.n + self.n * self.n

    @property
    def blocks(self) -> tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]:
        n = self.n
        return (tuple(range(n)),
                tuple(range(n, 2 * n)),
                tuple(range(2 * n, 2 * n + n * n)))

    def x(self, i: int) -> int:
        """Index of x_{i+1} (0-based i)."""
        self._check(i, self.n)
        return i

    def y(self, j: int) -> int:
        self._check(j, self.n)
        return self.n + j

    def z(self, j: int, i: int) -> int:
        """Index of Z[j, i] = d y_{j+1} / d x_{i+1}."""
        self._check(j, self.n)
        self._check(i, self.n)
        return 2 * self.n + j * self.n + i

    def var_name(self, k: int) -> str:
        n = self.n
        if k < n:
            return f"x{k + 1}"
        if k < 2 * n:
            return f"y{k - n + 1}"
        j, i = divmod(k - 2 * n, n)
        return f"Z{j + 1}{i + 1}"

    @staticmethod
    def _check(i: int, bound: int) -> None:
        if not 0 <= i < bound:
            raise StructuralError(f"index {i} out of range [0, {bound})")


@dataclass(frozen=True)
class CoordSpace:
    """A plain tuple of named scalar variables (used for strain coordinates)."""

    names: tuple[str, ...]

    @property
    def arity(self) -> int:
        return len(self.names)

    def var_name(self, k: int) -> str:
        return self.names[k]


class Polynomial:
    """Immutable sparse polynomial over a variable space.

    All operations return new polynomials; instances are safe to share.
    """

    __slots__ = ("space", "_terms", "_degree")

    def __init__(self, space, terms: Mapping[Exponents, float]):
        self.space = space
        clean = {}
        for alpha, c in terms.items():
            if len(alpha) != space.arity:
                raise StructuralError(
                    f"exponent tuple of length {len(alpha)} in space of arity {space.arity}")
            c = float(c)
            if c != 0.0:
                clean[tuple(int(e) for e in alpha)] = c
        self._terms = clean
        self._degree = max((sum(a) for a in clean), default=0)

    # ----- constructors -------------------------------------------------
    @classmethod
    def zero(cls, space) -> "Polynomial":
        return cls(space, {})

    @classmethod
    def constant(cls, space, c: float) -> "Polynomial":
        return cls(space, {(0,) * space.arity: float(c)})

    @classmethod
    def variable(cls, space, k: int) -> "Polynomial":
        if not 0 <= k < space.arity:
            raise StructuralError(f"variable index {k} out of range")
        e = [0] * space.arity
        e[k] = 1
        return cls(space, {tuple(e): 1.0})

    # ----- basic queries ------------------------------------------------
    @property
    def degree(self) -> int:
        return self._degree

    def is_zero(self) -> bool:
        return not self._terms

    def coefficient(self, alpha: Exponents) -> float:
        return self._terms.get(tuple(alpha), 0.0)

    def terms(self) -> list[tuple[Exponents, float]]:
        """Terms in graded-lex order."""
        return sorted(self._terms.items(), key=lambda kv: graded_lex_key(kv[0]))

    def term_map(self) -> dict[Exponents, float]:
        return dict(self._terms)

    def variables_used(self) -> set[int]:
        used: set[int] = set()
        for alpha in self._terms:
            used.update(i for i, e in enumerate(alpha) if e)
        return used

    def __eq__(self, other) -> bool:
        return (isinstance(other, Polynomial)
                and self.space == other.space
                and self._terms == other._terms)

    def __hash__(self):
        return hash((self.space, tuple(sorted(self._terms.items()))))

    def __repr__(self) -> str:
        if not self._terms:
            return "<poly 0>"
        parts = []
        for alpha, c in self.terms()[:8]:
            mono = "*".join(f"{self.space.var_name(i)}^{e}" if e > 1 else self.space.var_name(i)
                            for i, e in enumerate(alpha) if e)
            parts.append(f"{c:g}" + (f"*{mono}" if mono else ""))
        tail = " + ..." if len(self._terms) > 8 else ""
        return f"<poly {' + '.join(parts)}{tail}>"

    # ----- ring operations ----------------------------------------------
    def _require_same_space(self, other: "Polynomial") -> None:
        if self.space != other.space:
            raise StructuralError("polynomials live in different variable spaces")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.space, other)
        self._require_same_space(other)
        out = dict(self._terms)
        for alpha, c in other._terms.items():
            s = out.get(alpha, 0.0) + c
            if s == 0.0:
                out.pop(alpha, None)
            else:
                out[alpha] = s
        return Polynomial(self.space, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.space, {a: -c for a, c in self._terms.items()})

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.space, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.scale(float(other))
        self._require_same_space(other)
        out: dict[Exponents, float] = {}
        for a1, c1 in self._terms.items():
            for a2, c2 in other._terms.items():
                alpha = tuple(e1 + e2 for e1, e2 in zip(a1, a2))
                s = out.get(alpha, 0.0) + c1 * c2
                if s == 0.0:
                    out.pop(alpha, None)
                else:
                    out[alpha] = s
        return Polynomial(self.space, out)

    __rmul__ = __mul__

    def scale(self, c: float) -> "Polynomial":
        if c == 0.0:
            return Polynomial.zero(self.space)
        return Polynomial(self.space, {a: v * c for a, v in self._terms.items()})

    # ----- calculus -------------------------------------------------------
    def differentiate(self, var: int) -> "Polynomial":
        """Exact partial derivative with respect to variable index ``var``."""
        if not 0 <= var < self.space.arity:
            raise StructuralError(f"variable index {var} out of range")
        out: dict[Exponents, float] = {}
        for alpha, c in self._terms.items():
            e = alpha[var]
            if e == 0:
                continue
            beta = list(alpha)
            beta[var] = e - 1
            out[tuple(beta)] = c * e
        return Polynomial(self.space, out)

    def evaluate(self, point: Sequence[float]) -> float:
        """Evaluate at a full-arity point (plain sum of monomial values)."""
        if len(point) != self.space.arity:
            raise StructuralError(
                f"point of length {len(point)} in space of arity {self.space.arity}")
        total = 0.0
        for alpha, c in self._terms.items():
            t = c
            for i, e in enumerate(alpha):
                if e == 1:
                    t *= point[i]
                elif e > 1:
                    t *= point[i] ** e
            total += t
        return total

    def compose(self, substitution: Mapping[int, "Polynomial"],
                space=None) -> "Polynomial":
        """Substitute polynomials for variables; unsubstituted ones pass through.

        All substituted polynomials must live in the target space (defaults to
        this polynomial's own space).
        """
        target = space if space is not None else self.space
        for k, p in substitution.items():
            if p.space != target:
                raise StructuralError(
                    f"substitution for variable {k} lives in a different space")
        if target.arity != self.space.arity and any(
                k not in substitution for k in self.variables_used()):
            raise StructuralError("pass-through variables need matching arities")

        powers: dict[tuple[int, int], Polynomial] = {}

        def power(i: int, e: int) -> Polynomial:
            key = (i, e)
            if key not in powers:
                if e == 0:
                    powers[key] = Polynomial.constant(target, 1.0)
                else:
                    base = substitution.get(i)
                    if base is None:
                        base = Polynomial.variable(target, i)
                    powers[key] = power(i, e - 1) * base
            return powers[key]

        out = Polynomial.zero(target)
        for alpha, c in self._terms.items():
            term = Polynomial.constant(target, c)
            for i, e in enumerate(alpha):
                if e:
                    term = term * power(i, e)
            out = out + term
        return out

    # ----- integration ----------------------------------------------------
    def integrate_box(self, box: Sequence[tuple[float, float]],
                      fixed: Mapping[int, float] | None = None):
        """Integrate exactly over the x block of an axis-aligned box.

        ``box`` gives one (lo, hi) pair per x variable.  ``fixed`` may pin
        y/Z variables to numbers first; any remaining non-x variables pass
        through symbolically.  Returns a float when the result is constant,
        otherwise a Polynomial.
        """
        n = getattr(self.space, "n", None)
        if n is None or len(box) != n:
            raise StructuralError("box must give one (lo, hi) range per x variable")
        p = self
        if fixed:
            subs = {k: Polynomial.constant(self.space, v) for k, v in fixed.items()}
            p = p.compose(subs)
        out: dict[Exponents, float] = {}
        for alpha, c in p._terms.items():
            val = c
            beta = list(alpha)
            for i, (lo, hi) in enumerate(box):
                e = alpha[i]
                val *= (hi ** (e + 1) - lo ** (e + 1)) / (e + 1)
                beta[i] = 0
            key = tuple(beta)
            s = out.get(key, 0.0) + val
            if s == 0.0:
                out.pop(key, None)
            else:
                out[key] = s
        result = Polynomial(self.space, out)
        if result.is_zero():
            return 0.0
        if result.degree == 0:
            return result.coefficient((0,) * self.space.arity)
        return result

    def integrate_edge(self, axis: int, value: float,
                       box: Sequence[tuple[float, float]]) -> float:
        """Integrate exactly over the box facet {x_axis = value}.

        The polynomial must depend on x variables only, and ``value`` must be
        one of the two box bounds along ``axis``.
        """
        n = getattr(self.space, "n", None)
        if n is None or not 0 <= axis < n:
            raise StructuralError(f"axis {axis} is not a box axis")
        lo, hi = box[axis]
        if value != lo and value != hi:
            raise StructuralError(
                f"x{axis + 1} = {value} is not a facet of the box (bounds {lo}, {hi})")
        xblock = set(range(n))
        extra = self.variables_used() - xblock
        if extra:
            names = ", ".join(self.space.var_name(k) for k in sorted(extra))
            raise StructuralError(f"edge integrand must be x-only, found {names}")
        pinned = self.compose({axis: Polynomial.constant(self.space, value)})
        total = 0.0
        for alpha, c in pinned._terms.items():
            val = c
            for i in range(n):
                if i == axis:
                    continue
                e = alpha[i]
                l2, h2 = box[i]
                val *= (h2 ** (e + 1) - l2 ** (e + 1)) / (e + 1)
            total += val
        return total

    # ----- serialization ----------------------------------------------------
    def to_json_obj(self) -> list[dict]:
        return [{"exponents": list(alpha), "coeff": c} for alpha, c in self.terms()]

    @classmethod
    def from_json_obj(cls, space, obj: Iterable[Mapping]) -> "Polynomial":
        terms: dict[Exponents, float] = {}
        for item in obj:
            alpha = tuple(int(e) for e in item["exponents"])
            terms[alpha] = terms.get(alpha, 0.0) + float(item["coeff"])
        return cls(space, terms)

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json(cls, space, text: str) -> "Polynomial":
        return cls.from_json_obj(space, json.loads(text))
