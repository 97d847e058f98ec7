"""Exact coefficient arithmetic.

``Scalar`` is a Gaussian rational, an element of sympy's ``QQ_I``. ``Coeff``
is a truncated formal series in the coupling ``lambda`` (power series up to
``lambda_max``) and ``hbar`` (Laurent window ``[k_min, k_max]``) with
``Scalar`` entries.

Every stored term satisfies ``k >= -m``, so ``lambda^m hbar^k`` is stored as
the monomial ``mu^m hbar^(k + m)`` of the polynomial ring ``QQ_I[mu, hbar]``
with ``mu = lambda / hbar``. Both exponents are nonnegative and products
truncate in ``mu`` with :func:`sympy.polys.ring_series.rs_mul`.

Terms with ``m > lambda_max`` or ``k > k_max`` are discarded and counted in
``Coeff.lost``. The weight ``k + m`` is the ``hbar`` exponent of the stored
monomial, so a discarded term can only feed products of weight above
``k_max``. Terms of weight ``<= k_max - s`` are therefore exact after ``s``
divisions by ``hbar``; :meth:`Coeff.reliable` selects that region.
"""

from __future__ import annotations

import logging
from collections import Counter
from collections.abc import Mapping
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Union

from sympy.polys.domains import QQ, QQ_I
from sympy.polys.ring_series import rs_mul
from sympy.polys.rings import PolyElement, ring

from bv_veritas.errors import LaurentOverflow, NotInvertible, WindowMismatch

logger = logging.getLogger(__name__)

Rational = Union[int, Fraction]

SERIES_RING, MU, HBAR = ring("mu,hbar", QQ_I)


def _qq(value: Any) -> Any:
    f = Fraction(value)
    return QQ(f.numerator, f.denominator)


def _fraction(q: Any) -> Fraction:
    return Fraction(int(q.numerator), int(q.denominator))


class Scalar:
    """Gaussian rational ``re + i*im`` backed by a ``QQ_I`` element."""

    __slots__ = ("value",)

    def __init__(self, re: Rational = 0, im: Rational = 0) -> None:
        self.value = QQ_I(_qq(re), _qq(im))

    @classmethod
    def wrap(cls, value: Any) -> Scalar:
        """Scalar around an existing ``QQ_I`` element."""
        obj = cls.__new__(cls)
        obj.value = value
        return obj

    @classmethod
    def coerce(cls, value: Scalar | Rational) -> Scalar:
        if isinstance(value, Scalar):
            return value
        return cls(value)

    @property
    def re(self) -> Fraction:
        return _fraction(self.value.x)

    @property
    def im(self) -> Fraction:
        return _fraction(self.value.y)

    def __bool__(self) -> bool:
        return bool(self.value)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (int, Fraction)):
            return not self.value.y and self.re == other
        if not isinstance(other, Scalar):
            return NotImplemented
        return self.value == other.value

    def __hash__(self) -> int:
        return hash((self.re, self.im))

    def __add__(self, other: Scalar | Rational) -> Scalar:
        return Scalar.wrap(self.value + Scalar.coerce(other).value)

    __radd__ = __add__

    def __sub__(self, other: Scalar | Rational) -> Scalar:
        return Scalar.wrap(self.value - Scalar.coerce(other).value)

    def __rsub__(self, other: Scalar | Rational) -> Scalar:
        return Scalar.coerce(other) - self

    def __neg__(self) -> Scalar:
        return Scalar.wrap(-self.value)

    def __mul__(self, other: Scalar | Rational) -> Scalar:
        return Scalar.wrap(self.value * Scalar.coerce(other).value)

    __rmul__ = __mul__

    def __truediv__(self, other: Scalar | Rational) -> Scalar:
        o = Scalar.coerce(other)
        if not o:
            raise ZeroDivisionError("division by zero Scalar")
        return Scalar.wrap(self.value / o.value)

    def __rtruediv__(self, other: Scalar | Rational) -> Scalar:
        return Scalar.coerce(other) / self

    def __pow__(self, exponent: int) -> Scalar:
        if exponent < 0 and not self:
            raise ZeroDivisionError("division by zero Scalar")
        if exponent == 0:
            return ONE
        return Scalar.wrap(self.value**exponent)

    def conjugate(self) -> Scalar:
        return Scalar.wrap(QQ_I.new(self.value.x, -self.value.y))

    def abs_max(self) -> Fraction:
        """Max of ``|re|`` and ``|im|``; the defect norm of one entry."""
        return max(abs(self.re), abs(self.im))

    def __repr__(self) -> str:
        return f"Scalar({self})"

    def __str__(self) -> str:
        re, im = self.re, self.im
        if not im:
            return str(re)
        if not re:
            return f"{im}i"
        sign = "+" if im > 0 else "-"
        return f"{re}{sign}{abs(im)}i"

    @classmethod
    def parse(cls, text: str) -> Scalar:
        """Inverse of ``str``: ``'3/2'``, ``'-1/2i'``, ``'1-2i'``."""
        text = text.strip()
        if not text.endswith("i"):
            return cls(Fraction(text))
        body = text[:-1]
        for pos in range(len(body) - 1, 0, -1):
            if body[pos] in "+-" and body[pos - 1] not in "/":
                return cls(Fraction(body[:pos]), Fraction(body[pos:]))
        return cls(0, Fraction(body or "1"))


ZERO = Scalar(0)
ONE = Scalar(1)
I = Scalar(0, 1)
HALF = Scalar(Fraction(1, 2))


@dataclass(frozen=True)
class Window:
    """Truncation parameters shared by all coefficients of a computation.

    Attributes:
        lambda_max: Highest kept power of the coupling
        k_min: Lowest admissible power of hbar
        k_max: Highest kept power of hbar
    """

    lambda_max: int = 2
    k_min: int = -2
    k_max: int = 2

    def __post_init__(self) -> None:
        if self.lambda_max < 0 or self.k_min > 0 or self.k_max < 0:
            raise WindowMismatch(
                "window must contain lambda^0 hbar^0",
                lambda_max=self.lambda_max,
                k_min=self.k_min,
                k_max=self.k_max,
            )

    @classmethod
    def symmetric(cls, lambda_max: int) -> Window:
        """Default window ``k_min = -lambda_max``, ``k_max = lambda_max``."""
        return cls(lambda_max, -lambda_max, lambda_max)

    def contains(self, m: int, k: int) -> bool:
        return 0 <= m <= self.lambda_max and self.k_min <= k <= self.k_max


Key = tuple[int, int]


def _admissible(m: int, k: int, window: Window, what: str) -> None:
    if k < window.k_min or k < -m:
        raise LaurentOverflow(f"{what} needs hbar^{k} at lambda^{m}", m=m, k=k)


def _overflow_pairs(p1: PolyElement, p2: PolyElement, lambda_max: int) -> int:
    """Number of term pairs whose lambda powers add up past ``lambda_max``."""
    left = Counter(monom[0] for monom in p1.itermonoms())
    right = Counter(monom[0] for monom in p2.itermonoms())
    return sum(
        n1 * n2 for m1, n1 in left.items() for m2, n2 in right.items() if m1 + m2 > lambda_max
    )


class Coeff:
    """Truncated bivariate series ``sum c[m,k] lambda^m hbar^k``.

    Instances are treated as immutable values. Construct through the class
    methods or arithmetic.

    Attributes:
        poly: Element of ``QQ_I[mu, hbar]`` holding ``c[m,k] mu^m hbar^(k+m)``
        window: Truncation window
        lost: Number of contributions discarded by truncation
    """

    __slots__ = ("poly", "window", "lost", "_terms")

    def __init__(self, terms: Mapping[Key, Scalar], window: Window, lost: int = 0) -> None:
        data: dict[Key, Any] = {}
        for (m, k), value in terms.items():
            _admissible(m, k, window, "term")
            data[(m, k + m)] = value.value
        self.poly = SERIES_RING.from_dict(data)
        self.window = window
        self.lost = lost
        self._terms: dict[Key, Scalar] | None = None

    @classmethod
    def from_poly(cls, poly: PolyElement, window: Window, lost: int = 0) -> Coeff:
        """Wrap an element of :data:`SERIES_RING`."""
        obj = cls.__new__(cls)
        obj.poly = poly
        obj.window = window
        obj.lost = lost
        obj._terms = None
        return obj

    @property
    def terms(self) -> dict[Key, Scalar]:
        """``{(m, k): c[m,k]}`` of the nonzero coefficients."""
        if self._terms is None:
            self._terms = {
                (m, j - m): Scalar.wrap(value) for (m, j), value in self.poly.items()
            }
        return self._terms

    # construction

    @classmethod
    def zero(cls, window: Window) -> Coeff:
        return cls.from_poly(SERIES_RING.zero, window)

    @classmethod
    def constant(cls, value: Scalar | Rational, window: Window) -> Coeff:
        s = Scalar.coerce(value)
        return cls({(0, 0): s} if s else {}, window)

    @classmethod
    def one(cls, window: Window) -> Coeff:
        return cls.constant(ONE, window)

    @classmethod
    def monomial(cls, m: int, k: int, value: Scalar | Rational, window: Window) -> Coeff:
        """``value * lambda^m * hbar^k``.

        Raises:
            LaurentOverflow: If ``k < k_min`` or ``k < -m``
        """
        _admissible(m, k, window, "monomial")
        s = Scalar.coerce(value)
        if m > window.lambda_max or k > window.k_max:
            return cls({}, window, lost=1 if s else 0)
        return cls({(m, k): s} if s else {}, window)

    # inspection

    def __bool__(self) -> bool:
        return bool(self.poly)

    def is_zero(self) -> bool:
        return not self.poly

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Coeff):
            return self.window == other.window and dict(self.poly) == dict(other.poly)
        if isinstance(other, (int, Fraction, Scalar)):
            return self == Coeff.constant(other, self.window)
        return NotImplemented

    def __hash__(self) -> int:
        return hash((self.window, frozenset(self.poly.items())))

    def lambda_order(self) -> int:
        """Lowest lambda power present; ``lambda_max + 1`` for zero."""
        if not self.poly:
            return self.window.lambda_max + 1
        return min(monom[0] for monom in self.poly.itermonoms())

    def project(self, m: int, k: int) -> Scalar:
        """Coefficient of ``lambda^m hbar^k``.

        Raises:
            WindowMismatch: If ``(m, k)`` lies outside the window
        """
        if not self.window.contains(m, k):
            raise WindowMismatch(f"(m={m}, k={k}) outside window", window=self.window)
        return self.terms.get((m, k), ZERO)

    def scalar_part(self) -> Scalar:
        return self.terms.get((0, 0), ZERO)

    def abs_max(self) -> Fraction:
        return max((s.abs_max() for s in self.terms.values()), default=Fraction(0))

    # arithmetic

    def _check(self, other: Coeff) -> None:
        if self.window != other.window:
            raise WindowMismatch(
                "coefficients carry different windows", left=self.window, right=other.window
            )

    def _filtered(self, keep: Any, lost: int = 0) -> Coeff:
        data = {monom: v for monom, v in self.poly.items() if keep(monom[0], monom[1] - monom[0])}
        return Coeff.from_poly(SERIES_RING.from_dict(data), self.window, lost)

    def __add__(self, other: Coeff) -> Coeff:
        self._check(other)
        return Coeff.from_poly(self.poly + other.poly, self.window, self.lost + other.lost)

    def __neg__(self) -> Coeff:
        return Coeff.from_poly(-self.poly, self.window, self.lost)

    def __sub__(self, other: Coeff) -> Coeff:
        self._check(other)
        return Coeff.from_poly(self.poly - other.poly, self.window, self.lost + other.lost)

    def scale(self, factor: Scalar | Rational) -> Coeff:
        s = Scalar.coerce(factor)
        return Coeff.from_poly(self.poly.mul_ground(s.value), self.window, self.lost)

    def __mul__(self, other: Coeff | Scalar | Rational) -> Coeff:
        if not isinstance(other, Coeff):
            return self.scale(other)
        self._check(other)
        w = self.window
        lost = self.lost + other.lost + _overflow_pairs(self.poly, other.poly, w.lambda_max)
        product = rs_mul(self.poly, other.poly, MU, w.lambda_max + 1)
        kept: dict[Key, Any] = {}
        for (m, j), value in product.items():
            k = j - m
            if k > w.k_max:
                lost += 1
                continue
            _admissible(m, k, w, "product")
            kept[(m, j)] = value
        return Coeff.from_poly(SERIES_RING.from_dict(kept), w, lost)

    __rmul__ = __mul__

    def shift(self, dm: int = 0, dk: int = 0) -> Coeff:
        """Multiply by ``lambda^dm hbar^dk``; ``dk`` may be negative.

        Raises:
            LaurentOverflow: If a term would drop below ``k_min`` or below ``-m``
        """
        w = self.window
        data: dict[Key, Any] = {}
        lost = self.lost
        for (m, k), value in self.terms.items():
            nm, nk = m + dm, k + dk
            _admissible(nm, nk, w, "shift")
            if nm > w.lambda_max or nk > w.k_max:
                lost += 1
                continue
            data[(nm, nk + nm)] = value.value
        return Coeff.from_poly(SERIES_RING.from_dict(data), w, lost)

    def lambda_part(self, m: int) -> Coeff:
        return self._filtered(lambda mm, _k: mm == m)

    def up_to_lambda(self, m: int) -> Coeff:
        return self._filtered(lambda mm, _k: mm <= m)

    def reliable(self, slack: int = 0) -> Coeff:
        """Keep the terms with ``k + m <= k_max - slack``."""
        bound = self.window.k_max - slack
        return self._filtered(lambda mm, k: mm + k <= bound)

    def conjugate(self) -> Coeff:
        data = {monom: QQ_I.new(v.x, -v.y) for monom, v in self.poly.items()}
        return Coeff.from_poly(SERIES_RING.from_dict(data), self.window, self.lost)

    def invert(self) -> Coeff:
        """Multiplicative inverse by geometric series in the non-unit part.

        Raises:
            NotInvertible: If the lambda^0 part is not a nonzero constant
        """
        unit = self.scalar_part()
        rest = self._filtered(lambda m, k: (m, k) != (0, 0))
        if not unit or rest.lambda_order() == 0:
            raise NotInvertible("lambda^0 part must be a nonzero multiple of hbar^0")
        w = self.window
        inv_unit = ONE / unit
        # a = u (1 + x) with x of lambda order >= 1, so the series stops at lambda_max
        x = rest.scale(inv_unit)
        result = Coeff.one(w)
        power = Coeff.one(w)
        for n in range(1, w.lambda_max + 1):
            power = power * x
            result = result + (power if n % 2 == 0 else -power)
        return result.scale(inv_unit)

    def __repr__(self) -> str:
        return f"Coeff({self})"

    def __str__(self) -> str:
        return format_coeff(self)


def format_coeff(c: Coeff) -> str:
    """Deterministic text form, e.g. ``(1/2)[0,0] + (-i)[1,-1]``."""
    terms = c.terms
    if not terms:
        return "0"
    parts = [f"({terms[key]})[{key[0]},{key[1]}]" for key in sorted(terms)]
    return " + ".join(parts)


def parse_coeff(text: str, window: Window) -> Coeff:
    """Inverse of :func:`format_coeff`."""
    text = text.strip()
    if text == "0":
        return Coeff.zero(window)
    result = Coeff.zero(window)
    for part in text.split(" + "):
        value, _, rest = part.partition(")[")
        m_str, k_str = rest.rstrip("]").split(",")
        result = result + Coeff.monomial(int(m_str), int(k_str), Scalar.parse(value[1:]), window)
    return result
