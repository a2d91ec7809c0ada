"""Exact arithmetic in the Novikov ring and field.

A scalar is a finite sum ``sum c_i T^(l_i)`` with rational coefficients and
rational exponents.  A scalar may carry a *precision* ``r``: it is then only
known modulo ``T^r`` and every stored exponent is below ``r``.

>>> x = parse("1 - T^(1)")
>>> str(x * parse("1 + T^(1) + T^(2)"))
'1 - T^(3)'
>>> str(invert(x, 3))
'1 + T^(1) + T^(2) (mod T^(3))'
"""

from __future__ import annotations

import math
import re
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Union

from gmpy2 import mpq

INF = math.inf

Rational = Union[int, Fraction, mpq]


def to_fraction(value) -> mpq:
    """Coerce ints, Fractions and ``p/q`` strings to an exact rational.

    Rationals are stored as ``gmpy2.mpq``; they compare and hash like Fractions.
    """
    if type(value) is mpq:
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, (int, Fraction)):
        return mpq(value)
    if isinstance(value, str):
        return mpq(Fraction(value.strip()))
    if isinstance(value, float):
        raise TypeError("floats are not accepted; pass an exact rational")
    raise TypeError(f"cannot interpret {value!r} as a rational")


class TruncationLevel:
    """A positive rational ``r`` naming the quotient ring modulo ``T^r``."""

    __slots__ = ("r",)

    def __init__(self, r):
        if isinstance(r, TruncationLevel):
            r = r.r
        r = to_fraction(r)
        if r <= 0:
            raise ValueError("truncation level must be positive")
        self.r = r

    def __eq__(self, other):
        return isinstance(other, TruncationLevel) and other.r == self.r

    def __hash__(self):
        return hash(("TruncationLevel", self.r))

    def __repr__(self):
        return f"TruncationLevel({self.r})"


def _level(r) -> Fraction:
    if isinstance(r, TruncationLevel):
        return r.r
    return TruncationLevel(r).r


class NovikovScalar:
    """Immutable finite Novikov sum, optionally known only modulo ``T^precision``."""

    __slots__ = ("terms", "precision", "_hash")

    def __init__(self, terms: Union[Mapping, Iterable] = (), precision=None):
        if isinstance(terms, Mapping):
            items = terms.items()
            merged = {}
            for e, c in items:
                e = to_fraction(e)
                merged[e] = merged.get(e, 0) + to_fraction(c)
        else:
            merged = {}
            for c, e in terms:
                e = to_fraction(e)
                merged[e] = merged.get(e, 0) + to_fraction(c)
        if precision is not None:
            precision = to_fraction(precision)
        self._set(merged, precision)

    def _set(self, merged: dict, precision):
        if precision is None:
            kept = sorted((e, c) for e, c in merged.items() if c)
        else:
            kept = sorted((e, c) for e, c in merged.items() if c and e < precision)
        self.terms = tuple((c, e) for e, c in kept)
        self.precision = precision
        self._hash = None

    @classmethod
    def _raw(cls, merged: dict, precision) -> "NovikovScalar":
        obj = cls.__new__(cls)
        obj._set(merged, precision)
        return obj

    @classmethod
    def monomial(cls, coefficient=1, exponent=0) -> "NovikovScalar":
        c = to_fraction(coefficient)
        e = to_fraction(exponent)
        obj = cls.__new__(cls)
        obj.terms = ((c, e),) if c else ()
        obj.precision = None
        obj._hash = None
        return obj

    @classmethod
    def coerce(cls, value) -> "NovikovScalar":
        if isinstance(value, NovikovScalar):
            return value
        if isinstance(value, str):
            return parse(value)
        return cls.monomial(to_fraction(value), 0)

    # -- inspection -------------------------------------------------------
    def is_zero(self) -> bool:
        """True when no terms are stored (an exact zero or zero modulo T^precision)."""
        return not self.terms

    def is_exact(self) -> bool:
        return self.precision is None

    def is_monomial(self) -> bool:
        return len(self.terms) == 1

    def val(self):
        return self.terms[0][1] if self.terms else INF

    def lead(self):
        """Leading (coefficient, exponent) pair."""
        return self.terms[0]

    def as_dict(self) -> dict:
        return {e: c for c, e in self.terms}

    # -- ring operations --------------------------------------------------
    def __add__(self, other):
        other = _coerce_operand(other)
        if other is NotImplemented:
            return other
        if self.precision is None and other.precision is None:
            if not other.terms:
                return self
            if not self.terms:
                return other
        merged = {e: c for c, e in self.terms}
        for c, e in other.terms:
            merged[e] = merged.get(e, 0) + c
        return NovikovScalar._raw(merged, _min_prec(self.precision, other.precision))

    __radd__ = __add__

    def __neg__(self):
        obj = NovikovScalar.__new__(NovikovScalar)
        obj.terms = tuple((-c, e) for c, e in self.terms)
        obj.precision = self.precision
        obj._hash = None
        return obj

    def __sub__(self, other):
        other = _coerce_operand(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = _coerce_operand(other)
        if other is NotImplemented:
            return other
        return other + (-self)

    def __mul__(self, other):
        other = _coerce_operand(other)
        if other is NotImplemented:
            return other
        if self.precision is None and other.precision is None and len(self.terms) == 1 == len(other.terms):
            (c1, e1), (c2, e2) = self.terms[0], other.terms[0]
            obj = NovikovScalar.__new__(NovikovScalar)
            obj.terms = ((c1 * c2, e1 + e2),)
            obj.precision = None
            obj._hash = None
            return obj
        prec = _mul_precision(self, other)
        merged = {}
        for c1, e1 in self.terms:
            for c2, e2 in other.terms:
                e = e1 + e2
                merged[e] = merged.get(e, 0) + c1 * c2
        return NovikovScalar._raw(merged, prec)

    __rmul__ = __mul__

    def shift(self, exponent) -> "NovikovScalar":
        """Multiply by ``T^exponent`` (exact, any sign)."""
        a = to_fraction(exponent)
        obj = NovikovScalar.__new__(NovikovScalar)
        obj.terms = tuple((c, e + a) for c, e in self.terms)
        obj.precision = None if self.precision is None else self.precision + a
        obj._hash = None
        return obj

    def scale(self, factor) -> "NovikovScalar":
        """Rescale every exponent by a positive rational (conformal rescaling)."""
        f = to_fraction(factor)
        if f <= 0:
            raise ValueError("scale factor must be positive")
        obj = NovikovScalar.__new__(NovikovScalar)
        obj.terms = tuple((c, e * f) for c, e in self.terms)
        obj.precision = None if self.precision is None else self.precision * f
        obj._hash = None
        return obj

    # -- comparison -------------------------------------------------------
    def __eq__(self, other):
        if not isinstance(other, NovikovScalar):
            try:
                other = NovikovScalar.coerce(other)
            except (TypeError, ValueError):
                return NotImplemented
        return self.terms == other.terms and self.precision == other.precision

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.terms, self.precision))
        return self._hash

    def __bool__(self):
        return bool(self.terms)

    def __repr__(self):
        return f"NovikovScalar({format_scalar(self)!r})"

    def __str__(self):
        return format_scalar(self)


def _coerce_operand(other):
    if isinstance(other, NovikovScalar):
        return other
    if isinstance(other, (int, Fraction, mpq)) and not isinstance(other, bool):
        return NovikovScalar.monomial(other, 0)
    return NotImplemented


def _min_prec(p, q):
    if p is None:
        return q
    if q is None:
        return p
    return p if p < q else q


def _val_lower_bound(x: NovikovScalar):
    # a zero known modulo T^p has valuation at least p
    if x.terms:
        return x.terms[0][1]
    return x.precision


def _mul_precision(x: NovikovScalar, y: NovikovScalar):
    cands = []
    if x.precision is not None:
        vy = _val_lower_bound(y)
        if vy is not None:
            cands.append(x.precision + vy)
    if y.precision is not None:
        vx = _val_lower_bound(x)
        if vx is not None:
            cands.append(y.precision + vx)
    if not cands:
        if x.precision is None and y.precision is None:
            return None
        # exact zero times anything is exactly zero
        return None
    return min(cands)


ZERO = NovikovScalar.monomial(0)
ONE = NovikovScalar.monomial(1)


def T(exponent=1) -> NovikovScalar:
    return NovikovScalar.monomial(1, exponent)


def val(x: NovikovScalar):
    """Smallest exponent with a nonzero coefficient; ``math.inf`` for zero."""
    return x.val()


def add(x, y) -> NovikovScalar:
    return NovikovScalar.coerce(x) + NovikovScalar.coerce(y)


def mul(x, y) -> NovikovScalar:
    return NovikovScalar.coerce(x) * NovikovScalar.coerce(y)


def neg(x) -> NovikovScalar:
    return -NovikovScalar.coerce(x)


def truncate(x: NovikovScalar, r) -> NovikovScalar:
    """Image in the quotient modulo ``T^r``."""
    r = _level(r)
    return NovikovScalar._raw(x.as_dict(), _min_prec(x.precision, r))


def invert(x: NovikovScalar, r) -> NovikovScalar:
    """Inverse of ``x`` good enough that ``x * invert(x, r)`` is 1 modulo ``T^r``.

    Exact monomials invert exactly.  Otherwise write ``x = c T^a (1 + z)`` and
    sum the geometric series in ``-z``; the result has precision ``r - a``
    (further limited by ``p - 2a`` when ``x`` itself is only known mod ``T^p``).
    """
    r = _level(r)
    if x.is_zero():
        raise ZeroDivisionError("cannot invert zero")
    c, a = x.terms[0]
    if x.precision is None and len(x.terms) == 1:
        return NovikovScalar.monomial(1 / c, -a)
    prec = r - a
    if x.precision is not None:
        prec = min(prec, x.precision - 2 * a)
    # unit part z, so that x = c T^a (1 + z) and val(z) > 0
    z = NovikovScalar._raw({e - a: cc / c for cc, e in x.terms[1:]}, None)
    # target precision for the series in the normalized variable
    target = prec + a
    total = {mpq(0): mpq(1)}
    if not z.is_zero():
        vz = z.val()
        power = NovikovScalar._raw({mpq(0): mpq(1)}, None)
        m = 0
        while True:
            m += 1
            power = NovikovScalar._raw(
                {e: cc for cc, e in (power * z).terms if e < target}, None
            )
            if power.is_zero() or m * vz >= target:
                break
            sign = -1 if m % 2 else 1
            for cc, e in power.terms:
                total[e] = total.get(e, 0) + sign * cc
    inv_c = 1 / c
    return NovikovScalar._raw({e - a: cc * inv_c for e, cc in total.items()}, prec)


# -- text format ------------------------------------------------------------

def _fmt_rat(q: Fraction) -> str:
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def _fmt_term(c: Fraction, e: Fraction) -> str:
    if e == 0:
        return _fmt_rat(c)
    power = f"T^({_fmt_rat(e)})"
    if c == 1:
        return power
    return f"{_fmt_rat(c)}*{power}"


def format_scalar(x: NovikovScalar) -> str:
    """Canonical text form, e.g. ``2*T^(1/2) - T^(2) (mod T^(3))``."""
    parts = []
    for i, (c, e) in enumerate(x.terms):
        if i == 0:
            if c < 0:
                parts.append("-" + _fmt_term(-c, e))
            else:
                parts.append(_fmt_term(c, e))
        elif c < 0:
            parts.append(" - " + _fmt_term(-c, e))
        else:
            parts.append(" + " + _fmt_term(c, e))
    body = "".join(parts) if parts else "0"
    if x.precision is not None:
        body += f" (mod T^({_fmt_rat(x.precision)}))"
    return body


_RAT = r"\d+(?:/\d+)?"
_EXP = rf"(?:\(\s*-?\s*{_RAT}\s*\)|-?{_RAT})"
_TERM_RE = re.compile(
    rf"""\s*(?P<sign>[+-])?\s*
        (?:
            (?P<coef>{_RAT})\s*(?:\*\s*)?T(?:\s*\^\s*(?P<exp1>{_EXP}))?
          | T(?:\s*\^\s*(?P<exp2>{_EXP}))?
          | (?P<const>{_RAT})
        )\s*""",
    re.VERBOSE,
)
_MOD_RE = re.compile(rf"\(\s*mod\s+T\s*\^\s*(?P<prec>{_EXP})\s*\)\s*$")


def _parse_exp(text: Optional[str]) -> Fraction:
    if text is None:
        return mpq(1)
    text = text.strip()
    if text.startswith("("):
        text = text[1:-1]
    return to_fraction(text.replace(" ", ""))


def parse(text: str) -> NovikovScalar:
    """Parse the canonical text form (and a few lenient variants such as ``2T^1``)."""
    if not isinstance(text, str):
        raise TypeError("expected a string")
    s = text.strip()
    precision = None
    m = _MOD_RE.search(s)
    if m:
        precision = _parse_exp(m.group("prec"))
        s = s[: m.start()].rstrip()
    if s == "0" or s == "":
        if s == "" and precision is None:
            raise ValueError("empty scalar text")
        return NovikovScalar((), precision)
    pos = 0
    terms = []
    first = True
    while pos < len(s):
        m = _TERM_RE.match(s, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot parse Novikov scalar {text!r} at offset {pos}")
        sign = m.group("sign")
        if sign is None and not first:
            raise ValueError(f"missing operator in {text!r} at offset {pos}")
        first = False
        if m.group("const") is not None:
            c, e = to_fraction(m.group("const")), mpq(0)
        elif m.group("coef") is not None:
            c, e = to_fraction(m.group("coef")), _parse_exp(m.group("exp1"))
        else:
            c, e = mpq(1), _parse_exp(m.group("exp2"))
        if sign == "-":
            c = -c
        terms.append((c, e))
        pos = m.end()
    return NovikovScalar(terms, precision)
