"""Exact dyadic rationals, certified complex balls and real intervals.

Everything certified in the package reduces to the containment guarantees
of the types here.  Two layers exist:

* ``Dyadic``, ``Ball``, ``Interval``: readable value types, rounded once per
  operation at ``Precision.working_bits`` mantissa bits.
* the ``fx_*`` kernels: the same outward-rounded ball iteration carried out
  on plain integers at a fixed binary scale ``2**-s``.  They exist for speed
  and are cross-checked against the value types in the test suite.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

OVERFLOW_EXPONENT = 64


class Dyadic:
    """The number ``mantissa * 2**exponent`` in canonical form.

    The mantissa is odd, or zero with exponent zero.  Instances are
    immutable and hashable; they compare equal to ints, Fractions and floats
    of the same value.
    """

    __slots__ = ("mantissa", "exponent")

    def __init__(self, mantissa: int = 0, exponent: int = 0):
        mantissa = int(mantissa)
        exponent = int(exponent)
        if mantissa == 0:
            exponent = 0
        else:
            tz = (mantissa & -mantissa).bit_length() - 1
            if tz:
                mantissa >>= tz
                exponent += tz
        object.__setattr__(self, "mantissa", mantissa)
        object.__setattr__(self, "exponent", exponent)

    def __setattr__(self, name, value):
        raise AttributeError("Dyadic is immutable")

    def __reduce__(self):
        return (Dyadic, (self.mantissa, self.exponent))

    def __copy__(self):
        return self

    def __deepcopy__(self, memo):
        return self

    # construction -----------------------------------------------------
    @classmethod
    def of(cls, value) -> "Dyadic":
        """Coerce an int, Fraction, float, Dyadic or string exactly."""
        if isinstance(value, Dyadic):
            return value
        if isinstance(value, bool):
            return cls(int(value))
        if isinstance(value, int):
            return cls(value)
        if isinstance(value, float):
            return cls.from_float(value)
        if isinstance(value, Fraction):
            return cls.from_fraction(value)
        if isinstance(value, str):
            return cls.parse(value)
        raise TypeError(f"cannot make a Dyadic from {type(value).__name__}")

    @classmethod
    def from_float(cls, x: float) -> "Dyadic":
        if not math.isfinite(x):
            raise ValueError("non-finite float")
        m, e = math.frexp(x)
        return cls(int(m * (1 << 53)), e - 53)

    @classmethod
    def from_fraction(cls, q: Fraction) -> "Dyadic":
        q = Fraction(q)
        den = q.denominator
        if den & (den - 1):
            raise ValueError(f"{q} is not a dyadic rational")
        return cls(q.numerator, -(den.bit_length() - 1))

    @classmethod
    def parse(cls, text: str) -> "Dyadic":
        """Parse ``m*2^e``, a hex form ``[-]0xHHHp[+-]E`` or an exact decimal."""
        s = text.strip().replace(" ", "")
        mt = _MUL_FORM.fullmatch(s)
        if mt:
            return cls(int(mt.group(1)), int(mt.group(2)))
        mt = _HEX_FORM.fullmatch(s)
        if mt:
            sign = -1 if mt.group(1) == "-" else 1
            whole, frac = mt.group(2), mt.group(3) or ""
            digits = int(whole + frac, 16) if (whole + frac) else 0
            return cls(sign * digits, int(mt.group(4)) - 4 * len(frac))
        try:
            return cls.from_fraction(Fraction(s))
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"not a dyadic literal: {text!r}") from exc

    # conversion -------------------------------------------------------
    def to_fraction(self) -> Fraction:
        if self.exponent >= 0:
            return Fraction(self.mantissa << self.exponent)
        return Fraction(self.mantissa, 1 << -self.exponent)

    def __float__(self) -> float:
        if self.exponent >= 0:
            return float(self.mantissa << self.exponent) if self.exponent < 1100 else math.copysign(math.inf, self.mantissa)
        return math.ldexp(self.mantissa, self.exponent) if self.mantissa.bit_length() < 1000 else float(self.to_fraction())

    def __str__(self) -> str:
        return f"{self.mantissa}*2^{self.exponent}"

    def __repr__(self) -> str:
        return f"Dyadic({self.mantissa}, {self.exponent})"

    def to_hex(self) -> str:
        sign = "-" if self.mantissa < 0 else ""
        return f"{sign}0x{abs(self.mantissa):x}p{self.exponent:+d}"

    def scaled(self, s: int) -> int:
        """``self * 2**s`` which must be an integer."""
        e = self.exponent + s
        if e >= 0:
            return self.mantissa << e
        if self.mantissa & ((1 << -e) - 1):
            raise ValueError(f"{self} is not in D_{s}")
        return self.mantissa >> -e

    def floor_scaled(self, s: int) -> int:
        e = self.exponent + s
        return self.mantissa << e if e >= 0 else self.mantissa >> -e

    def ceil_scaled(self, s: int) -> int:
        e = self.exponent + s
        return self.mantissa << e if e >= 0 else -((-self.mantissa) >> -e)

    def in_dn(self, n: int) -> bool:
        return self.mantissa == 0 or self.exponent >= -n

    def denominator_bits(self) -> int:
        """Smallest n >= 0 with self in D_n."""
        return max(0, -self.exponent)

    # arithmetic -------------------------------------------------------
    def __neg__(self):
        return Dyadic(-self.mantissa, self.exponent)

    def __abs__(self):
        return self if self.mantissa >= 0 else Dyadic(-self.mantissa, self.exponent)

    def __add__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        if self.mantissa == 0:
            return other
        if other.mantissa == 0:
            return self
        e = min(self.exponent, other.exponent)
        return Dyadic((self.mantissa << (self.exponent - e)) + (other.mantissa << (other.exponent - e)), e)

    __radd__ = __add__

    def __sub__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return other + (-self)

    def __mul__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return Dyadic(self.mantissa * other.mantissa, self.exponent + other.exponent)

    __rmul__ = __mul__

    def shift(self, k: int) -> "Dyadic":
        """Multiply by ``2**k``."""
        return Dyadic(self.mantissa, self.exponent + k) if self.mantissa else self

    def sign(self) -> int:
        return (self.mantissa > 0) - (self.mantissa < 0)

    def _cmp(self, other) -> int:
        d = self - other
        return d.sign()

    def __eq__(self, other):
        if isinstance(other, Dyadic):
            return self.mantissa == other.mantissa and self.exponent == other.exponent
        if isinstance(other, (int, Fraction, float)):
            try:
                return self.to_fraction() == Fraction(other)
            except (OverflowError, ValueError):
                return False
        return NotImplemented

    def __hash__(self):
        if self.exponent >= 0 or self.exponent < -4096:
            return hash((self.mantissa, self.exponent)) if abs(self.exponent) > 4096 else hash(self.mantissa << self.exponent)
        return hash(self.to_fraction())

    def __lt__(self, other):
        other = _coerce(other)
        return NotImplemented if other is NotImplemented else self._cmp(other) < 0

    def __le__(self, other):
        other = _coerce(other)
        return NotImplemented if other is NotImplemented else self._cmp(other) <= 0

    def __gt__(self, other):
        other = _coerce(other)
        return NotImplemented if other is NotImplemented else self._cmp(other) > 0

    def __ge__(self, other):
        other = _coerce(other)
        return NotImplemented if other is NotImplemented else self._cmp(other) >= 0

    def __bool__(self):
        return self.mantissa != 0

    # rounding ---------------------------------------------------------
    def round_dn(self, n: int, mode: str = "nearest") -> "Dyadic":
        """Round to the grid D_n.  ``nearest`` breaks ties toward +inf."""
        return Dyadic(_round_shift(self.mantissa, -n - self.exponent, mode), -n) if self.exponent < -n else self

    def round_bits(self, bits: int, mode: str = "nearest") -> "Dyadic":
        """Round to ``bits`` significant bits."""
        excess = abs(self.mantissa).bit_length() - bits
        if excess <= 0:
            return self
        return Dyadic(_round_shift(self.mantissa, excess, mode), self.exponent + excess)


def _round_shift(m: int, k: int, mode: str) -> int:
    """Divide the integer ``m`` by ``2**k`` (k > 0) with the given rounding."""
    if mode == "floor":
        return m >> k
    if mode == "ceil":
        return -((-m) >> k)
    if mode == "nearest":
        return (m + (1 << (k - 1))) >> k
    raise ValueError(f"unknown rounding mode {mode!r}")


_MUL_FORM = re.compile(r"([+-]?\d+)\*2\^\(?([+-]?\d+)\)?")
_HEX_FORM = re.compile(r"([+-]?)0[xX]([0-9a-fA-F]*)(?:\.([0-9a-fA-F]*))?[pP]([+-]?\d+)")


def _coerce(x):
    if isinstance(x, Dyadic):
        return x
    if isinstance(x, (int, Fraction, float)):
        try:
            return Dyadic.of(x)
        except ValueError:
            return NotImplemented
    return NotImplemented


ZERO = Dyadic(0)
ONE = Dyadic(1)


def dyadic_ops(a: Dyadic, b: Dyadic) -> dict:
    """All exact binary operations at once (handy for property tests)."""
    return {"add": a + b, "sub": a - b, "mul": a * b, "cmp": a._cmp(b), "abs_a": abs(a), "abs_b": abs(b)}


def sqrt_bounds(x: Dyadic, bits: int) -> tuple[Dyadic, Dyadic]:
    """Dyadic lo <= sqrt(x) <= hi with about ``bits`` bits after the binary point."""
    if x.mantissa < 0:
        raise ValueError("sqrt of a negative dyadic")
    if x.mantissa == 0:
        return ZERO, ZERO
    # sqrt(m 2^e) = sqrt(m 2^(e+2b)) 2^-b
    shift = x.exponent + 2 * bits
    if shift >= 0:
        v = x.mantissa << shift
        exact = True
    else:
        v = x.mantissa >> -shift
        exact = (x.mantissa & ((1 << -shift) - 1)) == 0
    r = math.isqrt(v)
    lo = Dyadic(r, -bits)
    hi = lo if (exact and r * r == v) else Dyadic(r + 1, -bits)
    return lo, hi


# ---------------------------------------------------------------------------
# complex points and balls


@dataclass(frozen=True)
class Precision:
    working_bits: int = 64

    def __post_init__(self):
        if int(self.working_bits) < 8:
            raise ValueError("working_bits must be at least 8")


class DyadicPoint:
    """A complex point with both coordinates in D_n."""

    __slots__ = ("re", "im", "precision")

    def __init__(self, re, im=0, precision: int | None = None):
        re = Dyadic.of(re)
        im = Dyadic.of(im)
        need = max(re.denominator_bits(), im.denominator_bits())
        if precision is None:
            precision = need
        if precision < need:
            raise ValueError(f"coordinates are not in D_{precision}")
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)
        object.__setattr__(self, "precision", int(precision))

    def __setattr__(self, name, value):
        raise AttributeError("DyadicPoint is immutable")

    def __reduce__(self):
        return (DyadicPoint, (self.re, self.im, self.precision))

    def __copy__(self):
        return self

    def __deepcopy__(self, memo):
        return self

    @classmethod
    def from_grid(cls, vx: int, vy: int, n: int) -> "DyadicPoint":
        return cls(Dyadic(vx, -n), Dyadic(vy, -n), n)

    def grid(self, n: int | None = None) -> tuple[int, int]:
        n = self.precision if n is None else n
        return self.re.scaled(n), self.im.scaled(n)

    def __eq__(self, other):
        return isinstance(other, DyadicPoint) and self.re == other.re and self.im == other.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __lt__(self, other):
        return (self.re, self.im) < (other.re, other.im)

    def __repr__(self):
        return f"DyadicPoint({self.re}, {self.im}, n={self.precision})"

    def __complex__(self):
        return complex(float(self.re), float(self.im))


def norm1(p: DyadicPoint) -> Dyadic:
    """The max norm max(|re|, |im|) used for pixel distances."""
    a, b = abs(p.re), abs(p.im)
    return a if a >= b else b


class Ball:
    """Closed complex disk with dyadic center and radius.

    ``Ball.whole()`` is the sentinel for a radius beyond ``2**64``: the ball
    then represents the whole plane and every test on it is Undecided.
    """

    __slots__ = ("re", "im", "radius")

    def __init__(self, re=0, im=0, radius=0):
        re = Dyadic.of(re)
        im = Dyadic.of(im)
        if radius is not None:
            radius = Dyadic.of(radius)
            if radius < 0:
                raise ValueError("negative radius")
            if radius.mantissa and radius.mantissa.bit_length() + radius.exponent > OVERFLOW_EXPONENT:
                radius = None
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)
        object.__setattr__(self, "radius", radius)

    def __setattr__(self, name, value):
        raise AttributeError("Ball is immutable")

    def __reduce__(self):
        return (Ball, (self.re, self.im, self.radius))

    def __copy__(self):
        return self

    def __deepcopy__(self, memo):
        return self

    @classmethod
    def whole(cls) -> "Ball":
        return cls(0, 0, None)

    @classmethod
    def point(cls, p) -> "Ball":
        if isinstance(p, DyadicPoint):
            return cls(p.re, p.im, 0)
        if isinstance(p, complex):
            return cls(Dyadic.from_float(p.real), Dyadic.from_float(p.imag), 0)
        return cls(p, 0, 0)

    @property
    def is_whole(self) -> bool:
        return self.radius is None

    def contains(self, re, im=0) -> bool:
        """Exact membership test for a dyadic point."""
        if self.is_whole:
            return True
        dx = Dyadic.of(re) - self.re
        dy = Dyadic.of(im) - self.im
        return dx * dx + dy * dy <= self.radius * self.radius

    def contains_fraction(self, re: Fraction, im: Fraction = Fraction(0)) -> bool:
        if self.is_whole:
            return True
        dx = Fraction(re) - self.re.to_fraction()
        dy = Fraction(im) - self.im.to_fraction()
        r = self.radius.to_fraction()
        return dx * dx + dy * dy <= r * r

    def abs_bounds(self, bits: int = 64) -> tuple[Dyadic, Dyadic]:
        """Dyadic bounds on min and max of |w| over the ball."""
        lo, hi = sqrt_bounds(self.re * self.re + self.im * self.im, bits)
        if self.is_whole:
            return ZERO, None
        low = lo - self.radius
        return (low if low > 0 else ZERO), hi + self.radius

    def __eq__(self, other):
        return isinstance(other, Ball) and (self.re, self.im, self.radius) == (other.re, other.im, other.radius)

    def __hash__(self):
        return hash((self.re, self.im, self.radius))

    def __repr__(self):
        r = "whole" if self.is_whole else str(self.radius)
        return f"Ball({self.re}, {self.im}, r={r})"


def _round_center(x: Dyadic, bits: int) -> tuple[Dyadic, Dyadic]:
    """Round to nearest at ``bits`` significant bits; also return |error|."""
    y = x.round_bits(bits, "nearest")
    return y, abs(x - y)


def ball_add(a: Ball, b: Ball, prec: Precision) -> Ball:
    if a.is_whole or b.is_whole:
        return Ball.whole()
    bits = prec.working_bits
    re, e1 = _round_center(a.re + b.re, bits)
    im, e2 = _round_center(a.im + b.im, bits)
    return Ball(re, im, (a.radius + b.radius + e1 + e2).round_bits(bits, "ceil"))


def ball_mul(a: Ball, b: Ball, prec: Precision) -> Ball:
    if a.is_whole or b.is_whole:
        return Ball.whole()
    bits = prec.working_bits
    re, e1 = _round_center(a.re * b.re - a.im * b.im, bits)
    im, e2 = _round_center(a.re * b.im + a.im * b.re, bits)
    _, abs_a = sqrt_bounds(a.re * a.re + a.im * a.im, bits)
    _, abs_b = sqrt_bounds(b.re * b.re + b.im * b.im, bits)
    rad = abs_a * b.radius + abs_b * a.radius + a.radius * b.radius + e1 + e2
    return Ball(re, im, rad.round_bits(bits, "ceil"))


def ball_step(z: Ball, c: Ball, prec: Precision) -> Ball:
    """One certified step z**2 + c.

    The center is computed exactly and rounded once to nearest; the radius
    2|z|r + r**2 + r_c plus the center rounding error is rounded up once.
    """
    if z.is_whole or c.is_whole:
        return Ball.whole()
    bits = prec.working_bits
    x, y = z.re, z.im
    re, e1 = _round_center(x * x - y * y + c.re, bits)
    im, e2 = _round_center((x * y).shift(1) + c.im, bits)
    r = z.radius
    if r:
        _, absz = sqrt_bounds(x * x + y * y, bits)
        grow = absz.shift(1) * r + r * r
    else:
        grow = ZERO
    return Ball(re, im, (grow + c.radius + e1 + e2).round_bits(bits, "ceil"))


# ---------------------------------------------------------------------------
# real intervals


class Interval:
    """Closed real interval with dyadic endpoints."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi=None):
        lo = Dyadic.of(lo)
        hi = lo if hi is None else Dyadic.of(hi)
        if hi < lo:
            raise ValueError(f"empty interval [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __setattr__(self, name, value):
        raise AttributeError("Interval is immutable")

    def __reduce__(self):
        return (Interval, (self.lo, self.hi))

    def __copy__(self):
        return self

    def __deepcopy__(self, memo):
        return self

    @classmethod
    def around(cls, center, radius) -> "Interval":
        center, radius = Dyadic.of(center), Dyadic.of(radius)
        return cls(center - radius, center + radius)

    def width(self) -> Dyadic:
        return self.hi - self.lo

    def mid(self) -> Dyadic:
        return (self.lo + self.hi).shift(-1)

    def contains(self, x) -> bool:
        if isinstance(x, Interval):
            return self.lo <= x.lo and x.hi <= self.hi
        if isinstance(x, Fraction):
            return self.lo.to_fraction() <= x <= self.hi.to_fraction()
        x = Dyadic.of(x)
        return self.lo <= x <= self.hi

    def interior_contains(self, other: "Interval") -> bool:
        return self.lo < other.lo and other.hi < self.hi

    def intersect(self, other: "Interval") -> "Interval | None":
        lo = max(self.lo, other.lo)
        hi = min(self.hi, other.hi)
        return Interval(lo, hi) if lo <= hi else None

    def hull(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def mag(self) -> Dyadic:
        return max(abs(self.lo), abs(self.hi))

    def outward(self, bits: int) -> "Interval":
        return Interval(self.lo.round_bits(bits, "floor"), self.hi.round_bits(bits, "ceil"))

    def add(self, other: "Interval", prec: Precision) -> "Interval":
        return Interval(self.lo + other.lo, self.hi + other.hi).outward(prec.working_bits)

    def sub(self, other: "Interval", prec: Precision) -> "Interval":
        return Interval(self.lo - other.hi, self.hi - other.lo).outward(prec.working_bits)

    def mul(self, other: "Interval", prec: Precision) -> "Interval":
        ps = [self.lo * other.lo, self.lo * other.hi, self.hi * other.lo, self.hi * other.hi]
        return Interval(min(ps), max(ps)).outward(prec.working_bits)

    def square(self, prec: Precision) -> "Interval":
        a, b = self.lo * self.lo, self.hi * self.hi
        lo = ZERO if self.lo <= 0 <= self.hi else min(a, b)
        return Interval(lo, max(a, b)).outward(prec.working_bits)

    def __eq__(self, other):
        return isinstance(other, Interval) and self.lo == other.lo and self.hi == other.hi

    def __hash__(self):
        return hash((self.lo, self.hi))

    def __repr__(self):
        return f"Interval({self.lo}, {self.hi})"


# ---------------------------------------------------------------------------
# fixed-point kernels
#
# A value v is held as an integer V with v = V * 2**-s.  A ball is a center
# (X, Y) and a radius R meaning radius <= R * 2**-s.  Rounding of the center
# is to nearest (error <= 1/2 ulp per coordinate, so < 1 ulp in modulus) and
# the radius is always rounded up.


def fx_abs_upper(q: int) -> int:
    """An integer >= sqrt(q) (q >= 0), cheap for large q."""
    b = q.bit_length()
    if b <= 120:
        return math.isqrt(q) + 1
    t = (b - 100) >> 1
    return (math.isqrt(q >> (2 * t)) + 1) << t


def fx_abs_lower(q: int) -> int:
    """An integer <= sqrt(q) (q >= 0)."""
    b = q.bit_length()
    if b <= 120:
        return math.isqrt(q)
    t = (b - 100) >> 1
    return math.isqrt(q >> (2 * t)) << t


def fx_from_dyadic(d: Dyadic, s: int) -> tuple[int, int]:
    """Nearest fixed-point integer and an upper bound on the error in ulps (0 or 1)."""
    e = d.exponent + s
    if e >= 0:
        return d.mantissa << e, 0
    v = (d.mantissa + (1 << (-e - 1))) >> -e
    return v, (0 if (v << -e) == d.mantissa else 1)


def fx_ball(b: Ball, s: int) -> tuple[int, int, int]:
    """Fixed-point (X, Y, R) enclosing ``b`` at scale ``s``."""
    if b.is_whole:
        raise ValueError("whole-plane ball has no fixed-point form")
    x, ex = fx_from_dyadic(b.re, s)
    y, ey = fx_from_dyadic(b.im, s)
    return x, y, b.radius.ceil_scaled(s) + ex + ey


def fx_to_ball(x: int, y: int, r: int, s: int) -> Ball:
    return Ball(Dyadic(x, -s), Dyadic(y, -s), Dyadic(r, -s))


def fx_step(x: int, y: int, r: int, a: int, b: int, rc: int, s: int) -> tuple[int, int, int]:
    """One outward-rounded step of z**2 + c on fixed-point balls."""
    xx = x * x
    yy = y * y
    half = 1 << (s - 1)
    nx = ((xx - yy + half) >> s) + a
    ny = ((2 * x * y + half) >> s) + b
    if r:
        nr = ((2 * fx_abs_upper(xx + yy) * r + r * r) >> s) + 2 + rc
    else:
        nr = 1 + rc
    return nx, ny, nr


def fx_escape_bound(s: int, radius: int = 2) -> int:
    return radius << s


def fx_escapes(x: int, y: int, r: int, bound: int) -> bool:
    """True iff every point of the ball has modulus > bound * 2**-s."""
    t = bound + r
    return x * x + y * y > t * t


def fx_inside_disk(x: int, y: int, r: int, tx: int, ty: int, rho: int, strict: bool = False) -> bool:
    """True iff the ball lies in the closed (or open) disk of center t, radius rho."""
    if r > rho:
        return False
    dx = x - tx
    dy = y - ty
    m = rho - r
    d2 = dx * dx + dy * dy
    return d2 < m * m if strict else d2 <= m * m


def fx_orbit(x: int, y: int, r: int, a: int, b: int, rc: int, s: int, steps: int):
    """Yield the balls of a forward orbit (including the start)."""
    yield x, y, r
    for _ in range(steps):
        x, y, r = fx_step(x, y, r, a, b, rc, s)
        yield x, y, r


def iter_balls(z: Ball, c: Ball, steps: int, prec: Precision) -> Iterable[Ball]:
    """Orbit of a ball through ``ball_step``, stopping at the overflow sentinel."""
    yield z
    for _ in range(steps):
        z = ball_step(z, c, prec)
        yield z
        if z.is_whole:
            return
