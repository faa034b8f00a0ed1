"""Real parabolic parameters, implosion measurements and discontinuity witnesses.

A real saddle-node of period p is a solution (c, a) of

    f_c^p(a) = a,    (f_c^p)'(a) = 1

with a of exact period p.  Candidates come from a float scan and an mpmath
Newton solve; the box is then certified by a Krawczyk test in fixed-point
interval arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

from .numerics import Ball, Dyadic, DyadicPoint, Interval, Precision, fx_abs_upper, fx_ball
from .oracle import CostMeter, OracleTape, oracle_from_dyadic, oracle_from_enclosure
from .pixel import (
    SCHEMA,
    BudgetExceeded,
    DecideOptions,
    DistanceBracket,
    ParamContext,
    PixelQuery,
    Provenance,
    Tally,
    _up,
    cover_free,
    decide_pixel,
)

PRECISION_CEILING = 10_000
DEFAULT_BITS = 64


class NotFound(RuntimeError):
    pass


class AmbiguousBracket(RuntimeError):
    pass


class PrecisionCeiling(RuntimeError):
    pass


class InvalidEpsilon(ValueError):
    pass


class ExcludedRoot(ValueError):
    pass


class Undecided(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# fixed-point intervals


class FI:
    """Closed interval [lo, hi] * 2**-s with integer endpoints (outward rounded)."""

    __slots__ = ("lo", "hi", "s")

    def __init__(self, lo: int, hi: int, s: int):
        self.lo, self.hi, self.s = lo, hi, s

    @classmethod
    def point(cls, v: int, s: int) -> "FI":
        return cls(v, v, s)

    def __add__(self, o):
        if isinstance(o, int):
            return FI(self.lo + (o << self.s), self.hi + (o << self.s), self.s)
        return FI(self.lo + o.lo, self.hi + o.hi, self.s)

    def __sub__(self, o):
        if isinstance(o, int):
            return FI(self.lo - (o << self.s), self.hi - (o << self.s), self.s)
        return FI(self.lo - o.hi, self.hi - o.lo, self.s)

    def __neg__(self):
        return FI(-self.hi, -self.lo, self.s)

    def __mul__(self, o):
        if isinstance(o, int):
            a, b = self.lo * o, self.hi * o
            return FI(min(a, b), max(a, b), self.s)
        s = self.s
        ps = (self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi)
        return FI(min(ps) >> s, -((-max(ps)) >> s), s)

    def square(self):
        s = self.s
        a, b = self.lo * self.lo, self.hi * self.hi
        if self.lo <= 0 <= self.hi:
            return FI(0, -((-max(a, b)) >> s), s)
        return FI(min(a, b) >> s, -((-max(a, b)) >> s), s)

    def mag(self) -> int:
        return max(abs(self.lo), abs(self.hi))

    def contains(self, o: "FI") -> bool:
        return self.lo <= o.lo and o.hi <= self.hi

    def interior_contains(self, o: "FI") -> bool:
        return self.lo < o.lo and o.hi < self.hi

    def to_interval(self) -> Interval:
        return Interval(Dyadic(self.lo, -self.s), Dyadic(self.hi, -self.s))

    def __repr__(self):
        return f"FI[{self.lo / 2 ** self.s}, {self.hi / 2 ** self.s}]"


def _system(c: FI, z: FI, p: int):
    """Enclosures of F = (f^p(z) - z, (f^p)'(z) - 1) and its Jacobian in (c, z)."""
    one = 1
    zc = FI(0, 0, z.s)  # d z_j / d c
    d = FI(1 << z.s, 1 << z.s, z.s)  # d z_j / d z
    dz = FI(0, 0, z.s)  # d D_j / d z
    dc = FI(0, 0, z.s)  # d D_j / d c
    w = z
    for _ in range(p):
        w2 = w * 2
        dz = (d.square() + w * dz) * 2
        dc = (zc * d + w * dc) * 2
        d = w2 * d
        zc = w2 * zc + one
        w = w.square() + c
    f1 = w - z
    f2 = d - one
    return (f1, f2), ((zc, d - one), (dc, dz))


def _mp_system(c, z, p):
    zc = mpmath.mpf(0)
    d = mpmath.mpf(1)
    dz = mpmath.mpf(0)
    dc = mpmath.mpf(0)
    w = z
    for _ in range(p):
        dz = 2 * (d * d + w * dz)
        dc = 2 * (zc * d + w * dc)
        d = 2 * w * d
        zc = 2 * w * zc + 1
        w = w * w + c
    return (w - z, d - 1), ((zc, d - 1), (dc, dz))


def _mp_newton(c, z, p, prec: int, steps: int = 200):
    with mpmath.workprec(prec):
        c, z = mpmath.mpf(c), mpmath.mpf(z)
        tol = mpmath.mpf(2) ** (-prec + 8)
        for _ in range(steps):
            (f1, f2), ((a, b), (e, g)) = _mp_system(c, z, p)
            det = a * g - b * e
            if det == 0 or not mpmath.isfinite(det):
                return None
            dcv = (g * f1 - b * f2) / det
            dzv = (a * f2 - e * f1) / det
            c -= dcv
            z -= dzv
            if abs(c) > 3 or abs(z) > 3:
                return None
            if abs(dcv) < tol * (1 + abs(c)) and abs(dzv) < tol * (1 + abs(z)):
                return c, z
        return None


def _mpf(x):
    if isinstance(x, Dyadic):
        x = x.to_fraction()
    if isinstance(x, Fraction):
        return mpmath.mpf(x.numerator) / x.denominator
    return mpmath.mpf(x)


def _to_fixed(x, s: int) -> int:
    """Nearest integer to x * 2^s, exact in the mantissa of x."""
    sign, man, exp, _ = (x if isinstance(x, mpmath.mpf) else mpmath.mpf(x))._mpf_
    man = -int(man) if sign else int(man)
    e = exp + s
    if e >= 0:
        return int(man) << e
    return (int(man) + (1 << (-e - 1))) >> -e


def _krawczyk(c0, z0, p: int, bits: int):
    """Certify a unique zero in the box of half-width 2^-(bits+1) around (c0, z0)."""
    s = bits + 64 + 2 * p
    cx, zx = _to_fixed(c0, s), _to_fixed(z0, s)
    rad = 1 << (s - bits - 1)
    X = (FI(cx - rad, cx + rad, s), FI(zx - rad, zx + rad, s))
    (f1, f2), _ = _system(FI.point(cx, s), FI.point(zx, s), p)
    _, J = _system(X[0], X[1], p)
    with mpmath.workprec(s + 32):
        (_, _), ((a, b), (e, g)) = _mp_system(mpmath.ldexp(cx, -s), mpmath.ldexp(zx, -s), p)
        det = a * g - b * e
        if det == 0:
            return None
        Y = [[g / det, -b / det], [-e / det, a / det]]
        Yi = [[_to_fixed(Y[i][j], s) for j in range(2)] for i in range(2)]
    Yf = [[FI.point(v, s) for v in row] for row in Yi]
    F = (f1, f2)
    dx = (X[0] - FI.point(cx, s), X[1] - FI.point(zx, s))
    K = []
    for i in range(2):
        acc = FI.point((cx, zx)[i], s) - (Yf[i][0] * F[0] + Yf[i][1] * F[1])
        for j in range(2):
            m = -(Yf[i][0] * J[0][j] + Yf[i][1] * J[1][j])
            if i == j:
                m = m + 1
            acc = acc + m * dx[j]
        K.append(acc)
    if not (X[0].interior_contains(K[0]) and X[1].interior_contains(K[1])):
        return None
    # residuals and multiplier defect over the whole box
    (r1, r2), _ = _system(X[0], X[1], p)
    return X, r1.mag(), r2.mag(), s


# ---------------------------------------------------------------------------
# roots


@dataclass
class ParabolicRoot:
    c: Interval
    period: int
    alpha: Interval
    multiplier_defect: Dyadic
    residual: Dyadic
    primitive_evidence: str
    bits: int
    cycle: tuple = ()
    quad_coeff: float = 0.0  # (f^p)''(alpha)/2
    param_coeff: float = 0.0  # d f^p(alpha) / dc
    _mp: tuple = field(default=(), repr=False, compare=False)

    @property
    def center(self) -> Dyadic:
        return self.c.mid()

    def is_exactly(self, value) -> bool:
        return self.c.contains(Dyadic.of(value).to_fraction())

    def to_json(self) -> dict:
        return {
            "period": self.period,
            "interval_lo": str(self.c.lo),
            "interval_hi": str(self.c.hi),
            "bits": self.bits,
            "evidence": {
                "primitive": self.primitive_evidence,
                "alpha_lo": str(self.alpha.lo),
                "alpha_hi": str(self.alpha.hi),
                "multiplier_defect": str(self.multiplier_defect),
                "residual": str(self.residual),
            },
        }

    @classmethod
    def from_json(cls, d: dict) -> "ParabolicRoot":
        """Rebuild and re-certify a registry entry."""
        ev = d.get("evidence", {})
        lo, hi = Dyadic.parse(d["interval_lo"]), Dyadic.parse(d["interval_hi"])
        if "alpha_lo" in ev:
            a0 = Interval(Dyadic.parse(ev["alpha_lo"]), Dyadic.parse(ev["alpha_hi"])).mid()
        else:
            a0 = None
        return certify_root(int(d["period"]), Interval(lo, hi).mid(), a0, int(d["bits"]))

    def oracle(self, ceiling: int = PRECISION_CEILING) -> OracleTape:
        """Oracle tape for the root parameter, refining on demand."""
        state = {"root": self}

        def refine(bits: int) -> Interval:
            r = state["root"]
            if r.c.width() > Dyadic(1, -bits):
                r = refine_root(r, bits + 8, ceiling)
                state["root"] = r
            return r.c

        if self.c.width() == 0:
            return oracle_from_dyadic(self.c.lo)
        return oracle_from_enclosure(refine, {"kind": "parabolic-root", "period": self.period, "interval_lo": str(self.c.lo), "interval_hi": str(self.c.hi)})


def _exact_period(cyc: list, p: int) -> bool:
    for d in range(1, p):
        if p % d == 0 and abs(cyc[d % p] - cyc[0]) < 1e-9:
            return False
    return True


def certify_root(period: int, c_guess, z_guess, bits: int = DEFAULT_BITS) -> ParabolicRoot:
    """Polish (c_guess, z_guess) by Newton, certify by Krawczyk, check exact period."""
    p = period
    prec = bits + 96 + 4 * p
    cg = _mpf(c_guess)
    if z_guess is None:
        z_guess = _guess_alpha(float(cg), p)
    zg = _mpf(z_guess)
    sol = _mp_newton(cg, zg, p, prec)
    if sol is None:
        raise NotFound("Newton iteration did not converge")
    c0, z0 = sol
    with mpmath.workprec(prec):
        cyc = [z0]
        for _ in range(p - 1):
            cyc.append(cyc[-1] ** 2 + c0)
        cyc_f = [float(v) for v in cyc]
        if not _exact_period(cyc_f, p):
            raise NotFound("solution has a smaller exact period")
        # normal-form coefficients of f^p at alpha
        (_, _), ((zc, _), (_, dz)) = _mp_system(c0, z0, p)
    out = _krawczyk(c0, z0, p, bits)
    if out is None:
        raise NotFound("Krawczyk test did not contract")
    X, res, defect, s = out
    if res >= (1 << (s - 20)) or defect >= (1 << (s - 20)):
        raise NotFound("residual bounds exceed 2^-20")
    # alpha: the cycle point nearest the critical point
    j = min(range(p), key=lambda i: abs(cyc_f[i]))
    if j:
        # f^j of the certified box gives the chosen cycle point
        z = X[1]
        for _ in range(j):
            z = z.square() + X[0]
        alpha = z.to_interval()
        with mpmath.workprec(prec):
            (_, _), ((zc, _), (_, dz)) = _mp_system(c0, cyc[j], p)
    else:
        alpha = X[1].to_interval()
    return ParabolicRoot(
        c=X[0].to_interval(),
        period=p,
        alpha=alpha,
        multiplier_defect=Dyadic(defect, -s),
        residual=Dyadic(res, -s),
        primitive_evidence="SaddleNodeOnRealLine",
        bits=bits,
        cycle=tuple(cyc_f[j:] + cyc_f[:j]),
        quad_coeff=float(dz) / 2,
        param_coeff=float(zc),
        _mp=(c0, cyc[j]),
    )


def _guess_alpha(c: float, p: int) -> float:
    z = 0.0
    for _ in range(4000 * p):
        z = z * z + c
        if abs(z) > 2:
            return 0.0
    best = z
    for _ in range(p):
        z = z * z + c
        if abs(z) < abs(best):
            best = z
    return best


def _scan_candidates(p: int, lo: float, hi: float, nc: int = 241, nz: int = 6001):
    """Float candidates (c, z) for tangencies of f^p(z) - z in the c-bracket."""
    cs = np.linspace(lo, hi, nc)
    zs = np.linspace(-2.0, 2.0, nz * max(1, p // 3))
    out = []
    for c in cs:
        w = zs.copy()
        d = np.ones_like(zs)
        for _ in range(p):
            d = 2 * w * d
            w = w * w + c
            np.clip(w, -4, 4, out=w)
        g = w - zs
        dg = d - 1
        sc = np.nonzero(np.sign(dg[1:]) != np.sign(dg[:-1]))[0]
        for i in sc:
            out.append((abs(g[i]), c, zs[i]))
    out.sort()
    return [(c, z) for _, c, z in out]


def find_parabolic_root(period: int, bracket, bits: int = DEFAULT_BITS, max_newton: int = 60) -> ParabolicRoot:
    """The unique real saddle-node of the given period in ``bracket``."""
    if period < 1:
        raise ValueError("period must be positive")
    if bits > PRECISION_CEILING:
        raise PrecisionCeiling(f"{bits} bits requested, ceiling is {PRECISION_CEILING}")
    lo, hi = (float(Dyadic.of(v)) if not isinstance(v, float) else v for v in (bracket.lo, bracket.hi)) if isinstance(bracket, Interval) else map(float, bracket)
    if hi < lo:
        raise ValueError("empty bracket")
    found: list[ParabolicRoot] = []
    tried = 0
    for c, z in _scan_candidates(period, lo, hi):
        if tried >= max_newton:
            break
        if any(abs(c - float(r.center)) < 1e-6 for r in found):
            continue
        tried += 1
        sol = _mp_newton(mpmath.mpf(c), mpmath.mpf(z), period, 80)
        if sol is None:
            continue
        cf = float(sol[0])
        if not (lo <= cf <= hi):
            continue
        if any(abs(cf - float(r.center)) < 1e-9 for r in found):
            continue
        try:
            found.append(certify_root(period, sol[0], sol[1], bits))
        except NotFound:
            continue
    if not found:
        raise NotFound(f"no certified period-{period} saddle-node in [{lo}, {hi}]")
    if len(found) > 1:
        raise AmbiguousBracket(f"{len(found)} saddle-nodes of period {period} in [{lo}, {hi}]")
    return found[0]


def refine_root(root: ParabolicRoot, bits: int, ceiling: int = PRECISION_CEILING) -> ParabolicRoot:
    """Re-certify the root with an interval of width <= 2^-bits."""
    if bits > ceiling:
        raise PrecisionCeiling(f"{bits} bits requested, ceiling is {ceiling}")
    if bits <= root.bits:
        return root
    c0, z0 = root._mp if root._mp else (root.c.mid(), None)
    idx_alpha = z0
    r = certify_root(root.period, c0, idx_alpha, bits)
    return r


# ---------------------------------------------------------------------------
# implosion measurements


@dataclass
class ImplosionSample:
    root: ParabolicRoot
    epsilon: Dyadic
    c: Dyadic
    gate: Interval
    transit_count: int
    entry_step: int
    transit_time: float  # continuous crossing time in normal-form coordinates
    phase_proxy: float
    tau_lift_proxy: int

    def to_json(self) -> dict:
        return {
            "period": self.root.period,
            "epsilon": str(self.epsilon),
            "c": str(self.c),
            "gate": [str(self.gate.lo), str(self.gate.hi)],
            "transit_count": self.transit_count,
            "entry_step": self.entry_step,
            "transit_time": repr(self.transit_time),
            "phase_proxy": repr(self.phase_proxy),
            "tau_lift_proxy": self.tau_lift_proxy,
        }


def default_gate(root: ParabolicRoot) -> Interval:
    """Real interval centered at alpha of width 0.1 times the distance to the nearest other orbit point.

    For a fixed point the other point is -alpha, the second preimage of alpha.
    """
    a = float(root.alpha.mid())
    others = [v for v in root.cycle[1:]] or [-a]
    w = 0.1 * min(abs(a - v) for v in others)
    lo = Dyadic.from_float(a - w / 2).round_bits(40, "ceil")
    hi = Dyadic.from_float(a + w / 2).round_bits(40, "floor")
    return Interval(lo, hi)


def _param(root: ParabolicRoot, epsilon) -> Dyadic:
    eps = Dyadic.of(epsilon) if not isinstance(epsilon, float) else Dyadic.from_float(epsilon)
    if eps <= 0:
        raise InvalidEpsilon("epsilon must be positive")
    return root.center + eps


def _transit(root, c: Dyadic, gate: Interval, max_steps: int, s: int = 128):
    """Certified count of f^p-steps of the critical orbit inside the gate."""
    p = root.period
    a, _, rc = fx_ball(Ball(c, 0, 0), s)
    if root.c.width() > 0:
        rc += root.c.width().ceil_scaled(s)
    glo, ghi = gate.lo.scaled(s) if gate.lo.in_dn(s) else gate.lo.floor_scaled(s), gate.hi.scaled(s) if gate.hi.in_dn(s) else gate.hi.ceil_scaled(s)
    x, y, r = 0, 0, 0
    half = 1 << (s - 1)
    bail = 2 << s
    inside = 0
    entry = None
    xs = []
    for j in range(max_steps):
        # position of f^(p j)(0)
        if x - r > glo and x + r < ghi and abs(y) + r < (ghi - glo):
            if entry is None:
                entry = j
            inside += 1
            xs.append(x)
        elif x + r < glo or x - r > ghi:
            if entry is not None:
                return entry, inside, x, xs
        else:
            raise Undecided("orbit ball straddles the gate boundary")
        for _ in range(p):
            xx, yy = x * x, y * y
            if xx + yy > (bail + r) ** 2:
                raise InvalidEpsilon("critical orbit escapes before crossing the gate")
            nr = ((2 * fx_abs_upper(xx + yy) * r + r * r) >> s) + 2 + rc if r else 1 + rc
            x, y = ((xx - yy + half) >> s) + a, ((x * y + (half >> 1)) >> (s - 1))
            r = nr
        if r > (1 << (s - 8)):
            raise Undecided("orbit ball lost precision")
    raise InvalidEpsilon("critical orbit did not cross the gate within the step limit")


def phase_proxy(root: ParabolicRoot, epsilon, gate: Interval | None = None, max_steps: int | None = None) -> ImplosionSample:
    """Gate transit measurement for c = r + epsilon.

    transit_count is the number of f^p-steps the critical orbit spends in
    the gate.  The continuous crossing time uses the normal form
    u -> u + u^2 + eta with u = A (z - alpha), eta = A B epsilon, whose
    flow time is arctan(u / sqrt(eta)) / sqrt(eta); phase_proxy is the
    fractional part of minus that time and tau_lift_proxy is -transit_count.
    """
    gate = gate or default_gate(root)
    c = _param(root, epsilon)
    eps = float(c - root.center)
    A, B = root.quad_coeff, root.param_coeff
    eta = A * B * eps
    if eta <= 0:
        raise InvalidEpsilon("epsilon is on the side of the root with a surviving cycle")
    est = math.pi / math.sqrt(eta)
    steps = max_steps or int(4 * est + 4000)
    s = 96 + int(math.log2(1 + est)) * 4
    for attempt in range(4):
        try:
            entry, count, x_out, xs = _transit(root, c, gate, steps, s)
            break
        except Undecided:
            s *= 2
    else:
        raise Undecided("gate transit could not be certified")
    a = float(root.alpha.mid())
    q = math.sqrt(eta)
    U = abs(A) * float(gate.hi - gate.lo) / 2
    u_out = A * (x_out * 2.0 ** -s - a)
    # time since entering the gate side, measured from the exit boundary
    t_exit = entry + count
    T = t_exit - (math.atan(u_out / q) - math.atan(U / q)) / q
    return ImplosionSample(root, c - root.center, c, gate, count, entry, T, (-T) % 1.0, -count)


@dataclass
class LimitIterate:
    ball: Ball | None
    k: int
    escaped_at: int | None = None

    @property
    def escaped(self) -> bool:
        return self.escaped_at is not None


def geometric_limit_iterate(root: ParabolicRoot, epsilon, z: Ball, s: int = 192) -> LimitIterate:
    """Certified ball for f_{r+eps}^k(z), k = p * transit_count(eps)."""
    sample = phase_proxy(root, epsilon)
    k = root.period * sample.transit_count
    c = sample.c
    x, y, r = fx_ball(z, s)
    a, _, rc = fx_ball(Ball(c, 0, 0), s)
    if root.c.width() > 0:
        rc += root.c.width().ceil_scaled(s)
    half = 1 << (s - 1)
    bail = 2 << s
    for j in range(k):
        xx, yy = x * x, y * y
        if xx + yy > (bail + r) ** 2:
            return LimitIterate(None, k, j)
        nr = ((2 * fx_abs_upper(xx + yy) * r + r * r) >> s) + 2 + rc if r else 1 + rc
        x, y = ((xx - yy + half) >> s) + a, ((x * y + (half >> 1)) >> (s - 1)) + 0
        r = nr
        if r > (1 << s):
            raise Undecided("ball blew up before the geometric-limit iterate")
    if x * x + y * y > (bail + r) ** 2:
        return LimitIterate(None, k, k)
    return LimitIterate(Ball(Dyadic(x, -s), Dyadic(y, -s), Dyadic(r, -s)), k)


def epsilon_grid(eps0: float, count: int, rho: float = 0.93) -> list[Dyadic]:
    """Geometric grid eps0 * rho^j rounded to 48 significant bits."""
    return [Dyadic.from_float(eps0 * rho ** j).round_bits(48, "nearest") for j in range(count)]


# ---------------------------------------------------------------------------
# discontinuity witnesses


def escape_estimate(points, c, max_iter: int = 4000) -> np.ndarray:
    """Float screening value |z_k| log|z_k| / |dz_k/dz| (0 where no escape is seen).

    Within a factor of about 2 of the Koebe bracket center; used only to rank
    candidates before rigorous certification.  ``c`` may be an array
    broadcasting against ``points``.
    """
    z = np.asarray(points, dtype=complex)
    shape = np.broadcast_shapes(z.shape, np.shape(c))
    z = np.broadcast_to(z, shape).ravel().copy()
    cc = np.broadcast_to(np.asarray(c, dtype=float), shape).ravel().copy()
    out = np.zeros(z.size)
    with np.errstate(over="ignore", invalid="ignore"):
        _escape_loop(z, cc, out, max_iter)
    return out.reshape(shape)


def _escape_loop(z, c, out, max_iter):
    d = np.ones_like(z)
    idx = np.arange(z.size)
    for _ in range(max_iter):
        d = 2 * z * d
        z = z * z + c
        az = np.abs(z)
        esc = az > 256
        if esc.any():
            out[idx[esc]] = az[esc] * np.log(az[esc]) / np.abs(d[esc])
            keep = ~esc
            z, d, c, idx = z[keep], d[keep], c[keep], idx[keep]
            if not idx.size:
                break


@dataclass
class PairCandidate:
    vx: int
    vy: int
    near: int  # index of the parameter where the estimate is smallest
    far: int  # index where it is largest
    near_value: float
    far_value: float
    values: tuple = ()  # screening value at every parameter


def screen_pairs(params: list, l: int, xs: range, ys: range, pitch: int, max_iter: int = 4000,
                 near_ratio: float = 1 / 8, far_ratio: float = 20.0) -> list[PairCandidate]:
    """Pixels of size l (grid indices vx, vy at pitch ``pitch`` units of 2^-l) whose
    screening value drops below near_ratio*h for one parameter and exceeds
    far_ratio*h for another.  Sorted lexicographically by (re, im).
    """
    h = math.ldexp(1.0, -l)
    vx = np.array(list(xs), dtype=np.int64) * pitch
    vy = np.array(list(ys), dtype=np.int64) * pitch
    Z = (vx[None, :] + 1j * vy[:, None]) * h
    D = np.array([escape_estimate(Z, float(c), max_iter) for c in params])
    pos = np.where(D > 0, D, np.inf)
    mn, mx = pos.min(axis=0), D.max(axis=0)
    ok = (mn < near_ratio * h) & (mx > far_ratio * h)
    out = []
    for i, j in zip(*np.nonzero(ok)):
        col = D[:, i, j]
        out.append(PairCandidate(int(vx[j]), int(vy[i]), int(np.argmin(pos[:, i, j])), int(np.argmax(col)),
                                 float(mn[i, j]), float(mx[i, j]), tuple(float(v) for v in col)))
    out.sort(key=lambda p: (p.vx, p.vy))
    return out


def refine_near(z: complex, lo: Dyadic, hi: Dyadic, target: float, rounds: int = 8, samples: int = 41,
                max_iter: int = 100_000) -> tuple[Dyadic, float]:
    """Zoom into [lo, hi] for a parameter where the screening value at z is below target."""
    best_c, best_v = None, math.inf
    a, b = float(lo), float(hi)
    for _ in range(rounds):
        cs = np.linspace(a, b, samples)
        vals = escape_estimate(z, cs, max_iter)
        vals = np.where(vals > 0, vals, np.inf)
        k = int(np.argmin(vals))
        if vals[k] < best_v:
            best_v, best_c = float(vals[k]), float(cs[k])
        if best_v < target:
            break
        span = (b - a) / 8
        a, b = float(cs[k]) - span, float(cs[k]) + span
    if best_c is None:
        return lo, math.inf
    c = Dyadic.from_float(best_c).round_bits(56, "nearest")
    return min(max(c, lo), hi), best_v


def certify_near(z0: DyadicPoint, center: Dyadic, radius: Dyadic, s: int, max_iter: int = 200_000):
    """Koebe bracket (lower, upper) on dist(z0, J_c) valid for every c in [center +- radius], or None."""
    ctx = ParamContext(center, radius, s, find_cycles=False)
    res = ctx.orbit(z0.re.scaled(s), z0.im.scaled(s), max_iter)
    if res.status != "escape" or not math.isfinite(res.upper):
        return None
    return res.lower, res.upper


def certify_free(z0: DyadicPoint, center: Dyadic, radius: Dyadic, disk: Dyadic, s: int,
                 piece_bits: int | None = None, max_iter: int = 200_000, max_depth: int = 8,
                 tick_limit: float = 2.0e7) -> bool:
    """Certify that the closed disk of radius ``disk`` around z0 misses K_c for all c in the ball.

    The disk is tiled by squares of side 2^-piece_bits (one square when
    None); every square meeting the disk must be covered by escaping pieces.
    """
    ctx = ParamContext(center, radius, s, find_cycles=False)
    x, y = z0.re.scaled(s), z0.im.scaled(s)
    R = disk.ceil_scaled(s)
    tally = Tally(None, tick_limit)
    try:
        if piece_bits is None:
            return cover_free(ctx, x, y, R, tally, max_iter, max_depth, disk=R, want="exterior")
        half = 1 << (s - piece_bits - 1)
        k = -(-R // (2 * half))
        for i in range(-k, k):
            for j in range(-k, k):
                qx, qy = x + (2 * i + 1) * half, y + (2 * j + 1) * half
                dx = max(abs(qx - x) - half, 0)
                dy = max(abs(qy - y) - half, 0)
                if dx * dx + dy * dy > R * R:
                    continue
                if not cover_free(ctx, qx, qy, half, tally, max_iter, max_depth, want="exterior"):
                    return False
        return True
    except BudgetExceeded:
        return False


@dataclass
class DiscontinuityWitness:
    root: ParabolicRoot
    z0: DyadicPoint
    n: int
    c1: Dyadic
    c2: Dyadic
    bracket1: DistanceBracket  # dist(z0, J_{c1}); upper < 2^-n / 10
    bracket2: DistanceBracket  # dist(z0, K_{c2}); lower is the certified free radius 8 * 2^-n
    phase1: float
    phase2: float
    reverified: bool
    search: dict = field(default_factory=dict)

    def renders(self) -> dict:
        """Render descriptors that replay both sides at resolution n + 4."""
        n = self.n + 4
        half = Dyadic(1, 3 - self.n)
        region = [str((self.z0.re - half).round_dn(n, "floor")), str((self.z0.im - half).round_dn(n, "floor")),
                  str((self.z0.re + half).round_dn(n, "ceil")), str((self.z0.im + half).round_dn(n, "ceil"))]
        return {
            name: {"schema": SCHEMA, "region": region, "n": n, "c_descriptor": {"kind": "dyadic", "value": str(c)}}
            for name, c in (("c1", self.c1), ("c2", self.c2))
        }

    def to_json(self) -> dict:
        return {
            "root": self.root.to_json(),
            "z0": {"re": str(self.z0.re), "im": str(self.z0.im)},
            "n": self.n,
            "c1": str(self.c1),
            "c2": str(self.c2),
            "epsilon1": str(self.c1 - self.root.center),
            "epsilon2": str(self.c2 - self.root.center),
            "bracket1": self.bracket1.to_json(),
            "bracket2": self.bracket2.to_json(),
            "phase1": repr(self.phase1),
            "phase2": repr(self.phase2),
            "reverified": self.reverified,
            "renders": self.renders(),
            "search": self.search,
        }

    @classmethod
    def from_json(cls, d: dict) -> "DiscontinuityWitness":
        """Rebuild a witness from its report; the root is re-certified, the sides are not."""
        n = int(d["n"])
        z0 = DyadicPoint(Dyadic.parse(d["z0"]["re"]), Dyadic.parse(d["z0"]["im"]), n)
        return cls(ParabolicRoot.from_json(d["root"]), z0, n, Dyadic.parse(d["c1"]), Dyadic.parse(d["c2"]),
                   DistanceBracket.from_json(d["bracket1"]), DistanceBracket.from_json(d["bracket2"]),
                   float(d["phase1"]), float(d["phase2"]), bool(d["reverified"]), dict(d.get("search", {})))


def _working_bits(l: int) -> int:
    return 2 * l + 96


def verify_witness(w: DiscontinuityWitness, extra: int = 4, factor: int = 4) -> bool:
    """Re-check both sides at resolution n + extra with ``factor`` times the working precision.

    Near side: the pixel query of size n + extra at z0 must come back
    CertifiedNear, so dist(z0, J_{c1}) < 2^-(n+extra).  Far side: the
    8 * 2^-n disk is re-covered starting from squares of side 2^-n, so every
    cell of any finer grid inside it is settled as escaping.
    """
    n2 = w.n + extra
    s = factor * _working_bits(w.n)
    ans = decide_pixel(PixelQuery(DyadicPoint(w.z0.re, w.z0.im, n2), n2), oracle_from_dyadic(w.c1), CostMeter(),
                       DecideOptions(tick_limit=2.0e7), Precision(s))
    if ans.provenance != Provenance.NEAR:
        return False
    near = certify_near(w.z0, w.c1, Dyadic(0), s)
    if near is None or not near[1] < math.ldexp(0.1, -w.n):
        return False
    return certify_free(w.z0, w.c2, Dyadic(0), Dyadic(1, 3 - w.n), s, piece_bits=w.n)


def _search_window(root: ParabolicRoot, pitch_bits: int):
    """Grid ranges (units of 2^-pitch_bits) for the upper half window around alpha."""
    a = float(root.alpha.mid())
    u = 1 << pitch_bits
    xs = range(math.floor((a - 0.2) * u), math.ceil((a + 0.25) * u) + 1)
    ys = range(1, math.ceil(0.25 * u) + 1)
    return xs, ys


def find_discontinuity_witness(root: ParabolicRoot, l: int, search_budget: int = 60, *, eps0: float = 1e-2,
                               pitch_bits: int = 7, max_iter: int = 4000, reverify: bool = True,
                               max_candidates: int = 40) -> DiscontinuityWitness:
    """Pixel z0 of size l and parameters c1, c2 > r with z0 within 2^-l/10 of J_{c1}
    while the 8 * 2^-l disk around z0 lies in the escape set of f_{c2}.

    The parameters come from the geometric grid r + eps0 * 0.93^j,
    j < search_budget; the pixel from a window around alpha.  Candidates are
    screened in floats, the near parameter is refined locally, and both sides
    are then certified (Koebe bracket and escaping disk cover).
    """
    if root.period == 1 and root.is_exactly(Fraction(1, 4)):
        raise ExcludedRoot("the cusp root 1/4 has no two-sided implosion witness")
    if l < 6:
        raise ValueError("l must be at least 6")
    if search_budget <= 0:
        raise NotFound("empty search budget")
    pitch_bits = min(pitch_bits, l)
    eps = epsilon_grid(eps0, search_budget)
    params = [root.center + e for e in eps]
    xs, ys = _search_window(root, pitch_bits)
    cands = screen_pairs(params, l, xs, ys, 1 << (l - pitch_bits), max_iter)
    h = math.ldexp(1.0, -l)
    s = _working_bits(l)
    tried = []
    for cand in cands[:max_candidates]:
        z0 = DyadicPoint.from_grid(cand.vx, cand.vy, l)
        z = complex(float(z0.re), float(z0.im))
        j = cand.near
        lo, hi = params[min(j + 1, len(params) - 1)], params[max(j - 1, 0)]
        c1, v = refine_near(z, lo, hi, h / 200)
        c2 = params[cand.far]
        entry = {"z0": [str(z0.re), str(z0.im)], "near_estimate": v / h, "far_estimate": cand.far_value / h}
        tried.append(entry)
        if c1 <= root.c.hi or c2 <= root.c.hi:
            entry["result"] = "parameter not right of the root"
            continue
        near = certify_near(z0, c1, Dyadic(0), s)
        if near is None or not near[1] < h / 10:
            entry["result"] = "near side not certified"
            continue
        R = Dyadic(1, 3 - l)
        if not certify_free(z0, c2, Dyadic(0), R, s):
            entry["result"] = "far disk not certified"
            continue
        far = certify_near(z0, c2, Dyadic(0), s)
        try:
            p1 = phase_proxy(root, c1 - root.center).phase_proxy
            p2 = phase_proxy(root, c2 - root.center).phase_proxy
        except (InvalidEpsilon, Undecided) as exc:
            entry["result"] = f"phase proxy failed: {exc}"
            continue
        if p1 == p2:
            entry["result"] = "phases coincide"
            continue
        entry["result"] = "certified"
        w = DiscontinuityWitness(
            root, z0, l, c1, c2,
            DistanceBracket(Dyadic(0), _up(near[1])),
            DistanceBracket(R, None if far is None else max(R, _up(far[1]))),
            p1, p2, False,
            {"epsilon_grid": {"eps0": repr(eps0), "rho": "0.93", "count": search_budget},
             "pitch_bits": pitch_bits, "candidates": len(cands), "tried": tried},
        )
        if reverify:
            w.reverified = verify_witness(w)
            if not w.reverified:
                entry["result"] = "re-verification failed"
                continue
        return w
    raise NotFound(f"no certified witness at l={l} among {len(cands)} screened candidates ({len(tried)} tried)")
