"""Certified pixel decisions for quadratic Julia sets.

A pixel query is a dyadic point x of size n.  The decider must answer 1 when
the max-norm distance from x to J_c is below h = 2**-n and 0 when it exceeds
2h.  Every answer here rests on one of these certified facts:

* a point or ball escapes (its iterate lies outside |z| <= 2);
* a point or ball falls into a trap, a closed disk known to lie in K_c
  (open disk in the interior of K_c);
* a Koebe bracket around an escaping point, valid when K_c is connected:
  sinh(G)/(2|grad G|) <= dist(z, K_c) <= 2 sinh(G)/|grad G|, where G is the
  Green function, evaluated from the orbit and its derivative.

Distances from the Koebe bracket are Euclidean; the max-norm distance d_inf
satisfies d_2/sqrt(2) <= d_inf <= d_2.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Iterable

import numpy as np

from .numerics import (
    Ball,
    Dyadic,
    DyadicPoint,
    Precision,
    fx_abs_lower,
    fx_abs_upper,
    fx_ball,
    fx_from_dyadic,
)
from .oracle import CostMeter, query

SQRT2_UP = 1.4142135623730951 * (1 + 2e-16)
SAFETY = 1e-12
KOEBE_RADIUS_BITS = 8  # iterate until |z| >= 2**8 before reading off G
TRAP_MAX_PERIOD = 64


class Provenance(str, Enum):
    FAR = "CertifiedFar"
    NEAR = "CertifiedNear"
    BORDERLINE = "Borderline"


class Cell(int, Enum):
    IN = 0
    AMBIGUOUS = 128
    OUT = 255


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class PixelQuery:
    point: DyadicPoint
    resolution: int

    def __post_init__(self):
        if self.resolution < 0:
            raise ValueError("resolution must be a natural number")
        if self.point.precision < self.resolution:
            raise ValueError("point precision is below the resolution")

    @classmethod
    def at(cls, re, im, n: int) -> "PixelQuery":
        """Query at resolution n; finer dyadic coordinates are kept as given."""
        p = DyadicPoint(re, im)
        return cls(DyadicPoint(p.re, p.im, max(n, p.precision)), n)

    @classmethod
    def grid(cls, vx: int, vy: int, n: int) -> "PixelQuery":
        return cls(DyadicPoint.from_grid(vx, vy, n), n)


@dataclass(frozen=True)
class PixelAnswer:
    bit: int
    provenance: Provenance
    lower: float = 0.0
    upper: float = math.inf
    side: str | None = None  # 'exterior' or 'interior' when x is certified off J on that side

    def __post_init__(self):
        if self.bit == 0 and self.provenance == Provenance.NEAR:
            raise ValueError("bit 0 cannot be CertifiedNear")
        if self.bit == 1 and self.provenance == Provenance.FAR:
            raise ValueError("bit 1 cannot be CertifiedFar")


@dataclass(frozen=True)
class DistanceBracket:
    """Certified bounds lower <= dist(z, J_c) <= upper (Euclidean)."""

    lower: Dyadic
    upper: Dyadic | None  # None means +inf
    undecided: bool = False

    def __post_init__(self):
        if self.lower < 0:
            raise ValueError("negative lower bound")
        if self.upper is not None and self.upper < self.lower:
            raise ValueError("lower exceeds upper")

    def contains(self, d) -> bool:
        d = Fraction(d)
        return self.lower.to_fraction() <= d and (self.upper is None or d <= self.upper.to_fraction())

    def width(self) -> float:
        return math.inf if self.upper is None else float(self.upper - self.lower)

    def to_json(self) -> dict:
        return {"lower": str(self.lower), "upper": None if self.upper is None else str(self.upper), "undecided": self.undecided}

    @classmethod
    def from_json(cls, d: dict) -> "DistanceBracket":
        up = d.get("upper")
        return cls(Dyadic.parse(d["lower"]), None if up is None else Dyadic.parse(up), bool(d.get("undecided", False)))


def _down(x: float) -> Dyadic:
    if x <= 0 or not math.isfinite(x):
        return Dyadic(0)
    return Dyadic.from_float(x * (1 - 4e-16)).round_bits(40, "floor")


def _up(x: float) -> Dyadic | None:
    if not math.isfinite(x):
        return None
    return Dyadic.from_float(x * (1 + 4e-16)).round_bits(40, "ceil")


# ---------------------------------------------------------------------------
# parameter contexts


@dataclass
class Trap:
    """Closed disk inside K_c whose open interior lies in int K_c."""

    x: int
    y: int
    rho: int
    kind: str

    def to_json(self, s: int) -> dict:
        return {"center_re": str(Dyadic(self.x, -s)), "center_im": str(Dyadic(self.y, -s)), "radius": str(Dyadic(self.rho, -s)), "kind": self.kind}


@dataclass
class OrbitResult:
    status: str  # 'escape' | 'trap' | 'undecided'
    steps: int
    lower: float = 0.0  # Euclidean Koebe bounds (escape only)
    upper: float = math.inf
    direction: complex = 0j  # unit vector of steepest ascent of G (heuristic)
    estimate: float = math.nan


class ParamContext:
    """Everything certified about f_c for c in a real ball [center +- radius]."""

    def __init__(self, center: Dyadic, radius: Dyadic, s: int, find_cycles: bool = True):
        self.center = center
        self.radius = radius
        self.s = s
        self.a, err = fx_from_dyadic(center, s)
        self.rc = radius.ceil_scaled(s) + err
        self.c_lo = center - radius
        self.c_hi = center + radius
        self.cmax_exact = max(abs(self.c_lo), abs(self.c_hi))
        self.cmax = float(self.cmax_exact) * (1 + 1e-15)
        if self.cmax > 2.0625:
            raise ValueError("parameter ball must lie in |c| <= 2 + 1/16")
        self.connected = self.c_lo >= -2 and self.c_hi <= Dyadic(1, -2)
        one = 1 << s
        # K lies in the disk of radius (1 + sqrt(1 + 4|c|))/2
        r_k = (1 + math.sqrt(1 + 4 * self.cmax)) / 2 * (1 + 1e-14)
        self.rk = int(math.ceil(r_k * (1 << 40))) << (s - 40) if s >= 40 else int(math.ceil(r_k * one))
        self.rk_float = r_k
        self.bail = 2 << s
        self.big = 1 << (s + KOEBE_RADIUS_BITS)
        self.traps: list[Trap] = []
        self.trap_reach = 0  # traps live inside |z| <= trap_reach
        self.beta_lo: int | None = None  # real points with |x| <= beta_lo are in K
        if self.connected:
            # K meets the real line in [-beta, beta], beta = (1 + sqrt(1 - 4c))/2, decreasing in c
            beta = (1 + math.sqrt(max(0.0, 1 - 4 * float(self.c_hi)))) / 2 * (1 - 1e-14)
            self.beta_lo = int(math.floor(beta * one))
        if self.cmax_exact <= Dyadic(1, -2):
            # the closed disk |z| <= t is invariant when t**2 + |c| <= t
            t = (1 + math.sqrt(max(0.0, 1 - 4 * self.cmax))) / 2 * (1 - 1e-9)
            tx = int(math.floor(t * one))
            tf = Fraction(tx, one)
            cm = self.cmax_exact.to_fraction()
            # valid t form the interval between the roots of t^2 - t + |c|, which contains 1/2
            while tf * tf + cm > tf:
                tx = (tx + (one >> 1)) >> 1 if abs(tx - (one >> 1)) > 1 else one >> 1
                tf = Fraction(tx, one)
            self.traps.append(Trap(0, 0, tx, "invariant-disk"))
        elif find_cycles and self.connected:
            self._find_attracting_cycle()
        for t in self.traps:
            self.trap_reach = max(self.trap_reach, fx_abs_upper(t.x * t.x + t.y * t.y) + t.rho)

    # attracting cycles ------------------------------------------------
    def _find_attracting_cycle(self) -> None:
        c = float(self.center)
        z = 0.0
        for _ in range(6000):
            z = z * z + c
            if abs(z) > 2:
                return
        orbit = [z]
        for _ in range(2 * TRAP_MAX_PERIOD):
            z = z * z + c
            orbit.append(z)
        period = None
        for p in range(1, TRAP_MAX_PERIOD + 1):
            if all(abs(orbit[i + p] - orbit[i]) < 1e-9 * (1 + abs(orbit[i])) for i in range(TRAP_MAX_PERIOD)):
                period = p
                break
        if period is None:
            return
        cyc = [orbit[i] for i in range(period)]
        lam = 1.0
        for w in cyc:
            lam *= 2 * w
        if abs(lam) > 1 - 1e-6:
            return
        spacing = min((abs(u - v) for i, u in enumerate(cyc) for v in cyc[i + 1:]), default=1.0)
        s = self.s
        for w in cyc:
            rho = min(0.25 * spacing, 0.25) if period > 1 else 0.25
            for _ in range(40):
                rx = int(round(w * (1 << s)))
                rr = int(rho * (1 << s))
                if rr > 0 and self._certify_trap(rx, rr, period):
                    self.traps.append(Trap(rx, 0, rr, f"attracting-cycle-{period}"))
                    break
                rho /= 2

    def _certify_trap(self, x0: int, rho: int, period: int) -> bool:
        x, y, r = x0, 0, rho
        a, rc, s = self.a, self.rc, self.s
        half = 1 << (s - 1)
        for _ in range(period):
            xx, yy = x * x, y * y
            nr = ((2 * fx_abs_upper(xx + yy) * r + r * r) >> s) + 2 + rc
            x, y = ((xx - yy + half) >> s) + a, ((2 * x * y + half) >> s)
            r = nr
        dx = x - x0
        return r < rho and dx * dx + y * y < (rho - r) * (rho - r)

    # membership helpers -------------------------------------------------
    def real_in_k(self, x: int, y: int) -> bool:
        return y == 0 and self.beta_lo is not None and abs(x) <= self.beta_lo

    def describe(self) -> dict:
        return {
            "center": str(self.center),
            "radius": str(self.radius),
            "scale_bits": self.s,
            "connected": self.connected,
            "traps": [t.to_json(self.s) for t in self.traps],
        }

    # orbits -------------------------------------------------------------
    def orbit(self, x: int, y: int, max_iter: int, koebe: bool = True, direction: bool = False) -> OrbitResult:
        """Classify the exact point x + iy (fixed point at scale s)."""
        s = self.s
        if self.real_in_k(x, y):
            return OrbitResult("trap", 0)
        a, b, rc = self.a, 0, self.rc
        half = 1 << (s - 1)
        bail = self.bail
        big = self.big if (koebe and self.connected) else bail
        traps = self.traps
        reach2 = self.trap_reach * self.trap_reach
        r = 0
        inv = 1.0 / (1 << s) if s < 1000 else 0.0
        log_lo = 0.0
        log_hi = 0.0
        zero_lo = False
        dz = 1 + 0j
        zf = complex(x * inv, y * inv) if direction else 0j
        k = 0
        while True:
            xx = x * x
            yy = y * y
            q = xx + yy
            t = big + r
            if q > t * t:
                break
            if r > bail and 4 * r * r > q:
                return OrbitResult("undecided", k)
            if traps and q <= reach2:
                for tr in traps:
                    if r <= tr.rho:
                        dx = x - tr.x
                        dy = y - tr.y
                        m = tr.rho - r
                        if dx * dx + dy * dy <= m * m:
                            return OrbitResult("trap", k)
            if k >= max_iter:
                return OrbitResult("undecided", k)
            au = fx_abs_upper(q)
            if koebe:
                al = fx_abs_lower(q) - r
                au_f = (au + r) * inv
                log_hi += math.log(au_f) if au_f > 0 else -745.0
                if al > 0:
                    log_lo += math.log(al * inv)
                else:
                    zero_lo = True
            if direction:
                dz = 2 * zf * dz
                zf = zf * zf + a * inv
            nr = ((2 * au * r + r * r) >> s) + 2 + rc if r else 1 + rc
            x, y = ((xx - yy + half) >> s) + a, ((x * y + (half >> 1)) >> (s - 1)) + b
            r = nr
            k += 1
        if not (koebe and self.connected):
            # escaped past |z| > 2 but no Koebe data
            return OrbitResult("escape", k)
        # |z_k| in [zl, zh]; |D_k| = 2^k prod_{j<k} |z_j|
        zl = (fx_abs_lower(x * x + y * y) - r) * inv
        zh = (fx_abs_upper(x * x + y * y) + r) * inv
        if zl <= 1:
            return OrbitResult("escape", k)
        u = self.cmax / (zl * zl)
        eta = 2 * u / (1 - u)
        tail = u / (1 - u)
        g_lo = math.log(zl) - tail
        g_hi = math.log(zh) + tail
        if g_lo <= 0:
            return OrbitResult("escape", k)
        ln2k = k * math.log(2.0)
        slack = SAFETY + 4e-16 * (k + 4) * (1 + abs(log_hi) + abs(log_lo) + ln2k)
        # log of |grad G| * 2^k from q_k = |D_k|/|z_k|
        logq_hi = ln2k + log_hi - math.log(zl) + math.log1p(eta)
        logq_lo = (ln2k + log_lo - math.log(zh) + math.log1p(-eta)) if not zero_lo else -math.inf
        # sinh(G)/G is increasing in G; G = 2^-k g
        G_lo = math.ldexp(g_lo, -k)
        G_hi = math.ldexp(g_hi, -k)
        sg_lo = _sinhc(G_lo)
        sg_hi = _sinhc(G_hi)
        lower = 0.5 * sg_lo * g_lo * math.exp(-logq_hi - slack) if logq_hi < 700 else 0.0
        if logq_lo == -math.inf:
            upper = math.inf
        else:
            e = math.log(2 * sg_hi * g_hi) - logq_lo + slack
            upper = math.exp(e) if e < 700 else math.inf
        lower *= 1 - SAFETY
        upper *= 1 + SAFETY
        res = OrbitResult("escape", k, lower, upper)
        if direction and dz != 0:
            est = abs(zf) * math.log(abs(zf)) / abs(dz) if abs(zf) > 1 else math.nan
            grad = (dz / zf).conjugate()
            res.direction = grad / abs(grad)
            res.estimate = est
        return res

    def ball_fate(self, x: int, y: int, rho: int, max_iter: int) -> str:
        """'escape' if the disk escapes, 'interior' if it falls into an open trap."""
        s = self.s
        a, rc = self.a, self.rc
        half = 1 << (s - 1)
        bail = self.bail
        traps = self.traps
        reach2 = self.trap_reach * self.trap_reach
        r = rho
        for k in range(max_iter + 1):
            xx = x * x
            yy = y * y
            q = xx + yy
            t = bail + r
            if q > t * t:
                self.last_steps = k
                return "escape"
            if traps and q <= reach2:
                for tr in traps:
                    if r < tr.rho:
                        dx = x - tr.x
                        dy = y - tr.y
                        m = tr.rho - r
                        if dx * dx + dy * dy < m * m:
                            self.last_steps = k
                            return "interior"
            if r > bail:
                self.last_steps = k
                return "undecided"
            au = fx_abs_upper(q)
            r = ((2 * au * r + r * r) >> s) + 2 + rc
            x, y = ((xx - yy + half) >> s) + a, ((x * y + (half >> 1)) >> (s - 1))
        self.last_steps = max_iter
        return "undecided"


def _sinhc(g: float) -> float:
    if g < 1e-8:
        return 1.0
    if g > 700:
        return math.inf
    return math.sinh(g) / g


_CONTEXT_CACHE: dict = {}


def param_context(center: Dyadic, radius: Dyadic, s: int) -> ParamContext:
    key = (center, radius, s)
    ctx = _CONTEXT_CACHE.get(key)
    if ctx is None:
        if len(_CONTEXT_CACHE) > 256:
            _CONTEXT_CACHE.clear()
        ctx = ParamContext(center, radius, s)
        _CONTEXT_CACHE[key] = ctx
    return ctx


def context_from_oracle(oracle, meter: CostMeter, m: int, s: int | None = None, trust_exact: bool = True) -> ParamContext:
    """Read c at precision m and build the context for the ball it certifies.

    A tape that declares an exact dyadic value, and whose answer equals it,
    yields a point ball when ``trust_exact`` is set.
    """
    center = query(oracle, meter, m)
    radius = Dyadic(1, -(m - 1))
    if trust_exact and getattr(oracle, "is_exact", False) and oracle.exact_value() == center:
        radius = Dyadic(0)
    if s is None:
        s = m + 40
    return param_context(center, radius, max(s, m + 8))


# ---------------------------------------------------------------------------
# covers


class Tally:
    """Step counter that charges a meter in bulk and enforces a budget."""

    __slots__ = ("meter", "limit", "steps", "partial")

    def __init__(self, meter: CostMeter | None, limit: float):
        self.meter = meter
        self.limit = limit
        self.steps = 0
        self.partial = (0.0, math.inf)  # best bracket so far, kept for budget overruns

    def add(self, k: int) -> None:
        self.steps += k
        if self.meter is not None:
            self.meter.tick(k)
        if self.steps > self.limit:
            raise BudgetExceeded


def _orbit(ctx, x, y, max_iter, tally, koebe=True, direction=False):
    res = ctx.orbit(x, y, max_iter, koebe=koebe, direction=direction)
    tally.add(res.steps + 1)
    return res


def cover_free(ctx: ParamContext, cx: int, cy: int, w: int, tally: Tally, max_iter: int,
               max_depth: int = 6, disk: int | None = None, want: str | None = None) -> bool:
    """Certify that a closed square (or square-clipped disk) contains no point of J.

    The square has center (cx, cy) and half-width w in fixed point.  When
    ``disk`` is given, only the part of the square inside the closed disk of
    that radius around (cx, cy) must be certified.  Pieces are settled by
    the quick exterior bound, a Koebe disk around an escaping center, or a
    ball iterate that escapes or falls into an open trap.  ``want`` restricts
    to 'exterior' or 'interior' pieces.
    """
    s = ctx.s
    rk = ctx.rk
    box0 = (cx, cy, w, 0)
    stack = [box0]
    seen_out = seen_in = False
    scale = 1.0 / (1 << s) if s < 1000 else 0.0
    t0 = ctx.traps[0] if ctx.traps and ctx.traps[0].kind == "invariant-disk" else None
    while stack:
        qx, qy, pw, depth = stack.pop()
        if disk is not None:
            # skip pieces entirely outside the disk
            dx = max(abs(qx - cx) - pw, 0)
            dy = max(abs(qy - cy) - pw, 0)
            if dx * dx + dy * dy > disk * disk:
                continue
        rho = int(pw * SQRT2_UP) + 1  # radius of the disk circumscribing the piece
        q2 = qx * qx + qy * qy
        if want != "interior":
            t = rk + rho
            if q2 > t * t:
                seen_out = True
                continue
        if t0 is not None and want != "exterior":
            m = t0.rho - rho
            if m > 0 and q2 < m * m:
                seen_in = True
                continue
        res = _orbit(ctx, qx, qy, max_iter, tally)
        settled = False
        if res.status == "escape":
            seen_out = True
            if want == "interior":
                return False
            if res.lower * (1 << s) > rho if s < 1000 else False:
                settled = True
            elif not ctx.connected:
                fate = ctx.ball_fate(qx, qy, rho, max_iter)
                tally.add(ctx.last_steps + 1)
                settled = fate == "escape"
        elif res.status == "trap":
            seen_in = True
            if want == "exterior":
                return False
            fate = ctx.ball_fate(qx, qy, rho, max_iter)
            tally.add(ctx.last_steps + 1)
            settled = fate == "interior"
        if seen_in and seen_out:
            return False
        if settled:
            continue
        if depth >= max_depth or pw < 4:
            return False
        h2 = pw >> 1
        if h2 == 0:
            return False
        for ox in (-h2, h2):
            for oy in (-h2, h2):
                stack.append((qx + ox, qy + oy, pw - h2, depth + 1))
    del scale
    return True


# ---------------------------------------------------------------------------
# pixel decisions


@dataclass
class DecideOptions:
    max_iter: int | None = None
    tick_limit: float = 2.0e6
    precision_doublings: int = 2
    cover_depth: int = 6
    extra_bits: int = 8
    trust_exact: bool = True


def _default_iter(n: int) -> int:
    return max(256, 32 * n)


def decide_pixel(q: PixelQuery, oracle_c, meter: CostMeter, options: DecideOptions | None = None,
                 prec: Precision | None = None) -> PixelAnswer:
    """Answer the pixel query q for J_c.

    bit 0 is returned exactly when a certified lower bound >= h on the
    max-norm distance was obtained; CertifiedFar additionally means > 2h.
    CertifiedNear means a certified distance < h.  Bounds from successive
    precision attempts are all rigorous for the true c, so they are merged.
    """
    opt = options or DecideOptions()
    n = q.resolution
    hf = math.ldexp(1.0, -n)
    m = n + opt.extra_bits
    max_iter = opt.max_iter or _default_iter(n)
    lower, upper, side = 0.0, math.inf, None
    for _ in range(opt.precision_doublings + 1):
        s = max((prec.working_bits if prec else 0), m + n + 32, q.point.precision + 16)
        ctx = context_from_oracle(oracle_c, meter, m, s, opt.trust_exact)
        lo, up, sd = _decide_with(ctx, q, meter, max_iter, opt)
        lower, upper, side = max(lower, lo), min(upper, up), side or sd
        if lower > 2 * hf or upper < hf:
            break
        if ctx.radius == 0 and max_iter >= opt.tick_limit:
            break
        m *= 2
        max_iter *= 2
    if lower > 2 * hf:
        return PixelAnswer(0, Provenance.FAR, lower, upper, side)
    if upper < hf:
        return PixelAnswer(1, Provenance.NEAR, lower, upper)
    return PixelAnswer(0 if lower >= hf else 1, Provenance.BORDERLINE, lower, upper, side if lower > 0 else None)


def _decide_with(ctx: ParamContext, q: PixelQuery, meter: CostMeter, max_iter: int, opt: DecideOptions):
    """One attempt at a fixed oracle precision: certified (lower, upper, side) for d_inf(x, J)."""
    s = ctx.s
    n = q.resolution
    x, y = q.point.re.scaled(s), q.point.im.scaled(s)
    h = 1 << (s - n)
    hf = math.ldexp(1.0, -n)
    far = 2 * hf * (1 + 1e-12)
    tally = Tally(meter, opt.tick_limit)
    lower = 0.0
    upper = math.inf

    q2 = x * x + y * y
    # quick exterior: |x| > R_K + 2 sqrt2 h  =>  d_inf > 2h
    two_h_diag = int(2 * h * SQRT2_UP) + 2
    t = ctx.rk + two_h_diag
    if q2 > t * t:
        return far, upper, "exterior"
    t0 = ctx.traps[0] if ctx.traps and ctx.traps[0].kind == "invariant-disk" else None
    if t0 is not None:
        mm = t0.rho - two_h_diag
        if mm > 0 and q2 < mm * mm:
            return far, upper, "interior"
    side = None
    try:
        res = _orbit(ctx, x, y, max_iter, tally, direction=True)
        if res.status == "escape":
            side = "exterior"
            lower = max(lower, res.lower / SQRT2_UP)
            upper = min(upper, res.upper)
            if lower > 2 * hf or upper < hf:
                return lower, upper, side
            guess = res.estimate / SQRT2_UP if math.isfinite(res.estimate) else 0.0
            if guess > 1.3 * hf:
                if cover_free(ctx, x, y, 2 * h, tally, max_iter, opt.cover_depth):
                    return max(lower, far), upper, side
                if upper > 2 * hf and cover_free(ctx, x, y, h, tally, max_iter, opt.cover_depth):
                    return max(lower, hf), upper, side
            upper = min(upper, _near_escaping(ctx, x, y, res, h, hf, tally, max_iter))
            if upper < hf:
                return lower, upper, side
            if upper > 2 * hf and lower < hf and cover_free(ctx, x, y, h, tally, max_iter, opt.cover_depth):
                lower = max(lower, hf)
            return lower, upper, side
        if res.status == "trap":
            side = "interior"
            if cover_free(ctx, x, y, 2 * h, tally, max_iter, opt.cover_depth, want="interior"):
                return far, upper, side
            upper = min(upper, _near_inside(ctx, x, y, h, hf, tally, max_iter))
            if upper < hf:
                return lower, upper, side
            if upper > 2 * hf and cover_free(ctx, x, y, h, tally, max_iter, opt.cover_depth, want="interior"):
                lower = max(lower, hf)
            return lower, upper, side
        upper = min(upper, _near_inside(ctx, x, y, h, hf, tally, max_iter, center_in_k=False))
        if upper < hf:
            return lower, upper, side
        if upper > 2 * hf and cover_free(ctx, x, y, h, tally, max_iter, opt.cover_depth):
            lower = max(lower, hf)
        return lower, upper, side
    except BudgetExceeded:
        return lower, upper, side


_PAIR_OFFSETS = sorted(
    ((i, j) for i in range(-2, 3) for j in range(-2, 3) if (i, j) != (0, 0)),
    key=lambda p: (max(abs(p[0]), abs(p[1])), abs(p[0]) + abs(p[1]), p),
)


def _near_escaping(ctx, x, y, res, h, hf, tally, max_iter) -> float:
    """Upper bound on d_inf(x, J) for an escaping x: Koebe walk toward J, then K witnesses."""
    s = ctx.s
    best = res.upper
    scale = math.ldexp(1.0, -s)
    if math.isfinite(res.estimate) and res.direction:
        bx, by = x, y
        cur = res
        fine = max(1, h >> 8)
        for _ in range(4):
            step = 0.85 * cur.estimate
            if not math.isfinite(step) or step <= 0:
                break
            nx = bx - int(round(step * cur.direction.real / scale / fine)) * fine
            ny = by - int(round(step * cur.direction.imag / scale / fine)) * fine
            nxt = _orbit(ctx, nx, ny, max_iter, tally, direction=True)
            if nxt.status != "escape":
                break
            off = max(abs(nx - x), abs(ny - y)) * scale
            best = min(best, off + nxt.upper)
            if best < hf:
                return best
            bx, by, cur = nx, ny, nxt
            if not math.isfinite(cur.estimate):
                break
    # an escaping x and a point of K within h/2 pin J inside the closed h/2-square
    half = h >> 1
    quarter = h >> 2
    cands = []
    if abs(y) <= half and ctx.beta_lo is not None and abs(x) <= ctx.beta_lo:
        cands.append((x, 0))
    cands += [(x + i * quarter, y + j * quarter) for i, j in _PAIR_OFFSETS]
    for cx, cy in cands:
        r = _orbit(ctx, cx, cy, max_iter, tally, koebe=False)
        if r.status == "trap":
            return min(best, max(abs(cx - x), abs(cy - y)) * scale)
    return best


def _near_inside(ctx, x, y, h, hf, tally, max_iter, center_in_k=True) -> float:
    """Upper bound on d_inf(x, J) using escaping/K witness pairs within h/2."""
    s = ctx.s
    scale = math.ldexp(1.0, -s)
    quarter = h >> 2
    seen_out = None
    seen_in = (x, y) if center_in_k else None
    best = math.inf
    for i, j in _PAIR_OFFSETS:
        cx, cy = x + i * quarter, y + j * quarter
        r = _orbit(ctx, cx, cy, max_iter, tally, koebe=True)
        if r.status == "escape":
            best = min(best, max(abs(cx - x), abs(cy - y)) * scale + r.upper)
            if seen_out is None:
                seen_out = (cx, cy)
        elif r.status == "trap" and seen_in is None:
            seen_in = (cx, cy)
        if seen_in is not None and seen_out is not None:
            d = max(abs(seen_in[0] - x), abs(seen_in[1] - y), abs(seen_out[0] - x), abs(seen_out[1] - y)) * scale
            return min(best, d)
        if best < hf:
            return best
    return best


# ---------------------------------------------------------------------------
# distance brackets


def certify_escape(z: Ball, c: Ball, max_iter: int, prec: Precision | None = None):
    """('Escaped', k, (lo, hi)) if the k-th iterate ball lies in |w| > 2, else ('Undecided',)."""
    if c.is_whole or z.is_whole:
        return ("Undecided",)
    cl, ch = c.abs_bounds()
    if ch is None or ch > 2:
        raise ValueError("certify_escape needs |c| <= 2")
    s = max((prec.working_bits if prec else 64), 64)
    s = max(s, z.radius.denominator_bits(), z.re.denominator_bits(), z.im.denominator_bits(),
            c.re.denominator_bits(), c.im.denominator_bits(), 1)
    s = min(s + 32, s + 64)
    x, y, r = fx_ball(z, s)
    a, b, rc = fx_ball(c, s)
    bail = 2 << s
    half = 1 << (s - 1)
    for k in range(max_iter + 1):
        q = x * x + y * y
        t = bail + r
        if q > t * t:
            lo = Dyadic(max(fx_abs_lower(q) - r, 0), -s)
            hi = Dyadic(fx_abs_upper(q) + r, -s)
            return ("Escaped", k, (lo, hi))
        if r > (1 << (s + 64)):
            return ("Undecided",)
        if k == max_iter:
            break
        nr = ((2 * fx_abs_upper(q) * r + r * r) >> s) + 2 + rc if r else 1 + rc
        x, y = ((x * x - y * y + half) >> s) + a, ((x * y + (half >> 1)) >> (s - 1)) + b
        r = nr
    return ("Undecided",)


def distance_estimate(z: DyadicPoint, oracle_c, meter: CostMeter, target_n: int = 8, budget: int = 10 ** 4) -> DistanceBracket:
    """Certified Euclidean bracket on dist(z, J_c).

    Starts from the Koebe bracket (escaping z) or trap membership (z in K),
    then tightens the lower bound with certified J-free disks and the upper
    bound by bisecting toward the other side of J.  When the budget runs out
    the best bracket so far is returned with ``undecided`` set.
    """
    target = math.ldexp(1.0, -target_n)
    m = target_n + 8
    start = meter.ticks
    lo_best, hi_best = 0.0, math.inf
    for _ in range(3):
        remaining = budget - (meter.ticks - start)
        if remaining <= m:
            break
        ctx = context_from_oracle(oracle_c, meter, m, 2 * m + 40)
        tally = Tally(meter, budget - (meter.ticks - start))
        try:
            lo, hi = _bracket_with(ctx, z, tally, target, _default_iter(target_n) * 4)
        except BudgetExceeded:
            lo, hi = tally.partial
            lo_best, hi_best = max(lo_best, lo), min(hi_best, hi)
            break
        lo_best, hi_best = max(lo_best, lo), min(hi_best, hi)
        if hi_best - lo_best <= target:
            return DistanceBracket(_down(lo_best), _up(hi_best))
        m *= 2
    return DistanceBracket(_down(lo_best), _up(hi_best), undecided=True)


def _bracket_with(ctx: ParamContext, z: DyadicPoint, tally: Tally, target: float, max_iter: int):
    s = ctx.s
    scale = math.ldexp(1.0, -s)
    x, y = z.re.scaled(s), z.im.scaled(s)
    lo, hi = 0.0, math.inf
    tally.partial = (lo, hi)
    r0 = math.hypot(x * scale, y * scale)
    if r0 > ctx.rk_float:
        lo = (r0 - ctx.rk_float) * (1 - 1e-12)
    res = _orbit(ctx, x, y, max_iter, tally, direction=True)
    inside = res.status == "trap"
    if res.status == "escape":
        lo = max(lo, res.lower)
        hi = min(hi, res.upper)
    tally.partial = (lo, hi)
    # upper: bisect the segment from z toward a point on the other side of J
    other = _find_other_side(ctx, x, y, inside, res, tally, max_iter)
    if other is not None:
        ox, oy = other
        a_in, b_in = (x, y), (ox, oy)  # a: same side as z, b: other side
        for _ in range(60):
            mx, my = (a_in[0] + b_in[0]) >> 1, (a_in[1] + b_in[1]) >> 1
            if (mx, my) in (a_in, b_in):
                break
            r = _orbit(ctx, mx, my, max_iter, tally, koebe=not inside)
            side_in = r.status == "trap"
            if r.status == "undecided":
                break
            if side_in == inside:
                a_in = (mx, my)
            else:
                b_in = (mx, my)
            d = _dist_up(x - b_in[0], y - b_in[1], s)
            hi = min(hi, d)
            tally.partial = (lo, hi)
            if _dist_up(a_in[0] - b_in[0], a_in[1] - b_in[1], s) < target / 8:
                break
    # lower: largest certified J-free disk around z
    lo_try = lo
    hi_try = hi if math.isfinite(hi) else max(4 * lo, 1.0)
    for _ in range(40):
        if hi_try - lo_try <= target / 4:
            break
        mid = 0.5 * (lo_try + hi_try) if lo_try > 0 else hi_try / 2
        rad = int(mid / scale)
        if rad <= 0:
            break
        want = "interior" if inside else ("exterior" if res.status == "escape" else None)
        if cover_free(ctx, x, y, rad, tally, max_iter, max_depth=14, disk=rad, want=want):
            lo_try = mid
            lo = max(lo, mid * (1 - 1e-12))
            tally.partial = (lo, hi)
        else:
            hi_try = mid
        if hi - lo <= target:
            break
    return lo, hi


def _dist_up(dx: int, dy: int, s: int) -> float:
    return (fx_abs_upper(dx * dx + dy * dy) * math.ldexp(1.0, -s)) * (1 + 1e-15)


def _find_other_side(ctx, x, y, inside, res, tally, max_iter):
    s = ctx.s
    one = 1 << s
    if not inside:
        # a point of K: the real segment or a trap center
        cands = []
        if ctx.beta_lo is not None:
            cands.append((max(-ctx.beta_lo, min(ctx.beta_lo, x)), 0))
        cands += [(t.x, t.y) for t in ctx.traps]
        for cx, cy in cands:
            r = _orbit(ctx, cx, cy, max_iter, tally, koebe=False)
            if r.status == "trap":
                return cx, cy
        return None
    # from inside: walk outward along the ray away from the origin or axis
    dirs = []
    if x or y:
        norm = math.hypot(x, y)
        dirs.append((x / norm, y / norm))
    dirs += [(1, 0), (-1, 0), (0, 1), (0, -1)]
    for ux, uy in dirs:
        for k in range(0, 12):
            d = 4.0 * 2.0 ** -k
            px, py = x + int(ux * d * one), y + int(uy * d * one)
            r = _orbit(ctx, px, py, max_iter, tally, koebe=False)
            if r.status != "escape":
                break
            last = (px, py)
        else:
            return last
        if k > 0:
            return last
    return None


# ---------------------------------------------------------------------------
# rendering


@dataclass
class GridImage:
    region: tuple[Dyadic, Dyadic, Dyadic, Dyadic]  # x0, y0, x1, y1
    resolution: int
    cells: np.ndarray  # uint8, shape (height, width), row 0 at y0
    interior: np.ndarray  # bool, Out cells certified through a trap
    max_ticks: int = 0
    total_ticks: int = 0
    c_descriptor: dict = field(default_factory=dict)
    records: dict = field(default_factory=dict)

    def record(self, i: int, j: int) -> dict:
        """How cell (i, j) was certified; replay with ``decide_pixel`` on the cell center."""
        ans = self.records.get((i, j))
        v = int(self.cells[i, j])
        if ans is not None:
            return {"provenance": ans.provenance.value, "bit": ans.bit, "lower": ans.lower, "upper": ans.upper, "side": ans.side}
        if v == Cell.OUT.value:
            rule = "invariant-disk" if self.interior[i, j] else "outside-escape-disk"
            return {"provenance": Provenance.FAR.value, "bit": 0, "rule": rule}
        return {"provenance": Provenance.BORDERLINE.value, "bit": None}

    def replay(self, i: int, j: int, oracle_c, options: "DecideOptions | None" = None) -> bool:
        """Re-decide cell (i, j) and check it lands in the same class."""
        ans = decide_pixel(PixelQuery(self.center(i, j), self.resolution), oracle_c, CostMeter(), options)
        return _cell_of(ans) == int(self.cells[i, j])

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    def center(self, i: int, j: int) -> DyadicPoint:
        """Center of the cell in row i, column j."""
        n = self.resolution
        x0 = self.region[0].scaled(n)
        y0 = self.region[1].scaled(n)
        return DyadicPoint.from_grid(x0 + j, y0 + i, n)

    def sidecar(self) -> dict:
        return {
            "schema": SCHEMA,
            "region": [str(v) for v in self.region],
            "n": self.resolution,
            "c_descriptor": self.c_descriptor,
            "max_ticks": self.max_ticks,
        }

    def to_pgm(self) -> bytes:
        h, w = self.cells.shape
        header = f"P5\n{w} {h}\n255\n".encode()
        # PGM rows go top to bottom: flip so larger imaginary parts are on top
        return header + np.ascontiguousarray(self.cells[::-1]).astype(np.uint8).tobytes()

    def counts(self) -> dict:
        return {name: int((self.cells == cell.value).sum()) for name, cell in (("in", Cell.IN), ("out", Cell.OUT), ("ambiguous", Cell.AMBIGUOUS))}


SCHEMA = "juliacert/v1"


def _descriptor(oracle_c) -> dict:
    d = getattr(oracle_c, "descriptor", None)
    return dict(d()) if callable(d) else {}


def _cell_of(ans: PixelAnswer) -> int:
    if ans.provenance == Provenance.NEAR:
        return Cell.IN.value
    if ans.provenance == Provenance.FAR:
        return Cell.OUT.value
    return Cell.AMBIGUOUS.value


def _region_grid(region, n):
    x0, y0, x1, y1 = (Dyadic.of(v) for v in region)
    for v in (x0, y0, x1, y1):
        if not v.in_dn(n):
            raise ValueError("region corners must be dyadic at precision <= n")
    if x1 < x0 or y1 < y0:
        raise ValueError("region corners are out of order")
    return (x0, y0, x1, y1), x0.scaled(n), y0.scaled(n), x1.scaled(n), y1.scaled(n)


def render_grid(region, n: int, oracle_c, meter: CostMeter, options: DecideOptions | None = None,
                mask: np.ndarray | None = None) -> GridImage:
    """Decide every pixel center (x0 + j h, y0 + i h) of the half-open region.

    Cells settled by the quick exterior or invariant-disk test are decided in
    bulk with the same exact comparisons ``decide_pixel`` makes first; the
    rest call ``decide_pixel`` one by one.  ``mask`` (optional, bool) limits
    the work to selected cells; unselected cells are left Out.
    """
    opt = options or DecideOptions()
    corners, vx0, vy0, vx1, vy1 = _region_grid(region, n)
    w, h = vx1 - vx0, vy1 - vy0
    cells = np.full((h, w), Cell.OUT.value, dtype=np.uint8)
    interior = np.zeros((h, w), dtype=bool)
    img = GridImage(corners, n, cells, interior, 0, 0, _descriptor(oracle_c))
    if w == 0 or h == 0:
        return img
    m = n + opt.extra_bits
    probe = CostMeter()
    s = m + n + 32
    ctx = context_from_oracle(oracle_c, probe, m, s, opt.trust_exact)
    # bulk test in integer units of 2^-(n) scaled to s bits; use Python ints via object arrays when large
    vx = np.arange(vx0, vx1, dtype=object)
    vy = np.arange(vy0, vy1, dtype=object)
    shift = s - n
    r2 = (vx[None, :] ** 2 + vy[:, None] ** 2) * (1 << (2 * shift)) if shift < 64 else None
    hh = 1 << shift
    two_h_diag = int(2 * hh * SQRT2_UP) + 2
    quick = np.zeros((h, w), dtype=bool)
    quick_in = np.zeros((h, w), dtype=bool)
    if r2 is not None:
        t = ctx.rk + two_h_diag
        quick = np.asarray(r2 > t * t, dtype=bool)
        t0 = ctx.traps[0] if ctx.traps and ctx.traps[0].kind == "invariant-disk" else None
        if t0 is not None and t0.rho > two_h_diag:
            mm = t0.rho - two_h_diag
            quick_in = np.asarray(r2 < mm * mm, dtype=bool)
    todo = ~(quick | quick_in)
    if mask is not None:
        todo &= mask
    interior[quick_in] = True
    base_ticks = m  # one oracle read
    settled = int((quick | quick_in).sum()) if mask is None else int(((quick | quick_in) & mask).sum())
    max_ticks = base_ticks if settled else 0
    total = base_ticks * settled
    for i, j in zip(*np.nonzero(todo)):
        cm = CostMeter()
        q = PixelQuery(DyadicPoint.from_grid(vx0 + int(j), vy0 + int(i), n), n)
        ans = decide_pixel(q, oracle_c, cm, opt)
        if ans.bit == 1:
            cells[i, j] = Cell.IN.value if ans.provenance == Provenance.NEAR else Cell.AMBIGUOUS.value
        elif ans.provenance == Provenance.BORDERLINE:
            cells[i, j] = Cell.AMBIGUOUS.value
        else:
            interior[i, j] = ans.side == "interior"
        if ans.provenance != Provenance.BORDERLINE:
            img.records[(int(i), int(j))] = ans
        max_ticks = max(max_ticks, cm.ticks)
        total += cm.ticks
    img.max_ticks = max_ticks
    img.total_ticks = total
    meter.tick(total)
    return img


def write_image(img: GridImage, pgm_path, sidecar_path=None, png_path=None) -> None:
    import json
    from pathlib import Path

    Path(pgm_path).write_bytes(img.to_pgm())
    if sidecar_path is not None:
        Path(sidecar_path).write_text(json.dumps(img.sidecar(), sort_keys=True, indent=2) + "\n")
    if png_path is not None:
        from PIL import Image

        Image.fromarray(np.ascontiguousarray(img.cells[::-1])).save(png_path)


# ---------------------------------------------------------------------------
# machines and T_M(n)


def estimator_machine(q: PixelQuery, oracle_c, meter: CostMeter) -> int:
    """The certified decider above, as a pixel machine."""
    return decide_pixel(q, oracle_c, meter).bit


def escape_time_machine(q: PixelQuery, oracle_c, meter: CostMeter, max_iter: int | None = None) -> int:
    """Naive machine: 0 iff the pixel center is seen to escape within max_iter steps."""
    n = q.resolution
    m = n + 8
    ctx = context_from_oracle(oracle_c, meter, m, m + n + 32)
    s = ctx.s
    res = ctx.orbit(q.point.re.scaled(s), q.point.im.scaled(s), max_iter or 16 * n, koebe=False)
    meter.tick(res.steps + 1)
    return 0 if res.status == "escape" else 1


def constant_machine(bit: int, steps: int = 1) -> Callable:
    def machine(q: PixelQuery, oracle_c, meter: CostMeter) -> int:
        meter.tick(steps)
        return bit

    machine.__name__ = f"constant_{bit}"
    return machine


@dataclass
class MeasureResult:
    value: int
    sampled: bool
    points: int
    argmax: DyadicPoint | None = None

    def __int__(self):
        return self.value


def ball_grid(n: int, C) -> Iterable[tuple[int, int]]:
    """Grid indices (vx, vy) of size-n dyadic points in the closed disk of radius 2C."""
    R = Dyadic.of(C).shift(1)
    Rn = R.scaled(n) if R.in_dn(n) else R.floor_scaled(n)
    R2 = (R * R).scaled(2 * n) if (R * R).in_dn(2 * n) else (R * R).floor_scaled(2 * n)
    for vy in range(-Rn, Rn + 1):
        span = math.isqrt(max(0, R2 - vy * vy))
        for vx in range(-span, span + 1):
            yield vx, vy


def measure_T(machine: Callable, n: int, C, oracle_c, max_points: int | None = 200_000, seed: int = 0) -> MeasureResult:
    """Max ticks of ``machine`` over size-n dyadic points in the 2C-ball.

    Exhaustive when the grid has at most ``max_points`` points, otherwise a
    seeded uniform sample of that many points (flagged ``sampled``).
    """
    R = int(math.ceil(2 * float(Dyadic.of(C)) * (1 << n)))
    approx = math.pi * R * R
    pts: Iterable
    sampled = max_points is not None and approx > max_points
    if sampled:
        rng = random.Random(seed)
        R2 = (2 * Fraction(Dyadic.of(C).to_fraction())) ** 2 * (1 << (2 * n))
        chosen = []
        while len(chosen) < max_points:
            vx, vy = rng.randint(-R, R), rng.randint(-R, R)
            if vx * vx + vy * vy <= R2:
                chosen.append((vx, vy))
        pts = chosen
    else:
        pts = ball_grid(n, C)
    best, arg, count = -1, None, 0
    for vx, vy in pts:
        meter = CostMeter()
        q = PixelQuery(DyadicPoint.from_grid(vx, vy, n), n)
        machine(q, oracle_c, meter)
        count += 1
        if meter.ticks > best:
            best, arg = meter.ticks, q.point
    return MeasureResult(best, sampled, count, arg)
