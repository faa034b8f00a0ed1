"""Set distances between finite dyadic point sets and rendered grids.

Distances are exact in the max norm (called L1 here, the pixel norm) and
certified brackets in the Euclidean norm, computed from exact squared
distances.  The quadratic double loop is the reference; ``one_sided_dist``
uses a bucketed search that returns the same exact value.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np

from .numerics import Dyadic, DyadicPoint, Interval, sqrt_bounds
from .oracle import CostMeter, OracleTape, oracle_from_dyadic, query
from .pixel import Cell, DecideOptions, GridImage, render_grid

NORMS = ("L1", "Euclid")


@dataclass(frozen=True)
class PointSet:
    points: tuple
    ambient_norm: str = "L1"
    descriptor: dict = field(default_factory=dict, compare=False)

    def __init__(self, points: Iterable, ambient_norm: str = "L1", descriptor: dict | None = None):
        if ambient_norm not in NORMS:
            raise ValueError(f"unknown norm {ambient_norm!r}")
        pts = tuple(sorted(set(p if isinstance(p, DyadicPoint) else DyadicPoint(*p) for p in points)))
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "ambient_norm", ambient_norm)
        object.__setattr__(self, "descriptor", dict(descriptor or {}))

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def with_norm(self, norm: str) -> "PointSet":
        return PointSet(self.points, norm, self.descriptor)


def _common_scale(*sets: PointSet) -> int:
    return max((p.precision for s in sets for p in s.points), default=0)


def _ints(ps: PointSet, n: int) -> list[tuple[int, int]]:
    return [(p.re.scaled(n), p.im.scaled(n)) for p in ps.points]


def _check(a: PointSet, b: PointSet) -> str:
    if not len(a) or not len(b):
        raise ValueError("distance between empty point sets is undefined")
    if a.ambient_norm != b.ambient_norm:
        raise ValueError("point sets use different norms")
    return a.ambient_norm


def _d(p, q, norm):
    dx, dy = abs(p[0] - q[0]), abs(p[1] - q[1])
    return max(dx, dy) if norm == "L1" else dx * dx + dy * dy


def _result(raw: int, n: int, norm: str) -> Interval:
    """Interval for max-norm raw*2^-n, or Euclidean sqrt(raw)*2^-n."""
    if norm == "L1":
        v = Dyadic(raw, -n)
        return Interval(v, v)
    lo, hi = sqrt_bounds(Dyadic(raw, -2 * n), 64)
    return Interval(lo, hi)


def one_sided_dist_brute(a: PointSet, b: PointSet) -> Interval:
    """max_a min_b ||a - b|| by the quadratic double loop."""
    norm = _check(a, b)
    n = _common_scale(a, b)
    A, B = _ints(a, n), _ints(b, n)
    raw = max(min(_d(p, q, norm) for q in B) for p in A)
    return _result(raw, n, norm)


class _Buckets:
    def __init__(self, pts: list[tuple[int, int]], size: int):
        self.size = size
        self.cells: dict[tuple[int, int], list[tuple[int, int]]] = {}
        for p in pts:
            self.cells.setdefault((p[0] // size, p[1] // size), []).append(p)
        self.kx = (min(k[0] for k in self.cells), max(k[0] for k in self.cells))
        self.ky = (min(k[1] for k in self.cells), max(k[1] for k in self.cells))

    def nearest(self, p, norm) -> int:
        size = self.size
        cx, cy = p[0] // size, p[1] // size
        best = None
        ring = 0
        max_ring = max(abs(cx - self.kx[0]), abs(cx - self.kx[1]), abs(cy - self.ky[0]), abs(cy - self.ky[1]))
        while ring <= max_ring:
            for i in range(cx - ring, cx + ring + 1):
                for j in (range(cy - ring, cy + ring + 1) if abs(i - cx) == ring else (cy - ring, cy + ring)):
                    for q in self.cells.get((i, j), ()):
                        v = _d(p, q, norm)
                        if best is None or v < best:
                            best = v
            # every unseen point is at max-norm distance > ring * size from p
            if best is not None:
                reach = ring * size
                if norm == "L1" and best <= reach:
                    break
                if norm == "Euclid" and best <= reach * reach:
                    break
            ring += 1
        return best


def one_sided_dist(a: PointSet, b: PointSet) -> Interval:
    """max over a in A of min over b in B of ||a - b||, via bucketed nearest search."""
    norm = _check(a, b)
    n = _common_scale(a, b)
    A, B = _ints(a, n), _ints(b, n)
    xs = [p[0] for p in B]
    ys = [p[1] for p in B]
    span = max(max(xs) - min(xs), max(ys) - min(ys), 1)
    size = max(1, span // max(1, int(math.sqrt(len(B)))))
    buckets = _Buckets(B, size)
    raw = max(buckets.nearest(p, norm) for p in A)
    return _result(raw, n, norm)


def hausdorff(a: PointSet, b: PointSet) -> Interval:
    ab = one_sided_dist(a, b)
    ba = one_sided_dist(b, a)
    return ab if ab.hi >= ba.hi else ba


def distance_report(a: PointSet, b: PointSet) -> dict:
    ab = one_sided_dist(a, b)
    ba = one_sided_dist(b, a)
    h = hausdorff(a, b)

    def js(iv: Interval):
        return str(iv.lo) if iv.lo == iv.hi else {"lo": str(iv.lo), "hi": str(iv.hi)}

    return {
        "a_descriptor": a.descriptor,
        "b_descriptor": b.descriptor,
        "one_sided_ab": js(ab),
        "one_sided_ba": js(ba),
        "hausdorff": js(h),
        "norm": a.ambient_norm,
    }


def grid_sets(img: GridImage, norm: str = "L1") -> tuple[PointSet, PointSet, PointSet]:
    """(J_proxy, K_proxy, Out_proxy) from a rendered grid.

    An In cell is certified within 2^-n of J, so J_proxy is the set of In
    centers.  K_proxy holds In and Ambiguous cells plus Out cells certified
    to lie in the interior of K.
    """
    cells = img.cells
    out = cells == Cell.OUT.value
    j_mask = cells == Cell.IN.value
    k_mask = (cells != Cell.OUT.value) | img.interior
    o_mask = out & ~img.interior

    def points(mask):
        ii, jj = np.nonzero(mask)
        return [img.center(int(i), int(j)) for i, j in zip(ii, jj)]

    d = {"resolution": img.resolution, "c": img.c_descriptor}
    return (
        PointSet(points(j_mask), norm, {**d, "set": "J_proxy"}),
        PointSet(points(k_mask), norm, {**d, "set": "K_proxy"}),
        PointSet(points(o_mask), norm, {**d, "set": "Out_proxy"}),
    )


@dataclass
class ProbeResult:
    delta: Dyadic | None
    tested: list[dict]
    findings: list[dict]

    def to_json(self) -> dict:
        return {"delta": None if self.delta is None else str(self.delta), "tested": self.tested, "findings": self.findings}


def _render_sets(oracle, n, region, options):
    img = render_grid(region, n, oracle, CostMeter(), options)
    j, k, _ = grid_sets(img)
    return j, k


def semicontinuity_probe(c_hat: OracleTape, epsilon, n: int, trials: int = 3, seed: int = 0,
                         deltas: Iterable | None = None, region=None, options: DecideOptions | None = None) -> ProbeResult:
    """Largest tested delta for which sampled |c - c_hat| < delta keep both one-sided bounds.

    For each delta (largest first) ``trials`` dyadic parameters are drawn in
    (c_hat - delta, c_hat + delta) and checked for
    dist(J_proxy(c_hat), J_proxy(c)) < eps + slack and
    dist(K_proxy(c), K_proxy(c_hat)) < eps + slack with slack 2^(1-n).
    A parameter whose proxy set is empty counts as a failure and is logged.
    """
    if trials <= 0:
        raise ValueError("trials must be positive")
    eps = Dyadic.of(epsilon)
    if eps.to_fraction() <= Fraction(4, 1 << n):
        raise ValueError("epsilon must exceed 2^(2-n) to be resolvable at this grid scale")
    slack = Dyadic(1, 1 - n)
    bound = eps + slack
    region = region or (Dyadic(-9, -2), Dyadic(-9, -2), Dyadic(9, -2), Dyadic(9, -2))
    if deltas is None:
        deltas = [Dyadic(1, -k) for k in range(2, n + 3)]
    deltas = sorted((Dyadic.of(d) for d in deltas), reverse=True)
    rng = random.Random(seed)
    m = n + 12
    center = query(c_hat, CostMeter(), m)
    j_hat, k_hat = _render_sets(c_hat, n, region, options)
    tested, findings = [], []
    for delta in deltas:
        ok = True
        for _ in range(trials):
            u = rng.randint(-(1 << 16) + 1, (1 << 16) - 1)
            c = center + delta * Dyadic(u, -16)
            if abs(c) > 2:
                continue
            j_c, k_c = _render_sets(oracle_from_dyadic(c), n, region, options)
            entry = {"delta": str(delta), "c": str(c)}
            if not len(j_c) or not len(k_c) or not len(j_hat) or not len(k_hat):
                entry["result"] = "empty-proxy"
                ok = False
            else:
                d_j = one_sided_dist(j_hat, j_c).hi
                d_k = one_sided_dist(k_c, k_hat).hi
                entry["dist_J_hat_to_J_c"] = str(d_j)
                entry["dist_K_c_to_K_hat"] = str(d_k)
                entry["result"] = "pass" if (d_j < bound and d_k < bound) else "fail"
                ok = ok and entry["result"] == "pass"
            tested.append(entry)
        if ok:
            return ProbeResult(delta, tested, findings)
        findings.append({"delta": str(delta), "note": "one-sided bound exceeded at this delta"})
    return ProbeResult(None, tested, findings)
