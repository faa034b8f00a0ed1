"""The player-versus-machines game at finite depth.

Each depth picks a pixel p and two parameters inside the committed interval:
one where p is certified within 2^-l/10 of J and one where the 8 * 2^-l
disk around p lies in the escape set.  The machine under test runs against
the deferred oracle; the player then commits to the parameter on the side
that contradicts the machine's answer, keeping every served oracle answer
valid, and records a certificate whose evidence holds for the whole
committed interval.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .metrics import grid_sets, one_sided_dist
from .numerics import Dyadic, DyadicPoint, Interval
from .oracle import CostMeter, DeferredOracle, OracleError, QueryRecord, answer_valid_for
from .parabolic import (
    NotFound,
    _search_window,
    escape_estimate,
    ParabolicRoot,
    certify_free,
    certify_near,
    find_discontinuity_witness,
    refine_near,
    screen_pairs,
)
from .pixel import (
    SCHEMA,
    DistanceBracket,
    PixelQuery,
    _up,
    constant_machine,
    escape_time_machine,
    estimator_machine,
    render_grid,
)

NEAR = "AnsweredZeroButNear"
FAR = "AnsweredOneButFar"
TIMEOUT = "Timeout"


class Timeout(Exception):
    """A machine used more ticks than its budget allows."""


class WitnessNotFound(RuntimeError):
    pass


class BudgetMeter(CostMeter):
    """Cost meter that preempts the machine as soon as the budget is exceeded."""

    def charge_query(self, m: int) -> None:
        super().charge_query(m)
        if self.budget is not None and self.ticks > self.budget:
            raise Timeout

    def tick(self, k: int = 1) -> None:
        super().tick(k)
        if self.budget is not None and self.ticks > self.budget:
            raise Timeout


# ---------------------------------------------------------------------------
# machines


MACHINES: dict[str, Callable] = {
    "const-0": constant_machine(0),
    "const-1": constant_machine(1),
    "estimator": estimator_machine,
    "escape-time": escape_time_machine,
}

ROSTERS = {
    "demo2": ("const-0", "const-1"),
    "demo3": ("const-0", "const-1", "estimator"),
}


def budget_family(spec: str) -> Callable[[int], int]:
    """'16l' style linear budgets, or 'l^2'."""
    spec = spec.replace(" ", "").replace("*", "")
    if spec in ("l^2", "l2", "ll"):
        return lambda l: l * l
    if spec.endswith("l") and spec[:-1].isdigit():
        k = int(spec[:-1])
        return lambda l: k * l
    raise ValueError(f"unknown budget family {spec!r}")


@dataclass
class MachineSpec:
    id: int
    name: str
    procedure: Callable
    budget_T: Callable[[int], int]

    def budget(self, l: int) -> int:
        return int(self.budget_T(l))


def make_roster(names, T="16l") -> list[MachineSpec]:
    if isinstance(names, str):
        names = ROSTERS[names] if names in ROSTERS else names.split(",")
    budget = budget_family(T) if isinstance(T, str) else T
    roster = []
    for i, name in enumerate(names):
        if name not in MACHINES:
            raise ValueError(f"unknown machine {name!r}")
        roster.append(MachineSpec(i, name, MACHINES[name], budget))
    return roster


@dataclass
class RunResult:
    answer: int | None
    ticks: int
    max_m_queried: int
    timeout: bool
    transcript: list[QueryRecord]

    def to_json(self) -> dict:
        return {
            "answer": self.answer,
            "ticks": self.ticks,
            "max_m_queried": self.max_m_queried,
            "timeout": self.timeout,
            "transcript": [r.to_json() for r in self.transcript],
        }


def run_machine(m: MachineSpec, q: PixelQuery, oracle, l: int | None = None) -> RunResult:
    """Run a machine under its budget T(l); overrunning is a recorded Timeout."""
    l = q.resolution if l is None else l
    meter = BudgetMeter(budget=m.budget(l))
    try:
        answer = int(m.procedure(q, oracle, meter))
        timeout = False
    except Timeout:
        answer, timeout = None, True
    return RunResult(answer, meter.ticks, meter.max_precision_queried, timeout, list(meter.transcript))


class ReplayOracle:
    """Serves recorded answers in order; anything beyond the record comes from ``interval``."""

    def __init__(self, records: list[QueryRecord], interval: Interval):
        self.records = list(records)
        self.interval = interval
        self.pos = 0
        self.mismatch: str | None = None

    def provide(self, m: int) -> Dyadic:
        if self.pos < len(self.records):
            rec = self.records[self.pos]
            self.pos += 1
            if rec.m != m:
                self.mismatch = self.mismatch or f"query {self.pos} asked m={m}, record has m={rec.m}"
            return rec.answer
        self.mismatch = self.mismatch or "machine asked more queries than recorded"
        return self.interval.mid().round_dn(m, "nearest")

    def enclosure(self, m: int):
        return self.provide(m), Dyadic(1, -(m - 1))


# ---------------------------------------------------------------------------
# evidence


def _h(l: int) -> Dyadic:
    return Dyadic(1, -l)


def _working_bits(l: int) -> int:
    return 2 * l + 96


def far_radius(l: int) -> Dyadic:
    """Free-disk radius used for far evidence: strictly above 3 * 2^-l."""
    return Dyadic(3, -l) + Dyadic(1, -(l + 6))


def ball_of(iv: Interval) -> tuple[Dyadic, Dyadic]:
    mid = iv.mid()
    return mid, iv.hi - mid


def _certify_ball(side: str, p: DyadicPoint, l: int, center: Dyadic, radius: Dyadic, s: int):
    if side == NEAR:
        b = certify_near(p, center, radius, s)
        return None if b is None else b[1]
    return 0.0 if certify_free(p, center, radius, far_radius(l), s) else None


def certify_side(side: str, p: DyadicPoint, l: int, iv: Interval, s: int, max_pieces: int = 1024) -> DistanceBracket | None:
    """Evidence for the violated side, valid for every c in ``iv``.

    The interval is bisected until every piece, taken as a parameter ball,
    passes on its own; more than ``max_pieces`` pieces counts as failure.
    """
    h = math.ldexp(1.0, -l)
    stack = [(iv.lo, iv.hi)]
    worst = 0.0
    pieces = 0
    while stack:
        lo, hi = stack.pop()
        mid = (lo + hi).shift(-1)
        v = _certify_ball(side, p, l, mid, hi - mid, s)
        if v is not None and (side != NEAR or v < h / 2):
            worst = max(worst, v)
            pieces += 1
            continue
        if len(stack) + pieces + 2 > max_pieces:
            return None
        stack += [(mid, hi), (lo, mid)]
    if side == NEAR:
        return DistanceBracket(Dyadic(0), _up(worst))
    return DistanceBracket(far_radius(l), None)


def evidence_holds(side: str, bracket: DistanceBracket, l: int) -> bool:
    h = _h(l)
    if side == NEAR:
        return bracket.upper is not None and bracket.upper < h.shift(-1)
    return bracket.lower > Dyadic(3) * h


# ---------------------------------------------------------------------------
# certificates and state


@dataclass
class Certificate:
    machine_id: int
    machine_name: str
    l: int
    pixel: DyadicPoint
    answer: int | None
    violated_side: str
    evidence: DistanceBracket
    evidence_side: str  # NEAR or FAR: which bracket the evidence certifies
    transcript: list[QueryRecord]
    ticks: int
    budget: int
    interval: Interval  # committed interval the evidence was certified on
    verified_at_precision: int = 0

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA,
            "machine_id": self.machine_id,
            "machine": self.machine_name,
            "l": self.l,
            "pixel": {"re": str(self.pixel.re), "im": str(self.pixel.im)},
            "answer": self.answer,
            "violated_side": self.violated_side,
            "evidence_side": self.evidence_side,
            "evidence": self.evidence.to_json(),
            "transcript": [r.to_json() for r in self.transcript],
            "ticks": self.ticks,
            "budget": self.budget,
            "interval": {"lo": str(self.interval.lo), "hi": str(self.interval.hi)},
            "verified_at_precision": self.verified_at_precision,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Certificate":
        l = int(d["l"])
        return cls(
            int(d["machine_id"]), d["machine"], l,
            DyadicPoint(Dyadic.parse(d["pixel"]["re"]), Dyadic.parse(d["pixel"]["im"]), l),
            d["answer"], d["violated_side"], DistanceBracket.from_json(d["evidence"]), d["evidence_side"],
            [QueryRecord.from_json(r) for r in d["transcript"]], int(d["ticks"]), int(d["budget"]),
            Interval(Dyadic.parse(d["interval"]["lo"]), Dyadic.parse(d["interval"]["hi"])),
            int(d.get("verified_at_precision", 0)),
        )


@dataclass
class Branches:
    """A pixel with a near parameter and a far parameter."""

    pixel: DyadicPoint
    l: int
    near: Dyadic
    far: Dyadic
    near_bracket: DistanceBracket
    origin: str


@dataclass
class GameState:
    root: ParabolicRoot
    oracle: DeferredOracle
    depth: int = 0
    history: list = field(default_factory=list)
    certificates: list = field(default_factory=list)
    last_pixel: DyadicPoint | None = None
    last_l: int = 0
    notes: list = field(default_factory=list)

    @property
    def c_interval(self) -> Interval:
        return self.oracle.interval


def initial_state(root: ParabolicRoot, reach: Dyadic = Dyadic(1, -5)) -> GameState:
    """Deferred oracle on [r_lo, r + reach], the parameters right of the root."""
    iv = Interval(root.c.lo, root.center + reach)
    return GameState(root, DeferredOracle(iv, allow_lazy=True, identity={"kind": "deferred", "root": root.to_json()}))


# ---------------------------------------------------------------------------
# witness search inside an interval


def _windows(root: ParabolicRoot, l: int, around: DyadicPoint | None, reach: int):
    """Pixel grids to screen: a fine one around the previous pixel, then a coarse one around alpha."""
    out = []
    if around is not None:
        cx, cy = (v.scaled(l) if v.in_dn(l) else v.floor_scaled(l) for v in (around.re, around.im))
        cx, cy = cx // 2, cy // 2
        out.append((range(cx - reach, cx + reach + 1), range(max(1, cy - reach), cy + reach + 1), 2))
    pb = min(7, l)
    xs, ys = _search_window(root, pb)
    out.append((xs, ys, 1 << (l - pb)))
    return out


def interval_branches(iv: Interval, l: int, root: ParabolicRoot, around: DyadicPoint | None = None,
                      count_bits: int = 5, reach: int = 32, max_iter: int = 20000,
                      max_candidates: int = 24, require_fit: bool = False) -> Branches | None:
    """Search the 2^count_bits - 1 interior grid parameters of ``iv`` against pixels
    near ``around`` and in the window around alpha."""
    span = iv.hi - iv.lo
    params = [iv.lo + span * Dyadic(k, -count_bits) for k in range(1, 1 << count_bits)]
    bits = max(64, span.denominator_bits() + 16)
    params = [c.round_bits(bits, "nearest") if c.denominator_bits() > bits else c for c in params]
    for xs, ys, pitch in _windows(root, l, around, reach):
        cands = screen_pairs(params, l, xs, ys, pitch, max_iter)
        b = _certify_candidates(cands, params, iv, l, max_candidates, require_fit)
        if b is not None:
            return b
    return None


def _certify_candidates(cands, params, iv, l, max_candidates, require_fit=False):
    h = math.ldexp(1.0, -l)
    s = _working_bits(l)
    for cand in cands[:max_candidates]:
        z0 = DyadicPoint.from_grid(cand.vx, cand.vy, l)
        z = complex(float(z0.re), float(z0.im))
        j = cand.near
        lo = params[j - 1] if j > 0 else iv.lo
        hi = params[j + 1] if j + 1 < len(params) else iv.hi
        c1, _ = refine_near(z, lo, hi, h / 200)
        if not (iv.lo < c1 < iv.hi):
            continue
        near = certify_near(z0, c1, Dyadic(0), s)
        if near is None or not near[1] < h / 10:
            continue
        # the far parameter closest to c1 whose centered pin still fits
        fars = sorted((abs(params[k] - c1), k) for k, v in enumerate(cand.values) if v > 20 * h)
        fars.sort(key=lambda e: (_centered(iv, c1, params[e[1]]) is None, e[0]))
        if require_fit:
            fars = [e for e in fars if _centered(iv, c1, params[e[1]]) is not None]
        for _, k in fars[:3]:
            c2 = params[k]
            if certify_free(z0, c2, Dyadic(0), Dyadic(1, 3 - l), s):
                return Branches(z0, l, c1, c2, DistanceBracket(Dyadic(0), _up(near[1])), "interval-search")
    return None


def find_branches(state: GameState, l_min: int = 10, l_max: int = 40, step: int = 1) -> Branches:
    if state.depth == 0:
        last = None
        for l in range(max(l_min, 6), min(l_max, 20) + 1):
            try:
                w = find_discontinuity_witness(state.root, l, reverify=True)
            except NotFound as exc:
                last = exc
                continue
            return Branches(w.z0, l, w.c1, w.c2, w.bracket1, "root-witness")
        raise WitnessNotFound(f"no witness at the root for l <= {min(l_max, 20)}: {last}")
    iv = state.c_interval
    # prefer pairs whose centered pin fits, so a querying machine cannot rule out the midpoint branch
    for fit in (True, False):
        for l in range(state.last_l + 1, l_max + 1, step):
            b = interval_branches(iv, l, state.root, state.last_pixel, require_fit=fit)
            if b is not None:
                return b
    raise WitnessNotFound(f"no witness inside {iv} for l in [{state.last_l + 1}, {l_max}]")


# ---------------------------------------------------------------------------
# the player


def _centered(iv: Interval, c: Dyadic, other: Dyadic) -> Interval | None:
    """Dyadic interval with midpoint c that contains ``other`` and still fits in ``iv``."""
    d = abs(other - c)
    d = d + d.shift(-3)
    choice = Interval(c - d, c + d)
    if not iv.contains(choice) or not choice.width() < iv.width():
        return None
    return choice


def _branch_for(run: RunResult, b: "Branches", mid: Dyadic) -> str:
    if run.timeout:
        return NEAR if abs(b.near - mid) <= abs(b.far - mid) else FAR
    return NEAR if run.answer == 0 else FAR


def _pin(state: GameState, m: MachineSpec, b: "Branches") -> None:
    """Narrow the deferred oracle before the machine runs.

    The oracle answers with the interval midpoint, so the parameter at the
    midpoint survives every served band.  The player dry-runs the machine on
    a scratch copy pinned at each branch parameter and keeps a pin whose
    outcome points at the parameter sitting at the midpoint.
    """
    iv = state.c_interval
    q = PixelQuery(b.pixel, b.l)
    for c, other, side in ((b.near, b.far, NEAR), (b.far, b.near, FAR)):
        choice = _centered(iv, c, other)
        if choice is None:
            continue
        trial = copy.deepcopy(state.oracle)
        trial.commit(choice)
        if _branch_for(run_machine(m, q, trial, b.l), b, choice.mid()) == side:
            state.oracle.commit(choice)
            return
    lo, hi = min(b.near, b.far), max(b.near, b.far)
    pad = (hi - lo).shift(-3)
    choice = Interval(max(iv.lo, lo - pad), min(iv.hi, hi + pad))
    try:
        state.oracle.commit(choice)
        state.notes.append(f"depth {state.depth}: no centered pin fits; pinned to the branch hull")
    except OracleError:
        state.notes.append(f"depth {state.depth}: branch hull is the whole committed interval, no pin")


def _passes(side: str, z: complex, l: int, cs: np.ndarray) -> np.ndarray:
    """Float screen: estimate well inside the violated side at each parameter."""
    h = math.ldexp(1.0, -l)
    v = escape_estimate(z, cs, 200_000)
    if side == NEAR:
        return (v > 0) & (v < h / 5)
    return v > 12 * h


def _dyadic_inside(a: float, b: float) -> Interval | None:
    """A dyadic interval inside (a, b) keeping most of its width."""
    if not b > a:
        return None
    w = b - a
    bits = -math.floor(math.log2(w)) + 6
    lo = Dyadic.from_float(a).round_dn(bits, "ceil")
    hi = Dyadic.from_float(b).round_dn(bits, "floor")
    return Interval(lo, hi) if lo < hi else None


def _robust_run(side: str, b: "Branches", c: Dyadic, lo: Dyadic, hi: Dyadic, samples: int = 257) -> Interval | None:
    """Widest screened run of parameters around c inside (lo, hi) on the violated side."""
    z = complex(float(b.pixel.re), float(b.pixel.im))
    cf = float(c)
    R = max(float(c - lo), float(hi - c))
    for _ in range(24):
        a, e = max(float(lo), cf - R), min(float(hi), cf + R)
        cs = np.linspace(a, e, samples)
        ok = _passes(side, z, b.l, cs)
        k = int(np.argmin(np.abs(cs - cf)))
        if ok[k]:
            i = j = k
            while i > 0 and ok[i - 1]:
                i -= 1
            while j < samples - 1 and ok[j + 1]:
                j += 1
            if j - i >= 8:
                # keep one grid step of margin on each side that failed
                return _dyadic_inside(cs[i] if i == 0 else cs[i + 1], cs[j] if j == samples - 1 else cs[j - 1])
        R /= 8
    return None


def _commit(state: GameState, side: str, c: Dyadic, b: Branches) -> tuple[Interval, DistanceBracket]:
    """Wide sub-interval near c, consistent with every served answer, on which the evidence holds."""
    iv = state.c_interval
    constraint = state.oracle.constraint_interval()
    if not (constraint.lo < c < constraint.hi):
        raise OracleError("branch parameter lies outside the served answer bands")
    s = _working_bits(b.l)
    # stay strictly inside the served bands and the committed interval
    margin = constraint.width().shift(-12)
    run = _robust_run(side, b, c, constraint.lo + margin, constraint.hi - margin)
    tries = []
    if run is not None:
        tries.append(run)
    w = (constraint.width()).shift(-4)
    while w > margin.shift(-40):
        tries.append(Interval(c - w, c + w))
        w = w.shift(-3)
    for choice in tries:
        for _ in range(6):
            try:
                state.oracle.check(choice)
                ok = choice.width() < iv.width()
            except OracleError:
                ok = False
            if ok:
                ev = certify_side(side, b.pixel, b.l, choice, s)
                if ev is not None:
                    state.oracle.commit(choice)
                    return choice, ev
            mid, quarter = choice.mid(), choice.width().shift(-2)
            choice = Interval(mid - quarter, mid + quarter)
    raise OracleError("no committable interval keeps the evidence")


def player_step(state: GameState, m: MachineSpec, branches: Branches | None = None) -> GameState:
    b = branches or find_branches(state)
    _pin(state, m, b)
    q = PixelQuery(b.pixel, b.l)
    run = run_machine(m, q, state.oracle, b.l)
    side = _branch_for(run, b, state.c_interval.mid())
    violated = TIMEOUT if run.timeout else side
    c = b.near if side == NEAR else b.far
    prev = state.c_interval
    choice, ev = _commit(state, side, c, b)
    cert = Certificate(m.id, m.name, b.l, b.pixel, run.answer, violated, ev, side, run.transcript, run.ticks,
                       m.budget(b.l), choice, _working_bits(b.l))
    state.certificates.append(cert)
    state.history.append({
        "l": b.l,
        "pixel": {"re": str(b.pixel.re), "im": str(b.pixel.im)},
        "machine_id": m.id,
        "machine": m.name,
        "answer": run.answer,
        "timeout": run.timeout,
        "ticks": run.ticks,
        "max_m_queried": run.max_m_queried,
        "budget": m.budget(b.l),
        "branch": 1 if side == NEAR else 2,
        "parameter": str(c),
        "witness_origin": b.origin,
        "pinned": {"lo": str(prev.lo), "hi": str(prev.hi)},
        "interval": {"lo": str(choice.lo), "hi": str(choice.hi)},
        "cert_ref": len(state.certificates) - 1,
    })
    state.depth += 1
    state.last_pixel, state.last_l = b.pixel, b.l
    return state


# ---------------------------------------------------------------------------
# verification


@dataclass
class Verdict:
    ok: bool
    reason: str = "ok"

    def __bool__(self):
        return self.ok


def verify_certificate(cert: Certificate, final: Interval, factor: int = 2) -> Verdict:
    """Re-check a certificate against the final committed interval.

    The machine is replayed on its recorded oracle answers, each of which
    must be a legal answer for every parameter in ``final``; the evidence is
    recomputed on ``final`` at ``factor`` times the working precision.
    """
    if not evidence_holds(cert.evidence_side, cert.evidence, cert.l):
        return Verdict(False, "evidence bracket misses the violation threshold")
    if cert.violated_side in (NEAR, FAR) and cert.violated_side != cert.evidence_side:
        return Verdict(False, "violated side and evidence side disagree")
    if cert.violated_side == NEAR and cert.answer != 0 or cert.violated_side == FAR and cert.answer != 1:
        return Verdict(False, "answer bit does not match the violated side")
    if not cert.interval.contains(final):
        return Verdict(False, "final interval is not inside the certified interval")
    for r in cert.transcript:
        if not answer_valid_for(r.m, r.answer, final):
            return Verdict(False, f"served answer {r.answer} at m={r.m} is not valid for the final interval")
    if cert.machine_name not in MACHINES:
        return Verdict(False, f"unknown machine {cert.machine_name!r}")
    spec = MachineSpec(cert.machine_id, cert.machine_name, MACHINES[cert.machine_name], lambda l: cert.budget)
    replay = ReplayOracle(cert.transcript, final)
    run = run_machine(spec, PixelQuery(cert.pixel, cert.l), replay, cert.l)
    if replay.mismatch is None and replay.pos < len(replay.records):
        replay.mismatch = f"machine asked {replay.pos} of {len(replay.records)} recorded queries"
    if replay.mismatch is not None:
        return Verdict(False, f"transcript replay mismatch: {replay.mismatch}")
    if run.timeout != (cert.violated_side == TIMEOUT) or (not run.timeout and run.answer != cert.answer):
        return Verdict(False, "transcript replay mismatch: machine output differs")
    ev = certify_side(cert.evidence_side, cert.pixel, cert.l, final, factor * _working_bits(cert.l))
    if ev is None or not evidence_holds(cert.evidence_side, ev, cert.l):
        return Verdict(False, "evidence could not be re-certified on the final interval")
    return Verdict(True)


# ---------------------------------------------------------------------------
# the game


def _grid_proxy(c: Dyadic, n: int):
    from .oracle import oracle_from_dyadic

    region = (Dyadic(-9, -2), Dyadic(-9, -2), Dyadic(9, -2), Dyadic(9, -2))
    img = render_grid(region, n, oracle_from_dyadic(c), CostMeter())
    j, k, _ = grid_sets(img)
    return j, k


def _nesting_flags(state: GameState, T: Callable[[int], int], grid_n: int) -> list[dict]:
    """Measured conditions on consecutive committed intervals.

    Closeness bounds use interval hulls: |c_n - c_{n-1}| is bounded by the
    distance across the hull of both intervals.  The Julia/filled-set
    proximity is compared on grid proxies of resolution ``grid_n`` with
    pitch slack, so it is verified only at that grid scale.
    """
    flags = []
    ivs = [state.oracle.log[0]] + [h["interval"] for h in state.history]
    ivs = [Interval(Dyadic.parse(v["lo"]), Dyadic.parse(v["hi"])) for v in ivs]
    proxies = {}
    for k, h in enumerate(state.history):
        prev, cur = ivs[k], ivs[k + 1]
        l = h["l"]
        gap = max(cur.hi - prev.lo, prev.hi - cur.lo)
        nxt = state.history[k + 1]["l"] if k + 1 < len(state.history) else None
        entry = {
            "depth": k + 1,
            "nested": bool(prev.contains(cur) and cur.width() < prev.width()),
            "width": str(cur.width()),
            "gap_upper": str(gap),
            "gap_below_2^-3l": bool(gap < Dyadic(1, -3 * l)),
        }
        if nxt is not None:
            entry["next_width_below_2^-T"] = bool(ivs[k + 2].width() < Dyadic(1, -T(nxt)))
        if grid_n:
            for c in (prev.mid(), cur.mid()):
                if c not in proxies:
                    proxies[c] = _grid_proxy(c, grid_n)
            (j0, k0), (j1, k1) = proxies[prev.mid()], proxies[cur.mid()]
            slack = Dyadic(1, 1 - grid_n)
            bound = Dyadic(1, -3 * l) + slack
            if len(j0) and len(j1) and len(k0) and len(k1):
                dj = max(one_sided_dist(j0, j1).hi, one_sided_dist(j1, j0).hi)
                dk = one_sided_dist(k1, k0).hi
                entry["grid_scale"] = {"n": grid_n, "dist_J": str(dj), "dist_K": str(dk), "slack": str(slack),
                                       "holds": bool(dj < bound and dk < bound)}
            else:
                entry["grid_scale"] = {"n": grid_n, "holds": False, "note": "empty proxy"}
        flags.append(entry)
    return flags


@dataclass
class GameResult:
    state: GameState
    report: dict

    def to_json_bytes(self) -> bytes:
        return (json.dumps(self.report, sort_keys=True, indent=2) + "\n").encode()


def run_game(roster: list[MachineSpec], root: ParabolicRoot, T="16l", max_depth: int | None = None,
             seed: int = 0, grid_n: int = 4, l_min: int = 10) -> GameResult:
    """Play each roster machine in turn, one depth per machine."""
    budget = budget_family(T) if isinstance(T, str) else T
    depth = len(roster) if max_depth is None else max_depth
    if depth > len(roster):
        raise ValueError("max_depth exceeds the roster size")
    state = initial_state(root)
    error = None
    for m in roster[:depth]:
        try:
            b = find_branches(state, l_min=l_min)
            player_step(state, m, b)
        except (WitnessNotFound, OracleError) as exc:
            error = f"{type(exc).__name__}: {exc}"
            break
    final = state.c_interval
    verdicts = [verify_certificate(c, final, factor=4) for c in state.certificates]
    for c, v in zip(state.certificates, verdicts):
        if v:
            c.verified_at_precision = 4 * _working_bits(c.l)
    served_ok = all(answer_valid_for(s.m, s.answer, final) for s in state.oracle.served)
    report = {
        "schema": SCHEMA,
        "seed": seed,
        "T": T if isinstance(T, str) else "custom",
        "roster": [m.name for m in roster],
        "root": root.to_json(),
        "depths": state.history,
        "final_interval": {"lo": str(final.lo), "hi": str(final.hi)},
        "certificates": [c.to_json() for c in state.certificates],
        "verdicts": [v.reason for v in verdicts],
        "served_answers_valid": served_ok,
        "nesting": _nesting_flags(state, budget, grid_n),
        "notes": state.notes,
        "error": error,
        "verified": bool(error is None and all(verdicts) and served_ok and len(verdicts) == depth),
    }
    return GameResult(state, report)


def verify_report(report: dict) -> list[Verdict]:
    """Verify every certificate of a game report against its final interval."""
    final = Interval(Dyadic.parse(report["final_interval"]["lo"]), Dyadic.parse(report["final_interval"]["hi"]))
    return [verify_certificate(Certificate.from_json(c), final) for c in report["certificates"]]

