"""Oracle access to the parameter c with tick accounting.

A tape answers a precision-m query with a point of D_m within 2**-(m-1) of
c and charges m ticks.  The deferred oracle used by the game holds c as a
shrinking dyadic interval and remembers every answer it has served so later
commitments cannot contradict them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .numerics import Dyadic, Interval


class OracleError(RuntimeError):
    pass


class CommitViolation(OracleError):
    """A commitment would invalidate an answer already served."""

    def __init__(self, m: int, answer: Dyadic, message: str):
        super().__init__(message)
        self.m = m
        self.answer = answer


def band(m: int, answer: Dyadic) -> tuple[Dyadic, Dyadic]:
    """Open interval of parameters for which ``answer`` is a legal precision-m reply."""
    w = Dyadic(1, -(m - 1))
    return answer - w, answer + w


def answer_valid_for(m: int, answer: Dyadic, interval: Interval) -> bool:
    lo, hi = band(m, answer)
    return lo < interval.lo and interval.hi < hi


@dataclass
class QueryRecord:
    m: int
    answer: Dyadic
    ticks_after: int

    def to_json(self) -> dict:
        return {"m": self.m, "answer_dyadic": str(self.answer), "ticks_after": self.ticks_after}

    @classmethod
    def from_json(cls, d: dict) -> "QueryRecord":
        return cls(int(d["m"]), Dyadic.parse(d["answer_dyadic"]), int(d["ticks_after"]))


@dataclass
class CostMeter:
    """Tick counter.  Oracle queries cost their precision; compute steps cost one each."""

    ticks: int = 0
    max_precision_queried: int = 0
    budget: int | None = None
    transcript: list[QueryRecord] = field(default_factory=list)

    def charge_query(self, m: int) -> None:
        self.ticks += m
        if m > self.max_precision_queried:
            self.max_precision_queried = m

    def tick(self, k: int = 1) -> None:
        self.ticks += k

    @property
    def exhausted(self) -> bool:
        return self.budget is not None and self.ticks > self.budget

    def remaining(self) -> float:
        return float("inf") if self.budget is None else self.budget - self.ticks

    def transcript_json(self) -> list[dict]:
        return [r.to_json() for r in self.transcript]


class OracleTape:
    """Immutable oracle for a fixed real c."""

    def __init__(self, provider: Callable[[int], Dyadic], identity: dict):
        self._provider = provider
        self.identity = dict(identity)
        self._cache: dict[int, Dyadic] = {}

    def provide(self, m: int) -> Dyadic:
        if m < 1:
            raise ValueError("precision must be at least 1")
        v = self._cache.get(m)
        if v is None:
            v = self._provider(m)
            if not v.in_dn(m):
                raise OracleError(f"provider returned {v} outside D_{m}")
            self._cache[m] = v
        return v

    def enclosure(self, m: int) -> tuple[Dyadic, Dyadic]:
        """Center and radius of a real ball known to contain c after a precision-m read."""
        return self.provide(m), Dyadic(1, -(m - 1))

    @property
    def is_exact(self) -> bool:
        return self.identity.get("kind") == "dyadic"

    def exact_value(self) -> Dyadic | None:
        return Dyadic.parse(self.identity["value"]) if self.is_exact else None

    def descriptor(self) -> dict:
        return dict(self.identity)

    def __repr__(self):
        return f"OracleTape({self.identity})"


def query(tape, meter: CostMeter, m: int) -> Dyadic:
    """Read c at precision m, charging m ticks and logging the transcript."""
    if m < 1:
        raise ValueError("precision must be at least 1")
    answer = tape.provide(m)
    meter.charge_query(m)
    meter.transcript.append(QueryRecord(m, answer, meter.ticks))
    return answer


def oracle_from_dyadic(c) -> OracleTape:
    """Tape for an exact dyadic c: nearest point of D_m, ties toward +inf."""
    c = Dyadic.of(c)
    return OracleTape(lambda m: c.round_dn(m, "nearest"), {"kind": "dyadic", "value": str(c)})


def oracle_from_enclosure(refine: Callable[[int], Interval], identity: dict) -> OracleTape:
    """Tape for a real known through shrinking enclosures.

    ``refine(bits)`` must return an interval of width at most ``2**-bits``
    containing c.  The answer is the midpoint of a width ``2**-(m+1)``
    enclosure rounded to D_m, so it is within ``2**-(m+1) + 2**-(m+2)`` of c.
    """

    def provider(m: int) -> Dyadic:
        box = refine(m + 1)
        if box.width() > Dyadic(1, -(m + 1)):
            raise OracleError("enclosure refinement did not reach the requested width")
        return box.mid().round_dn(m, "nearest")

    return OracleTape(provider, identity)


def interval_depth(iv: Interval) -> int:
    """Largest k with width <= 2**-k (a point interval has unbounded depth)."""
    w = iv.width()
    if w.mantissa == 0:
        return 1 << 30
    # width = m 2^e with m odd: 2^-k >= w  <=>  k <= -log2 w
    k = -(w.exponent + w.mantissa.bit_length() - 1)
    if w.mantissa != 1:
        k -= 1
    return k


@dataclass
class ServedAnswer:
    m: int
    answer: Dyadic
    lazy: bool


class DeferredOracle:
    """The game's lazily revealed parameter.

    ``provide(m)`` answers with the nearest D_m point to the midpoint of the
    committed interval.  When the interval is too wide for that answer to be
    valid everywhere in it the answer is still served (if ``allow_lazy``) and
    becomes a constraint every later commitment must respect.
    """

    def __init__(self, interval: Interval, allow_lazy: bool = True, identity: dict | None = None):
        self.interval = interval
        self.allow_lazy = allow_lazy
        self.served: list[ServedAnswer] = []
        self.log: list[dict] = [self._log_entry()]
        self.identity = identity or {"kind": "deferred"}

    def _log_entry(self) -> dict:
        return {"depth": self.depth, "lo": str(self.interval.lo), "hi": str(self.interval.hi)}

    @property
    def depth(self) -> int:
        return interval_depth(self.interval)

    def provide(self, m: int) -> Dyadic:
        if m < 1:
            raise ValueError("precision must be at least 1")
        answer = self.interval.mid().round_dn(m, "nearest")
        ok = answer_valid_for(m, answer, self.interval)
        if not ok and not self.allow_lazy:
            raise OracleError(f"precision {m} exceeds committed depth {self.depth}")
        self.served.append(ServedAnswer(m, answer, not ok))
        return answer

    def enclosure(self, m: int) -> tuple[Dyadic, Dyadic]:
        return self.provide(m), Dyadic(1, -(m - 1))

    def constraint_interval(self) -> Interval:
        """Intersection of the committed interval with all served bands (closed hull)."""
        lo, hi = self.interval.lo, self.interval.hi
        for s in self.served:
            blo, bhi = band(s.m, s.answer)
            lo = max(lo, blo)
            hi = min(hi, bhi)
        if hi < lo:
            raise OracleError("served answers are mutually inconsistent")
        return Interval(lo, hi)

    def check(self, choice: Interval) -> None:
        if not self.interval.contains(choice):
            raise OracleError(f"{choice} is not inside the committed interval {self.interval}")
        for s in self.served:
            if not answer_valid_for(s.m, s.answer, choice):
                raise CommitViolation(s.m, s.answer, f"commit {choice} violates the band of answer {s.answer} at m={s.m}")

    def commit(self, choice) -> "DeferredOracle":
        """Commit to a sub-interval, or to the ``'left'``/``'right'`` half."""
        if choice in ("left", "right"):
            mid = self.interval.mid()
            choice = Interval(self.interval.lo, mid) if choice == "left" else Interval(mid, self.interval.hi)
        self.check(choice)
        if not choice.width() < self.interval.width():
            raise OracleError("a commitment must shrink the interval")
        self.interval = choice
        self.log.append(self._log_entry())
        return self

    def descriptor(self) -> dict:
        return {"kind": "deferred", "lo": str(self.interval.lo), "hi": str(self.interval.hi)}


def commit_bit(d: DeferredOracle, choice) -> DeferredOracle:
    return d.commit(choice)
