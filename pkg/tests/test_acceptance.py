"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line with its measured quantities and wall
time; the lines are printed in the pytest terminal summary.
"""

import json
import math
import random
import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest

from _oracles import band_violation
from conftest import ACCEPTANCE_LINES
from juliacert.adversary import Certificate
from juliacert.cli import main
from juliacert.metrics import PointSet, hausdorff, one_sided_dist_brute, semicontinuity_probe
from juliacert.numerics import Dyadic, DyadicPoint, Interval
from juliacert.oracle import CostMeter, answer_valid_for, oracle_from_dyadic
from juliacert.parabolic import (
    NotFound,
    epsilon_grid,
    find_discontinuity_witness,
    find_parabolic_root,
    phase_proxy,
    verify_witness,
)
from juliacert.pixel import Cell, PixelQuery, decide_pixel, estimator_machine, measure_T, render_grid


@contextmanager
def criterion(name: str, limit: float):
    """Time the block, record a PASS/FAIL line, and enforce the wall-time limit."""
    info: dict = {}
    t0 = time.perf_counter()
    ok = False
    try:
        yield info
        ok = True
    finally:
        dt = time.perf_counter() - t0
        ok = ok and dt < limit
        detail = ", ".join(f"{k}={v}" for k, v in info.items())
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} {name}: {detail} ({dt:.1f}s, limit {limit:.0f}s)")
        print(ACCEPTANCE_LINES[-1])
    assert dt < limit, f"{name} took {dt:.1f}s"


# ---------------------------------------------------------------------------
# 1. soundness on the two closed-form Julia sets


def grid_violations(c: int, vx: np.ndarray, vy: np.ndarray, n: int, bits: np.ndarray) -> np.ndarray:
    """Vectorized band check in integer units of 2^-n, same rules as ``band_violation``."""
    H = 1 << n
    ax, ay = np.abs(vx), np.abs(vy)
    if c == 0:
        q = ax * ax + ay * ay
        out, on = q > H * H, q == H * H

        def dmin(r):
            dx, dy = np.maximum(ax - r, 0), np.maximum(ay - r, 0)
            return dx * dx + dy * dy

        def dmax(r):
            return (ax + r) ** 2 + (ay + r) ** 2

        near = on | np.where(out, dmin(1) < H * H, dmax(1) > H * H)
        far = ~on & np.where(out, dmin(2) > H * H, dmax(2) < H * H)
    else:
        d = np.maximum(ay, np.maximum(ax - 2 * H, 0))
        near, far = d < 1, d > 2
    return ((bits == 0) & near) | ((bits == 1) & far)


def _cell_bits(img, oracle) -> np.ndarray:
    bits = (img.cells == Cell.IN.value).astype(np.int64)
    for i, j in zip(*np.nonzero(img.cells == Cell.AMBIGUOUS.value)):
        rec = img.records.get((int(i), int(j)))
        if rec is None:
            rec = decide_pixel(PixelQuery(img.center(int(i), int(j)), img.resolution), oracle, CostMeter())
        bits[i, j] = rec.bit
    return bits


def _random_pixels(c: int, rng: random.Random, count: int):
    for k in range(count):
        n = rng.randint(1, 16)
        H = 1 << n
        if k % 2:
            # uniform in the 2C-ball, C = 1
            while True:
                vx, vy = rng.randint(-2 * H, 2 * H), rng.randint(-2 * H, 2 * H)
                if vx * vx + vy * vy <= 4 * H * H:
                    break
        else:
            # within a few pixels of J, where the bands bite
            if c == 0:
                t = rng.uniform(0, 2 * math.pi)
                x, y = math.cos(t), math.sin(t)
            else:
                x, y = rng.uniform(-2, 2), 0.0
            vx, vy = round(x * H) + rng.randint(-3, 3), round(y * H) + rng.randint(-3, 3)
        yield vx, vy, n


@pytest.mark.parametrize("c", [0, -2])
def test_soundness_on_closed_form_sets(c):
    oracle = oracle_from_dyadic(c)
    with criterion(f"1 soundness c={c}", 300) as info:
        violations = 0
        cells = 0
        for n in range(1, 9):
            H = 1 << n
            edge = Dyadic(2) + Dyadic(1, -n)
            v = np.arange(-2 * H, 2 * H + 1, dtype=np.int64)
            vx, vy = np.meshgrid(v, v)
            mask = vx * vx + vy * vy <= 4 * H * H
            img = render_grid((Dyadic(-2), Dyadic(-2), edge, edge), n, oracle, CostMeter(), mask=mask)
            bits = _cell_bits(img, oracle)
            bad = grid_violations(c, vx, vy, n, bits) & mask
            violations += int(bad.sum())
            cells += int(mask.sum())
        # spot-check the vectorized rule against the exact rational one
        rng = random.Random(11)
        for _ in range(500):
            n = rng.randint(1, 8)
            H = 1 << n
            a, b, bit = rng.randint(-2 * H, 2 * H), rng.randint(-2 * H, 2 * H), rng.randint(0, 1)
            want = band_violation(c, Fraction(a, H), Fraction(b, H), n, bit)
            got = grid_violations(c, np.array([a]), np.array([b]), n, np.array([bit]))[0]
            assert bool(got) == want
        info["exhaustive_cells"] = cells
        info["exhaustive_violations"] = violations

        sampled = 0
        sampled_violations = 0
        for vx0, vy0, n in _random_pixels(c, random.Random(c + 100), 100_000):
            ans = decide_pixel(PixelQuery.grid(vx0, vy0, n), oracle, CostMeter())
            H = 1 << n
            sampled_violations += band_violation(c, Fraction(vx0, H), Fraction(vy0, H), n, ans.bit)
            sampled += 1
        info["random_pixels"] = sampled
        info["random_violations"] = sampled_violations
        assert violations == 0 and sampled_violations == 0


# ---------------------------------------------------------------------------
# 2. parabolic roots


def _residuals(c: Fraction, a: Fraction, p: int):
    z, d = a, Fraction(1)
    for _ in range(p):
        d *= 2 * z
        z = z * z + c
    return abs(z - a), abs(d - 1)


def test_parabolic_roots():
    with criterion("2 parabolic roots", 30) as info:
        for period, bracket, exact in ((1, (0.2, 0.3), Fraction(1, 4)), (3, (-1.8, -1.7), Fraction(-7, 4))):
            r = find_parabolic_root(period, bracket)
            width = r.c.width()
            res = _residuals(r.center.to_fraction(), r.alpha.mid().to_fraction(), period)
            info[f"width_{period}"] = f"2^{math.log2(width.to_fraction()) if width else -math.inf:.1f}"
            info[f"residual_{period}"] = f"{float(max(res)):.2e}"
            assert r.c.contains(exact)
            assert width <= Dyadic(1, -50)
            assert max(res) <= Fraction(1, 1 << 20)


# ---------------------------------------------------------------------------
# 3. phase lift at the cusp


def test_phase_lift():
    with criterion("3 phase lift at 1/4", 120) as info:
        root = find_parabolic_root(1, (0.2, 0.3))
        grid = epsilon_grid(1e-4, 40, (1e-8 / 1e-4) ** (1 / 39))
        assert len(grid) == 40 and float(grid[-1]) >= 0.99e-8
        samples = [phase_proxy(root, e) for e in grid]
        lifts = [s.tau_lift_proxy for s in samples]
        slope = float(np.polyfit(np.log([float(e) for e in grid]), np.log([s.transit_count for s in samples]), 1)[0])
        info["strictly_decreasing"] = all(b < a for a, b in zip(lifts, lifts[1:]))
        info["loglog_slope"] = f"{slope:.4f}"
        assert info["strictly_decreasing"]
        assert abs(slope + 0.5) <= 0.05


# ---------------------------------------------------------------------------
# 4. discontinuity witness at -7/4


def test_witness_at_airplane_root():
    with criterion("4 witness at -7/4", 600) as info:
        root = find_parabolic_root(3, (-1.8, -1.7))
        w = None
        for l in range(8, 15):
            try:
                w = find_discontinuity_witness(root, l)
                break
            except NotFound:
                continue
        assert w is not None
        h = Fraction(1, 1 << w.n)
        info["l"] = w.n
        info["dist_upper"] = f"{float(w.bracket1.upper):.3e}"
        info["free_radius"] = f"{float(w.bracket2.lower):.3e}"
        assert w.bracket1.upper.to_fraction() < h / 10
        assert w.bracket2.lower.to_fraction() >= 8 * h
        assert w.reverified and verify_witness(w)
        info["reverified_at"] = w.n + 4


# ---------------------------------------------------------------------------
# 5. the finite game


@pytest.fixture(scope="module")
def game_reports(tmp_path_factory):
    base = tmp_path_factory.mktemp("game")
    out = base / "game.json"
    times, blobs = [], []
    for _ in range(2):
        t0 = time.perf_counter()
        code = main(["game", "--roster", "demo3", "--T", "16l", "--depth", "3", "--out", str(out)])
        times.append(time.perf_counter() - t0)
        blobs.append((code, out.read_bytes()))
    return times, blobs


def test_game_demo3(game_reports, tmp_path):
    times, blobs = game_reports
    with criterion("5 game demo3 T=16l depth 3", 900) as info:
        code, blob = blobs[0]
        report = json.loads(blob)
        final = Interval(Dyadic.parse(report["final_interval"]["lo"]), Dyadic.parse(report["final_interval"]["hi"]))
        certs = [Certificate.from_json(c) for c in report["certificates"]]
        served = all(answer_valid_for(r.m, r.answer, final) for c in certs for r in c.transcript)
        info["exit"] = code
        info["certificates"] = len(certs)
        info["verdicts"] = "/".join(report["verdicts"])
        info["sides"] = "/".join(c.violated_side for c in certs)
        info["served_answers_valid"] = report["served_answers_valid"] and served
        info["game_seconds"] = f"{times[0]:.1f}"
        assert times[0] < 900
        assert code == 0 and len(certs) == 3 and report["verdicts"] == ["ok"] * 3
        assert report["served_answers_valid"] and served
        (tmp_path / "game.json").write_bytes(blob)
        assert main(["verify", "--report", str(tmp_path / "game.json"), "--out", str(tmp_path / "v.json")]) == 0


# ---------------------------------------------------------------------------
# 6. cost model


def test_cost_model():
    with criterion("6 cost model", 600) as info:
        rng = random.Random(5)
        worst = 0.0
        for c in ("0", "-7/4", "1*2^-2", "-3/4"):
            oracle = oracle_from_dyadic(Dyadic.parse(c))
            for _ in range(100):
                n = rng.randint(2, 10)
                H = 1 << n
                meter = CostMeter()
                decide_pixel(PixelQuery.grid(rng.randint(-2 * H, 2 * H), rng.randint(-2 * H, 2 * H), n), oracle, meter)
                assert meter.ticks >= meter.max_precision_queried
                worst = max(worst, meter.max_precision_queried / max(1, meter.ticks))
        info["max_precision_over_ticks"] = f"{worst:.3f}"
        hard = oracle_from_dyadic(Dyadic.parse("-7/4") + Dyadic(1, -12))
        zero = oracle_from_dyadic(0)
        for n in (6, 8, 10):
            a = measure_T(estimator_machine, n, 1, hard, 600, seed=1)
            b = measure_T(estimator_machine, n, 1, zero, 600, seed=1)
            info[f"T_{n}"] = f"{a.value}>{b.value}"
            assert a.value > b.value


# ---------------------------------------------------------------------------
# 7. metrics


def test_metrics():
    with criterion("7 metrics", 600) as info:
        rng = random.Random(7)
        for _ in range(1000):
            a = [DyadicPoint.from_grid(rng.randint(-40, 40), rng.randint(-40, 40), 4) for _ in range(rng.randint(1, 12))]
            b = [DyadicPoint.from_grid(rng.randint(-40, 40), rng.randint(-40, 40), 4) for _ in range(rng.randint(1, 12))]
            A, B = PointSet(a), PointSet(b)
            brute = max(one_sided_dist_brute(A, B).hi, one_sided_dist_brute(B, A).hi)
            assert hausdorff(A, B).hi == brute
        info["hausdorff_pairs"] = 1000
        res = semicontinuity_probe(oracle_from_dyadic(0), Dyadic(1, -2), 6)
        info["probe_delta"] = str(res.delta)
        assert res.delta is not None and res.delta >= Dyadic(1, -6)


# ---------------------------------------------------------------------------
# 8. determinism


def test_determinism(game_reports, tmp_path):
    _, blobs = game_reports
    with criterion("8 determinism", 300) as info:
        same = {"game": blobs[0][1] == blobs[1][1]}
        commands = {
            "roots": ["roots", "--period", "3"],
            "implode": ["implode", "--count", "10"],
            "witness": ["witness", "--l-min", "10", "--l-max", "10"],
            "render": ["render", "--c", "-1", "--n", "4", "--prefix", str(tmp_path / "img")],
        }
        for name, argv in commands.items():
            out = []
            for _ in range(2):
                if name == "render":
                    assert main(argv) == 0
                    out.append((tmp_path / "img.json").read_bytes() + (tmp_path / "img.pgm").read_bytes())
                else:
                    assert main(argv + ["--out", str(tmp_path / f"{name}.json")]) == 0
                    out.append((tmp_path / f"{name}.json").read_bytes())
            same[name] = out[0] == out[1]
        info.update(same)
        assert all(same.values())
