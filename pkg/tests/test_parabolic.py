import json
import math
from fractions import Fraction

import pytest

from juliacert.numerics import Ball, Dyadic
from juliacert.parabolic import (
    DiscontinuityWitness,
    ExcludedRoot,
    InvalidEpsilon,
    NotFound,
    ParabolicRoot,
    PrecisionCeiling,
    epsilon_grid,
    escape_estimate,
    find_discontinuity_witness,
    find_parabolic_root,
    geometric_limit_iterate,
    phase_proxy,
    refine_root,
    verify_witness,
)


@pytest.fixture(scope="module")
def quarter():
    return find_parabolic_root(1, (0.2, 0.3))


@pytest.fixture(scope="module")
def airplane():
    return find_parabolic_root(3, (-1.8, -1.7))


@pytest.fixture(scope="module")
def witness(airplane):
    return find_discontinuity_witness(airplane, 10)


def orbit_residuals(c: Fraction, a: Fraction, p: int):
    """Exact |f^p(a) - a| and |(f^p)'(a) - 1| in rational arithmetic."""
    z, d = a, Fraction(1)
    for _ in range(p):
        d *= 2 * z
        z = z * z + c
    return abs(z - a), abs(d - 1)


class TestRoots:
    def test_cusp(self, quarter):
        assert quarter.is_exactly(Fraction(1, 4))
        assert quarter.c.width() <= Dyadic(1, -50)
        assert quarter.alpha.contains(Fraction(1, 2))

    def test_period_three(self, airplane):
        assert airplane.is_exactly(Fraction(-7, 4))
        assert airplane.c.width() <= Dyadic(1, -50)
        r1, r2 = orbit_residuals(airplane.center.to_fraction(), airplane.alpha.mid().to_fraction(), 3)
        assert r1 <= Fraction(1, 1 << 20) and r2 <= Fraction(1, 1 << 20)
        assert len(airplane.cycle) == 3

    def test_no_root_in_bracket(self):
        with pytest.raises(NotFound):
            find_parabolic_root(1, (0.3, 0.4))

    def test_refine(self, quarter, airplane):
        r = refine_root(quarter, 100)
        assert r.c.width() <= Dyadic(1, -100) and r.c.contains(Fraction(1, 4))
        assert refine_root(airplane, 100).c.contains(Fraction(-7, 4))

    def test_refine_ceiling(self, quarter):
        with pytest.raises(PrecisionCeiling):
            refine_root(quarter, 10 ** 6, ceiling=10 ** 4)

    def test_json_round_trip(self, airplane):
        back = ParabolicRoot.from_json(json.loads(json.dumps(airplane.to_json())))
        assert back.c.contains(airplane.center) and back.period == 3

    def test_oracle_reads_root(self, quarter):
        assert quarter.oracle().provide(30) == Fraction(1, 4)


class TestPhase:
    def test_transit_count_near_classical_estimate(self, quarter):
        s = phase_proxy(quarter, Dyadic.from_float(1e-4))
        assert 250 <= s.transit_count <= 350
        assert s.tau_lift_proxy == -s.transit_count
        assert 0 <= s.phase_proxy < 1

    def test_quartering_epsilon_doubles_count(self, quarter):
        # the gate has fixed width, so the count only follows pi / sqrt(eps) once sqrt(eps) is well below it
        counts = [phase_proxy(quarter, Dyadic.from_float(1e-2 * 4.0 ** -k)).transit_count for k in range(4, 10)]
        for a, b in zip(counts, counts[1:]):
            assert 1.9 <= b / a <= 2.2
        slope = math.log(counts[-1] / counts[0]) / math.log(4.0 ** -5)
        assert -0.55 <= slope <= -0.45

    def test_invalid_epsilon(self, quarter):
        with pytest.raises(InvalidEpsilon):
            phase_proxy(quarter, Dyadic(1))
        with pytest.raises(InvalidEpsilon):
            phase_proxy(quarter, Dyadic(0))
        with pytest.raises(InvalidEpsilon):
            geometric_limit_iterate(quarter, Dyadic(1), Ball(0))

    def test_epsilon_grid(self):
        g = epsilon_grid(1e-4, 10)
        assert all(b < a for a, b in zip(g, g[1:]))
        assert abs(float(g[3]) - 1e-4 * 0.93 ** 3) < 1e-16

    def test_escape_region_iterate(self, airplane):
        it = geometric_limit_iterate(airplane, Dyadic.from_float(1e-4), Ball(3))
        assert it.escaped

    def test_close_phases_give_close_limits(self, airplane):
        eps = epsilon_grid(1e-4, 200, 0.99)
        samples = [phase_proxy(airplane, e) for e in eps]
        pair = None
        for i in range(len(samples)):
            for j in range(i + 1, len(samples)):
                d = abs(samples[i].phase_proxy - samples[j].phase_proxy)
                if min(d, 1 - d) < 1e-3 and samples[i].transit_count != samples[j].transit_count:
                    pair = (i, j)
                    break
            if pair:
                break
        assert pair is not None
        a, b = (geometric_limit_iterate(airplane, eps[k], Ball(0)) for k in pair)
        assert not a.escaped and not b.escaped and a.k != b.k
        gap = math.hypot(float(a.ball.re - b.ball.re), float(a.ball.im - b.ball.im))
        assert gap <= 2 ** -6 + float(a.ball.radius + b.ball.radius)


class TestWitness:
    def test_cusp_excluded(self, quarter):
        with pytest.raises(ExcludedRoot):
            find_discontinuity_witness(quarter, 10)

    def test_zero_budget(self, airplane):
        with pytest.raises(NotFound):
            find_discontinuity_witness(airplane, 10, 0)

    def test_small_l_rejected(self, airplane):
        with pytest.raises(ValueError):
            find_discontinuity_witness(airplane, 4)

    def test_thresholds(self, witness):
        h = Fraction(1, 1 << witness.n)
        assert witness.bracket1.upper.to_fraction() < h / 10
        assert witness.bracket2.lower.to_fraction() >= 8 * h
        assert witness.c1 > witness.root.c.hi and witness.c2 > witness.root.c.hi
        assert witness.phase1 != witness.phase2 and witness.reverified

    def test_pixel_near_parabolic_point(self, witness):
        a = float(witness.root.alpha.mid())
        assert -0.2 <= float(witness.z0.re) - a <= 0.25 and 0 < float(witness.z0.im) <= 0.25

    def test_round_trip_and_reverify(self, witness):
        back = DiscontinuityWitness.from_json(json.loads(json.dumps(witness.to_json())))
        assert (back.z0, back.c1, back.c2, back.n) == (witness.z0, witness.c1, witness.c2, witness.n)
        assert verify_witness(back)

    def test_tampered_witness_fails(self, witness):
        d = witness.to_json()
        d["c1"] = d["c2"]
        assert not verify_witness(DiscontinuityWitness.from_json(d))

    def test_renders_replay_at_finer_resolution(self, witness):
        r = witness.renders()
        assert r["c1"]["n"] == witness.n + 4 and r["c1"]["schema"] == "juliacert/v1"
        assert r["c2"]["c_descriptor"]["value"] == str(witness.c2)

    def test_float_screen_sees_the_split(self, witness):
        z = complex(witness.z0)
        near = escape_estimate([z], float(witness.c1), 100_000)[0]
        far = escape_estimate([z], float(witness.c2))[0]
        h = 2.0 ** -witness.n
        assert 0 < near < h / 10 and far > 8 * h
