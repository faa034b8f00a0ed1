import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from juliacert.metrics import (
    PointSet,
    distance_report,
    grid_sets,
    hausdorff,
    one_sided_dist,
    one_sided_dist_brute,
    semicontinuity_probe,
)
from juliacert.numerics import Dyadic, DyadicPoint
from juliacert.oracle import CostMeter, oracle_from_dyadic
from juliacert.pixel import Cell, GridImage, render_grid

coords = st.tuples(st.integers(-64, 64), st.integers(-64, 64))
point_lists = st.lists(coords, min_size=1, max_size=50)


def pts(raw, n=4):
    return PointSet([DyadicPoint.from_grid(x, y, n) for x, y in raw])


def reference(a, b, norm):
    # independent re-implementation over exact fractions
    def d(p, q):
        dx, dy = abs(p[0] - q[0]), abs(p[1] - q[1])
        return max(dx, dy) if norm == "L1" else dx * dx + dy * dy

    return max(min(d(p, q) for q in b) for p in a)


def test_examples():
    zero = PointSet([(0, 0)])
    assert one_sided_dist(zero, zero).hi == 0
    assert one_sided_dist(PointSet([(0, 0), (1, 0)]), zero).hi == 1
    b = PointSet([(0, 0), (0, 1)])
    assert one_sided_dist(zero, b).hi == 0 and one_sided_dist(b, zero).hi == 1
    assert hausdorff(zero, b).hi == 1
    assert hausdorff(b, b).hi == 0


def test_empty_sets_rejected():
    with pytest.raises(ValueError):
        one_sided_dist(PointSet([]), PointSet([(0, 0)]))


def test_norm_mismatch_rejected():
    with pytest.raises(ValueError):
        hausdorff(PointSet([(0, 0)]), PointSet([(0, 0)], "Euclid"))


@settings(max_examples=150)
@given(point_lists, point_lists)
def test_bucketed_equals_brute_force_max_norm(a, b):
    A, B = pts(a), pts(b)
    fast, slow = one_sided_dist(A, B), one_sided_dist_brute(A, B)
    assert fast == slow
    assert fast.hi == Fraction(reference(a, b, "L1"), 16)


@settings(max_examples=100)
@given(point_lists, point_lists)
def test_euclid_bracket_contains_exact(a, b):
    A, B = pts(a).with_norm("Euclid"), pts(b).with_norm("Euclid")
    iv = one_sided_dist(A, B)
    assert iv == one_sided_dist_brute(A, B)
    sq = Fraction(reference(a, b, "Euclid"), 256)
    assert iv.lo.to_fraction() ** 2 <= sq <= iv.hi.to_fraction() ** 2


@given(point_lists, point_lists)
def test_hausdorff_symmetric(a, b):
    A, B = pts(a), pts(b)
    assert hausdorff(A, B) == hausdorff(B, A)


def test_report_fields():
    r = distance_report(PointSet([(0, 0)]), PointSet([(0, 0), (0, 1)]))
    assert r["one_sided_ab"] == "0*2^0" and r["hausdorff"] == "1*2^0"


def _image(cells):
    cells = np.asarray(cells, dtype=np.uint8)
    return GridImage((Dyadic(0), Dyadic(0), Dyadic(cells.shape[1]), Dyadic(cells.shape[0])), 0, cells,
                     np.zeros(cells.shape, dtype=bool))


def test_grid_sets_all_out():
    j, k, o = grid_sets(_image([[Cell.OUT.value] * 3] * 2))
    assert len(j) == 0 and len(k) == 0 and len(o) == 6


def test_grid_sets_single_in_cell():
    cells = [[Cell.OUT.value] * 3 for _ in range(3)]
    cells[1][2] = Cell.IN.value
    j, k, _ = grid_sets(_image(cells))
    assert list(j) == [DyadicPoint(2, 1, 0)]
    assert list(k) == [DyadicPoint(2, 1, 0)]


def _circle_samples(count=720, bits=12):
    s = 1 << bits
    return PointSet([DyadicPoint.from_grid(round(math.cos(t) * s), round(math.sin(t) * s), bits)
                     for t in np.linspace(0, 2 * math.pi, count, endpoint=False)])


def test_j_proxy_close_to_circle():
    img = render_grid((-2, -2, 2, 2), 5, oracle_from_dyadic(0), CostMeter())
    j, _, _ = grid_sets(img)
    circle = _circle_samples()
    # sample spacing 2 pi / 720 < 2^-6 and rounding 2^-13 leave room inside 2^-4
    assert hausdorff(j, circle).hi <= Dyadic(1, -4)


def test_probe_rejects_zero_trials():
    with pytest.raises(ValueError):
        semicontinuity_probe(oracle_from_dyadic(0), Dyadic(1, -2), 6, trials=0)


def test_probe_only_reports_one_sided_distances():
    res = semicontinuity_probe(oracle_from_dyadic(Dyadic.parse("-7/4")), Dyadic(1, -2), 5, trials=1,
                               deltas=[Dyadic(1, -3)])
    for entry in res.tested:
        if entry["result"] != "empty-proxy":
            assert set(entry) >= {"dist_J_hat_to_J_c", "dist_K_c_to_K_hat"}
            assert "dist_J_c_to_J_hat" not in entry
