"""Certified pixel decisions, implosion witnesses and adversary games for quadratic Julia sets."""

from .adversary import make_roster, run_game, verify_certificate, verify_report
from .metrics import PointSet, hausdorff, one_sided_dist, semicontinuity_probe
from .numerics import Ball, Dyadic, DyadicPoint, Interval, Precision, ball_step, norm1
from .oracle import CostMeter, DeferredOracle, OracleTape, oracle_from_dyadic, query
from .parabolic import find_discontinuity_witness, find_parabolic_root, phase_proxy, verify_witness
from .pixel import PixelQuery, decide_pixel, measure_T, render_grid

__all__ = [
    "Ball",
    "CostMeter",
    "DeferredOracle",
    "Dyadic",
    "DyadicPoint",
    "Interval",
    "OracleTape",
    "PixelQuery",
    "PointSet",
    "Precision",
    "ball_step",
    "decide_pixel",
    "find_discontinuity_witness",
    "find_parabolic_root",
    "hausdorff",
    "make_roster",
    "measure_T",
    "norm1",
    "one_sided_dist",
    "oracle_from_dyadic",
    "phase_proxy",
    "query",
    "render_grid",
    "run_game",
    "semicontinuity_probe",
    "verify_certificate",
    "verify_report",
    "verify_witness",
]

__version__ = "0.1.0"
