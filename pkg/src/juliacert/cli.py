"""Command-line entry point: ``juliacert <command> [options]``.

Every command writes a JSON report carrying ``schema``, ``seed`` and the
fully resolved ``config``; re-running with that config reproduces the
report byte for byte.  Options may also come from a flat ``key = value``
file given with ``--config``; flags on the command line win.

Exit codes: 0 ok, 1 verification failed, 2 usage or config error,
3 certification ceiling reached, 4 nothing found.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .adversary import ROSTERS, WitnessNotFound, make_roster, run_game, verify_report
from .numerics import Dyadic
from .oracle import CostMeter, answer_valid_for, oracle_from_dyadic
from .parabolic import (
    AmbiguousBracket,
    DiscontinuityWitness,
    ExcludedRoot,
    InvalidEpsilon,
    NotFound,
    ParabolicRoot,
    PrecisionCeiling,
    Undecided,
    epsilon_grid,
    find_discontinuity_witness,
    find_parabolic_root,
    phase_proxy,
    verify_witness,
)
from .pixel import (
    SCHEMA,
    BudgetExceeded,
    DecideOptions,
    GridImage,
    PixelQuery,
    decide_pixel,
    measure_T,
    render_grid,
    write_image,
)

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_CEILING, EXIT_NOT_FOUND = 0, 1, 2, 3, 4

# saddle-node brackets for the periods with a well-known real root
KNOWN_BRACKETS = {1: (0.2, 0.3), 3: (-1.8, -1.7)}


NEGATIVE_VALUE = re.compile(r"^-\.?\d")


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# option parsing helpers


def dyadic_arg(text: str) -> Dyadic:
    try:
        return Dyadic.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def epsilon_arg(text: str) -> Dyadic:
    """Exact dyadic literal, or a decimal rounded to the nearest double."""
    try:
        return Dyadic.parse(text)
    except ValueError:
        pass
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"not a finite number: {text!r}")
    return Dyadic.from_float(v)


def region_arg(text: str) -> tuple[Dyadic, ...]:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("region needs four comma-separated corners x0,y0,x1,y1")
    vals = tuple(dyadic_arg(p) for p in parts)
    if vals[2] <= vals[0] or vals[3] <= vals[1]:
        raise argparse.ArgumentTypeError("region corners must satisfy x0 < x1 and y0 < y1")
    return vals


def pair_arg(text: str) -> tuple[float, float]:
    parts = text.replace(":", ",").split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected lo,hi")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a bracket: {text!r}") from None
    if not lo < hi:
        raise argparse.ArgumentTypeError("bracket needs lo < hi")
    return lo, hi


def int_list_arg(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of integers: {text!r}") from None


def root_arg(text: str) -> dict:
    """``period=3`` or ``period=3,bracket=-1.8:-1.7``."""
    spec: dict = {}
    for item in text.split(","):
        if "=" not in item:
            raise argparse.ArgumentTypeError(f"root spec items look like key=value, got {item!r}")
        k, v = (s.strip() for s in item.split("=", 1))
        if k == "period":
            spec["period"] = int(v)
        elif k == "bracket":
            spec["bracket"] = pair_arg(v)
        else:
            raise argparse.ArgumentTypeError(f"unknown root spec key {k!r}")
    if "period" not in spec:
        raise argparse.ArgumentTypeError("root spec needs a period")
    if "bracket" not in spec:
        if spec["period"] not in KNOWN_BRACKETS:
            raise argparse.ArgumentTypeError(f"no default bracket for period {spec['period']}; give bracket=lo:hi")
        spec["bracket"] = KNOWN_BRACKETS[spec["period"]]
    return spec


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    out = {}
    for no, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{no}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        k = k.replace("-", "_")
        if k in out:
            raise UsageError(f"{path}:{no}: duplicate key {k!r}")
        out[k] = v
    return out


# ---------------------------------------------------------------------------
# shared pieces


def _to_json(obj) -> str:
    if isinstance(obj, Dyadic):
        return str(obj)
    if isinstance(obj, tuple):
        return [_to_json(v) for v in obj]
    if isinstance(obj, list):
        return [_to_json(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _to_json(v) for k, v in obj.items()}
    return obj


def _resolved(args) -> dict:
    skip = {"func", "config", "command"}
    return {k: _to_json(v) for k, v in sorted(vars(args).items()) if k not in skip}


def _dumps(report: dict) -> bytes:
    return (json.dumps(report, sort_keys=True, indent=2) + "\n").encode()


def _emit(args, report: dict) -> None:
    report = {"schema": SCHEMA, "command": args.command, "seed": args.seed, "config": _resolved(args), **report}
    data = _dumps(report)
    if getattr(args, "out", None):
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def _root(spec: dict) -> ParabolicRoot:
    return find_parabolic_root(spec["period"], spec["bracket"])


def _parameter(args) -> tuple[Dyadic, dict]:
    """The dyadic parameter c and its descriptor, from --c or --root/--eps."""
    if args.c is not None and args.root is not None:
        raise UsageError("give either --c or --root, not both")
    if args.c is not None:
        if args.eps is not None:
            raise UsageError("--eps only applies together with --root")
        return args.c, {"kind": "dyadic", "value": str(args.c)}
    if args.root is None:
        raise UsageError("a parameter is required: --c VALUE or --root period=P")
    root = _root(args.root)
    eps = args.eps if args.eps is not None else Dyadic(0)
    c = root.center + eps
    return c, {"kind": "root+eps", "root": root.to_json(), "epsilon": str(eps), "value": str(c)}


def _default_region(args, n: int):
    if args.c is not None:
        return tuple(Dyadic(v) for v in (-2, -2, 2, 2))
    # a zoom of half-width 1/8 around the parabolic point
    root = _root(args.root)
    a = root.alpha.mid()
    half = Dyadic(1, -3)
    return ((a - half).round_dn(n, "floor"), (-half).round_dn(n, "floor"),
            (a + half).round_dn(n, "ceil"), half.round_dn(n, "ceil"))


# ---------------------------------------------------------------------------
# commands


def _render_rows(job):
    c_text, region, n, opts, k, jobs = job
    x0, y0, x1, y1 = region
    h, w = y1.scaled(n) - y0.scaled(n), x1.scaled(n) - x0.scaled(n)
    mask = np.zeros((h, w), dtype=bool)
    mask[k::jobs] = True
    img = render_grid(region, n, oracle_from_dyadic(Dyadic.parse(c_text)), CostMeter(), DecideOptions(**opts), mask)
    return img.cells[k::jobs], img.interior[k::jobs], img.max_ticks, img.total_ticks, img.records


def render_parallel(c: Dyadic, region, n: int, jobs: int, options: DecideOptions) -> GridImage:
    """Render with rows dealt round-robin to workers; the merged grid equals a single-process render."""
    opts = vars(options)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_render_rows, [(str(c), tuple(region), n, opts, k, jobs) for k in range(jobs)]))
    h = region[3].scaled(n) - region[1].scaled(n)
    w = region[2].scaled(n) - region[0].scaled(n)
    cells = np.empty((h, w), dtype=np.uint8)
    interior = np.empty((h, w), dtype=bool)
    records = {}
    for k, p in enumerate(parts):
        cells[k::jobs], interior[k::jobs] = p[0], p[1]
        records.update(p[4])
    return GridImage(tuple(region), n, cells, interior, max(p[2] for p in parts), sum(p[3] for p in parts),
                     oracle_from_dyadic(c).descriptor(), records)


def cmd_render(args) -> int:
    c, desc = _parameter(args)
    n = args.n
    region = args.region or _default_region(args, n)
    for v in region:
        if not v.in_dn(n):
            raise UsageError(f"region corner {v} is not on the 2^-{n} grid")
    options = DecideOptions(tick_limit=args.tick_limit)
    if args.jobs > 1:
        img = render_parallel(c, region, n, args.jobs, options)
    else:
        img = render_grid(region, n, oracle_from_dyadic(c), CostMeter(), options)
    prefix = Path(args.prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    pgm, png = prefix.with_suffix(".pgm"), prefix.with_suffix(".png") if args.png else None
    write_image(img, pgm, None, png)
    sidecar = {**img.sidecar(), "c_descriptor": desc, "counts": img.counts(), "total_ticks": img.total_ticks,
               "pgm": pgm.name, "png": None if png is None else png.name}
    if args.out is None:
        args.out = str(prefix.with_suffix(".json"))
    _emit(args, {"render": sidecar})
    return EXIT_OK


def cmd_decide(args) -> int:
    c, desc = _parameter(args)
    q = PixelQuery.at(args.x, args.y, args.n)
    meter = CostMeter()
    ans = decide_pixel(q, oracle_from_dyadic(c), meter, DecideOptions(tick_limit=args.tick_limit))
    _emit(args, {
        "parameter": desc,
        "answer": {
            "bit": ans.bit,
            "provenance": ans.provenance.value,
            "lower": repr(ans.lower),
            "upper": None if math.isinf(ans.upper) else repr(ans.upper),
            "side": ans.side,
        },
        "ticks": meter.ticks,
        "max_precision_queried": meter.max_precision_queried,
    })
    return EXIT_OK


def cmd_roots(args) -> int:
    lo, hi = args.bracket if args.bracket else KNOWN_BRACKETS.get(args.period, (None, None))
    if lo is None:
        raise UsageError(f"no default bracket for period {args.period}; pass --bracket lo,hi")
    root = find_parabolic_root(args.period, (lo, hi), bits=args.bits)
    _emit(args, {"registry": [root.to_json()], "center": str(root.center), "width": str(root.c.width())})
    return EXIT_OK


def cmd_implode(args) -> int:
    root = _root(args.root)
    if not 0 < args.eps_min < args.eps0 or args.count < 2:
        raise UsageError("need 0 < eps-min < eps0 and count >= 2")
    grid = epsilon_grid(args.eps0, args.count, (args.eps_min / args.eps0) ** (1 / (args.count - 1)))
    samples = []
    for eps in grid:
        samples.append(phase_proxy(root, eps).to_json())
    xs = np.log([float(e) for e in grid])
    ys = np.log([max(1, s["transit_count"]) for s in samples])
    slope = float(np.polyfit(xs, ys, 1)[0])
    lifts = [s["tau_lift_proxy"] for s in samples]
    _emit(args, {
        "root": root.to_json(),
        "samples": samples,
        "loglog_slope": repr(slope),
        "lift_strictly_decreasing": all(b < a for a, b in zip(lifts, lifts[1:])),
    })
    return EXIT_OK


def cmd_witness(args) -> int:
    root = _root(args.root)
    attempts = []
    for l in range(args.l_min, args.l_max + 1):
        try:
            w = find_discontinuity_witness(root, l, args.budget, eps0=args.eps0)
        except NotFound as exc:
            attempts.append({"l": l, "result": str(exc)})
            continue
        attempts.append({"l": l, "result": "certified"})
        _emit(args, {"witness": w.to_json(), "attempts": attempts})
        return EXIT_OK
    raise NotFound(f"no witness for l in [{args.l_min}, {args.l_max}]: " + "; ".join(a["result"] for a in attempts))


def cmd_game(args) -> int:
    roster = make_roster(args.roster, args.T)
    result = run_game(roster, _root(args.root), T=args.T, max_depth=args.depth, seed=args.seed,
                      grid_n=args.grid_n, l_min=args.l_min)
    report = {k: v for k, v in result.report.items() if k not in ("schema", "seed")}
    _emit(args, report)
    if result.report["error"] is not None:
        return EXIT_NOT_FOUND
    return EXIT_OK if result.report["verified"] else EXIT_FAILED


def _verify_game(report: dict) -> dict:
    verdicts = verify_report(report)
    lo, hi = report["final_interval"]["lo"], report["final_interval"]["hi"]
    from .numerics import Interval
    from .oracle import QueryRecord

    final = Interval(Dyadic.parse(lo), Dyadic.parse(hi))
    served = all(answer_valid_for(q.m, q.answer, final)
                 for cert in report["certificates"] for q in map(QueryRecord.from_json, cert["transcript"]))
    ok = bool(verdicts) and all(verdicts) and served and report.get("error") is None
    return {"verified": ok, "verdicts": [v.reason for v in verdicts], "served_answers_valid": served}


def _verify_witness(report: dict) -> dict:
    w = DiscontinuityWitness.from_json(report["witness"])
    ok = verify_witness(w)
    return {"verified": bool(ok), "n": w.n, "z0": report["witness"]["z0"]}


def _verify_roots(report: dict) -> dict:
    entries = []
    for e in report["registry"]:
        r = ParabolicRoot.from_json(e)
        entries.append({"period": r.period, "contains_recorded": bool(
            r.c.lo <= Dyadic.parse(e["interval_hi"]) and Dyadic.parse(e["interval_lo"]) <= r.c.hi)})
    return {"verified": all(e["contains_recorded"] for e in entries), "entries": entries}


VERIFIERS = {"game": _verify_game, "witness": _verify_witness, "roots": _verify_roots}


def cmd_verify(args) -> int:
    try:
        report = json.loads(Path(args.report).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read report {args.report}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"report {args.report} is not JSON: {exc}") from None
    if report.get("schema") != SCHEMA:
        raise UsageError(f"report schema {report.get('schema')!r} is not {SCHEMA}")
    kind = report.get("command")
    if kind not in VERIFIERS:
        raise UsageError(f"cannot verify reports of kind {kind!r}")
    result = VERIFIERS[kind](report)
    _emit(args, {"report": str(args.report), "kind": kind, **result})
    return EXIT_OK if result["verified"] else EXIT_FAILED


BENCH_MACHINES = ("estimator", "escape-time", "const-0", "const-1")


def cmd_bench(args) -> int:
    from .adversary import MACHINES

    c, desc = _parameter(args)
    rows = []
    for n in args.ns:
        r = measure_T(MACHINES[args.machine], n, args.C, oracle_from_dyadic(c), args.max_points, args.seed)
        rows.append({"n": n, "T": r.value, "sampled": r.sampled, "points": r.points,
                     "argmax": None if r.argmax is None else [str(r.argmax.re), str(r.argmax.im)]})
    _emit(args, {"parameter": desc, "machine": args.machine, "measurements": rows})
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, out=True) -> None:
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--seed", type=int, default=0, help="seed recorded in the report and used by sampling")
    if out:
        p.add_argument("--out", help="report path (default: stdout)")


def _param_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--c", type=dyadic_arg, help="dyadic parameter, e.g. -7/4 or 3*2^-5")
    p.add_argument("--root", type=root_arg, help="parabolic root, e.g. period=3")
    p.add_argument("--eps", type=epsilon_arg, help="offset added to the root parameter")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="juliacert", description="Certified pictures and hardness experiments for z^2 + c.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="certified pixel grid as PGM (+PNG) with a JSON sidecar")
    _common(p)
    _param_flags(p)
    p.add_argument("--region", type=region_arg, help="x0,y0,x1,y1 with corners on the 2^-n grid")
    p.add_argument("--n", type=int, default=6, help="resolution in bits")
    p.add_argument("--prefix", default="render", help="output path prefix for .pgm/.png/.json")
    p.add_argument("--png", action="store_true", help="also write a PNG (needs Pillow)")
    p.add_argument("--tick-limit", type=float, default=2.0e6, help="per-pixel work limit in ticks")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("decide", help="decide one pixel")
    _common(p)
    _param_flags(p)
    p.add_argument("--x", type=dyadic_arg, required=True)
    p.add_argument("--y", type=dyadic_arg, required=True)
    p.add_argument("--n", type=int, required=True, help="resolution in bits")
    p.add_argument("--tick-limit", type=float, default=2.0e6, help="work limit in ticks")
    p.set_defaults(func=cmd_decide)

    p = sub.add_parser("roots", help="certify a real parabolic root")
    _common(p)
    p.add_argument("--period", type=int, required=True)
    p.add_argument("--bracket", type=pair_arg, help="lo,hi search bracket on the real axis")
    p.add_argument("--bits", type=int, default=64, help="width of the certified interval is at most 2^-bits")
    p.set_defaults(func=cmd_roots)

    p = sub.add_parser("implode", help="gate transit counts along a geometric epsilon grid")
    _common(p)
    p.add_argument("--root", type=root_arg, default=root_arg("period=1"))
    p.add_argument("--eps0", type=float, default=1e-4, help="largest epsilon")
    p.add_argument("--count", type=int, default=40, help="grid points")
    p.add_argument("--eps-min", type=float, default=1e-8, help="smallest epsilon; the grid is geometric")
    p.set_defaults(func=cmd_implode)

    p = sub.add_parser("witness", help="certified implosion witness at the smallest feasible l")
    _common(p)
    p.add_argument("--root", type=root_arg, default=root_arg("period=3"))
    p.add_argument("--l-min", type=int, default=8)
    p.add_argument("--l-max", type=int, default=14)
    p.add_argument("--budget", type=int, default=60, help="epsilon grid points searched")
    p.add_argument("--eps0", type=float, default=1e-2, help="largest epsilon searched")
    p.set_defaults(func=cmd_witness)

    p = sub.add_parser("game", help="adversary game against a roster of budgeted machines")
    _common(p)
    p.add_argument("--roster", default="demo3", help=f"{', '.join(ROSTERS)} or comma-separated machine names")
    p.add_argument("--T", default="16l", help="budget family, e.g. 16*l or l^2 (ticks)")
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--root", type=root_arg, default=root_arg("period=3"))
    p.add_argument("--grid-n", type=int, default=4, help="resolution of the grid-scale nesting check")
    p.add_argument("--l-min", type=int, default=10)
    p.set_defaults(func=cmd_game)

    p = sub.add_parser("verify", help="re-check a game, witness or roots report from its file alone")
    _common(p)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="worst-case ticks T_M(n) over the 2C-ball")
    _common(p)
    _param_flags(p)
    p.add_argument("--machine", choices=BENCH_MACHINES, default="estimator")
    p.add_argument("--ns", type=int_list_arg, default=[6, 8, 10], help="resolutions, comma separated")
    p.add_argument("--C", type=dyadic_arg, default=Dyadic(1), help="ball radius is 2C")
    p.add_argument("--max-points", type=int, default=20_000, help="sample size above which the grid is sampled")
    p.set_defaults(func=cmd_bench)
    # values such as -2,-2,2,2 or -7/4 are arguments, not flags
    for parser in (ap, *sub.choices.values()):
        parser._negative_number_matcher = NEGATIVE_VALUE
    return ap


def _config_path(argv) -> tuple[str | None, str | None]:
    """The subcommand and the --config value, found before full parsing."""
    command = path = None
    it = iter(argv)
    for tok in it:
        if tok == "--config":
            path = next(it, None)
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
        elif command is None and not tok.startswith("-"):
            command = tok
    return command, path


def _with_config(ap: argparse.ArgumentParser, argv) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    command, path = _config_path(argv)
    subs = ap._subparsers._group_actions[0].choices
    if path and command in subs:
        sub = subs[command]
        actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
        values = read_config(path)
        unknown = sorted(set(values) - set(actions))
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
        defaults = {}
        for k, v in values.items():
            a = actions[k]
            if isinstance(a, argparse._StoreTrueAction):
                defaults[k] = _bool(v)
                continue
            try:
                defaults[k] = a.type(v) if a.type else v
            except argparse.ArgumentTypeError as exc:
                raise UsageError(f"config key {k}: {exc}") from None
            except ValueError:
                raise UsageError(f"config key {k}: bad value {v!r}") from None
            if a.choices is not None and defaults[k] not in a.choices:
                raise UsageError(f"config key {k}: {v!r} is not one of {', '.join(map(str, a.choices))}")
            a.required = False
        sub.set_defaults(**defaults)
    return ap.parse_args(argv)


def _fail(code: int, exc: BaseException) -> int:
    err = {"schema": SCHEMA, "error": type(exc).__name__, "message": str(exc), "exit": code}
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = _with_config(ap, argv)
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, ValueError, InvalidEpsilon, ExcludedRoot) as exc:
        return _fail(EXIT_USAGE, exc)
    except (PrecisionCeiling, BudgetExceeded, Undecided) as exc:
        return _fail(EXIT_CEILING, exc)
    except (NotFound, AmbiguousBracket, WitnessNotFound) as exc:
        return _fail(EXIT_NOT_FOUND, exc)


if __name__ == "__main__":
    sys.exit(main())
