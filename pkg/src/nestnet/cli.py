"""Command-line front end: build nets, re-check their contracts, run
scaling studies and the toy spiral experiment, and move nets between
JSON documents.

Subcommands::

    construct {step|floor|bits|pointfit|approx}   build + save + budget line
    verify    {bits|floor|pointfit|bounds}        re-check; exit 1 on failure
    scale                                          n-sweep -> CSV / SVG
    train-spiral                                   two-spiral training run
    export                                         re-encode / expand a net

Exit status: 0 on success, 1 when a verification check fails, 2 on bad
usage (including malformed rationals and exhausted case budgets).  Exact
flags take rationals as ``p/q``; decimal literals are rejected rather
than silently rounded.  All randomness sits behind an explicit --seed.

CSV tables share one fixed schema (column order is part of the
interface)::

    experiment,n,s,d,K,delta,params,bound,sup_err,l1_err,l2_err,seed,wall_ms

The SVG plot is a log-log scatter+line rendered straight from the rows
that went into the CSV — no other state feeds it.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from dataclasses import dataclass

from gmpy2 import mpq

from .constructive import (bit_extract_net, build_full, build_interior,
                           floor_nested, point_fit_net, step_function_net)
from .core_ir import eval_scalar, expand, param_count
from .errors import DivergenceError, NestNetError
from .limits import max_cases
from .numerics import format_rational, parse_rational, rat, to_float
from .serialize import load_net, save_net
from .targets import parse_target
from .train import (SpiralConfig, TrainConfig, build_experiment_nets,
                    spiral_dataset, standardize, train)
from .verify import (GridSpec, check_param_bound, exhaustive_bit_check,
                     measure_error)

CSV_COLUMNS = ("experiment", "n", "s", "d", "K", "delta", "params", "bound",
               "sup_err", "l1_err", "l2_err", "seed", "wall_ms")


@dataclass(frozen=True)
class ResultRow:
    """One CSV row; rationals stay exact until the file is written."""

    experiment: str
    n: int | None = None
    s: int | None = None
    d: int | None = None
    K: int | None = None
    delta: mpq | None = None
    params: int | None = None
    bound: mpq | None = None
    sup_err: mpq | None = None
    l1_err: float | None = None
    l2_err: float | None = None
    seed: int | None = None
    wall_ms: float | None = None

    def __post_init__(self):
        for name in ("bound", "sup_err", "l1_err", "l2_err"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"{name} must be nonnegative")

    def cells(self) -> list:
        def cell(value):
            if value is None:
                return ""
            if isinstance(value, mpq):
                return format_rational(value)
            if isinstance(value, float):
                return repr(value)
            return str(value)

        raw = (self.experiment, self.n, self.s, self.d, self.K, self.delta,
               self.params, self.bound, self.sup_err, self.l1_err,
               self.l2_err, self.seed,
               None if self.wall_ms is None else round(self.wall_ms, 1))
        return [cell(v) for v in raw]


def write_csv(path: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(row.cells())


# ---------------------------------------------------------------------------
# SVG plot
# ---------------------------------------------------------------------------


def _decade_ticks(lo: float, hi: float) -> list:
    return [e for e in range(math.ceil(lo - 1e-9), math.floor(hi + 1e-9) + 1)]


def write_svg(path: str, rows) -> None:
    """Log-log scatter+line of sup error (and the bound) against params."""
    measured = [(r.params, to_float(r.sup_err)) for r in rows
                if r.params and r.sup_err is not None and r.sup_err > 0]
    bound = [(r.params, to_float(r.bound)) for r in rows
             if r.params and r.bound is not None and r.bound > 0]
    width, height, margin = 480, 360, 56
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}" '
        'font-family="sans-serif" font-size="11">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    series = [s for s in (measured, bound) if s]
    if not series:
        parts.append(f'<text x="{width // 2}" y="{height // 2}" '
                     'text-anchor="middle">no positive data</text>')
    else:
        xs = [math.log10(x) for s in series for x, _ in s]
        ys = [math.log10(y) for s in series for _, y in s]

        def span(vals):
            lo, hi = min(vals), max(vals)
            if hi - lo < 1e-9:
                lo, hi = lo - 0.5, hi + 0.5
            return lo, hi

        xlo, xhi = span(xs)
        ylo, yhi = span(ys)

        def px(v):
            return margin + (math.log10(v) - xlo) / (xhi - xlo) \
                * (width - 2 * margin)

        def py(v):
            return height - margin - (math.log10(v) - ylo) / (yhi - ylo) \
                * (height - 2 * margin)

        axis = (f'<path d="M {margin} {margin} V {height - margin} '
                f'H {width - margin}" fill="none" stroke="black"/>')
        parts.append(axis)

        def ticks_for(lo, hi):
            decades = _decade_ticks(lo, hi)
            if decades:
                return [(10.0 ** e, f"1e{e}") for e in decades]
            return [(10.0 ** v, f"{10.0 ** v:.3g}") for v in (lo, hi)]

        for value, label in ticks_for(xlo, xhi):
            x = px(value)
            parts.append(f'<line x1="{x:.1f}" y1="{height - margin}" '
                         f'x2="{x:.1f}" y2="{height - margin + 4}" '
                         'stroke="black"/>')
            parts.append(f'<text x="{x:.1f}" y="{height - margin + 16}" '
                         f'text-anchor="middle">{label}</text>')
        for value, label in ticks_for(ylo, yhi):
            y = py(value)
            parts.append(f'<line x1="{margin - 4}" y1="{y:.1f}" '
                         f'x2="{margin}" y2="{y:.1f}" stroke="black"/>')
            parts.append(f'<text x="{margin - 6}" y="{y:.1f}" dy="3" '
                         f'text-anchor="end">{label}</text>')
        parts.append(f'<text x="{width // 2}" y="{height - 12}" '
                     'text-anchor="middle">parameters</text>')
        parts.append(f'<text x="14" y="{height // 2}" text-anchor="middle" '
                     f'transform="rotate(-90 14 {height // 2})">'
                     'sup error</text>')
        styles = (("black", "none", "measured"), ("gray", "4 3", "bound"))
        for pts, (color, dash, label) in zip((measured, bound), styles):
            if not pts:
                continue
            coords = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in pts)
            dasharg = f' stroke-dasharray="{dash}"' if dash != "none" else ""
            parts.append(f'<polyline points="{coords}" fill="none" '
                         f'stroke="{color}"{dasharg}/>')
            for x, y in pts:
                parts.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" '
                             f'r="3" fill="{color}"/>')
        legend = [(color, label) for (color, _, label), pts
                  in zip(styles, (measured, bound)) if pts]
        for i, (color, label) in enumerate(legend):
            parts.append(f'<text x="{width - margin}" y="{margin + 14 * i}" '
                         f'text-anchor="end" fill="{color}">{label}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _ms(t0: float) -> float:
    return (time.perf_counter() - t0) * 1000.0


def _fmt(value) -> str:
    return f"{format_rational(value)} (~{to_float(value):.6g})"


def _parse_norm(text: str):
    return "inf" if text == "inf" else parse_rational(text)


def _parse_ys(text: str) -> tuple:
    return tuple(parse_rational(tok) for tok in text.split(","))


def _save(net, path, encoding=None) -> None:
    save_net(net, path, encoding)
    print(f"wrote {path}")


# ---------------------------------------------------------------------------
# construct
# ---------------------------------------------------------------------------


def cmd_construct(args) -> int:
    status = 0
    if args.what == "step":
        net = step_function_net(args.n, args.r, args.delta, args.J)
        check = check_param_bound(net, "step", args.n, args.r)
    elif args.what == "floor":
        net = floor_nested(args.n, args.r, args.delta)
        check = check_param_bound(net, "floor_nested", args.n, args.r)
    elif args.what == "bits":
        net = bit_extract_net(args.n, args.s)
        check = check_param_bound(net, "bit_extract", args.n, args.s)
    elif args.what == "pointfit":
        net = point_fit_net(_parse_ys(args.ys), args.eps, args.n, args.s)
        check = check_param_bound(net, "point_fit", args.n, args.s)
    else:
        target = parse_target(args.target, args.d)
        if args.chain == "interior":
            build = build_interior(target, args.n, args.s)
            check = check_param_bound(build.net, "interior", args.n, args.s,
                                      args.d)
        else:
            build = build_full(target, args.n, args.s, _parse_norm(args.p))
            bound_id = ("full_p_infty" if args.p == "inf"
                        else "full_p_finite")
            check = check_param_bound(build.net, bound_id, args.n, args.s,
                                      args.d)
        net = build.net
        print(f"K={build.interior.K if args.chain == 'full' else build.K} "
              f"delta={format_rational(build.delta)}")
    verdict = "ok" if check.ok else "FAIL"
    print(f"params {check.count} <= {check.bound} [{check.bound_id}]: "
          f"{verdict}")
    if not check.ok:
        status = 1
    if args.out:
        _save(net, args.out)
    return status


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _verify_bits(args) -> int:
    result = exhaustive_bit_check(args.n, args.s)
    if result.ok:
        print(f"{result.cases}/{result.cases} exact")
        return 0
    theta, k, got, want = result.counterexample
    print(f"FAIL: theta={theta} k={k} got={format_rational(got)} "
          f"want={want}")
    return 1


def _verify_floor(args) -> int:
    n, r, delta = args.n, args.r, args.delta
    net = floor_nested(n, r, delta)
    margin = (1 << sum(n**i for i in range(1, r + 1))) * delta
    levels = 1 << n**r
    samples = args.samples
    total = levels * samples
    budget = max_cases()
    if total > budget:
        print(f"error: {total} sample points exceed the budget {budget}",
              file=sys.stderr)
        return 2
    for level in range(levels):
        span = 1 - margin
        for t in range(samples):
            x = level + (span * rat(t, samples - 1) if samples > 1
                         else rat(0))
            got = eval_scalar(net, x)
            if got != level:
                print(f"FAIL: floor({format_rational(x)}) = "
                      f"{format_rational(got)}, want {level}")
                return 1
    print(f"{total}/{total} exact")
    return 0


def _verify_pointfit(args) -> int:
    ys = _parse_ys(args.ys)
    eps = args.eps
    net = point_fit_net(ys, eps, args.n, args.s)
    count = len(ys)
    top = max(ys)
    for j, y in enumerate(ys):
        ratio = y / eps
        want = (ratio.numerator // ratio.denominator) * eps
        got = eval_scalar(net, j)
        if got != want:
            print(f"FAIL: phi({j}) = {format_rational(got)}, want "
                  f"{format_rational(want)}")
            return 1
    probes = args.probes
    for t in range(probes):
        x = -1 + (count + 2) * rat(t, probes - 1) if probes > 1 else rat(0)
        got = eval_scalar(net, x)
        if not 0 <= got <= top:
            print(f"FAIL: phi({format_rational(x)}) = "
                  f"{format_rational(got)} escapes [0, "
                  f"{format_rational(top)}]")
            return 1
    check = check_param_bound(net, "point_fit", args.n, args.s)
    if not check.ok:
        print(f"FAIL: params {check.count} > {check.bound}")
        return 1
    print(f"{count}/{count} fit points exact; {probes} probes clamped; "
          f"params {check.count} <= {check.bound}")
    return 0


def _verify_bounds(args) -> int:
    target = parse_target(args.target, args.d)
    status = 0
    if args.chain in ("interior", "both"):
        build = build_interior(target, args.n, args.s)
        grid = GridSpec.outside_trifling(args.d, args.points, build.trifling)
        report = measure_error(build.net, target, grid, build=build)
        ok = report.sup_error <= report.bound
        budget = check_param_bound(build.net, "interior", args.n, args.s,
                                   args.d)
        print(f"interior: sup {_fmt(report.sup_error)} <= bound "
              f"{_fmt(report.bound)} on {report.points} points: "
              f"{'ok' if ok else 'FAIL'}")
        print(f"interior: params {budget.count} <= {budget.bound}: "
              f"{'ok' if budget.ok else 'FAIL'}")
        if not (ok and budget.ok):
            status = 1
    if args.chain in ("full", "both"):
        norm = _parse_norm(args.p)
        build = build_full(target, args.n, args.s, norm)
        grid = GridSpec.full_cube(args.d, args.points)
        p_list = () if norm == "inf" else (norm,)
        report = measure_error(build.net, target, grid, p_list, build=build)
        if norm == "inf":
            measured, shown = report.sup_error, _fmt(report.sup_error)
            ok = measured <= report.bound
        else:
            measured = report.lp_error[str(norm)]
            shown = f"{measured:.6g}"
            ok = measured <= to_float(report.bound)
        bound_id = "full_p_infty" if norm == "inf" else "full_p_finite"
        budget = check_param_bound(build.net, bound_id, args.n, args.s,
                                   args.d)
        print(f"full (p={args.p}): error {shown} <= bound "
              f"{_fmt(report.bound)} on {report.points} points: "
              f"{'ok' if ok else 'FAIL'}")
        print(f"full (p={args.p}): params {budget.count} <= {budget.bound}: "
              f"{'ok' if budget.ok else 'FAIL'}")
        if not (ok and budget.ok):
            status = 1
    return status


def cmd_verify(args) -> int:
    handler = {"bits": _verify_bits, "floor": _verify_floor,
               "pointfit": _verify_pointfit, "bounds": _verify_bounds}
    return handler[args.what](args)


# ---------------------------------------------------------------------------
# scale
# ---------------------------------------------------------------------------


def cmd_scale(args) -> int:
    target = parse_target(args.target, args.d)
    ns = [int(tok) for tok in args.n.split(",")]
    norm = _parse_norm(args.p)
    experiment = f"scale-{args.target}-d{args.d}-s{args.s}-p{args.p}"
    rows = []
    status = 0
    for n in ns:
        t0 = time.perf_counter()
        build = build_full(target, n, args.s, norm)
        grid = GridSpec.full_cube(args.d, args.points)
        p_list = (1, 2) if norm == "inf" else (1, 2, norm)
        report = measure_error(build.net, target, grid, p_list, build=build)
        wall = _ms(t0)
        if norm == "inf":
            dominant = report.sup_error <= report.bound
        else:
            dominant = report.lp_error[str(norm)] <= to_float(report.bound)
        if not dominant:
            status = 1
        rows.append(ResultRow(
            experiment=experiment, n=n, s=args.s, d=args.d, K=report.K,
            delta=report.delta, params=report.param_count,
            bound=report.bound, sup_err=report.sup_error,
            l1_err=report.lp_error["1"], l2_err=report.lp_error["2"],
            seed=None, wall_ms=wall))
        print(f"n={n}: K={report.K} params={report.param_count} "
              f"sup={to_float(report.sup_error):.6g} "
              f"bound={to_float(report.bound):.6g} "
              f"{'ok' if dominant else 'FAIL'} ({wall:.0f} ms)")
    points = [(row.params, to_float(row.sup_err)) for row in rows
              if row.sup_err > 0]
    if len(points) >= 2:
        lx = [math.log(c) for c, _ in points]
        ly = [math.log(e) for _, e in points]
        mx, my = sum(lx) / len(lx), sum(ly) / len(ly)
        den = sum((v - mx) ** 2 for v in lx)
        slope = sum((u - mx) * (v - my) for u, v in zip(lx, ly)) / den
        print(f"log-log slope (sup error vs params): {slope:.4f}")
    else:
        print("log-log slope: n/a (need two positive-error rows)")
    if args.csv:
        write_csv(args.csv, rows)
        print(f"wrote {args.csv}")
    if args.svg:
        write_svg(args.svg, rows)
        print(f"wrote {args.svg}")
    return status


# ---------------------------------------------------------------------------
# train-spiral
# ---------------------------------------------------------------------------


def cmd_train_spiral(args) -> int:
    kinds = ("standard", "nested") if args.kind == "both" else (args.kind,)
    train_set = spiral_dataset(SpiralConfig(samples=args.samples,
                                            seed=args.seed))
    test_set = spiral_dataset(SpiralConfig(samples=args.test_samples,
                                           seed=args.seed + 1000))
    train_set, test_set = standardize(train_set, test_set)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch,
                      seed=args.seed)
    for kind in kinds:
        tnet = build_experiment_nets(args.width, kind, seed=args.seed)
        t0 = time.perf_counter()
        history = train(tnet, (train_set, test_set), cfg)
        wall = _ms(t0)
        print(f"{kind}: {len(tnet.params)} params")
        for epoch, loss, acc in history:
            if epoch % args.log_every == 0 or epoch == len(history):
                print(f"  epoch {epoch:3d}  loss {loss:.4f}  "
                      f"test acc {acc:.4f}")
        final = history[-1][2] if history else float("nan")
        print(f"{kind}: final test accuracy {final:.4f} ({wall:.0f} ms)")
        if args.out:
            path = args.out
            if args.kind == "both":
                stem, dot, ext = path.rpartition(".")
                path = f"{stem}-{kind}.{ext}" if dot else f"{path}-{kind}"
            _save(tnet.current_net(), path)
    return 0


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def cmd_export(args) -> int:
    net = load_net(args.infile)
    if args.expand:
        net = expand(net)
    save_net(net, args.out, args.encoding)
    print(f"wrote {args.out} ({param_count(net)} params)")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nestnet",
        description="Build, check, and export nested ReLU constructions.")
    sub = parser.add_subparsers(dest="command", required=True)

    con = sub.add_parser("construct", help="build a net and save it")
    csub = con.add_subparsers(dest="what", required=True)

    p = csub.add_parser("step", help="floor staircase clamped at J")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--delta", type=parse_rational, required=True,
                   metavar="P/Q")
    p.add_argument("--J", type=int, required=True)
    p.add_argument("--out")

    p = csub.add_parser("floor", help="nested floor net")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--delta", type=parse_rational, required=True,
                   metavar="P/Q")
    p.add_argument("--out")

    p = csub.add_parser("bits", help="prefix-sum bit extractor")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--out")

    p = csub.add_parser("pointfit", help="quantized point interpolator")
    p.add_argument("--ys", required=True,
                   help="comma-separated rationals, e.g. 0,1/4,1/2")
    p.add_argument("--eps", type=parse_rational, required=True,
                   metavar="P/Q")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--out")

    p = csub.add_parser("approx", help="grid-quantize-fit approximator")
    p.add_argument("--target", required=True,
                   help="abs-shift:c | hinge2 | const:c")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--p", default="inf", help="norm order, or 'inf'")
    p.add_argument("--chain", choices=("interior", "full"), default="full")
    p.add_argument("--out")

    ver = sub.add_parser("verify", help="re-check a construction")
    vsub = ver.add_subparsers(dest="what", required=True)

    p = vsub.add_parser("bits", help="exhaustive bit-extraction check")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--s", type=int, required=True)

    p = vsub.add_parser("floor", help="exact floor values on good intervals")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--delta", type=parse_rational, required=True,
                   metavar="P/Q")
    p.add_argument("--samples", type=int, default=5,
                   help="points per interval (default 5)")

    p = vsub.add_parser("pointfit", help="fit values + clamp probes")
    p.add_argument("--ys", required=True)
    p.add_argument("--eps", type=parse_rational, required=True,
                   metavar="P/Q")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--probes", type=int, default=200)

    p = vsub.add_parser("bounds", help="error + parameter budget dominance")
    p.add_argument("--target", required=True)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--p", default="inf")
    p.add_argument("--points", type=int, default=201,
                   help="grid points per axis (default 201)")
    p.add_argument("--chain", choices=("interior", "full", "both"),
                   default="both")

    p = sub.add_parser("scale", help="error-vs-parameters sweep")
    p.add_argument("--target", required=True)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--p", default="inf")
    p.add_argument("--n", required=True, help="comma list, e.g. 2,3,4,5,6")
    p.add_argument("--points", type=int, default=201)
    p.add_argument("--csv")
    p.add_argument("--svg")

    p = sub.add_parser("train-spiral", help="toy two-spiral experiment")
    p.add_argument("--kind", choices=("standard", "nested", "both"),
                   default="both")
    p.add_argument("--width", type=int, default=20)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--samples", type=int, default=10000,
                   help="training samples per class")
    p.add_argument("--test-samples", type=int, default=2000,
                   help="test samples per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log-every", type=int, default=10)
    p.add_argument("--out", help="save the trained net(s) as JSON")

    p = sub.add_parser("export", help="re-encode or expand a saved net")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--expand", action="store_true",
                   help="inline all sub-net references")
    p.add_argument("--encoding", choices=("rational", "f64"))

    handlers = {"construct": cmd_construct, "verify": cmd_verify,
                "scale": cmd_scale, "train-spiral": cmd_train_spiral,
                "export": cmd_export}
    parser.set_defaults(_handlers=handlers)
    return parser


def run(argv) -> int:
    """Dispatch one command line; returns the process exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args._handlers[args.command](args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NestNetError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
