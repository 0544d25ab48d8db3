"""Command-line interface: ``rlnd {fit,gof,eval,check,plotdata,sample}``.

Exit codes: 0 success, 1 usage error, 2 data/parse error, 3 numerical
failure, 4 validity-check failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .core import (
    LinearH,
    OutOfRangeError,
    ParamFormatError,
    RlndParams,
    dump_params,
    format_float,
    load_params,
    mass_report,
    rlnd_cdf,
    rlnd_pdf,
    rlnd_quantile,
    rlnd_sample,
)
from .fitting import FitSpec, evaluate_statistics, fit_rlnd, fixed_fit
from .gof import BinningSpec, GofError, read_bin_table, write_bin_table
from .ingest import IngestError, ReturnSeries, load_series, parse_date, write_returns
from .numerics import ConvergenceError, NoSignChangeError
from .validity import (
    HeatSolveSpec,
    check_monotone_cdf,
    heat_equation_oracle,
    verify_fx_positive,
)

log = logging.getLogger("rlnd")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC, EXIT_INVALID = 0, 1, 2, 3, 4

OBJECTIVE_FLAGS = {
    "delta-ccn-paper": "delta_ccn_paper",
    "delta-ccn-standard": "delta_ccn_standard",
    "nll": "neg_log_likelihood",
}
HEAT_TOL = 1e-3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _date(text):
    try:
        return parse_date(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", type=Path, default=None)
    common.add_argument("--threads", type=_positive_int, default=None,
                        help="worker threads for grid evaluation (default: all cores)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    data = _Parser(add_help=False)
    data.add_argument("--input", type=Path, required=True, help="price CSV or one-value-per-line returns file")
    data.add_argument("--date-col", default="Date")
    data.add_argument("--price-col", default=None, help="default: 'Adj Close' if present, else 'Close'")
    data.add_argument("--from", dest="start", type=_date, default=None)
    data.add_argument("--to", dest="end", type=_date, default=None)

    binning = _Parser(add_help=False)
    binning.add_argument("--bins", type=_positive_int, default=50, help="number of groups m before merging")
    binning.add_argument("--bin-mode", choices=["equal-width", "equal-probability"], default="equal-width")
    binning.add_argument("--range-mult", type=float, default=6.0)
    binning.add_argument("--min-expected", type=float, default=5.0)
    binning.add_argument("--renormalize", action=argparse.BooleanOptionalAction, default=True,
                         help="divide rlnd bin probabilities by the attainable mass")
    binning.add_argument("--denominator", choices=["paper", "standard"], default=None)

    parser = _Parser(prog="rlnd", description="Random limit normal distribution toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common, data, binning], help="fit normal and rlnd to returns")
    p.add_argument("--objective", choices=sorted(OBJECTIVE_FLAGS), default=None)
    p.add_argument("--k", type=float, default=None, help="fixed slope K (with --no-search)")
    p.add_argument("--c", type=float, default=None, help="fixed intercept c (with --no-search)")
    p.add_argument("--no-search", action="store_true")
    p.add_argument("--k-max", type=float, default=200.0)
    p.add_argument("--c-min", type=float, default=0.01)
    p.add_argument("--c-max", type=float, default=5.0)
    p.add_argument("--grid", type=_positive_int, default=40, help="grid points per axis")
    p.add_argument("--no-polish", action="store_true")
    p.add_argument("--asymmetric", action="store_true")
    p.add_argument("--joint", action="store_true", help="also fit mu (nll objective only)")

    p = sub.add_parser("gof", parents=[common, data, binning], help="chi-square indices for a parameter file")
    p.add_argument("--params", type=Path, required=True)

    p = sub.add_parser("eval", parents=[common], help="evaluate cdf/pdf or quantiles")
    p.add_argument("--params", type=Path, required=True)
    p.add_argument("--y", type=float, nargs="+", default=None)
    p.add_argument("--p", type=float, nargs="+", default=None)

    p = sub.add_parser("check", parents=[common], help="validity checks and heat-equation comparison")
    p.add_argument("--params", type=Path, required=True)
    p.add_argument("--grid", type=_positive_int, default=10_000)
    p.add_argument("--heat-points", type=_positive_int, default=5)

    p = sub.add_parser("plotdata", parents=[common], help="histogram and fitted densities as TSV")
    p.add_argument("--fit-dir", type=Path, required=True, help="directory written by 'rlnd fit'")

    p = sub.add_parser("sample", parents=[common], help="draw from the renormalised distribution")
    p.add_argument("--params", type=Path, required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--output", type=Path, default=None)
    return parser


# ---------------------------------------------------------------------------
# helpers


def _read_params(path: Path) -> RlndParams:
    if not path.exists():
        raise UsageError(f"parameter file not found: {path}")
    try:
        return load_params(path.read_text())
    except ParamFormatError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _binning(args) -> BinningSpec:
    try:
        return BinningSpec(
            mode=args.bin_mode.replace("-", "_"),
            group_count_m=args.bins,
            range_multiplier=args.range_mult,
            min_expected_count=args.min_expected,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _series(args) -> ReturnSeries:
    return load_series(args.input, args.date_col, args.price_col, args.start, args.end)


def _out_dir(args, default=None) -> Path:
    out = args.out_dir or default or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _public(stats: dict) -> dict:
    return {k: v for k, v in stats.items() if not k.startswith("_")}


def _binning_dict(spec: BinningSpec) -> dict:
    return {"mode": spec.mode, "m": spec.group_count_m, "range_multiplier": spec.range_multiplier,
            "min_expected_count": spec.min_expected_count}


def _params_dict(p: RlndParams) -> dict:
    if isinstance(p.h, LinearH):
        return {"mu": p.mu, "sigma": p.sigma, "k_neg": p.h.k_neg, "k_pos": p.h.k_pos, "c": p.h.c}
    return {"mu": p.mu, "sigma": p.sigma, "h_knots": [list(k) for k in zip(p.h.y, p.h.h)]}


def _summary(stats: dict, out=None) -> None:
    out = out or sys.stdout
    for key in ("delta", "delta_ccn_paper", "delta_ccn_standard"):
        r = stats[key]
        print(f"{key}\t{format_float(r['statistic'])}\tdf={r['df']}\tp={format_float(r['p_value'])}", file=out)
    print(f"mass_defect\t{format_float(stats['mass']['defect'])}", file=out)


# ---------------------------------------------------------------------------
# subcommands


def cmd_fit(args) -> int:
    if (args.k is not None or args.c is not None) and not args.no_search:
        raise UsageError("--k/--c fix the parameters and require --no-search")
    if args.no_search and (args.k is None or args.c is None):
        raise UsageError("--no-search needs both --k and --c")
    objective = args.objective
    if args.denominator is not None:
        implied = f"delta-ccn-{args.denominator}"
        if objective is not None and objective != implied:
            raise UsageError(f"--denominator {args.denominator} conflicts with --objective {objective}")
        objective = implied
    objective = OBJECTIVE_FLAGS[objective or "delta-ccn-standard"]
    if args.joint and objective != "neg_log_likelihood":
        raise UsageError("--joint requires --objective nll")

    binning = _binning(args)
    try:
        spec = FitSpec(objective=objective, k_bounds=(0.0, args.k_max), c_bounds=(args.c_min, args.c_max),
                       grid_resolution=args.grid, polish=not args.no_polish, binning=binning, seed=args.seed,
                       symmetric=not args.asymmetric, joint=args.joint, renormalize=args.renormalize,
                       threads=args.threads)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    series = _series(args)
    log.info("read %d returns from %s", series.n, args.input)
    if args.no_search:
        result = fixed_fit(series, spec, args.k, args.c)
    else:
        result = fit_rlnd(series, spec)
    stats = evaluate_statistics(series, result.params, binning, renormalize=args.renormalize)

    out = _out_dir(args)
    (out / "params.txt").write_text(dump_params(result.params))
    delta, ccn_std, ccn_paper = stats["_reports"]
    ccn = ccn_paper if objective == "delta_ccn_paper" else ccn_std
    write_bin_table(out / "bins.tsv", stats["_bins"], stats["_normal_probs"], stats["_rlnd_probs"], delta, ccn)
    (out / "trace.tsv").write_text(result.trace_tsv())
    report = {
        "input": str(args.input),
        "source_label": series.source_label,
        "date_range": None if series.date_range is None else [d.isoformat() for d in series.date_range],
        "objective": objective,
        "objective_value": result.objective_value,
        "converged": result.converged,
        "searched": not args.no_search,
        "trace_length": len(result.trace),
        "params": _params_dict(result.params),
        "normal_baseline_delta": result.normal_baseline[1],
        "binning": _binning_dict(binning),
        "seed": args.seed,
        "statistics": _public(stats),
    }
    _write_json(out / "fit_report.json", report)
    _summary(stats)
    return EXIT_OK


def cmd_gof(args) -> int:
    params = _read_params(args.params)
    binning = _binning(args)
    series = _series(args)
    stats = evaluate_statistics(series, params, binning, renormalize=args.renormalize)
    out = _out_dir(args)
    delta, ccn_std, ccn_paper = stats["_reports"]
    denominator = args.denominator or "standard"
    ccn = ccn_paper if denominator == "paper" else ccn_std
    write_bin_table(out / "bins.tsv", stats["_bins"], stats["_normal_probs"], stats["_rlnd_probs"], delta, ccn)
    report = {
        "input": str(args.input),
        "params": _params_dict(params),
        "binning": _binning_dict(binning),
        "primary_variant": f"delta_ccn_{denominator}",
        "statistics": _public(stats),
    }
    _write_json(out / "gof_report.json", report)
    _summary(stats)
    return EXIT_OK


def cmd_eval(args) -> int:
    params = _read_params(args.params)
    if (args.y is None) == (args.p is None):
        raise UsageError("give exactly one of --y or --p")
    if args.y is not None:
        print("y\tcdf\tpdf")
        for y in args.y:
            print(f"{format_float(y)}\t{format_float(rlnd_cdf(params, y))}\t{format_float(rlnd_pdf(params, y))}")
        return EXIT_OK
    m = mass_report(params)
    print("p\tquantile")
    for prob in args.p:
        try:
            q = rlnd_quantile(params, prob)
        except OutOfRangeError:
            print(f"{format_float(prob)}\tout-of-range")
            print(f"warning: p={prob!r} is outside the attainable range "
                  f"({format_float(m.lower_mass)}, {format_float(m.upper_mass)})", file=sys.stderr)
            continue
        print(f"{format_float(prob)}\t{format_float(q)}")
    return EXIT_OK


def cmd_check(args) -> int:
    params = _read_params(args.params)
    lines = []
    failed = []

    report = check_monotone_cdf(params, args.grid)
    lines.append("[monotone_cdf]")
    lines.append(report.to_text().rstrip())
    if not report.is_monotone:
        failed.append("monotone_cdf")
    if report.case2_condition_holds is False:
        failed.append("case2_derivative_sign")

    lines.append("[density_positive]")
    if isinstance(params.h, LinearH):
        pos = verify_fx_positive(params)
        lines += [f"holds: {str(pos.holds).lower()}", f"min_pdf: {pos.min_pdf!r}",
                  f"edge_pdf: {pos.edge_pdf!r}", f"tail_decays: {str(pos.tail_decays).lower()}"]
        if not pos.holds:
            failed.append("density_positive")
    else:
        lines.append("not-applicable (tabulated h)")

    lines.append("[heat_equation]")
    lines.append("y\theat\tcdf\tabs_diff\terror_estimate")
    s = params.sigma * params.h(0.0)
    offsets = np.linspace(-2.0, 2.0, args.heat_points) if args.heat_points > 1 else np.array([0.5])
    for y in params.mu + s * offsets:
        sol = heat_equation_oracle(params, y, HeatSolveSpec())
        f = rlnd_cdf(params, y)
        diff = abs(sol.value - f)
        lines.append(f"{format_float(y)}\t{format_float(sol.value)}\t{format_float(f)}\t{diff:.3e}\t{sol.error_estimate:.3e}")
        if diff > HEAT_TOL:
            failed.append(f"heat_equation(y={y!r})")

    lines.append(f"result: {'FAIL ' + ', '.join(failed) if failed else 'PASS'}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out_dir is not None:
        (_out_dir(args) / "check_report.txt").write_text(text)
    return EXIT_INVALID if failed else EXIT_OK


def cmd_plotdata(args) -> int:
    fit_dir = args.fit_dir
    needed = [fit_dir / "bins.tsv", fit_dir / "params.txt", fit_dir / "fit_report.json"]
    for path in needed:
        if not path.exists():
            raise FileNotFoundError(f"missing fit output: {path}")
    table = read_bin_table(fit_dir / "bins.tsv")
    params = _read_params(fit_dir / "params.txt")
    report = json.loads((fit_dir / "fit_report.json").read_text())
    stats = report["statistics"]
    normal = stats["normal"]
    renormalize = stats.get("renormalize", True)

    lo = table["edge_lo"].copy()
    hi = table["edge_hi"].copy()
    if lo.size >= 2:
        # clip the infinite outer bins to the observed data range
        lo[0] = min(stats["data_min"], hi[0] - (hi[1] - lo[1]))
        hi[-1] = max(stats["data_max"], lo[-1] + (hi[-2] - lo[-2]))
    else:
        lo[0], hi[-1] = stats["data_min"], stats["data_max"]
    width = hi - lo
    centre = 0.5 * (lo + hi)
    observed = table["q_i"] / width
    normal_density = np.exp(-0.5 * ((centre - normal["mu"]) / normal["sigma"]) ** 2) / (
        normal["sigma"] * math.sqrt(2.0 * math.pi))
    rlnd_density = rlnd_pdf(params, centre)
    if renormalize:
        rlnd_density = rlnd_density / mass_report(params).mass

    rows = ["bin_center\tobserved_density\tnormal_density\trlnd_density\tbin_lo\tbin_hi\tbin_width"]
    for i in range(centre.size):
        rows.append("\t".join(format_float(v) for v in (
            centre[i], observed[i], normal_density[i], rlnd_density[i], lo[i], hi[i], width[i])))
    out = _out_dir(args, default=fit_dir)
    (out / "plotdata.tsv").write_text("\n".join(rows) + "\n")
    print(f"wrote {out / 'plotdata.tsv'} ({centre.size} rows)")
    return EXIT_OK


def cmd_sample(args) -> int:
    params = _read_params(args.params)
    values = rlnd_sample(params, args.n, seed=args.seed)
    output = args.output or (_out_dir(args) / "samples.txt")
    write_returns(ReturnSeries(values, f"rlnd sample n={args.n} seed={args.seed} params={args.params.name}"), output)
    print(f"wrote {output} ({args.n} values)")
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "gof": cmd_gof,
    "eval": cmd_eval,
    "check": cmd_check,
    "plotdata": cmd_plotdata,
    "sample": cmd_sample,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, or a usage error already reported
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s: %(message)s")
    try:
        with np.errstate(over="ignore"):
            return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"rlnd {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IngestError, GofError) as exc:
        print(f"rlnd {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConvergenceError, NoSignChangeError, FloatingPointError) as exc:
        print(f"rlnd {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"rlnd {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
