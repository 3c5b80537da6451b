"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 statistical
degeneracy (e.g. zero bootstrap spread), 10 from ``monitor`` when the
drift test rejects.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

from ._version import TOOL_VERSION
from .data import ColumnRoles, load_csv, preaggregate, read_kv_config, write_csv
from .drift import (
    DriftScenario,
    SyntheticSpec,
    drift_schedule,
    generate_portfolio,
    inject_drift,
)
from .errors import DataError, DegeneracyError, NonConvergence
from .glm import DesignSpec, GlmModel, fit_poisson, predict
from .inference import (
    ONE_SIDED,
    TWO_SIDED,
    BootstrapConfig,
    NullDistribution,
    bootstrap_null,
    drift_test,
    histogram_bins,
    monitor,
    write_replicates_csv,
)
from .metrics import (
    CapCurve,
    GiniResult,
    TiePolicy,
    WeightingMode,
    dataset_deviance_loss,
    empirical_cap,
    gini,
    score_dataset,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DEGENERATE, EXIT_REJECT = 0, 1, 2, 3, 10

EPILOG = """exit codes:
  0   success
  1   usage error
  2   data error (missing column, parse error, zero exposure, ...)
  3   statistical degeneracy (no claims, zero bootstrap sd, ...)
  10  monitor only: drift detected (reject=true)
"""


class UsageError(Exception):
    def __init__(self, message, parser=None):
        super().__init__(message)
        self.parser = parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, self)


def _emit(obj, path=None):
    text = json.dumps(obj, indent=2) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# --------------------------------------------------------------------------
# column roles


def _add_columns(p, prediction=True):
    g = p.add_argument_group("column mapping")
    g.add_argument("--columns-config", metavar="FILE",
                   help="key=value file: exposure_col, response_col, prediction_col, covariate_cols")
    g.add_argument("--exposure-col")
    g.add_argument("--response-col")
    if prediction:
        g.add_argument("--prediction-col")
    g.add_argument("--covariates", metavar="COLS",
                   help="comma list, optional :cat/:num suffix (default: all other columns)")
    g.add_argument("--lenient", action="store_true",
                   help="drop zero-exposure rows with a warning instead of failing")


def _roles(args, header, need_prediction=False):
    cfg = read_kv_config(args.columns_config) if args.columns_config else {}
    for flag, key in (("exposure_col", "exposure_col"), ("response_col", "response_col"),
                      ("prediction_col", "prediction_col"), ("covariates", "covariate_cols")):
        value = getattr(args, flag, None)
        if value:
            cfg[key] = value
    roles = ColumnRoles.from_mapping(cfg)
    if roles.prediction_col is None and "prediction" in header:
        roles = ColumnRoles(roles.exposure_col, roles.response_col, "prediction",
                            roles.covariate_cols, roles.kinds)
    if need_prediction and roles.prediction_col is None:
        raise DataError("input has no prediction column (use --prediction-col)")
    return roles


def _header(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return next(csv.reader(fh), [])
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None


def _load(args, path, need_prediction=False):
    roles = _roles(args, _header(path), need_prediction)
    return load_csv(path, roles, strict=not args.lenient), roles


def _add_policy(p, average_ok=True):
    p.add_argument("--tie", default="average-extremes" if average_ok else "best",
                   help="best | worst | average-extremes | random:SEED")
    p.add_argument("--weighting", default="count", choices=["count", "exposure"])


def _policy(args):
    try:
        return TiePolicy.parse(args.tie), WeightingMode.parse(args.weighting)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# --------------------------------------------------------------------------
# subcommands


def cmd_aggregate(args):
    d, roles = _load(args, args.input)
    key = args.key.split(",") if args.key else None
    write_csv(preaggregate(d, key), args.output, roles)
    return EXIT_OK


def _parse_bins(items):
    bins = {}
    for item in items or []:
        name, _, edges = item.partition("=")
        bins[name] = [float(e) for e in edges.split(",")]
    return bins


def _parse_refs(items):
    refs = {}
    for item in items or []:
        name, _, level = item.partition("=")
        refs[name] = level
    return refs


def cmd_fit_glm(args):
    d, _ = _load(args, args.input)
    bins = _parse_bins(args.bins)
    refs = _parse_refs(args.reference)
    for name in bins:
        if name in refs:
            refs[name] = int(refs[name])
    linear = tuple(args.linear.split(",")) if args.linear else ()
    spec = DesignSpec.from_dataset(d, None, bins, refs, linear)
    model = fit_poisson(d, spec, tol=args.tol, max_iter=args.max_iter)
    _emit(model.to_dict(), args.output)
    return EXIT_OK


def cmd_predict(args):
    d, roles = _load(args, args.input)
    model = GlmModel.from_dict(_read_json(args.model))
    if roles.prediction_col is None:
        roles = ColumnRoles(roles.exposure_col, roles.response_col, "prediction",
                            roles.covariate_cols, roles.kinds)
    write_csv(predict(model, d), args.output, roles)
    return EXIT_OK


def _scored(args, path):
    d, _ = _load(args, path, need_prediction=True)
    if args.aggregate:
        d = preaggregate(d)
    return d, score_dataset(d, args.rank_by)


def cmd_gini(args):
    tie, weighting = _policy(args)
    d, obs = _scored(args, args.input)
    out = gini(obs, tie, weighting).to_dict()
    if args.deviance:
        out["poisson_deviance_loss"] = dataset_deviance_loss(d)
    _emit(out, args.output)
    return EXIT_OK


def cmd_cap(args):
    tie, weighting = _policy(args)
    _, obs = _scored(args, args.input)
    if tie.kind == TiePolicy.AVERAGE:
        raise UsageError("cap needs a single ordering: --tie best, worst or random:SEED")
    curve = empirical_cap(obs, args.order_by, tie, weighting)
    curve.write_csv(args.output)
    if args.json:
        _emit(curve.to_dict(), args.json)
    return EXIT_OK


def _boot_cfg(args):
    tie, weighting = _policy(args)
    try:
        return BootstrapConfig(args.B, args.seed, tie, weighting, args.jobs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_bootstrap(args):
    cfg = _boot_cfg(args)
    _, obs = _scored(args, args.input)
    null = bootstrap_null(obs, cfg)
    if args.replicates_csv:
        write_replicates_csv(null.replicate_values, args.replicates_csv)
    _emit(null.to_dict(include_replicates=args.keep_replicates), args.output)
    return EXIT_OK


def cmd_test(args):
    null = NullDistribution.from_dict(_read_json(args.null))
    if (args.gini is None) == (args.gini_new is None):
        raise UsageError("give exactly one of --gini FILE or --gini-new VALUE")
    g = args.gini_new if args.gini is None else GiniResult.from_dict(_read_json(args.gini)).value
    _emit(drift_test(g, null, args.alpha, args.sided).to_dict(), args.output)
    return EXIT_OK


def cmd_monitor(args):
    cfg = _boot_cfg(args)
    old, _ = _load(args, args.old, need_prediction=True)
    new, _ = _load(args, args.new, need_prediction=True)
    key = args.key.split(",") if args.key else None
    report = monitor(old, new, cfg, args.alpha, args.sided, args.allow_smaller, key)
    if args.replicates_csv:
        write_replicates_csv(report.null.replicate_values, args.replicates_csv)
    _emit(report.to_dict(include_replicates=args.keep_replicates), args.output)
    return EXIT_REJECT if report.test.reject else EXIT_OK


def _group_totals(d, scenario):
    return {"source": int(d.response[scenario.source.mask(d)].sum()),
            "target": int(d.response[scenario.target.mask(d)].sum()),
            "total": d.total_response()}


def cmd_inject(args):
    scenario = DriftScenario.read(args.scenario)
    d, roles = _load(args, args.input)
    out = inject_drift(d, scenario)
    write_csv(out, args.output, roles)
    _emit({"scenario": {"source": str(scenario.source), "target": str(scenario.target),
                        "transfer_count": scenario.transfer_count, "seed": scenario.seed},
           "before": _group_totals(d, scenario), "after": _group_totals(out, scenario)})
    return EXIT_OK


def cmd_simulate(args):
    spec = SyntheticSpec.read(args.spec)
    write_csv(generate_portfolio(spec), args.output)
    return EXIT_OK


def cmd_schedule(args):
    cfg = read_kv_config(args.scenario)
    scenario = DriftScenario.from_config({**cfg, "transfer_count": cfg.get("transfer_count", "0")})
    d, roles = _load(args, args.input)
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    listing = []
    for label, ds in drift_schedule(d, args.kind, args.periods, args.total,
                                    (scenario.source, scenario.target), scenario.seed):
        path = outdir / f"{label}.csv"
        write_csv(ds, path, roles)
        listing.append({"period": label, "path": str(path), **_group_totals(ds, scenario)})
    _emit(listing)
    return EXIT_OK


def cmd_report(args):
    doc = _read_json(args.input)
    lines = []
    if "z" in doc:
        lines += [f"tool version: {doc.get('tool_version')}",
                  f"holdout: {doc['provenance_old']} (n={doc['n_old']})",
                  f"new data: {doc['provenance_new']} (n={doc['n_new']})",
                  f"policy: tie={doc['tie_policy']} weighting={doc['weighting']} "
                  f"B={doc['B']} seed={doc['seed']}",
                  f"null: mean={doc['mean']:.6f} sd={doc['sd']:.6f}",
                  f"gini new: {doc['gini_new']:.6f}  z={doc['z']:.4f}",
                  f"p two-sided={doc['p_two_sided']:.4g}  p one-sided={doc['p_one_sided']:.4g}",
                  f"alpha={doc['alpha']}  decision: "
                  f"{'REJECT (drift)' if doc['reject'] else 'no rejection'}"]
        lines += [f"warning: {w}" for w in doc.get("warnings", [])]
    else:
        lines += [f"null: mean={doc['mean']:.6f} sd={doc['sd']:.6f} B={doc['B']} n={doc['n']}"]
    if args.hist_csv:
        reps = doc.get("replicate_values")
        if reps is None:
            raise DataError("report input carries no replicate_values "
                            "(rerun with --keep-replicates)")
        with open(args.hist_csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["left", "right", "count"])
            for lo, hi, c in histogram_bins(reps, args.bins):
                w.writerow([repr(lo), repr(hi), c])
    if args.cap:
        curve = CapCurve.from_dict(_read_json(args.cap))
        if args.cap_csv:
            curve.write_csv(args.cap_csv)
        lines.append(f"cap curve: {curve.alpha.size} points, weighting={curve.weighting.value}")
    text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="ginidrift", description="Gini-based concept drift monitoring.",
                epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=TOOL_VERSION)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help, description=help, epilog=EPILOG,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.set_defaults(func=fn)
        return sp

    def scoring(sp):
        sp.add_argument("--rank-by", default="count", choices=["count", "frequency"])
        sp.add_argument("--aggregate", action="store_true",
                        help="pre-aggregate over all covariates before scoring")

    sp = add("aggregate", cmd_aggregate, "pre-aggregate records by covariate combination")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--key", help="comma list of key columns (default: all covariates)")
    _add_columns(sp)

    sp = add("fit-glm", cmd_fit_glm, "fit a Poisson GLM with exposure offset")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output")
    sp.add_argument("--bins", action="append", metavar="COL=E0,E1,...")
    sp.add_argument("--reference", action="append", metavar="COL=LEVEL")
    sp.add_argument("--linear", metavar="COLS", help="categorical columns to enter linearly")
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.add_argument("--max-iter", type=int, default=50)
    _add_columns(sp, prediction=False)

    sp = add("predict", cmd_predict, "attach GLM frequency predictions")
    sp.add_argument("--model", required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    _add_columns(sp)

    sp = add("gini", cmd_gini, "Gini index of predictions")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output")
    sp.add_argument("--deviance", action="store_true", help="also report Poisson deviance loss")
    _add_policy(sp)
    scoring(sp)
    _add_columns(sp)

    sp = add("cap", cmd_cap, "export CAP curve points as CSV (alpha, cap)")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--json", help="also write the curve as JSON")
    sp.add_argument("--order-by", default="score", choices=["score", "response"])
    _add_policy(sp, average_ok=False)
    scoring(sp)
    _add_columns(sp)

    def boot(sp):
        sp.add_argument("--B", type=int, default=10_000)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--keep-replicates", action="store_true",
                        help="embed replicate values in the JSON output")
        sp.add_argument("--replicates-csv", help="write replicate values as one-column CSV")
        _add_policy(sp)

    sp = add("bootstrap", cmd_bootstrap, "bootstrap null distribution of the holdout Gini")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output")
    boot(sp)
    scoring(sp)
    _add_columns(sp)

    sp = add("test", cmd_test, "z-test of a new Gini against a null distribution")
    sp.add_argument("--null", required=True)
    sp.add_argument("--gini", help="GiniResult JSON from the gini subcommand")
    sp.add_argument("--gini-new", type=float)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--sided", default=TWO_SIDED, choices=[TWO_SIDED, ONE_SIDED])
    sp.add_argument("--output")

    sp = add("monitor", cmd_monitor, "full drift check: aggregate, bootstrap, test")
    sp.add_argument("--old", required=True, help="holdout CSV of the training period")
    sp.add_argument("--new", required=True, help="new-period CSV")
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--sided", default=TWO_SIDED, choices=[TWO_SIDED, ONE_SIDED])
    sp.add_argument("--allow-smaller", action="store_true")
    sp.add_argument("--key", help="aggregation key (default: all covariates)")
    sp.add_argument("--output")
    boot(sp)
    _add_columns(sp)

    sp = add("inject", cmd_inject, "move claims between covariate groups")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    _add_columns(sp)

    sp = add("simulate", cmd_simulate, "generate a synthetic portfolio")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--output", required=True)

    sp = add("schedule", cmd_schedule, "write per-period datasets of a drift schedule")
    sp.add_argument("--input", required=True)
    sp.add_argument("--scenario", required=True, help="config with source, target, seed")
    sp.add_argument("--kind", required=True, choices=["sudden", "gradual", "incremental"])
    sp.add_argument("--periods", type=int, required=True)
    sp.add_argument("--total", type=int, required=True)
    sp.add_argument("--output-dir", required=True)
    _add_columns(sp)

    sp = add("report", cmd_report, "summarise emitted JSON; export plot data")
    sp.add_argument("--input", required=True, help="monitor or bootstrap JSON")
    sp.add_argument("--hist-csv", help="histogram bins of the bootstrap replicates")
    sp.add_argument("--bins", type=int, default=50)
    sp.add_argument("--cap", help="CAP curve JSON from the cap subcommand")
    sp.add_argument("--cap-csv")
    sp.add_argument("--output")
    return p


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            return args.func(args)
    except UsageError as exc:
        print(f"ginidrift: error: {exc}", file=sys.stderr)
        (exc.parser or parser).print_help(sys.stderr)
        return EXIT_USAGE
    except (DegeneracyError, NonConvergence) as exc:
        print(f"ginidrift: degenerate: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except DataError as exc:
        print(f"ginidrift: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"ginidrift: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"ginidrift: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
