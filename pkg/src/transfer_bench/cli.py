"""Command-line front end.

Four subcommands chain the library into reproducible batch workflows:
``score`` turns feature files into a score table, ``bench`` bootstraps
rank statistics per scorer, ``btb`` fits the hierarchical combiner and
predicts held-out datasets, and ``report`` emits plot-ready scatter and
ridgeline data.  Every command is a pure function of (inputs, flags,
seed): machine outputs are full precision and byte-stable across runs,
human tables follow the x100 two-decimal convention.

Exit codes: 0 success, 2 input/validation error, 3 inference
diagnostics failure (outputs still written), 1 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import bayes
from .data import (
    TransferTuple,
    TupleTable,
    group_by_dataset,
    load_features,
    load_tuples,
    save_tuples,
    z_normalize,
)
from .errors import InputError, SamplingError, StatisticsError, ValidationError
from .ranking import STATISTICS, BootstrapSummary, bootstrap
from .scorers import SCORERS, score_all

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_DIAGNOSTICS = 3

RHAT_FAIL = 1.05

DEFAULT_STATS = ("weighted_tau", "aggregated_weighted_tau")


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# score

def cmd_score(args) -> int:
    if not args.features_dir:
        raise ValidationError("score needs --features-dir")
    feat_dir = Path(args.features_dir)
    if not feat_dir.is_dir():
        raise ValidationError(f"features directory {feat_dir} does not exist")
    files = sorted(feat_dir.glob("*.fset"))
    if not files:
        raise ValidationError(f"no *.fset files found in {feat_dir}")
    scorer_names = args.scorers or sorted(SCORERS)
    tuples = []
    for path in files:
        stem = path.stem
        if "__" not in stem:
            raise ValidationError(
                f"feature file {path.name} is not named <dataset>__<arch>.fset"
            )
        dataset, architecture = stem.split("__", 1)
        fs = load_features(path)
        for record in score_all(fs, scorer_names):
            tuples.append(
                TransferTuple(architecture, dataset, record.scorer, record.value)
            )
    out_path = Path(args.out) / "scores" / "scores.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    try:
        save_tuples(TupleTable(tuple(tuples)), out_path)
    except Exception:
        out_path.unlink(missing_ok=True)
        raise
    print(f"wrote {len(tuples)} scores to {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench

def _bench_rows(table: TupleTable, scorers, stats, iterations, seed):
    """(report rows, draws map keyed (scorer, statistic, scope))."""
    rows = []
    draws = {}
    seen = set()

    def add(scorer, scope, statistic, summary: BootstrapSummary):
        key = (scorer, statistic, scope)
        if key in seen:
            return
        seen.add(key)
        rows.append(
            {
                "scorer": scorer,
                "scope": scope,
                "statistic": statistic,
                "point": summary.point,
                "boot_mean": summary.mean,
                "ci_low": summary.ci_low,
                "ci_high": summary.ci_high,
                "n_degenerate": summary.n_degenerate,
            }
        )
        draws[key] = summary.draws

    for scorer in scorers:
        series = group_by_dataset(table, scorer)
        for stat in stats:
            if stat in ("tau", "weighted_tau", "pearson"):
                for name, x, y in series:
                    sub = type(series)(((name, x, y),))
                    add(
                        scorer,
                        f"dataset:{name}",
                        stat,
                        bootstrap(sub, stat, iterations=iterations, seed=seed),
                    )
                if stat == "weighted_tau":
                    add(
                        scorer,
                        "averaged",
                        "averaged_weighted_tau",
                        bootstrap(
                            series,
                            "averaged_weighted_tau",
                            iterations=iterations,
                            seed=seed,
                        ),
                    )
            elif stat == "averaged_weighted_tau":
                add(
                    scorer,
                    "averaged",
                    stat,
                    bootstrap(series, stat, iterations=iterations, seed=seed),
                )
            elif stat == "aggregated_weighted_tau":
                add(
                    scorer,
                    "combined",
                    stat,
                    bootstrap(series, stat, iterations=iterations, seed=seed),
                )
            else:
                raise ValidationError(
                    f"unknown statistic {stat!r}; choose from {STATISTICS}"
                )
    return rows, draws


def _print_bench_table(rows) -> None:
    header = f"{'scorer':<14}{'scope':<22}{'statistic':<26}{'x100':>8}{'mean':>8}{'ci':>18}"
    print(header)
    print("-" * len(header))
    for r in rows:
        ci = f"[{100 * r['ci_low']:.2f}, {100 * r['ci_high']:.2f}]"
        print(
            f"{r['scorer']:<14}{r['scope']:<22}{r['statistic']:<26}"
            f"{100 * r['point']:>8.2f}{100 * r['boot_mean']:>8.2f}{ci:>18}"
        )


def cmd_bench(args) -> int:
    if not args.tuples:
        raise ValidationError("bench needs --tuples")
    table = load_tuples(args.tuples)
    scorers = args.scorers or list(table.scorers)
    stats = args.stat or list(DEFAULT_STATS)
    rows, draws = _bench_rows(table, scorers, stats, args.iterations, args.seed)
    out = Path(args.out) / "bench"
    columns = [
        "scorer", "scope", "statistic", "point", "boot_mean",
        "ci_low", "ci_high", "n_degenerate",
    ]
    if args.format == "json":
        _write_json(out / "report.json", rows)
    else:
        _write_csv(
            out / "report.csv",
            columns,
            [
                [
                    r["scorer"], r["scope"], r["statistic"], _fmt(r["point"]),
                    _fmt(r["boot_mean"]), _fmt(r["ci_low"]), _fmt(r["ci_high"]),
                    r["n_degenerate"],
                ]
                for r in rows
            ],
        )
    for (scorer, statistic, scope), vec in draws.items():
        safe_scope = scope.replace(":", "_")
        _write_csv(
            out / "draws" / f"{scorer}__{statistic}__{safe_scope}.csv",
            ["value"],
            [[_fmt(v)] for v in vec],
        )
    _print_bench_table(rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# btb

def _weighted_tau_vs_truth(predictions, held_table: TupleTable) -> float | None:
    from .ranking import weighted_tau

    truth = {}
    for t in held_table:
        truth.setdefault(t.architecture, t.metric)
    if any(v is None for v in truth.values()):
        return None
    pred = [p.mean for p in predictions]
    actual = [truth[p.candidate] for p in predictions if p.candidate in truth]
    if len(actual) != len(pred) or len(pred) < 2:
        return None
    return weighted_tau(np.array(pred), np.array(actual)).value


def _emit_btb(out_dir: Path, held_out, draws, predictions, held_table, fmt) -> float:
    """Write one held-out dataset's predictions + diagnostics; returns max R-hat."""
    report = draws.diagnostics()
    rows = [
        [
            held_out,
            p.candidate,
            _fmt(p.mean),
            _fmt(p.q025),
            _fmt(p.q50),
            _fmt(p.q975),
        ]
        for p in predictions
    ]
    _write_csv(
        out_dir / "predictions.csv",
        ["dataset", "architecture", "pred_mean", "pred_q025", "pred_q50", "pred_q975"],
        rows,
    )
    diag = {
        "held_out": held_out,
        "max_rhat": report.max_rhat,
        "min_ess": report.min_ess,
        "divergences": draws.n_divergences,
        "flagged_parameters": list(report.flagged),
    }
    tau_w = _weighted_tau_vs_truth(predictions, held_table)
    if tau_w is not None:
        diag["weighted_tau_vs_truth"] = tau_w
    if fmt == "json":
        _write_json(out_dir / "diagnostics.json", diag)
    else:
        _write_csv(
            out_dir / "diagnostics.csv",
            ["key", "value"],
            [[k, v if isinstance(v, (int, str)) else _fmt(v)]
             for k, v in diag.items() if k != "flagged_parameters"],
        )
    line = (
        f"{held_out}: max R-hat {report.max_rhat:.4f}, min ESS "
        f"{report.min_ess:.0f}, divergences {draws.n_divergences}"
    )
    if tau_w is not None:
        line += f", weighted tau vs truth {100 * tau_w:.2f}"
    print(line)
    return report.max_rhat


def cmd_btb(args) -> int:
    if not args.tuples:
        raise ValidationError("btb needs --tuples")
    table = load_tuples(args.tuples)
    scorers = args.scorers or None
    sampler_kwargs = dict(chains=args.chains, warmup=args.warmup, keep=args.keep)
    out_root = Path(args.out) / "btb"
    worst_rhat = 0.0

    if args.predict_tuples:
        predict_table = load_tuples(args.predict_tuples)
        use_scorers = tuple(scorers) if scorers else predict_table.scorers
        calib = table.select(scorers=use_scorers)
        for s in use_scorers:
            if s not in calib.scorers:
                raise ValidationError(
                    f"scorer {s!r} is absent from the calibration data"
                )
        draws = bayes.sample(z_normalize(calib), seed=args.seed, **sampler_kwargs)
        for dataset in predict_table.datasets:
            held = predict_table.select(datasets={dataset})
            held_norm = z_normalize(held)
            candidates = bayes.infer._candidate_scores(held_norm, use_scorers)
            predictions = bayes.predict(draws, candidates, seed=args.seed)
            worst_rhat = max(
                worst_rhat,
                _emit_btb(out_root / dataset, dataset, draws, predictions, held,
                          args.format),
            )
    else:
        if not args.hold_out:
            raise ValidationError("btb needs --hold-out DATASET (or 'all'), "
                                  "or --predict-tuples PATH")
        if args.hold_out == "all":
            held_list = list(table.datasets)
            results = bayes.loo_all(
                table, scorers=scorers, seed=args.seed, **sampler_kwargs
            )
        else:
            held_list = [args.hold_out]
            results = {
                args.hold_out: bayes.calibrate_loo(
                    table, scorers=scorers, held_out=args.hold_out,
                    seed=args.seed, **sampler_kwargs
                )
            }
        for held_out in held_list:
            draws, predictions = results[held_out]
            held = table.select(datasets={held_out})
            worst_rhat = max(
                worst_rhat,
                _emit_btb(out_root / held_out, held_out, draws, predictions, held,
                          args.format),
            )

    if worst_rhat > RHAT_FAIL:
        print(
            f"warning: max R-hat {worst_rhat:.4f} exceeds {RHAT_FAIL}; "
            "inference is unreliable",
            file=sys.stderr,
        )
        return EXIT_DIAGNOSTICS
    return EXIT_OK


# ---------------------------------------------------------------------------
# report

def cmd_report(args) -> int:
    out_root = Path(args.out)
    report_dir = out_root / "report"
    wrote_anything = False

    if args.tuples:
        table = load_tuples(args.tuples)
        norm = z_normalize(table)
        for scorer in norm.scorers:
            rows = [
                [t.dataset, t.architecture, _fmt(t.score), _fmt(t.metric)]
                for t in norm
                if t.scorer == scorer and t.metric is not None
            ]
            if rows:
                _write_csv(
                    report_dir / f"scatter__{scorer}.csv",
                    ["dataset", "architecture", "score_normalized", "metric_normalized"],
                    rows,
                )
                wrote_anything = True

    draws_dir = out_root / "bench" / "draws"
    if draws_dir.is_dir():
        for path in sorted(draws_dir.glob("*.csv")):
            target = report_dir / f"draws__{path.name}"
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(path.read_bytes())
            wrote_anything = True

    if not wrote_anything:
        raise ValidationError(
            "nothing to report: pass --tuples and/or run bench into --out first"
        )
    print(f"report data written to {report_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument plumbing

def _comma_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="transfer-bench",
        description="Transferability scoring, benchmarking, and Bayesian combination",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value file mirroring the flags; flags win")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="out", help="output directory root")
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    p_score = sub.add_parser("score", help="compute transferability scores from features")
    common(p_score)
    p_score.add_argument("--features-dir",
                         help="directory of <dataset>__<arch>.fset files")
    p_score.add_argument("--scorers", type=_comma_list,
                         help=f"comma list among: {','.join(sorted(SCORERS))}")
    p_score.set_defaults(func=cmd_score)

    p_bench = sub.add_parser("bench", help="bootstrap rank statistics per scorer")
    common(p_bench)
    p_bench.add_argument("--tuples", help="tuple CSV with metrics")
    p_bench.add_argument("--scorers", type=_comma_list)
    p_bench.add_argument("--stat", type=_comma_list,
                         help=f"comma list among: {','.join(STATISTICS)}")
    p_bench.add_argument("--iterations", type=int, default=1000)
    p_bench.set_defaults(func=cmd_bench)

    p_btb = sub.add_parser("btb", help="hierarchical Bayesian scorer combination")
    common(p_btb)
    p_btb.add_argument("--tuples", help="calibration tuple CSV")
    p_btb.add_argument("--scorers", type=_comma_list)
    p_btb.add_argument("--hold-out",
                       help="dataset id to hold out, or 'all' for full leave-one-out")
    p_btb.add_argument("--predict-tuples",
                       help="tuple CSV (no metrics needed) to predict instead of loo")
    p_btb.add_argument("--chains", type=int, default=4)
    p_btb.add_argument("--warmup", type=int, default=1000)
    p_btb.add_argument("--keep", type=int, default=1000)
    p_btb.set_defaults(func=cmd_btb)

    p_report = sub.add_parser("report", help="emit plot-ready scatter/ridgeline data")
    common(p_report)
    p_report.add_argument("--tuples", help="tuple CSV for the scatter view")
    p_report.set_defaults(func=cmd_report)

    return parser


def _apply_config(parser: argparse.ArgumentParser, args, argv) -> None:
    """Fill flags from a key=value config file; explicit flags win."""
    if not getattr(args, "config", None):
        return
    path = Path(args.config)
    if not path.is_file():
        raise ValidationError(f"config file {path} does not exist")
    actions = {}
    for action in parser._subparsers._group_actions[0].choices[args.command]._actions:
        for opt in action.option_strings:
            actions[opt.lstrip("-")] = action
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{line_no}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in actions:
            raise ValidationError(f"{path}:{line_no}: unknown option {key!r}")
        if f"--{key}" in argv:
            continue  # explicit flag wins
        action = actions[key]
        setattr(args, action.dest, action.type(value) if action.type else value)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config(parser, args, argv)
        return args.func(args)
    except (InputError, StatisticsError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except SamplingError as e:
        print(f"sampling error: {e}", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
