"""Command-line entry point: ``flexknn {datagen,eval,localknn,consistency}``."""

import argparse
import csv
import io
import sys

import numpy as np

from . import lab
from .data import TabularSchema, generate_polynomial_dataset, load_csv, write_csv
from .distances import LpNorm, as_spec, parse_spec_list
from .errors import FlexKnnError
from .evaluation import DatasetSource, LocalMethod, PolynomialSource, repeated_eval, reports_to_json
from .knn import make_dataset
from .metric_learning import LocalMetricQuery, parse_family
from .optimize import parse_optimizer


def _ints(text):
    return [int(t) for t in text.split(",") if t]


def _write(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


# -- datagen -----------------------------------------------------------------


def cmd_datagen(args):
    train, test = generate_polynomial_dataset(args.train, args.test, args.seed)
    if args.test_out:
        write_csv(args.out, train)
        write_csv(args.test_out, test)
    else:
        both = make_dataset(np.vstack([train.features, test.features]),
                            np.concatenate([train.labels, test.labels]), n_classes=2)
        write_csv(args.out, both)
    return 0


# -- eval / localknn ---------------------------------------------------------


def _source(args):
    if args.data is None:
        return PolynomialSource(), args.train or 500, args.test or 500
    ds = load_csv(args.data, TabularSchema(args.label, delimiter=args.delimiter), seed=args.seed)
    n_train = args.train or ds.n // 2
    n_test = args.test or ds.n - n_train
    return DatasetSource(ds, scale=not args.no_scale), n_train, n_test


def _local_method(args):
    q = LocalMetricQuery(k1=args.k1, k2=args.k2, m=args.m, base_spec=as_spec(args.base),
                         family=parse_family(args.family), budget=args.budget)
    return LocalMethod(query=q, optimizer=parse_optimizer(args.opt), proportion=args.split,
                       k_mode=args.k_mode, label=args.local_label or f"local {args.family}")


def _run_eval(args, methods):
    source, n_train, n_test = _source(args)
    reports = repeated_eval(source, methods, n_train, n_test, args.repeats, args.kmax, args.seed,
                            args.alpha, args.folds)
    _write(reports_to_json(reports) + "\n", args.out)
    for r in reports:
        print(f"{r.distance_label:>32}  mean {r.mean:.5f}  CI [{r.ci_lo:.5f}, {r.ci_hi:.5f}]",
              file=sys.stderr)
    return 0


def cmd_eval(args):
    methods = list(parse_spec_list(args.specs))
    if args.family:
        methods.append(_local_method(args))
    return _run_eval(args, methods)


def cmd_localknn(args):
    methods = [_local_method(args)]
    if not args.no_baseline:
        methods.insert(0, as_spec(args.base))
    return _run_eval(args, methods)


# -- consistency ---------------------------------------------------------------

COLUMNS = ["experiment", "rule", "n", "k", "trials", "error", "std_err", "lower_bound", "empirical"]


def _row(experiment, rule, n, k="", trials="", error="", std_err="", lower_bound="", empirical=""):
    return dict(zip(COLUMNS, [experiment, rule, n, k, trials, error, std_err, lower_bound, empirical]))


def _est_row(experiment, rule, e):
    return _row(experiment, rule, e.n, e.k, e.trials, e.error, e.std_err)


def consistency_rows(experiment, ns, k, trials, seed, d=2, schedule="above"):
    rows = []
    for n in ns:
        if experiment in ("fuzzy", "deterministic"):
            dist = lab.FuzzyConcept() if experiment == "fuzzy" else lab.DeterministicConcept()
            rows.append(_est_row(experiment, "knn", lab.estimate_error(dist, lab.KnnRule(), n, k, trials, seed)))
            if experiment == "fuzzy":
                e = lab.estimate_error(dist, lab.ConstantRule(1), n, k, trials, seed)
                rows.append(_est_row(experiment, "constant1", e))
        elif experiment in ("badnorm-above", "badnorm-below"):
            sched = lab.UNBOUNDED_ABOVE if experiment == "badnorm-above" else lab.UNBOUNDED_BELOW
            rows.append(_est_row(experiment, "knn", lab.bad_norm_error(sched, n, k, trials, seed)))
            e = lab.bad_norm_error(LpNorm(float("inf")), n, k, trials, seed)
            rows.append(_est_row(experiment, "knn-fixed-linf", e))
        elif experiment == "farbound":
            f = lab.far_probability(lab.BadNormSchedule(schedule), n, trials, seed)
            rows.append(_row(experiment, schedule, n, "", f.trials, "", f.std_err, f.lower_bound, f.empirical))
        elif experiment == "circle":
            c = lab.circle_counterexample(n)
            rows.append(_row(experiment, "own-norm-nearest", n, empirical=c.violations / c.n_points))
        elif experiment == "labelweights":
            e = lab.label_dependent_rule_error(n, k, trials, seed, d=d)
            rows.append(_est_row(experiment, "label-dependent", e))
            e = lab.estimate_error(lab.LabelIndependentGaussian(d), lab.KnnRule(), n, k, trials, seed)
            rows.append(_est_row(experiment, "knn", e))
        else:
            raise FlexKnnError(f"unknown experiment {experiment!r}")
    return rows


def cmd_consistency(args):
    rows = consistency_rows(args.experiment, _ints(args.n), args.k, args.trials, args.seed, args.d,
                            args.schedule)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    _write(buf.getvalue(), args.out)
    return 0


# -- parser ----------------------------------------------------------------------


def _add_eval_common(p):
    p.add_argument("--data", help="CSV file; omit to draw the synthetic polynomial dataset")
    p.add_argument("--label", default="label", help="label column name")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--no-scale", action="store_true", help="skip min-max scaling of file data")
    p.add_argument("--train", type=int, help="training points per repeat")
    p.add_argument("--test", type=int, help="test points per repeat")
    p.add_argument("--repeats", type=int, default=50)
    p.add_argument("--kmax", type=int, default=20)
    p.add_argument("--folds", type=int, default=1, help="1 = single 75/25 split for choosing k")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="report JSON path (default stdout)")


def _add_local(p, required):
    p.add_argument("--family", required=required,
                   help="e.g. matlp:diag,0.1,10,p,0.5,4 or matpoly:deg5")
    p.add_argument("--k1", type=int, default=30)
    p.add_argument("--k2", type=int, default=100)
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--budget", type=int, default=200, help="objective evaluations per query")
    p.add_argument("--opt", default="nm", help="nm,tol=..,iters=.. or sa,t0=..,cool=..,steps=..,scale=..,seed=..")
    p.add_argument("--base", default="lp:2", help="base distance for the m k support")
    p.add_argument("--split", type=float, default=None,
                   help="fraction of training data used to classify; the rest selects the distance")
    p.add_argument("--k-mode", choices=["global", "local"], default="global")
    p.add_argument("--local-label", default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="flexknn", description="k-NN with general distances")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="write the synthetic polynomial dataset as CSV")
    p.add_argument("kind", choices=["poly"])
    p.add_argument("--train", type=int, default=500)
    p.add_argument("--test", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--test-out", help="write the test part here instead of appending it to --out")
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("eval", help="repeated train/test evaluation of distance specs")
    _add_eval_common(p)
    p.add_argument("--specs", default="lp:0.5,lp:1,lp:2,lp:inf")
    _add_local(p, required=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("localknn", help="evaluate k-NN with a locally chosen distance")
    _add_eval_common(p)
    _add_local(p, required=True)
    p.add_argument("--no-baseline", action="store_true", help="skip the base-distance report")
    p.set_defaults(func=cmd_localknn, repeats=10)

    p = sub.add_parser("consistency", help="Monte Carlo consistency experiments as CSV")
    p.add_argument("--experiment", required=True,
                   choices=["fuzzy", "deterministic", "badnorm-above", "badnorm-below", "circle",
                            "labelweights", "farbound"])
    p.add_argument("--n", default="10,50,100", help="comma-separated sample sizes")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d", type=int, default=2, help="dimension for labelweights")
    p.add_argument("--schedule", choices=["above", "below"], default="above", help="for farbound")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_consistency)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FlexKnnError, OSError) as exc:
        print(f"flexknn: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
