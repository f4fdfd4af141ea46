"""Repeated train/test evaluation with confidence intervals."""

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import generate_polynomial_dataset
from .distances import as_spec, format_spec
from .errors import InvalidParameter
from .knn import predict_many
from .metric_learning import LocalMetricQuery, predict_local_detailed, shared_sample, split_sample
from .optimize import NelderMead, grid_search_k
from .preprocess import minmax_fit_transform, random_split
from .stats import mean_ci


def worker_count():
    env = os.environ.get("FLEXKNN_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def child_seed(seed, index):
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


# -- data sources -------------------------------------------------------------


@dataclass(frozen=True)
class PolynomialSource:
    """Fresh polynomial-dataset draws for every repeat."""

    def draw(self, n_train, n_test, seed):
        return generate_polynomial_dataset(n_train, n_test, seed)

    def describe(self):
        return {"source": "polynomial"}


@dataclass(frozen=True)
class DatasetSource:
    """Disjoint random train/test subsets of a fixed dataset, optionally
    min-max scaled with the training range."""

    dataset: object
    scale: bool = True

    def draw(self, n_train, n_test, seed):
        train, test = random_split(self.dataset, n_train, n_test, seed)
        if self.scale:
            train, test, _ = minmax_fit_transform(train, test)
        return train, test

    def describe(self):
        return {"source": "dataset", "n": self.dataset.n, "d": self.dataset.d, "scale": self.scale,
                "label_names": list(self.dataset.label_names)}


# -- methods -----------------------------------------------------------------


@dataclass(frozen=True)
class LocalMethod:
    """k-NN with a locally chosen distance.

    ``proportion=None`` uses the whole training set both to select the
    distance and to classify; otherwise the training set is split and
    ``proportion`` of it classifies.  ``k_mode`` is ``"global"`` (k from a
    grid search with the base distance) or ``"local"`` (k chosen per query).
    """

    query: LocalMetricQuery = field(default_factory=LocalMetricQuery)
    optimizer: object = NelderMead()
    proportion: float = None
    k_mode: str = "global"
    label: str = "local"

    def __post_init__(self):
        if self.k_mode not in ("global", "local"):
            raise InvalidParameter("k_mode must be global or local")


def method_label(method):
    return method.label if isinstance(method, LocalMethod) else format_spec(as_spec(method))


def _run_method(method, train, test, k_max, folds, seed):
    """Accuracy and the k used (median k for per-query choice)."""
    if not isinstance(method, LocalMethod):
        spec = as_spec(method)
        k = grid_search_k(train, spec, k_max, folds, seed)
        return float(np.mean(predict_many(train, spec, test.features, k) == test.labels)), k
    q = method.query
    split = shared_sample(train) if method.proportion is None else split_sample(train, method.proportion, seed)
    k = None
    if method.k_mode == "global":
        k = grid_search_k(split.classify_part, q.base_spec, k_max, folds, seed)
    labels, ks = [], []
    for i, x in enumerate(test.features):
        res = predict_local_detailed(split, x, q, method.optimizer, k, child_seed(seed, i), k_max)
        labels.append(res.label)
        ks.append(res.k)
    return float(np.mean(np.array(labels) == test.labels)), int(np.median(ks))


# -- reports -------------------------------------------------------------------


@dataclass
class TrialReport:
    distance_label: str
    accuracies: list
    mean: float
    ci_lo: float
    ci_hi: float
    alpha: float
    n_trials: int
    k_selected: list
    seeds: list
    wall_time_s: float
    config: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        lo, hi = d.pop("ci_lo"), d.pop("ci_hi")
        d["ci"] = {"alpha": d.pop("alpha"), "lo": lo, "hi": hi}
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        ci = d.pop("ci")
        return cls(ci_lo=ci["lo"], ci_hi=ci["hi"], alpha=ci["alpha"], **d)


def reports_to_json(reports):
    return json.dumps([r.to_dict() for r in reports], indent=2)


def reports_from_json(text):
    return [TrialReport.from_dict(d) for d in json.loads(text)]


def repeated_eval(source, methods, n_train, n_test, repeats, k_max=20, seed=0, alpha=0.05, folds=1,
                  workers=None):
    """Evaluate each method on ``repeats`` independent train/test draws.

    Repeat ``r`` uses the child seed ``(seed, r)`` for its data and its
    internal splits, so reports do not depend on execution order.
    """
    if repeats < 2:
        raise InvalidParameter("repeats must be >= 2")
    if not methods:
        raise InvalidParameter("no methods to evaluate")
    seeds = [child_seed(seed, r) for r in range(repeats)]

    def one_repeat(s):
        train, test = source.draw(n_train, n_test, s)
        out = []
        for m in methods:
            t0 = time.perf_counter()
            acc, k = _run_method(m, train, test, k_max, folds, s)
            out.append((acc, k, time.perf_counter() - t0))
        return out

    workers = worker_count() if workers is None else workers
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(one_repeat, seeds))
    else:
        rows = [one_repeat(s) for s in seeds]

    base = {"n_train": n_train, "n_test": n_test, "repeats": repeats, "k_max": k_max, "folds": folds,
            "seed": seed, **source.describe()}
    reports = []
    for j, m in enumerate(methods):
        accs = [row[j][0] for row in rows]
        mean, lo, hi = mean_ci(accs, alpha)
        config = dict(base)
        if isinstance(m, LocalMethod):
            q = m.query
            config["local"] = {"k1": q.k1, "k2": q.k2, "m": q.m, "budget": q.budget,
                               "base_spec": format_spec(q.base_spec), "family": repr(q.family),
                               "optimizer": repr(m.optimizer), "proportion": m.proportion,
                               "k_mode": m.k_mode}
        reports.append(TrialReport(
            distance_label=method_label(m), accuracies=accs, mean=mean, ci_lo=min(lo, mean),
            ci_hi=max(hi, mean), alpha=alpha, n_trials=repeats, k_selected=[row[j][1] for row in rows],
            seeds=seeds, wall_time_s=sum(row[j][2] for row in rows), config=config))
    return reports
