"""Locally chosen distances for k-NN.

For each query a distance is picked from a parameter family by minimising
the mean Pearson correlation between distance and label agreement inside
the query's neighbourhood.  The selection uses only an independent part of
the sample (``select_part``); classification uses the other part
(``classify_part``) and gives nonzero weight only to the ``m k`` nearest
points under a fixed base distance.
"""

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .distances import CoordinateFunction, LpNorm, MatrixThenInner, _eval, as_spec, evaluate
from .errors import DegenerateVariance, EmptySelectSet, InvalidParameter, KTooLarge, TooSmall
from .knn import rank, vote
from .optimize import Anneal, NelderMead, minimize

# -- parameter families ----------------------------------------------------


def _check_box(lo, hi, what):
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise InvalidParameter(f"{what} must be a finite interval with lo <= hi")


def _clamp_singular_values(m, lo, hi):
    u, s, vt = np.linalg.svd(m)
    return (u * np.clip(s, lo, hi)) @ vt


@dataclass(frozen=True)
class MatrixLp:
    """``||A v||_p`` with ``A`` diagonal or full and ``p`` in ``p_range``.

    Diagonal entries and ``p`` are encoded in log space.  A full matrix is
    encoded entrywise and projected so its singular values lie in
    ``entry_bounds``.
    """

    shape: str = "diagonal"
    entry_bounds: tuple = (0.1, 10.0)
    p_range: tuple = (0.5, 4.0)

    def __post_init__(self):
        if self.shape not in ("diagonal", "full"):
            raise InvalidParameter(f"matrix shape must be diagonal or full, got {self.shape!r}")
        lo, hi = map(float, self.entry_bounds)
        _check_box(lo, hi, "entry_bounds")
        if lo <= 0:
            raise InvalidParameter("entry bounds must be positive")
        plo, phi = map(float, self.p_range)
        _check_box(plo, phi, "p_range")
        if plo < 0.1 or phi > 8:
            raise InvalidParameter("p_range must lie within [0.1, 8]")
        object.__setattr__(self, "entry_bounds", (lo, hi))
        object.__setattr__(self, "p_range", (plo, phi))

    def identity(self, d):
        lo, hi = self.entry_bounds
        one = min(max(1.0, lo), hi)
        p = min(max(2.0, self.p_range[0]), self.p_range[1])
        if self.shape == "diagonal":
            return np.append(np.full(d, math.log(one)), math.log(p))
        return np.append((one * np.eye(d)).ravel(), math.log(p))

    def project(self, theta, d):
        theta = np.asarray(theta, dtype=float).copy()
        lo, hi = self.entry_bounds
        theta[-1] = np.clip(theta[-1], *np.log(self.p_range))
        if self.shape == "diagonal":
            theta[:-1] = np.clip(theta[:-1], math.log(lo), math.log(hi))
        else:
            theta[:-1] = _clamp_singular_values(theta[:-1].reshape(d, d), lo, hi).ravel()
        return theta

    def matrix(self, theta, d):
        if self.shape == "diagonal":
            return np.diag(np.exp(theta[:-1]))
        return theta[:-1].reshape(d, d)

    def inner(self, theta):
        return LpNorm(float(np.exp(theta[-1])))

    def apply(self, theta, d, v):
        """Evaluate the realized distance on difference vectors ``v`` (fast path)."""
        if self.shape == "diagonal":
            w = v * np.exp(theta[:-1])
        else:
            w = v @ theta[:-1].reshape(d, d).T
        return _eval(self.inner(theta), w)


@dataclass(frozen=True)
class MatrixPolynomial:
    """``sum_i f(|(A v)_i|)`` with ``A`` diagonal and ``f(x) = a_1 x + ... + a_deg x^deg``,
    ``beta <= a_1 <= alpha`` and ``0 <= a_m <= alpha``.

    Diagonal entries are encoded in log space, coefficients directly.
    """

    degree: int = 5
    beta: float = 0.1
    alpha: float = 10.0
    entry_bounds: tuple = (0.1, 10.0)

    def __post_init__(self):
        if self.degree < 1:
            raise InvalidParameter("degree must be >= 1")
        if not 0 < self.beta <= self.alpha:
            raise InvalidParameter("need 0 < beta <= alpha")
        lo, hi = map(float, self.entry_bounds)
        _check_box(lo, hi, "entry_bounds")
        if lo <= 0:
            raise InvalidParameter("entry bounds must be positive")
        object.__setattr__(self, "entry_bounds", (lo, hi))

    def _coeff_bounds(self):
        lo = np.zeros(self.degree)
        lo[0] = self.beta
        return lo, np.full(self.degree, float(self.alpha))

    def identity(self, d):
        lo, hi = self.entry_bounds
        one = min(max(1.0, lo), hi)
        c = np.zeros(self.degree)
        c[0] = min(max(1.0, self.beta), self.alpha)
        return np.concatenate([np.full(d, math.log(one)), c])

    def project(self, theta, d):
        theta = np.asarray(theta, dtype=float).copy()
        lo, hi = self.entry_bounds
        theta[:d] = np.clip(theta[:d], math.log(lo), math.log(hi))
        theta[d:] = np.clip(theta[d:], *self._coeff_bounds())
        return theta

    def matrix(self, theta, d):
        return np.diag(np.exp(theta[:d]))

    def inner(self, theta):
        return CoordinateFunction("polynomial", tuple(theta[-self.degree:]))

    def apply(self, theta, d, v):
        return _eval(self.inner(theta), v * np.exp(theta[:d]))


ParamFamily = MatrixLp | MatrixPolynomial


def realize(family, theta, d):
    """The :class:`MatrixThenInner` spec for (projected) parameters ``theta``."""
    theta = family.project(theta, d)
    return MatrixThenInner.from_array(family.matrix(theta, d), family.inner(theta))


def parse_family(text):
    """``matlp:diag,0.1,10,p,0.5,4``, ``matlp:full,...`` or ``matpoly:deg5``."""
    head, _, rest = text.replace(" ", "").partition(":")
    items = [t for t in rest.split(",") if t]
    try:
        if head == "matlp":
            shape = {"diag": "diagonal", "diagonal": "diagonal", "full": "full"}[items[0]] if items else "diagonal"
            kw = {"shape": shape}
            if len(items) >= 3:
                kw["entry_bounds"] = (float(items[1]), float(items[2]))
            if len(items) >= 6 and items[3] == "p":
                kw["p_range"] = (float(items[4]), float(items[5]))
            elif len(items) not in (0, 1, 3):
                raise ValueError
            return MatrixLp(**kw)
        if head == "matpoly":
            kw = {}
            for it in items:
                if it.startswith("deg"):
                    kw["degree"] = int(it[3:])
                elif it.startswith("beta="):
                    kw["beta"] = float(it[5:])
                elif it.startswith("alpha="):
                    kw["alpha"] = float(it[6:])
                else:
                    raise ValueError
            return MatrixPolynomial(**kw)
    except (ValueError, KeyError, IndexError):
        raise InvalidParameter(f"cannot parse family {text!r}") from None
    raise InvalidParameter(f"unknown family {head!r}")


# -- queries and split samples ---------------------------------------------


@dataclass(frozen=True)
class LocalMetricQuery:
    """Settings for local selection.  The support cap is ``m * k`` for the
    ``k`` used at prediction time."""

    k1: int = 30
    k2: int = 100
    m: int = 5
    base_spec: object = LpNorm(2.0)
    family: object = MatrixLp()
    budget: int = 200

    def __post_init__(self):
        if not 1 <= self.k1 <= self.k2:
            raise InvalidParameter("need 1 <= k1 <= k2")
        if self.m < 1 or self.budget < 1:
            raise InvalidParameter("m and budget must be >= 1")
        object.__setattr__(self, "base_spec", as_spec(self.base_spec))

    def mk(self, k):
        return self.m * k


@dataclass(frozen=True)
class SplitSample:
    """Disjoint parts for classification and distance selection.

    ``proportion`` is the fraction in ``classify_part``.  A shared sample
    (see :func:`shared_sample`) uses one dataset for both roles and has
    ``proportion = 1``.
    """

    classify_part: object
    select_part: object
    proportion: float
    seed: int
    classify_index: np.ndarray = None
    select_index: np.ndarray = None

    @property
    def shared(self):
        return self.classify_part is self.select_part


def shared_sample(ds):
    """Both roles played by ``ds``.  Selection then sees the classification
    labels, so the independence behind the consistency guarantee is lost."""
    idx = np.arange(ds.n)
    return SplitSample(ds, ds, 1.0, 0, idx, idx)


def split_sample(ds, proportion=0.5, seed=0):
    """Shuffle and split; ``round(proportion * n)`` points go to ``classify_part``."""
    if not 0 < proportion < 1:
        raise InvalidParameter("proportion must be in (0, 1)")
    if ds.n < 2:
        raise TooSmall("need at least 2 points to split")
    perm = np.random.default_rng(seed).permutation(ds.n)
    n_c = min(ds.n - 1, max(1, int(round(proportion * ds.n))))
    ci, si = np.sort(perm[:n_c]), np.sort(perm[n_c:])
    return SplitSample(ds.subset(ci), ds.subset(si), float(proportion), seed, ci, si)


# -- correlation objective -------------------------------------------------


def _pearson_rows(x, y, mask):
    """Row-wise Pearson correlation over masked entries; NaN where a variance is 0."""
    cnt = mask.sum(axis=-1)
    mx = np.where(mask, x, 0).sum(axis=-1) / cnt
    my = np.where(mask, y, 0).sum(axis=-1) / cnt
    dx = np.where(mask, x - mx[..., None], 0.0)
    dy = np.where(mask, y - my[..., None], 0.0)
    sxy = (dx * dy).sum(axis=-1)
    sxx = (dx * dx).sum(axis=-1)
    syy = (dy * dy).sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = sxy / np.sqrt(sxx * syy)
    degenerate = (sxx <= 1e-300 * np.maximum(1.0, np.abs(mx) ** 2) * cnt) | (syy == 0)
    return np.where(degenerate, np.nan, np.clip(r, -1.0, 1.0))


def pearson(x, y):
    """Pearson correlation of two samples, clamped to [-1, 1]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise InvalidParameter("need two equal-length samples of size >= 2")
    r = float(_pearson_rows(x, y, np.ones(x.shape, dtype=bool)))
    if math.isnan(r):
        raise DegenerateVariance("a sample has zero variance")
    return r


def label_agreement_correlation(ds, tq_index, neighbor_indices, spec):
    """Correlation between the distance from point ``tq_index`` to each
    neighbour and the indicator that their labels agree."""
    nb = np.asarray(neighbor_indices, dtype=int)
    if nb.size < 2:
        raise InvalidParameter("need at least 2 neighbours")
    if np.any(nb == tq_index):
        raise InvalidParameter("neighbour set must exclude the training query")
    d = np.asarray(evaluate(as_spec(spec), ds.features[nb] - ds.features[tq_index]), dtype=float)
    agree = (ds.labels[nb] == ds.labels[tq_index]).astype(float)
    return pearson(d.reshape(-1), agree)


class _Neighbourhood:
    """The k2 base-nearest points of a query, ready for repeated objective calls."""

    def __init__(self, ds, query, q):
        if ds.n < 2:
            raise EmptySelectSet("select part needs at least 2 points")
        k2 = min(q.k2, ds.n)
        k1 = min(q.k1, k2)
        d = evaluate(q.base_spec, ds.features - np.asarray(query, dtype=float))
        idx = rank(d, ds.tiebreak, k2)
        pts = ds.features[idx]
        lab = ds.labels[idx]
        self.indices = idx
        self.dim = ds.d
        # rows: the k1 training queries; columns: the k2 neighbourhood minus self
        self.diff = pts[None, :, :] - pts[:k1, None, :]
        self.agree = (lab[None, :] == lab[:k1, None]).astype(float)
        self.mask = np.ones((k1, k2), dtype=bool)
        self.mask[np.arange(k1), np.arange(k1)] = False

    def objective(self, family, theta):
        dist = family.apply(theta, self.dim, self.diff)
        r = _pearson_rows(dist, self.agree, self.mask)
        # degenerate neighbourhoods carry no signal and score 0
        return float(np.mean(np.nan_to_num(r, nan=0.0)))


def local_objective(ds, query, params, q):
    """Mean label-agreement correlation for the ``k1`` nearest training queries
    against the ``k2`` neighbourhood of ``query``.  Lower is better."""
    nbh = _Neighbourhood(ds, query, q)
    return nbh.objective(q.family, q.family.project(params, ds.d))


@dataclass(frozen=True)
class LocalSelection:
    spec: object
    params: np.ndarray
    objective: float
    identity_objective: float
    evaluations: int


def _seeded(optimizer, seed):
    if isinstance(optimizer, Anneal):
        child = int(np.random.SeedSequence([optimizer.seed, seed]).generate_state(1)[0])
        return dataclasses.replace(optimizer, seed=child)
    return optimizer


def select_local_distance_detailed(split, query, q, optimizer=NelderMead(), seed=0):
    ds = split.select_part
    if ds.n == 0:
        raise EmptySelectSet("select part is empty")
    nbh = _Neighbourhood(ds, query, q)
    fam, d = q.family, ds.d
    x0 = fam.identity(d)
    f0 = nbh.objective(fam, x0)
    res = minimize(lambda t: nbh.objective(fam, fam.project(t, d)), x0, _seeded(optimizer, seed), q.budget)
    theta, f = fam.project(res.x_best, d), res.f_best
    if not f < f0:
        theta, f = x0, f0
    return LocalSelection(realize(fam, theta, d), theta, f, f0, res.evaluations)


def select_local_distance(split, query, q, optimizer=NelderMead(), seed=0):
    """Distance from ``q.family`` minimising the local objective on ``select_part``.

    Falls back to the family's identity point when the search does not
    improve on it.
    """
    return select_local_distance_detailed(split, query, q, optimizer, seed).spec


# -- prediction -------------------------------------------------------------


@dataclass(frozen=True)
class LocalPrediction:
    label: int
    k: int
    spec: object
    support: np.ndarray  # indices into classify_part with nonzero weight
    candidates: np.ndarray  # the m k base-nearest indices


def _restricted_votes(ds, base_spec, spec, points, ks, m, exclude=None):
    """Labels voted for each point in ``points`` and each k in ``ks``.

    For each k the candidates are the ``m k`` base-nearest points, re-ranked
    under ``spec``.  ``exclude[i]`` is a point of ``ds`` left out for
    ``points[i]`` (leave-one-out).  Returns shape ``(len(points), len(ks))``.
    """
    n = ds.n if exclude is None else ds.n - 1
    cap = min(m * max(ks), n)
    out = np.empty((len(points), len(ks)), dtype=int)
    for i, x in enumerate(points):
        d = evaluate(base_spec, ds.features - x)
        if exclude is not None:
            d[exclude[i]] = np.inf
        base = rank(d, ds.tiebreak, cap)
        local = evaluate(spec, ds.features[base] - x)
        # order[j] is the base rank of the j-th nearest point under spec
        order = rank(local, ds.tiebreak[base])
        lab = ds.labels[base][order]
        for j, k in enumerate(ks):
            allowed = order < min(m * k, n)
            take = allowed & (np.cumsum(allowed) <= k)
            out[i, j] = vote(lab[take], ds.n_classes)
    return out


def choose_local_k(split, query, spec, q, k_max=20):
    """Best ``k`` in ``1..k_max`` for the ``k1`` select-part points nearest the query.

    Each of those points is classified from ``classify_part`` with ``spec``
    under the support restriction (leaving the point itself out when the
    sample is shared); ties go to the smallest k.
    """
    sel, cls = split.select_part, split.classify_part
    k_max = min(k_max, cls.n - 1 if split.shared else cls.n)
    d = evaluate(q.base_spec, sel.features - np.asarray(query, dtype=float))
    near = rank(d, sel.tiebreak, min(q.k1, sel.n))
    ks = list(range(1, k_max + 1))
    votes = _restricted_votes(cls, q.base_spec, spec, sel.features[near], ks, q.m,
                              exclude=near if split.shared else None)
    acc = (votes == sel.labels[near][:, None]).mean(axis=0)
    return int(np.argmax(acc)) + 1


def predict_local_detailed(split, query, q, optimizer=NelderMead(), k=None, seed=0, k_max=20, spec=None):
    """Classify ``query`` with a locally chosen distance.

    ``k=None`` picks k locally (see :func:`choose_local_k`).  A precomputed
    ``spec`` skips the selection step.
    """
    cls = split.classify_part
    query = np.asarray(query, dtype=float)
    if spec is None:
        spec = select_local_distance(split, query, q, optimizer, seed)
    if k is None:
        k = choose_local_k(split, query, spec, q, k_max)
    if k < 1 or k > cls.n:
        raise KTooLarge(f"k={k} must be in [1, {cls.n}]")
    mk = min(q.mk(k), cls.n)
    cand = rank(evaluate(q.base_spec, cls.features - query), cls.tiebreak, mk)
    local = evaluate(spec, cls.features[cand] - query)
    chosen = cand[rank(local, cls.tiebreak[cand], k)]
    label = int(vote(cls.labels[chosen], cls.n_classes))
    return LocalPrediction(label=label, k=k, spec=spec, support=chosen, candidates=cand)


def predict_local(split, query, q, optimizer=NelderMead(), k=None, seed=0, k_max=20):
    return predict_local_detailed(split, query, q, optimizer, k, seed, k_max).label


def predict_local_many(split, queries, q, optimizer=NelderMead(), k=None, seed=0, k_max=20):
    """Labels for many queries; query ``i`` uses the child seed ``(seed, i)``."""
    out = np.empty(len(queries), dtype=int)
    for i, x in enumerate(queries):
        child = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        out[i] = predict_local(split, x, q, optimizer, k, child, k_max)
    return out
