"""Exact k-nearest-neighbour classification with seeded tie-breaking.

Each sample point carries a tie-break value ``U_i`` drawn once, uniformly on
[0, 1].  Neighbours are ordered by the key ``(distance, -U)``: among points
at equal distance the one with the larger ``U`` comes first.  Binary voting
ties go to label 1; multiclass plurality ties go to the smallest label.
"""

from dataclasses import dataclass, field

import numpy as np

from .distances import IncreasingTransform, as_spec, evaluate
from .errors import DimensionMismatch, InvalidParameter, KTooLarge, NotBinary


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    tiebreak: np.ndarray
    n_classes: int
    label_names: tuple = field(default=())

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def __len__(self):
        return self.n

    def subset(self, idx):
        """Rows ``idx``; tie-break values travel with their points."""
        idx = np.asarray(idx, dtype=int)
        return LabeledDataset(
            features=_frozen(self.features[idx]),
            labels=_frozen(self.labels[idx]),
            tiebreak=_frozen(self.tiebreak[idx]),
            n_classes=self.n_classes,
            label_names=self.label_names,
        )


def _frozen(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


def tiebreak_values(n, rng):
    """``n`` pairwise distinct uniforms on [0, 1]."""
    u = rng.random(n)
    while len(np.unique(u)) < n:
        _, first = np.unique(u, return_index=True)
        dup = np.setdiff1d(np.arange(n), first)
        u[dup] = rng.random(len(dup))
    return u


def make_dataset(features, labels, seed=0, tiebreak=None, n_classes=None, label_names=()):
    """Build a :class:`LabeledDataset`, drawing tie-break values from ``seed``."""
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DimensionMismatch(f"features must be 2-D, got shape {x.shape}")
    y = np.asarray(labels)
    if y.shape != (x.shape[0],):
        raise DimensionMismatch(f"{len(y)} labels for {x.shape[0]} points")
    if y.size and (not np.issubdtype(y.dtype, np.integer) and not np.all(y == np.round(y))):
        raise InvalidParameter("labels must be integers")
    y = y.astype(int)
    if y.size and y.min() < 0:
        raise InvalidParameter("labels must be non-negative")
    if n_classes is None:
        n_classes = max(2, int(y.max()) + 1 if y.size else 2)
    if y.size and y.max() >= n_classes:
        raise InvalidParameter(f"label {y.max()} out of range for {n_classes} classes")
    if tiebreak is None:
        u = tiebreak_values(x.shape[0], np.random.default_rng(seed))
    else:
        u = np.asarray(tiebreak, dtype=float)
        if u.shape != (x.shape[0],):
            raise DimensionMismatch("one tie-break value per point required")
        if len(np.unique(u)) != len(u):
            raise InvalidParameter("tie-break values must be pairwise distinct")
    return LabeledDataset(_frozen(x), _frozen(y), _frozen(u), int(n_classes), tuple(label_names))


@dataclass(frozen=True)
class NeighborSet:
    indices: np.ndarray
    distances: np.ndarray

    @property
    def k(self):
        return len(self.indices)

    @property
    def degenerate(self):
        """All selected neighbours are at infinite distance."""
        return bool(len(self.distances) and np.all(np.isinf(self.distances)))


@dataclass(frozen=True)
class WeightVector:
    weights: np.ndarray


def rank(dist, tiebreak, k=None):
    """Indices sorting ``dist`` ascending, ties by ``tiebreak`` descending.

    Works along the last axis, so a batch of queries (or of whole samples)
    can be ranked at once.  Returns the first ``k`` positions.
    """
    dist = np.asarray(dist)
    tiebreak = np.broadcast_to(tiebreak, dist.shape)
    # pre-order by -U, then a stable sort by distance keeps that order in ties
    pre = np.argsort(-tiebreak, axis=-1, kind="stable")
    d_pre = np.take_along_axis(dist, pre, axis=-1)
    order = np.argsort(d_pre, axis=-1, kind="stable")
    if k is not None:
        order = order[..., :k]
    return np.take_along_axis(pre, order, axis=-1)


def _check_query(ds, query, k):
    q = np.asarray(query, dtype=float).reshape(-1)
    if q.shape[0] != ds.d:
        raise DimensionMismatch(f"query dimension {q.shape[0]} != data dimension {ds.d}")
    if not 1 <= k <= ds.n:
        raise KTooLarge(f"k={k} must be in [1, n={ds.n}]")
    return q


def neighbors(ds, spec, query, k):
    """The ``k`` nearest points of ``ds`` to ``query`` under ``spec``."""
    q = _check_query(ds, query, k)
    d = np.asarray(evaluate(as_spec(spec), ds.features - q), dtype=float).reshape(-1)
    idx = rank(d, ds.tiebreak, k)
    return NeighborSet(indices=idx, distances=d[idx])


def weights(ds, nb):
    w = np.zeros(ds.n)
    w[nb.indices] = 1.0 / nb.k
    return WeightVector(w)


def _require_binary(ds):
    if ds.n_classes != 2:
        raise NotBinary(f"binary rule needs 2 classes, dataset has {ds.n_classes}")


def regression_estimate(ds, nb, k=None):
    """Fraction of label-1 points among the neighbours."""
    _require_binary(ds)
    k = nb.k if k is None else k
    if k != nb.k:
        raise InvalidParameter(f"neighbour set has {nb.k} points, expected k={k}")
    return float(np.sum(ds.labels[nb.indices])) / k


def vote_binary(labels):
    """Label 1 iff at least half the votes are 1 (along the last axis)."""
    labels = np.asarray(labels)
    return (2 * labels.sum(axis=-1) >= labels.shape[-1]).astype(int)


def vote_plurality(labels, n_classes):
    """Most common label along the last axis; ties go to the smallest label."""
    labels = np.asarray(labels)
    counts = np.stack([(labels == c).sum(axis=-1) for c in range(n_classes)], axis=-1)
    return np.argmax(counts, axis=-1)


def predict_binary(ds, spec, query, k):
    _require_binary(ds)
    nb = neighbors(ds, spec, query, k)
    return int(vote_binary(ds.labels[nb.indices]))


def predict_multiclass(ds, spec, query, k):
    nb = neighbors(ds, spec, query, k)
    return int(vote_plurality(ds.labels[nb.indices], ds.n_classes))


def predict(ds, spec, query, k):
    if ds.n_classes == 2:
        return predict_binary(ds, spec, query, k)
    return predict_multiclass(ds, spec, query, k)


def predict_with_transform(ds, spec, transform_id, query, k, a=1.0, b=0.0):
    """Predict using ``h(spec)`` for a strictly increasing ``h``."""
    return predict(ds, IncreasingTransform(transform_id, as_spec(spec), a, b), query, k)


# -- batched queries -------------------------------------------------------

_CHUNK_ELEMS = 4_000_000


def distance_matrix(spec, queries, points):
    """``out[i, j] = rho(points[j] - queries[i])``, evaluated in chunks."""
    spec = as_spec(spec)
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if queries.shape[1] != points.shape[1]:
        raise DimensionMismatch("queries and points differ in dimension")
    out = np.empty((queries.shape[0], points.shape[0]))
    step = max(1, _CHUNK_ELEMS // max(1, points.size))
    for s in range(0, queries.shape[0], step):
        q = queries[s:s + step]
        out[s:s + step] = evaluate(spec, points[None, :, :] - q[:, None, :])
    return out


def neighbor_indices(ds, spec, queries, k):
    """Row ``i`` holds the ``k`` nearest indices for ``queries[i]``."""
    if not 1 <= k <= ds.n:
        raise KTooLarge(f"k={k} must be in [1, n={ds.n}]")
    return rank(distance_matrix(spec, queries, ds.features), ds.tiebreak, k)


def vote(labels, n_classes):
    if n_classes == 2:
        return vote_binary(labels)
    return vote_plurality(labels, n_classes)


def predict_many(ds, spec, queries, k):
    idx = neighbor_indices(ds, spec, queries, k)
    return vote(ds.labels[idx], ds.n_classes)
