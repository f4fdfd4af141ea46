"""Feature scaling, PCA, per-class median centroids and stratified splits."""

from dataclasses import dataclass

import numpy as np

from .errors import ClassTooSmall, EmptyDataset, InvalidParameter, RankTooSmall
from .knn import LabeledDataset, _frozen, make_dataset
from .linalg import jacobi_eigh


@dataclass(frozen=True)
class ScalerParams:
    lo: np.ndarray
    hi: np.ndarray

    def transform(self, x):
        span = self.hi - self.lo
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (np.asarray(x, dtype=float) - self.lo) / safe, 0.0)


def _features(data):
    return data.features if isinstance(data, LabeledDataset) else np.asarray(data, dtype=float)


def _with_features(data, x):
    if isinstance(data, LabeledDataset):
        return LabeledDataset(_frozen(x), data.labels, data.tiebreak, data.n_classes, data.label_names)
    return x


def minmax_fit(train):
    x = _features(train)
    if x.shape[0] == 0:
        raise EmptyDataset("cannot fit a scaler on no data")
    return ScalerParams(x.min(axis=0), x.max(axis=0))


def minmax_fit_transform(train, test):
    """Map each column to [0, 1] using the training range only.

    Test values outside the training range land outside [0, 1]; constant
    training columns map to 0.
    """
    params = minmax_fit(train)
    return (_with_features(train, params.transform(_features(train))),
            _with_features(test, params.transform(_features(test))), params)


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # d x retained, orthonormal columns
    explained_variance: np.ndarray  # all eigenvalues, descending
    retained: int

    @property
    def explained_fraction(self):
        total = self.explained_variance.sum()
        return float(self.explained_variance[: self.retained].sum() / total) if total > 0 else 1.0


def pca_fit(train, retained):
    """Principal directions of the training covariance (Jacobi eigensolver)."""
    x = _features(train)
    n, d = x.shape
    if retained < 1 or retained > min(n - 1, d):
        raise RankTooSmall(f"retained={retained} must be in [1, min(n-1, d)] = [1, {min(n - 1, d)}]")
    mean = x.mean(axis=0)
    c = x - mean
    vals, vecs = jacobi_eigh(c.T @ c / (n - 1))
    vals = np.clip(vals, 0.0, None)
    return PcaModel(mean, vecs[:, :retained].copy(), vals, retained)


def pca_transform(model, data):
    x = _features(data)
    return _with_features(data, (x - model.mean) @ model.components)


def median_centroids(train):
    """One point per class: the coordinatewise median of that class."""
    feats, labs = [], []
    for c in range(train.n_classes):
        members = train.features[train.labels == c]
        if len(members) == 0:
            continue
        feats.append(np.median(members, axis=0))
        labs.append(c)
    if not feats:
        raise EmptyDataset("no classes present")
    return make_dataset(np.array(feats), np.array(labs), n_classes=train.n_classes,
                        label_names=train.label_names)


def stratified_leave_one_per_class(ds, seed=0):
    """Hold out one uniformly chosen point of every class."""
    rng = np.random.default_rng(seed)
    test = []
    for c in np.unique(ds.labels):
        members = np.flatnonzero(ds.labels == c)
        if len(members) < 2:
            raise ClassTooSmall(f"class {c} has {len(members)} member(s); need 2")
        test.append(members[rng.integers(len(members))])
    test = np.sort(np.array(test))
    train = np.setdiff1d(np.arange(ds.n), test)
    return ds.subset(train), ds.subset(test)


def random_split(ds, n_train, n_test, seed=0):
    """Disjoint random train and test subsets of the given sizes."""
    if n_train < 1 or n_test < 1 or n_train + n_test > ds.n:
        raise InvalidParameter(f"cannot draw {n_train} + {n_test} points from {ds.n}")
    perm = np.random.default_rng(seed).permutation(ds.n)
    return ds.subset(np.sort(perm[:n_train])), ds.subset(np.sort(perm[n_train:n_train + n_test]))
