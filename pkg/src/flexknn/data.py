"""Dataset ingestion and the synthetic polynomial dataset."""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import EmptyDataset, InvalidParameter, MissingColumn, ParseError
from .knn import make_dataset


@dataclass(frozen=True)
class TabularSchema:
    """Which columns to read.  Empty ``feature_columns`` means every column
    except the label."""

    label_column: str
    feature_columns: tuple = ()
    delimiter: str = ","

    def __post_init__(self):
        if self.label_column in self.feature_columns:
            raise InvalidParameter("label column cannot also be a feature")
        if len(self.delimiter) != 1:
            raise InvalidParameter("delimiter must be a single character")


def load_csv(path, schema, seed=0):
    """Read a headed CSV into a dataset.

    Labels are mapped to ``0..q-1`` in order of first appearance; the
    original names are kept in ``label_names``.  Rows in error messages are
    1-based data rows (the header is row 0).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        header = next(reader, None)
        if header is None:
            raise EmptyDataset(f"{path} is empty")
        header = [h.strip() for h in header]
        missing = [c for c in (schema.label_column, *schema.feature_columns) if c not in header]
        if missing:
            raise MissingColumn(f"columns not found: {', '.join(missing)}")
        features = schema.feature_columns or tuple(h for h in header if h != schema.label_column)
        fcols = [header.index(c) for c in features]
        lcol = header.index(schema.label_column)
        rows, labels, names = [], [], {}
        for r, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"row {r} has {len(row)} fields, expected {len(header)}", row=r)
            vals = []
            for c in fcols:
                try:
                    vals.append(float(row[c]))
                except ValueError:
                    raise ParseError(f"row {r}, column {header[c]!r}: not a number: {row[c]!r}",
                                     row=r, col=header[c]) from None
            rows.append(vals)
            labels.append(names.setdefault(row[lcol].strip(), len(names)))
    if not rows:
        raise EmptyDataset(f"{path} has no data rows")
    return make_dataset(np.array(rows), np.array(labels), seed=seed,
                        n_classes=max(2, len(names)), label_names=tuple(names))


def write_csv(path, ds, feature_names=None, label_column="label"):
    names = feature_names or [f"x{i + 1}" for i in range(ds.d)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*names, label_column])
        for x, y in zip(ds.features, ds.labels):
            w.writerow([*(repr(float(v)) for v in x), ds.label_names[y] if ds.label_names else int(y)])


def polynomial_labels(x):
    """Label 1 iff ``p1(t) > p2(t)`` with ``t = 2 x1``, ``p1 = x2 t + x3 t^2 + x4 t^3``
    and ``p2 = x5 t + x6 t^2 + x7 t^3``."""
    x = np.asarray(x, dtype=float)
    t = 2.0 * x[..., 0]
    p1 = x[..., 1] * t + x[..., 2] * t**2 + x[..., 3] * t**3
    p2 = x[..., 4] * t + x[..., 5] * t**2 + x[..., 6] * t**3
    return (p1 > p2).astype(int)


def generate_polynomial_dataset(n_train, n_test, seed=0):
    """Independent train and test sets, uniform on [0, 1]^7, labelled by :func:`polynomial_labels`."""
    if n_train < 1 or n_test < 1:
        raise InvalidParameter("sizes must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for n in (n_train, n_test):
        x = rng.random((n, 7))
        out.append(make_dataset(x, polynomial_labels(x), seed=int(rng.integers(2**63)), n_classes=2))
    return tuple(out)
