"""k-nearest-neighbour classification with general distances.

Distances are small immutable specs (``lp:2``, ``mat(2,0,0,1);lp:inf``,
``poly:1,0.5`` ...) evaluated on difference vectors.  The package offers
exact k-NN with seeded tie-breaking, locally chosen distances, derivative
free optimisers, Monte Carlo consistency experiments and a repeated
train/test evaluation harness.
"""

from .distances import (
    CoordinateFunction,
    IncreasingTransform,
    LinearCombination,
    LpNorm,
    MatrixThenInner,
    as_spec,
    diagonal,
    distance,
    evaluate,
    format_spec,
    parse_spec,
    parse_spec_list,
)
from .errors import FlexKnnError, ParseError
from .knn import (
    LabeledDataset,
    make_dataset,
    neighbors,
    predict,
    predict_binary,
    predict_many,
    predict_multiclass,
)

__version__ = "0.1.0"

__all__ = [
    "CoordinateFunction",
    "FlexKnnError",
    "IncreasingTransform",
    "LabeledDataset",
    "LinearCombination",
    "LpNorm",
    "MatrixThenInner",
    "ParseError",
    "as_spec",
    "diagonal",
    "distance",
    "evaluate",
    "format_spec",
    "make_dataset",
    "neighbors",
    "parse_spec",
    "parse_spec_list",
    "predict",
    "predict_binary",
    "predict_many",
    "predict_multiclass",
]
