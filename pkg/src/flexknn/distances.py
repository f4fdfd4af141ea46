"""Distance functions for k-NN.

A distance is a function ``rho`` on difference vectors; the distance between
``x`` and ``y`` is ``rho(x - y)``.  Specs are small immutable trees:

* ``LpNorm(p)``                    ℓp norm (quasinorm when 0 < p < 1)
* ``MatrixThenInner(matrix, inner)`` ``inner(A v)`` for invertible ``A``
* ``CoordinateFunction(fn_id)``    ``sum_i f(|v_i|)`` for a fixed scalar ``f``
* ``LinearCombination(w, parts)``  ``sum_i (w_i / sum w) * part_i(v)``
* ``IncreasingTransform(t, inner)`` ``h(inner(v))`` for increasing ``h``

Every spec has a canonical text form (``lp:2``, ``mat(1,0,0,2);lp:inf``,
``poly:1,0.5``, ``comb:0.5*lp:1+0.5*lp:2``, ``square(lp:2)``) produced by
:func:`format_spec` and read back exactly by :func:`parse_spec`.
"""

import math
import re
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DimensionMismatch, InvalidParameter, ParseError, SingularMatrix
from .linalg import singular_values

COORDINATE_FUNCTIONS = ("exp_minus", "sin_linear", "tan_capped", "arctan", "sinh", "tanh", "polynomial")
TRANSFORMS = ("square", "sqrt", "affine")


@dataclass(frozen=True)
class LpNorm:
    p: float

    def __post_init__(self):
        p = float(self.p)
        if not (p > 0):  # also rejects nan
            raise InvalidParameter(f"p must be in (0, inf], got {self.p}")
        object.__setattr__(self, "p", p)

    @property
    def quasinorm(self):
        return self.p < 1


@dataclass(frozen=True)
class MatrixThenInner:
    matrix: tuple
    inner: "DistanceSpec"
    _array: np.ndarray = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        a = np.array(self.matrix, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise InvalidParameter(f"matrix must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidParameter("matrix entries must be finite")
        if not singular_values(a).is_invertible:
            raise SingularMatrix("matrix is not invertible")
        object.__setattr__(self, "matrix", tuple(tuple(float(x) for x in row) for row in a))
        a.setflags(write=False)
        object.__setattr__(self, "_array", a)

    @classmethod
    def from_array(cls, a, inner):
        return cls(tuple(map(tuple, np.asarray(a, dtype=float))), inner)

    @property
    def array(self):
        return self._array

    @property
    def dim(self):
        return self._array.shape[0]


@dataclass(frozen=True)
class CoordinateFunction:
    fn_id: str
    coeffs: tuple = ()

    def __post_init__(self):
        if self.fn_id not in COORDINATE_FUNCTIONS:
            raise InvalidParameter(f"unknown coordinate function {self.fn_id!r}")
        coeffs = tuple(float(c) for c in self.coeffs)
        if self.fn_id == "polynomial":
            if not coeffs:
                raise InvalidParameter("polynomial needs at least one coefficient")
        elif coeffs:
            raise InvalidParameter(f"{self.fn_id} takes no coefficients")
        object.__setattr__(self, "coeffs", coeffs)


@dataclass(frozen=True)
class LinearCombination:
    weights: tuple
    parts: tuple

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        parts = tuple(self.parts)
        if not parts or len(w) != len(parts):
            raise InvalidParameter("combination needs matching, non-empty weights and parts")
        if any(not (0.0 <= x <= 1.0) for x in w) or not any(x > 0 for x in w):
            raise InvalidParameter("weights must lie in [0, 1] with at least one positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "parts", parts)


@dataclass(frozen=True)
class IncreasingTransform:
    """``h(inner(v))``.  ``affine`` is ``a*t + b``; with ``b != 0`` the
    distance of a point to itself is ``b``, which leaves neighbour order intact."""

    transform_id: str
    inner: "DistanceSpec"
    a: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        if self.transform_id not in TRANSFORMS:
            raise InvalidParameter(f"unknown transform {self.transform_id!r}")
        if self.transform_id == "affine" and not float(self.a) > 0:
            raise InvalidParameter("affine transform needs a > 0")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))


DistanceSpec = Union[LpNorm, MatrixThenInner, CoordinateFunction, LinearCombination, IncreasingTransform]


# -- evaluation -------------------------------------------------------------


def _lp(v, p):
    a = np.abs(v)
    if a.shape[-1] == 0:
        return np.zeros(a.shape[:-1])
    if p == math.inf:
        return a.max(axis=-1)
    if p == 1.0:
        return a.sum(axis=-1)
    # factor out the largest entry so that small p cannot overflow
    m = a.max(axis=-1)
    safe = np.where(m > 0, m, 1.0)
    with np.errstate(over="ignore", invalid="ignore"):
        s = np.sum((a / safe[..., None]) ** p, axis=-1) ** (1.0 / p)
        out = np.where(m > 0, s * m, 0.0)
    # infinite coordinates
    return np.where(np.isinf(m), np.inf, out)


def _coordinate(x, spec):
    """Apply the scalar function to non-negative ``x`` elementwise."""
    fid = spec.fn_id
    with np.errstate(over="ignore", invalid="ignore"):
        if fid == "exp_minus":
            return np.expm1(x)
        if fid == "sin_linear":
            return np.where(x <= 1.0, np.sin(np.minimum(x, 1.0)), x)
        if fid == "tan_capped":
            inside = x < math.pi / 2
            return np.where(inside, np.tan(np.where(inside, x, 0.0)), np.inf)
        if fid == "arctan":
            return np.arctan(x)
        if fid == "sinh":
            return np.sinh(x)
        if fid == "tanh":
            return np.tanh(x)
        # polynomial: a_1 x + a_2 x^2 + ...
        out = np.zeros_like(x)
        for c in reversed(spec.coeffs):
            out = (out + c) * x
        return out


def _eval(spec, v):
    if isinstance(spec, LpNorm):
        return _lp(v, spec.p)
    if isinstance(spec, MatrixThenInner):
        if v.shape[-1] != spec.dim:
            raise DimensionMismatch(f"vector dimension {v.shape[-1]} != matrix dimension {spec.dim}")
        return _eval(spec.inner, v @ spec.array.T)
    if isinstance(spec, CoordinateFunction):
        return _coordinate(np.abs(v), spec).sum(axis=-1)
    if isinstance(spec, LinearCombination):
        total = sum(spec.weights)
        out = 0.0
        for w, part in zip(spec.weights, spec.parts):
            if w > 0:
                out = out + (w / total) * _eval(part, v)
        return out
    if isinstance(spec, IncreasingTransform):
        t = _eval(spec.inner, v)
        if spec.transform_id == "square":
            return t * t
        if spec.transform_id == "sqrt":
            return np.sqrt(t)
        return spec.a * t + spec.b
    raise InvalidParameter(f"not a distance spec: {spec!r}")


def spec_dim(spec):
    """Dimension fixed by the spec (via a matrix), or ``None`` if any works."""
    if isinstance(spec, MatrixThenInner):
        return spec.dim
    if isinstance(spec, IncreasingTransform):
        return spec_dim(spec.inner)
    if isinstance(spec, LinearCombination):
        dims = {spec_dim(p) for p in spec.parts} - {None}
        if len(dims) > 1:
            raise DimensionMismatch(f"combination mixes dimensions {sorted(dims)}")
        return dims.pop() if dims else None
    return None


def evaluate(spec, v):
    """Evaluate ``rho(v)``.

    ``v`` may be a single vector or any array whose last axis holds the
    coordinates; the result then has the leading shape.  May return ``inf``.
    """
    spec = as_spec(spec)
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    dim = spec_dim(spec)
    if dim is not None and arr.shape[-1] != dim:
        raise DimensionMismatch(f"vector dimension {arr.shape[-1]} != spec dimension {dim}")
    out = _eval(spec, arr)
    if np.ndim(out) == 0:
        return float(out)
    return out


def distance(spec, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1:] != y.shape[-1:]:
        raise DimensionMismatch(f"point dimensions differ: {x.shape} vs {y.shape}")
    return evaluate(spec, x - y)


def diagonal(entries, inner):
    return MatrixThenInner.from_array(np.diag(np.asarray(entries, dtype=float)), inner)


# -- text form --------------------------------------------------------------


def _num(x):
    x = float(x)
    if x == math.inf:
        return "inf"
    r = repr(x)
    return r[:-2] if r.endswith(".0") else r


def format_spec(spec, _nested=False):
    """Canonical text form of a spec; inverse of :func:`parse_spec`."""
    if isinstance(spec, LpNorm):
        return f"lp:{_num(spec.p)}"
    if isinstance(spec, MatrixThenInner):
        entries = ",".join(_num(x) for row in spec.matrix for x in row)
        return f"mat({entries});{format_spec(spec.inner, _nested)}"
    if isinstance(spec, CoordinateFunction):
        if spec.fn_id == "polynomial":
            return "poly:" + ",".join(_num(c) for c in spec.coeffs)
        return f"fn:{spec.fn_id}"
    if isinstance(spec, LinearCombination):
        body = "comb:" + "+".join(
            f"{_num(w)}*{format_spec(p, True)}" for w, p in zip(spec.weights, spec.parts)
        )
        return f"({body})" if _nested else body
    if isinstance(spec, IncreasingTransform):
        inner = format_spec(spec.inner)
        if spec.transform_id == "affine":
            return f"affine({_num(spec.a)},{_num(spec.b)};{inner})"
        return f"{spec.transform_id}({inner})"
    raise InvalidParameter(f"not a distance spec: {spec!r}")


_NUMBER = re.compile(r"[+-]?(?:inf|(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)")


class _Parser:
    def __init__(self, text):
        self.s = text.replace(" ", "")
        self.i = 0

    def fail(self, msg):
        raise ParseError(f"{msg} at position {self.i} in {self.s!r}")

    def peek(self, token):
        return self.s.startswith(token, self.i)

    def eat(self, token):
        if not self.peek(token):
            self.fail(f"expected {token!r}")
        self.i += len(token)

    def number(self):
        m = _NUMBER.match(self.s, self.i)
        if not m:
            self.fail("expected a number")
        self.i = m.end()
        return float(m.group())

    def numbers(self):
        out = [self.number()]
        while self.peek(","):
            self.i += 1
            out.append(self.number())
        return out

    def spec(self):
        if self.peek("("):
            self.i += 1
            inner = self.spec()
            self.eat(")")
            return inner
        if self.peek("lp:"):
            self.i += 3
            return LpNorm(self.number())
        if self.peek("poly:"):
            self.i += 5
            return CoordinateFunction("polynomial", tuple(self.numbers()))
        if self.peek("fn:"):
            self.i += 3
            m = re.compile(r"[a-z_]+").match(self.s, self.i)
            if not m:
                self.fail("expected a function name")
            self.i = m.end()
            return CoordinateFunction(m.group())
        if self.peek("mat("):
            self.i += 4
            entries = self.numbers()
            self.eat(");")
            d = math.isqrt(len(entries))
            if d * d != len(entries):
                self.fail(f"matrix needs a square number of entries, got {len(entries)}")
            rows = tuple(tuple(entries[r * d:(r + 1) * d]) for r in range(d))
            return MatrixThenInner(rows, self.spec())
        if self.peek("comb:"):
            self.i += 5
            weights, parts = [], []
            while True:
                weights.append(self.number())
                self.eat("*")
                parts.append(self.spec())
                if not self.peek("+"):
                    break
                self.i += 1
            return LinearCombination(tuple(weights), tuple(parts))
        for tid in ("square", "sqrt"):
            if self.peek(tid + "("):
                self.i += len(tid) + 1
                inner = self.spec()
                self.eat(")")
                return IncreasingTransform(tid, inner)
        if self.peek("affine("):
            self.i += 7
            a = self.number()
            self.eat(",")
            b = self.number()
            self.eat(";")
            inner = self.spec()
            self.eat(")")
            return IncreasingTransform("affine", inner, a, b)
        self.fail("unrecognised distance")


def parse_spec(text):
    """Parse the canonical text form, e.g. ``"mat(1,0,0,2);lp:2"``."""
    p = _Parser(text)
    spec = p.spec()
    if p.i != len(p.s):
        p.fail("trailing characters")
    return spec


def parse_spec_list(text):
    """Split a comma-separated list of specs, respecting parentheses.

    Top-level commas separate specs only where the next token starts a new
    spec, so ``"lp:0.5,lp:1,poly:1,0.5"`` yields three specs.
    """
    starts = ("lp:", "poly:", "fn:", "mat(", "comb:", "square(", "sqrt(", "affine(", "(")
    items, depth, start = [], 0, 0
    s = text.replace(" ", "")
    for i, ch in enumerate(s):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0 and s.startswith(starts, i + 1):
            items.append(s[start:i])
            start = i + 1
    items.append(s[start:])
    return [parse_spec(x) for x in items if x]


def as_spec(spec):
    return parse_spec(spec) if isinstance(spec, str) else spec
