"""Monte Carlo experiments on k-NN consistency.

Distributions with known Bayes error, batched estimation of the expected
misclassification error ``P(g_n(X) != Y)`` (fresh sample and query per
trial), and executable versions of the counterexamples: norm sequences
that are unbounded above or below, sample-dependent norms on a circle, and
weights that peek at the labels.

Trials are processed in fixed blocks of ``BLOCK`` with the generator for
block ``b`` seeded by ``(seed, b)``, so results do not depend on how blocks
are scheduled.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .distances import LpNorm, MatrixThenInner, as_spec, diagonal, evaluate
from .errors import InvalidParameter, KTooLarge
from .knn import make_dataset, rank, tiebreak_values, vote_binary
from .linalg import rotation

BLOCK = 500


def worker_count():
    env = os.environ.get("FLEXKNN_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


# -- distributions ---------------------------------------------------------


@dataclass(frozen=True)
class DeterministicConcept:
    """Mass 1/2 at x = 0 with label 0, otherwise uniform on (0, 1] with label 1."""

    dim = 1
    bayes_error = 0.0

    def draw(self, rng, shape):
        at_zero = rng.random(shape) < 0.5
        x = np.where(at_zero, 0.0, 1.0 - rng.random(shape))  # (0, 1]
        return x[..., None], (~at_zero).astype(int)

    def bayes_predict(self, x):
        return (x[..., 0] != 0).astype(int)


@dataclass(frozen=True)
class FuzzyConcept:
    """Uniform on [0, 1]; label 1 with probability 2/3, independent of x."""

    dim = 1
    bayes_error = 1.0 / 3.0

    def draw(self, rng, shape):
        x = rng.random(shape)
        return x[..., None], (rng.random(shape) < 2.0 / 3.0).astype(int)

    def bayes_predict(self, x):
        return np.ones(x.shape[:-1], dtype=int)


@dataclass(frozen=True)
class TwoSegments:
    """``(u, 0)`` with label 0 or ``(u, 1)`` with label 1, each w.p. 1/2, u uniform."""

    dim = 2
    bayes_error = 0.0

    def draw(self, rng, shape):
        u = rng.random(shape)
        y = (rng.random(shape) < 0.5).astype(int)
        return np.stack([u, y.astype(float)], axis=-1), y

    def bayes_predict(self, x):
        return (x[..., 1] > 0.5).astype(int)


@dataclass(frozen=True)
class LabelIndependentGaussian:
    """Standard normal in ``d`` dimensions; label 1 w.p. 2/3, independent."""

    d: int = 2
    bayes_error = 1.0 / 3.0

    @property
    def dim(self):
        return self.d

    def draw(self, rng, shape):
        x = rng.normal(size=tuple(shape) + (self.d,))
        return x, (rng.random(shape) < 2.0 / 3.0).astype(int)

    def bayes_predict(self, x):
        return np.ones(x.shape[:-1], dtype=int)


DISTRIBUTIONS = {
    "deterministic": DeterministicConcept,
    "fuzzy": FuzzyConcept,
    "twosegments": TwoSegments,
    "gaussian": LabelIndependentGaussian,
}


def sample(dist, n, seed=0):
    """``n`` i.i.d. labelled points with tie-break values attached."""
    if n < 1:
        raise InvalidParameter("n must be >= 1")
    rng = np.random.default_rng(seed)
    x, y = dist.draw(rng, (n,))
    return make_dataset(x, y, tiebreak=tiebreak_values(n, rng))


# -- learning rules on batches of samples --------------------------------
#
# A rule maps a batch of samples X (T, n, d), Y (T, n), U (T, n) and queries
# Q (T, d) to predicted labels (T,).


@dataclass(frozen=True)
class KnnRule:
    spec: object = LpNorm(2.0)

    def __call__(self, x, y, u, q, k):
        d = evaluate(as_spec(self.spec), x - q[:, None, :])
        idx = rank(d, u, k)
        return vote_binary(np.take_along_axis(y, idx, axis=-1))


@dataclass(frozen=True)
class ConstantRule:
    label: int = 1

    def __call__(self, x, y, u, q, k):
        return np.full(q.shape[0], self.label, dtype=int)


@dataclass(frozen=True)
class BayesRule:
    dist: object

    def __call__(self, x, y, u, q, k):
        return self.dist.bayes_predict(q)


@dataclass(frozen=True)
class LabelDependentRule:
    """Weight 1/k on the k nearest label-0 points among the ``m k`` Euclidean
    nearest, topped up with the nearest label-1 points when there are fewer
    than k zeros.  The weights depend on the sample labels."""

    m: int = 5
    spec: object = LpNorm(2.0)

    def __call__(self, x, y, u, q, k):
        mk = self.m * k
        d = evaluate(as_spec(self.spec), x - q[:, None, :])
        idx = rank(d, u, mk)
        lab = np.take_along_axis(y, idx, axis=-1)
        # zeros first, each group in distance order
        key = lab * mk + np.arange(mk)
        chosen = np.take_along_axis(lab, np.argsort(key, axis=-1)[:, :k], axis=-1)
        return vote_binary(chosen)


@dataclass(frozen=True)
class ErrorEstimate:
    n: int
    k: int
    trials: int
    error: float
    std_err: float


def _std_err(p, trials):
    return math.sqrt(max(p * (1.0 - p), 0.0) / trials)


def _blocks(trials):
    return [(b, min(BLOCK, trials - b * BLOCK)) for b in range((trials + BLOCK - 1) // BLOCK)]


def _map_blocks(fn, trials, workers=None):
    blocks = _blocks(trials)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(blocks) == 1:
        return [fn(b, t) for b, t in blocks]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda bt: fn(*bt), blocks))


def estimate_error(dist, rule, n, k, trials, seed=0, reuse_sample=False, workers=None):
    """Monte Carlo estimate of ``P(rule(X, D_n) != Y)``.

    Each trial draws a fresh sample of size ``n`` and one independent query.
    ``reuse_sample=True`` shares one sample across a block of queries; it is
    faster but estimates a different quantity (error given one sample).
    """
    if trials < 100:
        raise InvalidParameter("trials must be >= 100")
    if not 1 <= k <= n:
        raise KTooLarge(f"k={k} must be in [1, n={n}]")

    def block(b, t):
        rng = np.random.default_rng([seed, b])
        if reuse_sample:
            x, y = dist.draw(rng, (1, n))
            x, y = np.broadcast_to(x, (t, n, x.shape[-1])), np.broadcast_to(y, (t, n))
            u = np.broadcast_to(rng.random((1, n)), (t, n))
        else:
            x, y = dist.draw(rng, (t, n))
            u = rng.random((t, n))
        qx, qy = dist.draw(rng, (t,))
        return int(np.sum(rule(x, y, u, qx, k) != qy))

    wrong = sum(_map_blocks(block, trials, workers))
    e = wrong / trials
    return ErrorEstimate(n=n, k=k, trials=trials, error=e, std_err=_std_err(e, trials))


# -- norms that are not uniformly bounded --------------------------------


@dataclass(frozen=True)
class BadNormSchedule:
    """``rho_n(v) = ||diag(a_n, b_n) v||_inf`` with

    * ``above``: ``a_n = n^2``, ``b_n = 1`` (unbounded above)
    * ``below``: ``a_n = 1``, ``b_n = 1 / n^2`` (not bounded below by a norm)
    """

    kind: str

    def __post_init__(self):
        if self.kind not in ("above", "below"):
            raise InvalidParameter(f"unknown schedule {self.kind!r}")

    def coefficients(self, n):
        if self.kind == "above":
            return float(n) ** 2, 1.0
        return 1.0, 1.0 / float(n) ** 2

    def spec(self, n):
        a, b = self.coefficients(n)
        return diagonal([a, b], LpNorm(math.inf))


UNBOUNDED_ABOVE = BadNormSchedule("above")
UNBOUNDED_BELOW = BadNormSchedule("below")


def bad_norm_error(schedule, n, k, trials, seed=0, workers=None):
    """k-NN error on the two-segment distribution with ``rho_n`` from ``schedule``.

    ``schedule`` may also be a fixed spec (the bounded control).
    """
    if k % 2 == 0:
        raise InvalidParameter("k must be odd")
    spec = schedule.spec(n) if isinstance(schedule, BadNormSchedule) else as_spec(schedule)
    return estimate_error(TwoSegments(), KnnRule(spec), n, k, trials, seed, workers=workers)


def far_lower_bound(a, b, n):
    """``(1 - 2 b / a)^n``, clipped at zero."""
    return max(0.0, 1.0 - 2.0 * b / a) ** n


@dataclass(frozen=True)
class FarProbability:
    n: int
    trials: int
    empirical: float
    lower_bound: float
    std_err: float


def far_probability(schedule, n, trials, seed=0, workers=None):
    """Probability that every sample point is farther than ``b_n`` from the query."""
    if n < 1:
        raise InvalidParameter("n must be >= 1")
    a, b = schedule.coefficients(n)
    spec = schedule.spec(n)
    dist = TwoSegments()

    def block(blk, t):
        rng = np.random.default_rng([seed, blk])
        x, _ = dist.draw(rng, (t, n))
        qx, _ = dist.draw(rng, (t,))
        d = evaluate(spec, x - qx[:, None, :])
        return int(np.sum(np.all(d > b, axis=-1)))

    p = sum(_map_blocks(block, trials, workers)) / trials
    return FarProbability(n=n, trials=trials, empirical=p, lower_bound=far_lower_bound(a, b, n),
                          std_err=_std_err(p, trials))


# -- sample-dependent norms on a circle -----------------------------------


@dataclass(frozen=True)
class ConeExperimentResult:
    n_points: int
    violations: int
    per_point_nearest_ok: tuple


def circle_points(n):
    ang = np.arange(n) * math.pi / (2 * n)
    return np.stack([np.cos(ang), np.sin(ang)], axis=-1)


def circle_norms(n):
    """Norm ``i`` rotates by ``-(i-1) pi / 2n``, scales by diag(1, 2), takes ℓ2."""
    out = []
    for i in range(n):
        m = np.diag([1.0, 2.0]) @ rotation(-i * math.pi / (2 * n))
        out.append(MatrixThenInner.from_array(m, LpNorm(2.0)))
    return out


def circle_counterexample(n, margin=1e-9):
    """Points on the quarter circle, each the unique nearest one to the origin
    under its own norm.  ``violations`` counts the points that are a nearest
    neighbour of the query for some norm in the family (a single fixed norm
    allows only a bounded number of these)."""
    if n < 2:
        raise InvalidParameter("n must be >= 2")
    pts = circle_points(n)
    ok = []
    for i, spec in enumerate(circle_norms(n)):
        d = evaluate(spec, pts)  # query at the origin
        others = np.delete(d, i)
        ok.append(bool(d[i] < others.min() - margin))
    return ConeExperimentResult(n_points=n, violations=int(sum(ok)), per_point_nearest_ok=tuple(ok))


# -- label-dependent weights ------------------------------------------------


def label_dependent_rule_error(n, k, trials, seed=0, d=2, m=5, workers=None):
    if m * k > n:
        raise KTooLarge(f"{m}k = {m * k} exceeds n = {n}")
    return estimate_error(LabelIndependentGaussian(d), LabelDependentRule(m), n, k, trials, seed,
                          workers=workers)
