"""Derivative-free minimisers and the empirical choice of k."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter, NonFiniteObjective, TooSmall
from .knn import neighbor_indices, vote


@dataclass(frozen=True)
class NelderMead:
    reflect: float = 1.0
    expand: float = 2.0
    contract: float = 0.5
    shrink: float = 0.5
    tol: float = 1e-10
    max_iter: int = 5000
    xtol: float = 1e-7

    def __post_init__(self):
        if min(self.reflect, self.expand, self.contract, self.shrink) <= 0 or self.tol <= 0 or self.xtol < 0:
            raise InvalidParameter("Nelder-Mead coefficients and tol must be positive")


@dataclass(frozen=True)
class Anneal:
    t0: float = 1.0
    cooling: float = 0.95
    steps_per_temp: int = 50
    step_scale: float = 0.5
    seed: int = 0
    max_evals: int = 10_000

    def __post_init__(self):
        if self.t0 < 0 or not 0 < self.cooling < 1 or self.steps_per_temp < 1 or self.step_scale <= 0:
            raise InvalidParameter("invalid annealing schedule")


OptimizerRef = NelderMead | Anneal


@dataclass
class OptResult:
    x_best: np.ndarray
    f_best: float
    evaluations: int
    converged: bool
    iterations: int = 0
    accepted_worse: int = 0


class _BudgetExhausted(Exception):
    pass


class _Counted:
    """Wraps an objective: counts calls, maps NaN to +inf, enforces a budget."""

    def __init__(self, f, max_evals):
        self.f = f
        self.max_evals = max_evals
        self.evals = 0

    def __call__(self, x):
        if self.max_evals is not None and self.evals >= self.max_evals:
            raise _BudgetExhausted
        self.evals += 1
        v = float(self.f(x))
        return math.inf if math.isnan(v) else v


def _start(f, x0, max_evals):
    x0 = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    if x0.ndim != 1 or x0.size == 0:
        raise InvalidParameter("x0 must be a non-empty vector")
    fc = _Counted(f, max_evals)
    f0 = float(f(x0))
    fc.evals = 1
    if math.isnan(f0):
        raise NonFiniteObjective("objective is NaN at x0")
    return x0, f0, fc


def nelder_mead(f, x0, opts=NelderMead(), max_evals=None):
    """Minimise ``f`` with the downhill simplex method.

    The initial simplex is ``x0`` plus one vertex per axis displaced by
    ``max(0.05 |x0_i|, 0.1)``.  Converges when the spread of function values
    over the simplex is below ``opts.tol`` and every vertex lies within
    ``opts.xtol`` of the best one (a flat start counts as converged at
    once).  Also stops after ``opts.max_iter`` iterations or ``max_evals``
    evaluations.
    """
    x0, f0, fc = _start(f, x0, max_evals)
    n = x0.size
    sim = np.empty((n + 1, n))
    fs = np.full(n + 1, math.inf)
    sim[0], fs[0] = x0, f0
    it = 0
    converged = False
    try:
        for i in range(n):
            v = x0.copy()
            v[i] += max(0.05 * abs(x0[i]), 0.1)
            sim[i + 1] = v
            fs[i + 1] = fc(v)
        while it < opts.max_iter:
            order = np.argsort(fs, kind="stable")
            sim, fs = sim[order], fs[order]
            flat_start = it == 0 and np.all(fs == fs[0])
            collapsed = np.max(np.abs(sim[1:] - sim[0])) <= opts.xtol
            if fs[-1] - fs[0] < opts.tol and (collapsed or flat_start):
                converged = True
                break
            it += 1
            c = sim[:-1].mean(axis=0)
            xr = c + opts.reflect * (c - sim[-1])
            fr = fc(xr)
            if fr < fs[0]:
                xe = c + opts.expand * (xr - c)
                fe = fc(xe)
                sim[-1], fs[-1] = (xe, fe) if fe < fr else (xr, fr)
                continue
            if fr < fs[-2]:
                sim[-1], fs[-1] = xr, fr
                continue
            if fr < fs[-1]:
                xc = c + opts.contract * (xr - c)
                fcv = fc(xc)
                if fcv <= fr:
                    sim[-1], fs[-1] = xc, fcv
                    continue
            else:
                xc = c + opts.contract * (sim[-1] - c)
                fcv = fc(xc)
                if fcv < fs[-1]:
                    sim[-1], fs[-1] = xc, fcv
                    continue
            for j in range(1, n + 1):
                sim[j] = sim[0] + opts.shrink * (sim[j] - sim[0])
                fs[j] = fc(sim[j])
    except _BudgetExhausted:
        pass
    b = int(np.argmin(fs))
    if fs[b] > f0:
        return OptResult(x0, f0, fc.evals, converged, it)
    return OptResult(sim[b].copy(), float(fs[b]), fc.evals, converged, it)


def simulated_annealing(f, x0, opts=Anneal(), max_evals=None):
    """Minimise ``f`` by simulated annealing with geometric cooling.

    Proposals are Gaussian with scale ``step_scale * T / t0``; a worse point
    is accepted with probability ``exp(-delta / T)``.  With ``t0 = 0`` the
    search is greedy and never accepts a worse point.
    """
    budget = opts.max_evals if max_evals is None else min(max_evals, opts.max_evals)
    x, fx, fc = _start(f, x0, budget)
    rng = np.random.default_rng(opts.seed)
    best_x, best_f = x.copy(), fx
    t = opts.t0
    worse = 0
    levels = 0
    try:
        while True:
            scale = opts.step_scale * (t / opts.t0 if opts.t0 > 0 else 1.0)
            for _ in range(opts.steps_per_temp):
                y = x + scale * rng.normal(size=x.size)
                fy = fc(y)
                delta = fy - fx
                if delta <= 0:
                    x, fx = y, fy
                elif t > 0 and rng.random() < math.exp(-delta / t):
                    x, fx = y, fy
                    worse += 1
                if fx < best_f:
                    best_x, best_f = x.copy(), fx
            t *= opts.cooling
            levels += 1
    except _BudgetExhausted:
        pass
    return OptResult(best_x, best_f, fc.evals, True, levels, worse)


def minimize(f, x0, opt, max_evals=None):
    if isinstance(opt, NelderMead):
        return nelder_mead(f, x0, opt, max_evals)
    if isinstance(opt, Anneal):
        return simulated_annealing(f, x0, opt, max_evals)
    raise InvalidParameter(f"unknown optimizer {opt!r}")


def parse_optimizer(text):
    """``nm,tol=1e-8,iters=2000`` or ``sa,t0=1.0,cool=0.95,steps=50,scale=0.5,seed=7``."""
    head, *rest = [t for t in text.replace(" ", "").split(",") if t]
    kv = {}
    for item in rest:
        if "=" not in item:
            raise InvalidParameter(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        kv[k] = v
    if head == "nm":
        names = {"tol": ("tol", float), "xtol": ("xtol", float), "iters": ("max_iter", int), "reflect": ("reflect", float),
                 "expand": ("expand", float), "contract": ("contract", float), "shrink": ("shrink", float)}
        cls = NelderMead
    elif head == "sa":
        names = {"t0": ("t0", float), "cool": ("cooling", float), "steps": ("steps_per_temp", int),
                 "scale": ("step_scale", float), "seed": ("seed", int), "evals": ("max_evals", int)}
        cls = Anneal
    else:
        raise InvalidParameter(f"unknown optimizer {head!r}")
    args = {}
    for k, v in kv.items():
        if k not in names:
            raise InvalidParameter(f"unknown option {k!r} for {head}")
        name, conv = names[k]
        args[name] = conv(v)
    return cls(**args)


def k_validation_accuracy(train, spec, k_max, folds=1, seed=0):
    """Validation accuracy for every ``k`` in ``1..k_max``.

    ``folds=1`` is a single shuffled 75/25 split; ``folds >= 2`` is ordinary
    k-fold cross-validation.  Entry ``k-1`` of the result belongs to ``k``.
    """
    n = train.n
    if k_max < 1:
        raise InvalidParameter("k_max must be >= 1")
    if n < 2 or (folds >= 2 and n < folds):
        raise TooSmall(f"cannot split {n} points for validation")
    perm = np.random.default_rng(seed).permutation(n)
    if folds <= 1:
        n_val = min(n - 1, max(1, int(round(0.25 * n))))
        splits = [(perm[n_val:], perm[:n_val])]
    else:
        parts = np.array_split(perm, folds)
        splits = [(np.concatenate(parts[:i] + parts[i + 1:]), parts[i]) for i in range(folds)]
    k_cap = min(k_max, min(len(fit) for fit, _ in splits))
    correct = np.zeros(k_max)
    total = 0
    for fit_idx, val_idx in splits:
        fit, val = train.subset(fit_idx), train.subset(val_idx)
        idx = neighbor_indices(fit, spec, val.features, k_cap)
        lab = fit.labels[idx]
        for k in range(1, k_cap + 1):
            correct[k - 1] += np.sum(vote(lab[:, :k], train.n_classes) == val.labels)
        total += val.n
    acc = correct / total
    acc[k_cap:] = -1.0  # k larger than the fitting part is not admissible
    return acc


def grid_search_k(train, spec, k_max, folds=1, seed=0):
    """Smallest ``k`` in ``1..k_max`` with the best validation accuracy."""
    acc = k_validation_accuracy(train, spec, k_max, folds, seed)
    return int(np.argmax(acc)) + 1
