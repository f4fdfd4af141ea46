"""Randomised numerical audits of distance specs.

None of these are proofs.  They sample vectors and report the worst
violation found, which is enough to separate norms from quasinorms and
locally Lipschitz families from ones that blow up near the axes.
"""

from dataclasses import dataclass

import numpy as np

from .distances import as_spec, evaluate, spec_dim
from .errors import InvalidParameter


@dataclass(frozen=True)
class AxiomReport:
    homogeneity_ok: bool
    triangle_ok: bool
    max_violation: float
    max_homogeneity_violation: float
    max_triangle_violation: float


def _random_vectors(rng, n, dim):
    # mix of scales so both tiny and huge vectors are exercised
    scale = 10.0 ** rng.uniform(-3, 3, size=(n, 1))
    v = rng.normal(size=(n, dim)) * scale
    # sparse vectors hit the axes, where quasinorms misbehave most
    mask = rng.random((n, dim)) < 0.3
    return np.where(mask, 0.0, v)


def check_norm_axioms(spec, dim, trials=1000, seed=0, tol=1e-9):
    """Sample homogeneity and the triangle inequality.

    Violations are relative: ``|rho(l v) - |l| rho(v)| / (|l| rho(v))`` and
    ``(rho(u+v) - rho(u) - rho(v)) / (rho(u) + rho(v))``.
    """
    spec = as_spec(spec)
    if trials < 1:
        raise InvalidParameter("trials must be >= 1")
    fixed = spec_dim(spec)
    if fixed is not None:
        dim = fixed
    rng = np.random.default_rng(seed)
    u = _random_vectors(rng, trials, dim)
    v = _random_vectors(rng, trials, dim)
    lam = rng.normal(size=trials) * 10.0 ** rng.uniform(-2, 2, size=trials)

    ru, rv = evaluate(spec, u), evaluate(spec, v)
    rlv = evaluate(spec, lam[:, None] * v)
    expect = np.abs(lam) * rv
    with np.errstate(invalid="ignore", divide="ignore"):
        hom = np.abs(rlv - expect) / np.maximum(expect, 1e-300)
        tri = (evaluate(spec, u + v) - ru - rv) / np.maximum(ru + rv, 1e-300)
    hom = np.nan_to_num(hom, nan=np.inf)
    tri = np.nan_to_num(tri, nan=np.inf)
    h, t = float(np.max(hom)), float(max(np.max(tri), 0.0))
    return AxiomReport(
        homogeneity_ok=h <= tol,
        triangle_ok=t <= tol,
        max_violation=max(h, t),
        max_homogeneity_violation=h,
        max_triangle_violation=t,
    )


@dataclass(frozen=True)
class FamilyBounds:
    """Estimated constants of a uniformly locally Lipschitz distance.

    ``alpha`` is the Lipschitz constant on the ball of radius ``r`` (at least
    1), ``beta`` the lower bound on the radial derivative (at most 1),
    ``gamma`` the floor of the distance outside the ball and
    ``delta = min(r, gamma) / (4 alpha)`` the derived inner radius.
    """

    alpha: float
    beta: float
    gamma: float
    r: float
    delta: float
    violated: bool
    alpha_refined: float = float("nan")


def inner_radius(alpha, gamma, r):
    return min(r, gamma) / (4.0 * alpha)


def _lattice(n, dim, r):
    axis = np.linspace(-r, r, n)
    pts = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    return pts


def _norm(v, ref_p):
    a = np.abs(v)
    if ref_p == np.inf:
        return a.max(axis=-1)
    return np.sum(a**ref_p, axis=-1) ** (1.0 / ref_p)


def _lipschitz_estimate(spec, n, dim, r, ref_p, dirs):
    """Largest difference quotient over lattice points and fixed directions."""
    x = _lattice(n, dim, r)
    x = x[_norm(x, ref_p) <= r]
    h = r / n
    best = 0.0
    rx = evaluate(spec, x)
    radial = x / np.maximum(_norm(x, ref_p), 1e-300)[:, None]
    for u in list(dirs) + [None]:
        step = radial if u is None else np.broadcast_to(u / _norm(u, ref_p), x.shape)
        y = x + h * step
        ok = _norm(y, ref_p) <= r
        if not np.any(ok):
            continue
        with np.errstate(invalid="ignore"):
            q = np.abs(evaluate(spec, y[ok]) - rx[ok]) / h
        q = np.nan_to_num(q, nan=np.inf)
        best = max(best, float(np.max(q)))
    return best


def estimate_family_bounds(spec, r=1.0, grid=20, seed=0, dim=2, ref_p=2.0):
    """Estimate alpha, beta, gamma for ``spec`` on the ball of radius ``r``.

    ``ref_p`` selects the reference norm (ℓ^ref_p) in which the ball, the
    Lipschitz constant and the radial bound are measured.  Alpha is
    estimated on a lattice with ``grid`` and ``2 * grid`` points per axis;
    growth by more than 25% under refinement flags the family as not
    locally Lipschitz.
    """
    spec = as_spec(spec)
    if not r > 0 or grid < 10:
        raise InvalidParameter("need r > 0 and grid >= 10")
    fixed = spec_dim(spec)
    if fixed is not None:
        dim = fixed
    rng = np.random.default_rng(seed)
    dirs = [e for e in np.eye(dim)] + [-e for e in np.eye(dim)]
    dirs += list(rng.normal(size=(8 * dim, dim)))

    a1 = _lipschitz_estimate(spec, grid, dim, r, ref_p, dirs)
    a2 = _lipschitz_estimate(spec, 2 * grid, dim, r, ref_p, dirs)

    # radial derivative of lambda -> rho(lambda v), divided by ||v||
    v = np.concatenate([np.eye(dim), -np.eye(dim), rng.normal(size=(grid * dim, dim))])
    v = v / _norm(v, ref_p)[:, None] * r * rng.uniform(0.1, 1.0, size=(len(v), 1))
    lams = np.linspace(0.0, 1.0, grid + 1)[:-1]
    h = 1.0 / (4 * grid)
    rho_lo = evaluate(spec, lams[None, :, None] * v[:, None, :])
    rho_hi = evaluate(spec, (lams[None, :, None] + h) * v[:, None, :])
    with np.errstate(invalid="ignore"):
        slopes = (rho_hi - rho_lo) / (h * _norm(v, ref_p)[:, None])
    beta_hat = float(np.nan_to_num(slopes, nan=-np.inf).min())

    # floor on the shell r <= ||v|| <= 4r
    u = np.concatenate([np.eye(dim), -np.eye(dim), rng.normal(size=(grid * dim, dim))])
    u = u / _norm(u, ref_p)[:, None]
    radii = np.linspace(r, 4 * r, grid)
    shell = evaluate(spec, radii[None, :, None] * u[:, None, :])
    gamma_hat = float(np.nan_to_num(shell, nan=-np.inf).min())

    diverges = not np.isfinite(a2) or a2 > 1.25 * a1
    violated = bool(beta_hat <= 0 or gamma_hat <= 0 or diverges or not np.isfinite(a1))
    alpha = max(a1, 1.0)
    beta = min(beta_hat, 1.0)
    delta = inner_radius(alpha, gamma_hat, r) if np.isfinite(alpha) and gamma_hat > 0 else 0.0
    return FamilyBounds(alpha=alpha, beta=beta, gamma=gamma_hat, r=float(r),
                        delta=delta, violated=violated, alpha_refined=a2)


@dataclass(frozen=True)
class ConeCheck:
    rho_x: float
    rho_y: float
    rho_diff: float
    violated: bool


def cone_condition_violation(spec, x, y):
    """Check the cone property ``rho(x) <= rho(y)  =>  rho(y - x) < rho(y)``.

    A violation is a pair with ``rho(x) <= rho(y)`` but
    ``rho(y - x) >= rho(y)``.
    """
    spec = as_spec(spec)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rx, ry = evaluate(spec, x), evaluate(spec, y)
    rd = evaluate(spec, y - x)
    return ConeCheck(rho_x=rx, rho_y=ry, rho_diff=rd, violated=bool(rx <= ry and rd >= ry))


def quasinorm_gap(r):
    """``rho(y - x) - rho(y)`` for the ℓ^(1/2) pair ``x = (r, r^2)``, ``y = (1, 0)``."""
    r = np.asarray(r, dtype=float)
    return r**2 + 2 * r * np.sqrt(1 - r) - r
