"""Leading eigentriple and convergence diagnostics for killed chains.

The decay rate lambda0, the quasi-stationary law alpha (left eigenvector)
and the survival capacity eta (right eigenvector, normalized <alpha|eta> = 1)
come from power iteration on the sub-stochastic kernel K' = I + Q/L' with
L' = 1.05 * max exit rate.  The 5% inflation keeps a strictly positive
diagonal, so K' is primitive whenever the chain is irreducible and the
iteration cannot cycle.  lambda0 = L' * (1 - theta) for the Perron value
theta of K'.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import DegenerateSpectrumWarning, NoConvergenceError, NotIrreducibleError
from .generator import (ProbabilityVector, _series_scaled, _right_op, as_weights,
                        dcne, survival_vector, tv_distance)


@dataclass
class EigenPair:
    """Leading decay rate with its left/right eigenvectors.

    gap estimates the distance to the next decay rate (in rate units) from
    the signed ratio of successive power-iteration residuals; it is a
    diagnostic, not a certificate.  degenerate flags a second eigenvalue
    coinciding with the first within tolerance.
    """

    lambda0: float
    alpha: ProbabilityVector
    eta: np.ndarray
    gap: float
    degenerate: bool
    iterations: int
    residual: float


def is_irreducible(gen):
    n_comp, _ = connected_components(gen.off, directed=True, connection="strong")
    return n_comp == 1


def solve_eigentriple(gen, tol=1e-12, max_iter=10**6):
    """Power iteration for (lambda0, alpha, eta) with <alpha|eta> = 1."""
    n = gen.n_states
    if n == 1:
        return EigenPair(
            lambda0=float(gen.kill[0]),
            alpha=ProbabilityVector(np.ones(1), strict=True),
            eta=np.ones(1),
            gap=math.inf,
            degenerate=False,
            iterations=0,
            residual=0.0,
        )
    if not is_irreducible(gen):
        raise NotIrreducibleError("jump graph is not strongly connected")
    rate = 1.05 * gen.uniformization_rate
    k_mat = gen.kernel(rate)
    kt_mat = k_mat.T.tocsr()

    x = np.full(n, 1.0 / n)
    h = np.ones(n)
    res_x_prev_vec = None
    ratio = math.nan
    res_x = res_h = math.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        x_new = kt_mat @ x
        theta_x = float(x_new.sum())
        res_vec = x_new - theta_x * x
        res_x = float(np.abs(res_vec).sum())
        if res_x_prev_vec is not None:
            denom = float(res_x_prev_vec @ res_x_prev_vec)
            if denom > 0.0 and res_x > 0.0:
                ratio = float(res_vec @ res_x_prev_vec) / denom
        res_x_prev_vec = res_vec
        x = x_new / theta_x

        h_new = k_mat @ h
        scale_h = float(h_new.max())
        res_h = float(np.abs(h_new - theta_x * h).max()) / max(scale_h, 1e-300)
        h = h_new / scale_h

        if res_x <= tol and res_h <= tol:
            break
    else:
        near = math.isfinite(ratio) and (1.0 - ratio) <= 1e-6
        if not near:
            raise NoConvergenceError(
                f"power iteration did not reach tol={tol!r} in {max_iter} steps",
                iterations=max_iter, residual=max(res_x, res_h))

    theta = float((x @ (k_mat @ h)) / (x @ h))
    lambda0 = rate * (1.0 - theta)
    if math.isfinite(ratio):
        gap = rate * theta * (1.0 - ratio)
    else:
        gap = math.inf
    degenerate = math.isfinite(ratio) and (1.0 - ratio) <= 100.0 * tol
    if iterations == max_iter and math.isfinite(ratio) and (1.0 - ratio) <= 1e-6:
        degenerate = True
    if degenerate:
        warnings.warn("two leading kernel eigenvalues coincide within tolerance",
                      DegenerateSpectrumWarning)
    alpha = ProbabilityVector(x / x.sum(), strict=True)
    eta = h / float(alpha.w @ h)
    return EigenPair(
        lambda0=float(lambda0),
        alpha=alpha,
        eta=eta,
        gap=float(gap),
        degenerate=bool(degenerate),
        iterations=iterations,
        residual=float(max(res_x, res_h) * rate),
    )


def survival_capacity_t(gen, x, t, lambda0, tol=1e-12):
    """Finite-time survival capacity e^{lambda0 t} P_x(t < death).

    x may be a state index or None for the whole vector at once.
    """
    vec, log_scale = survival_vector(gen, t, tol=tol, return_log=True)
    scale = lambda0 * t + log_scale
    vals = vec * math.exp(scale) if scale > -700 else vec * 0.0
    if x is None:
        return vals
    return float(vals[int(x)])


def survival_capacity_profile(gen, t_grid, lambda0, tol=1e-12):
    """Matrix of e^{lambda0 t} P_x(t < death) over a sorted time grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) < 0):
        raise ValueError("t_grid must be sorted")
    op = _right_op(gen)
    rate = gen.uniformization_rate
    cur = np.ones(gen.n_states)
    log_scale = 0.0
    prev_t = 0.0
    rows = np.empty((t_grid.shape[0], gen.n_states))
    for i, t in enumerate(t_grid):
        dt = t - prev_t
        if dt > 0:
            cur, step_log = _series_scaled(op, cur, rate * dt, tol)
            log_scale += step_log
            prev_t = t
        scale = lambda0 * t + log_scale
        rows[i] = cur * (math.exp(scale) if scale > -700 else 0.0)
    return rows


def default_t_grid(t_min, t_max, points_per_decade=64):
    """Log-spaced grid with a fixed point density per decade."""
    if not (0 < t_min < t_max):
        raise ValueError("need 0 < t_min < t_max")
    n_dec = math.log10(t_max / t_min)
    n_pts = max(2, int(round(n_dec * points_per_decade)) + 1)
    return np.geomspace(t_min, t_max, n_pts)


@dataclass
class ConvergenceProfile:
    t: np.ndarray
    tv: np.ndarray
    survival_weight: np.ndarray
    rate: float
    lambda0: float
    gap: float

    def rows(self):
        return [(float(a), float(b), float(c))
                for a, b, c in zip(self.t, self.tv, self.survival_weight)]


def convergence_profile(gen, mu, t_grid=None, eigen=None, tol=1e-12,
                        fit_fraction=0.5):
    """Distance to the quasi-stationary law along a time grid.

    Tabulates TV(conditioned law at t, alpha) and the survival weight
    e^{lambda0 t} * mass(mu P_t), then fits the exponential decay rate of
    the TV column on the tail portion of the grid (points with TV above
    float noise).  The fitted rate is compared against the eigen gap by the
    caller; both are returned.
    """
    if eigen is None:
        eigen = solve_eigentriple(gen, tol=tol)
    if t_grid is None:
        scale = 1.0 / eigen.gap if math.isfinite(eigen.gap) and eigen.gap > 0 else 1.0
        t_grid = default_t_grid(0.1 * scale, 8.0 * scale)
    t_grid = np.asarray(sorted(float(t) for t in t_grid))
    w = as_weights(mu, gen.n_states)
    cur = ProbabilityVector(np.clip(w, 0, None) / w.sum(), strict=True)
    log_mass = 0.0
    prev_t = 0.0
    tv = np.empty(t_grid.shape[0])
    sw = np.empty(t_grid.shape[0])
    for i, t in enumerate(t_grid):
        dt = t - prev_t
        if dt > 0:
            cur, step = dcne(gen, cur, dt, tol=tol, return_log_mass=True)
            log_mass += step
            prev_t = t
        tv[i] = tv_distance(cur, eigen.alpha)
        scale = eigen.lambda0 * t + log_mass
        sw[i] = math.exp(scale) if scale > -700 else 0.0
    rate = fit_decay_rate(t_grid, tv, fit_fraction=fit_fraction)
    return ConvergenceProfile(t=t_grid, tv=tv, survival_weight=sw, rate=rate,
                              lambda0=eigen.lambda0, gap=eigen.gap)


def fit_decay_rate(t, values, fit_fraction=0.5, floor=1e-14):
    """Exponential decay rate fitted on the tail portion of a curve."""
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    start = int(len(t) * (1.0 - fit_fraction))
    mask = values[start:] > floor
    tt, vv = t[start:][mask], values[start:][mask]
    if tt.shape[0] < 2:
        return math.nan
    slope = np.polyfit(tt, np.log(vv), 1)[0]
    return float(-slope)
