"""Birth-death chains with catastrophes on a finite ladder.

Sites are 1..n_max (stored 0-based).  Each site n carries a birth rate b_n
(up), a death rate d_n (down; d_1 feeds the absorption channel), and a
catastrophe rate c_n straight to absorption.  The top boundary either kills
(b at the top feeds absorption; keeps the generator sub-Markovian, the
default) or reflects (the top birth rate is dropped).
"""

import math
from dataclasses import dataclass

import numpy as np

from ..errors import SchemaError
from ..generator import SubMarkovGenerator, dcne, exit_probability_vector, \
    point_mass, tv_distance


def resolve_rate(spec, n_max):
    """Rate table on sites 1..n_max from a scalar, array, callable, or a
    JSON family {constant, linear, table, step}."""
    sites = np.arange(1, n_max + 1, dtype=float)
    if callable(spec):
        return np.asarray([float(spec(int(n))) for n in sites])
    if isinstance(spec, dict):
        kind = spec.get("kind")
        if kind == "constant":
            return np.full(n_max, float(spec["value"]))
        if kind == "linear":
            return float(spec["slope"]) * sites + float(spec.get("intercept", 0.0))
        if kind == "table":
            vals = np.asarray(spec["values"], dtype=float)
            if vals.size < n_max:
                raise SchemaError("rate table shorter than the ladder")
            return vals[:n_max].copy()
        if kind == "step":
            out = np.full(n_max, float(spec["low"]))
            out[sites >= float(spec["at"])] = float(spec["high"])
            return out
        raise SchemaError(f"unknown rate family {kind!r}")
    arr = np.asarray(spec, dtype=float)
    if arr.ndim == 0:
        return np.full(n_max, float(arr))
    if arr.size < n_max:
        raise SchemaError("rate array shorter than the ladder")
    return arr[:n_max].astype(float)


@dataclass(frozen=True)
class BDCParams:
    b: np.ndarray
    d: np.ndarray
    c: np.ndarray
    boundary: str = "kill-above"

    def __post_init__(self):
        n = len(self.b)
        for name in ("b", "d", "c"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,) or not np.isfinite(arr).all() or (arr < 0).any():
                raise ValueError(f"{name} must be {n} finite nonnegative rates")
            object.__setattr__(self, name, arr)
        if n < 1:
            raise ValueError("need at least one site")
        if (self.b[:-1] <= 0).any():
            raise ValueError("interior birth rates must be positive")
        if n > 1 and (self.d[1:] <= 0).any():
            raise ValueError("death rates above site 1 must be positive")
        if self.boundary not in ("kill-above", "reflect-above"):
            raise ValueError(f"unknown boundary policy {self.boundary!r}")

    @property
    def n_max(self):
        return len(self.b)

    @classmethod
    def from_json_dict(cls, d):
        n_max = int(d["n_max"])
        return cls(b=resolve_rate(d["b"], n_max), d=resolve_rate(d["d"], n_max),
                   c=resolve_rate(d["c"], n_max),
                   boundary=d.get("boundary", "kill-above"))


def build_bdc(params):
    """Tridiagonal-plus-kill sub-generator for a BDCParams ladder."""
    n = params.n_max
    rows, cols, vals = [], [], []
    kill = params.c.copy()
    kill[0] += params.d[0]
    for i in range(n):
        if i + 1 < n and params.b[i] > 0:
            rows.append(i)
            cols.append(i + 1)
            vals.append(params.b[i])
        if i > 0 and params.d[i] > 0:
            rows.append(i)
            cols.append(i - 1)
            vals.append(params.d[i])
    if params.boundary == "kill-above":
        kill[n - 1] += params.b[n - 1]
    from scipy.sparse import coo_matrix
    rates = coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return SubMarkovGenerator(rates, kill)


def golden_chain():
    """The 2-state ladder b1=1, d=(1,1), no catastrophes: its decay rate is
    (3 - sqrt 5)/2 and its eigenvectors are golden-ratio weighted."""
    return build_bdc(BDCParams(b=np.array([1.0, 0.0]), d=np.array([1.0, 1.0]),
                               c=np.zeros(2)))


def build_bdnu(b1, c1, b_bar, d_bar, c2, n_max=2 ** 14):
    """Malthusian ladder: site 1 keeps (b1, c1) with no down-move, sites
    n >= 2 carry linear rates (b_bar n, d_bar n) and a flat catastrophe c2.
    Requires c2 > b1 + c1 so that restarting from the bottom decays slower
    than the bulk is catastrophe-swept."""
    if not c2 > b1 + c1:
        raise ValueError("need c2 > b1 + c1")
    if b1 <= 0 or b_bar <= 0 or d_bar <= 0 or c1 < 0:
        raise ValueError("rates must be positive (c1 nonnegative)")
    sites = np.arange(1, n_max + 1, dtype=float)
    b = b_bar * sites
    d = d_bar * sites
    c = np.full(n_max, float(c2))
    b[0], d[0], c[0] = float(b1), 0.0, float(c1)
    return build_bdc(BDCParams(b=b, d=d, c=c))


def prefix_exhaustion(sizes, survival, coupling, mixing=None):
    """Exhaustion whose windows are the first `size` sites of the ladder."""
    from ..assumptions import Exhaustion
    sets = tuple(np.arange(int(s), dtype=np.int64) for s in sizes)
    return Exhaustion(sets=sets, survival=survival, coupling=coupling,
                      mixing=mixing)


def _ladder_rates(gen):
    """Recover (b_bar, d_bar) from the linear bulk of a Malthusian ladder."""
    q = gen.off
    if gen.n_states < 3:
        raise ValueError("ladder too short")
    b_bar = q[1, 2] / 2.0
    d_bar = q[1, 0] / 2.0
    return float(b_bar), float(d_bar)


def window_exit_probability(gen, n, t, tol=1e-12):
    """P_{2^n}(exit of (2^(n-1), 2^(n+1)) <= t) on the ladder, counting only
    boundary crossings; catastrophe absorption inside the window competes but
    is not counted as an exit."""
    lo, hi = 2 ** (n - 1), 2 ** (n + 1)
    if hi > gen.n_states:
        raise ValueError(f"window for n={n} exceeds the ladder")
    states = np.arange(lo, hi - 1, dtype=np.int64)  # sites lo+1 .. hi-1
    sub, idx = gen.restricted(states)
    leak = np.clip(sub.kill - gen.kill[idx], 0.0, None)
    probs = exit_probability_vector(sub, t, tol=tol, kill=leak)
    start = 2 ** n - 1 - lo  # position of site 2^n inside the window
    return float(probs[start])


def nonuniformity_experiment(gen, t, eps, height_grid=None, tol=1e-12,
                             stop_at_first=True, boundary_tol=1e-6):
    """Distance of high starting sites from the bottom start, plus the decay
    of fast window exits with height.

    Scans heights (largest first) for a site x with
    tv(delta_x A_t, delta_1 A_t) >= 1 - eps by exact conditioned evolution,
    flagging heights whose conditioned law leaves more than boundary_tol of
    mass on the top site (truncation-inadequate).  Separately measures
    P_{2^n}(T_n <= t_v), the probability of leaving the dyadic window around
    2^n within the drift time scale t_v, and compares it against the
    4(b+d)/(|b-d| v 1) 2^{-n} envelope.
    """
    n_states = gen.n_states
    b_bar, d_bar = _ladder_rates(gen)
    drift = abs(b_bar - d_bar)
    t_v = 1.0 / max(8.0 * drift, 1.0)
    bound_k = 4.0 * (b_bar + d_bar) / max(drift, 1.0)
    if height_grid is None:
        height_grid = [2 ** m for m in range(1, int(math.log2(n_states)))]
    heights = sorted(int(h) for h in height_grid if 1 <= h <= n_states)

    base = dcne(gen, point_mass(0, n_states), t, tol=tol)
    tv_rows = []
    witness = None
    warnings = []
    for h in reversed(heights):
        law = dcne(gen, point_mass(h - 1, n_states), t, tol=tol)
        tv = tv_distance(law, base)
        top_mass = float(law.w[-1])
        truncated = top_mass > boundary_tol
        if truncated:
            warnings.append(f"height {h}: top boundary holds {top_mass:.2e} "
                            "of conditioned mass; enlarge the ladder to trust "
                            "this row")
        tv_rows.append({"height": h, "tv": tv, "top_mass": top_mass,
                        "truncated": truncated})
        if witness is None and tv >= 1.0 - eps:
            witness = h
            if stop_at_first:
                break
    tv_rows.sort(key=lambda row: row["height"])

    tn_rows = []
    prev = None
    for h in heights:
        n = int(round(math.log2(h)))
        if 2 ** n != h or n < 1 or 2 ** (n + 1) > n_states:
            continue
        p = window_exit_probability(gen, n, t_v, tol=tol)
        bound = bound_k * 2.0 ** (-n)
        tn_rows.append({"n": n, "height": h, "p_exit": p, "bound": bound,
                        "within_bound": p <= bound,
                        "decreasing": prev is None or p <= prev})
        prev = p
    return {"t": float(t), "eps": float(eps), "t_v": t_v,
            "bound_constant": bound_k, "witness_height": witness,
            "tv_rows": tv_rows, "tn_rows": tn_rows, "warnings": warnings}
