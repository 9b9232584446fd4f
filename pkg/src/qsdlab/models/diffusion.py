"""Trait-and-population diffusion: simulation and escape-time estimators.

The model couples a trait x in R^d to a population size N > 0:

    dX = b(X, N) dt + sigma_X(X, N) dB^X
    dN = (r(X) - c N) N dt + sigma_N sqrt(N) dB^N

with an extra catastrophe clock at rate rho_c(X, N) sending N to 0.
Absorption is N = 0 (extinction).  The half-population coordinate
y = (sigma_N / 2) sqrt(N) turns the N-noise into additive noise, which keeps
explicit stepping stable at large populations; the escape-time estimators
run in (x, y) while the user-facing path simulator stays in (x, N).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import SchemaError
from ..rng import run_chunked, stream


def _const(value, width=None):
    """Constant field honoring the batch contract: x has shape (B, d), the
    result has shape (B,) for scalar fields and (B, width) for vector ones."""
    def f(x, n=None):
        lead = np.shape(x)[:-1]
        shape = lead if width is None else lead + (width,)
        return np.full(shape, float(value))
    return f


@dataclass
class DiffusionSpec:
    """Model functions; all callables take batched arrays (x: (B,d), n: (B,))
    and return batched arrays (scalars broadcast)."""

    r: object
    c: float
    sigma_N: float
    b: object
    sigma_X: object
    rho_c: object
    d: int = 1
    name: str = "custom"

    def __post_init__(self):
        if self.c < 0 or self.sigma_N <= 0 or self.d < 1:
            raise ValueError("need c >= 0, sigma_N > 0, d >= 1")

    def y_of_n(self, n):
        return 0.5 * self.sigma_N * np.sqrt(np.clip(n, 0.0, None))

    def n_of_y(self, y):
        return (2.0 * np.asarray(y) / self.sigma_N) ** 2

    def carrying_capacity(self, x=None):
        x = np.zeros((1, self.d)) if x is None else np.atleast_2d(x)
        top = float(np.max(self.r(x)))
        return top / self.c if self.c > 0 else math.inf


def quadratic_well_spec(r0=3.0, curvature=1.0, c=1.0, sigma_N=1.0,
                        sigma_X=0.4, pull=0.5, rho0=0.05, d=1):
    """Built-in spec: growth r(x) = r0 - curvature ||x||^2 (decays in the
    tails), mean-reverting trait drift -pull * x, flat trait noise, constant
    catastrophe rate."""

    def r(x):
        return r0 - curvature * np.sum(np.asarray(x) ** 2, axis=-1)

    def b(x, n):
        return -pull * np.asarray(x)

    def sx(x, n):
        return np.full(np.shape(x), float(sigma_X))

    def rho(x, n):
        return np.full(np.shape(n), float(rho0))

    return DiffusionSpec(r=r, c=c, sigma_N=sigma_N, b=b, sigma_X=sx,
                         rho_c=rho, d=d, name="quadratic-well")


def spec_from_json(d):
    """Built-ins by name, or a tabulated growth rate on a 1-d trait grid."""
    if "builtin" in d:
        if d["builtin"] != "quadratic-well":
            raise SchemaError(f"unknown builtin {d['builtin']!r}")
        keys = ("r0", "curvature", "c", "sigma_N", "sigma_X", "pull", "rho0", "d")
        kwargs = {k: d[k] for k in keys if k in d}
        return quadratic_well_spec(**kwargs)
    if "r_table" in d:
        grid = np.asarray(d["r_table"]["grid"], dtype=float)
        vals = np.asarray(d["r_table"]["values"], dtype=float)

        def r(x):
            return np.interp(np.asarray(x)[..., 0], grid, vals)

        return DiffusionSpec(
            r=r, c=float(d["c"]), sigma_N=float(d["sigma_N"]),
            b=_const(d.get("b", 0.0), width=1),
            sigma_X=_const(d.get("sigma_X", 0.0), width=1),
            rho_c=_const(d.get("rho_c", 0.0)), d=1, name="tabulated")
    raise SchemaError("diffusion config needs 'builtin' or 'r_table'")


@dataclass
class Trajectory:
    times: np.ndarray
    x: np.ndarray
    n: np.ndarray
    absorbed: bool
    extinction_time: float = math.nan
    cause: str = ""


_BOUND_REFRESH = 100


def _batch_steps(spec, x, n, dt, n_steps, rng, eps_abs, bridge=True,
                 on_step=None):
    """Vectorized Euler-Maruyama in (x, N) with full truncation at N <= 0,
    absorption below eps_abs (with a Brownian-bridge barrier test so the
    crossing probability is first-order accurate in dt), and catastrophes by
    thinning against a local bound refreshed every 100 steps.

    Draw order per step is fixed and independent of which paths are alive,
    so results depend only on (rng stream, shapes).  on_step(k, x, n, alive)
    may mark paths finished by returning a boolean mask.
    """
    B = n.shape[0]
    alive = n > eps_abs
    t_end = np.full(B, math.nan)
    cause = np.zeros(B, dtype=np.int8)  # 1 extinct, 2 catastrophe, 3 stopped
    sqdt = math.sqrt(dt)
    rho_bound = 0.0
    for k in range(n_steps):
        zn = rng.standard_normal(B)
        zx = rng.standard_normal((B, spec.d))
        ub = rng.random(B)
        if k % _BOUND_REFRESH == 0:
            rho_now = np.asarray(spec.rho_c(x, n), dtype=float)
            rho_bound = 1.2 * float(rho_now.max(initial=0.0)) if alive.any() else 0.0
        if rho_bound > 0.0:
            uc = rng.random(B)
            ua = rng.random(B)
        growth = np.asarray(spec.r(x), dtype=float)
        drift_n = (growth - spec.c * n) * n
        n_new = n + drift_n * dt + spec.sigma_N * np.sqrt(np.clip(n, 0.0, None) * dt) * zn
        x_new = x + np.asarray(spec.b(x, n), dtype=float) * dt \
            + np.asarray(spec.sigma_X(x, n), dtype=float) * sqdt * zx
        if not (np.isfinite(n_new[alive]).all() and np.isfinite(x_new[alive]).all()):
            raise FloatingPointError("nonfinite drift/diffusion evaluation")
        died = alive & (n_new <= eps_abs)
        if bridge:
            var = spec.sigma_N ** 2 * np.clip(n, eps_abs, None) * dt
            expo = -2.0 * np.clip(n - eps_abs, 0.0, None) \
                * np.clip(n_new - eps_abs, 0.0, None) / var
            crossed = alive & ~died & (ub < np.exp(expo))
            died |= crossed
        if rho_bound > 0.0:
            rho_now = np.asarray(spec.rho_c(x, n), dtype=float)
            cat = alive & ~died & (uc < rho_bound * dt) \
                & (ua * rho_bound < rho_now)
        else:
            cat = np.zeros(B, dtype=bool)
        t_now = (k + 1) * dt
        t_end[died & (cause == 0)] = t_now
        cause[died & (cause == 0)] = 1
        t_end[cat & (cause == 0)] = t_now
        cause[cat & (cause == 0)] = 2
        step_alive = alive & ~died & ~cat
        n = np.where(step_alive, np.clip(n_new, 0.0, None), n)
        x = np.where(step_alive[:, None], x_new, x)
        alive = step_alive
        if on_step is not None:
            stopped = on_step(k + 1, x, n, alive)
            if stopped is not None:
                hit = alive & stopped
                t_end[hit] = t_now
                cause[hit] = 3
                alive = alive & ~stopped
        if not alive.any():
            break
    return x, n, alive, t_end, cause


def simulate_diffusion(spec, init, dt, t_max, rng, eps_abs=None, record=True):
    """One path of (X, N) sampled every dt; returns a Trajectory with the
    absorption flag, time, and cause ('extinct' or 'catastrophe')."""
    if dt <= 0:
        raise ValueError("need dt > 0")
    x0, n0 = init
    x = np.atleast_2d(np.asarray(x0, dtype=float)).reshape(1, spec.d)
    n = np.asarray([float(n0)])
    if n[0] <= 0:
        raise ValueError("need a positive initial population")
    if eps_abs is None:
        eps_abs = 1e-6 * max(spec.carrying_capacity(), 1.0)
    if isinstance(rng, (int, np.integer)):
        rng = stream(int(rng))
    n_steps = int(math.ceil(t_max / dt))
    xs = [x[0].copy()]
    ns = [n[0]]

    def recorder(k, xk, nk, alive):
        if record:
            xs.append(xk[0].copy())
            ns.append(nk[0])
        return None

    x, n, alive, t_end, cause = _batch_steps(
        spec, x, n, dt, n_steps, rng, eps_abs, on_step=recorder)
    absorbed = bool(cause[0] in (1, 2))
    names = {0: "", 1: "extinct", 2: "catastrophe"}
    times = np.arange(len(ns)) * dt if record else np.array([n_steps * dt])
    return Trajectory(times=times, x=np.asarray(xs), n=np.asarray(ns),
                      absorbed=absorbed,
                      extinction_time=float(t_end[0]) if absorbed else math.nan,
                      cause=names[int(cause[0])])


def feller_extinction_mc(z0, r_plus, sigma, t, n_paths, seed, dt=5e-4,
                         eps_abs=1e-6, n_workers=1, chunk_size=4096):
    """Extinction probability by time t of dN = r_plus N dt + sigma sqrt(N) dB
    via the path engine; chunked counter-based streams keep the count
    bitwise identical for any worker count."""
    spec = DiffusionSpec(r=_const(r_plus), c=0.0, sigma_N=sigma,
                         b=_const(0.0, width=1), sigma_X=_const(0.0, width=1),
                         rho_c=_const(0.0), d=1, name="feller")
    n_steps = int(math.ceil(t / dt))

    def task(lo, hi, idx):
        rng = stream(seed, idx)
        x = np.zeros((hi - lo, 1))
        n = np.full(hi - lo, float(z0))
        _, _, alive, _, cause = _batch_steps(spec, x, n, dt, n_steps, rng,
                                             eps_abs)
        return int(np.count_nonzero(cause == 1))

    counts = run_chunked(task, n_paths, chunk_size, n_workers=n_workers)
    p = sum(counts) / n_paths
    se = math.sqrt(max(p * (1.0 - p), 1e-300) / n_paths)
    return p, se


def csbp_laplace(r_plus, sigma, t, lam, rtol=1e-11):
    """u(t, lambda) for du/dt = r_plus u - (sigma^2/2) u^2, u(0) = lambda.

    Integrated in the reciprocal w = 1/u, which turns the Riccati equation
    into the non-stiff linear ODE dw/dt = sigma^2/2 - r_plus w; this keeps
    arbitrarily large lambda (the extinction limit) well conditioned."""
    if sigma <= 0 or t < 0 or lam < 0:
        raise ValueError("need sigma > 0, t >= 0, lambda >= 0")
    if t == 0 or lam == 0:
        return float(lam)
    from scipy.integrate import solve_ivp

    def rhs(_, w):
        return 0.5 * sigma ** 2 - r_plus * w

    sol = solve_ivp(rhs, (0.0, t), [1.0 / float(lam)], method="RK45",
                    rtol=rtol, atol=1e-300)
    if not sol.success:
        raise RuntimeError(f"Laplace-exponent ODE failed: {sol.message}")
    w = float(sol.y[0, -1])
    if w <= 0:
        raise RuntimeError("reciprocal Laplace exponent lost positivity")
    return 1.0 / w


def csbp_u_infinity(r_plus, sigma, t, lam_hi=1e8):
    """lim_lambda u(t, lambda): 1/u is exactly affine in 1/lambda, so one
    Richardson step on the reciprocal at lambda and lambda/10 removes the
    finite-lambda term."""
    u_hi = csbp_laplace(r_plus, sigma, t, lam_hi)
    u_lo = csbp_laplace(r_plus, sigma, t, lam_hi / 10.0)
    w0 = (10.0 / u_hi - 1.0 / u_lo) / 9.0
    if w0 <= 0:
        raise RuntimeError("Richardson step lost positivity; raise lam_hi")
    return 1.0 / w0


def csbp_extinction(z0, r_plus, sigma, t):
    """P(extinct by t) = exp(-z0 * u_infinity(t))."""
    if z0 < 0:
        raise ValueError("need z0 >= 0")
    return math.exp(-z0 * csbp_u_infinity(r_plus, sigma, t))


# --- half-population coordinate engine --------------------------------------

def _psi_d(y, r_d, c_y):
    return -0.5 / y + 0.5 * r_d * y - c_y * y ** 3


def descent_thresholds(r_d, c_y, t_d):
    """(y_V, y_inf): the level below which the descent drift is strictly
    negative, and the descent-from-infinity threshold for horizon t_d."""
    # largest root of psi via its quadratic in y^2 (none when drift is
    # negative everywhere)
    disc = 0.25 * r_d * r_d - 2.0 * c_y
    if r_d > 0 and disc >= 0:
        y_v = math.sqrt((0.5 * r_d + math.sqrt(disc)) / (2.0 * c_y))
    else:
        y_v = math.sqrt(max(r_d, 0.0) / (2.0 * c_y)) if r_d > 0 else 0.0
    y_inf = max(math.sqrt(8.0 / (c_y * t_d)) + 2.0 * y_v, 4.0 * y_v, 1.0)
    return y_v, y_inf


def _y_paths(y0, r_d, c_y, dt, n_steps, rng, stop_low, y_floor=0.02):
    """Euler paths of dY = psi_D(Y) dt + dB, absorbed at Y <= stop_low;
    returns the fraction never absorbed (still above) and the survivor mask."""
    y = np.full(y0[1], float(y0[0])) if isinstance(y0, tuple) else np.asarray(y0, float)
    above = np.ones(y.shape[0], dtype=bool)
    sqdt = math.sqrt(dt)
    for _ in range(n_steps):
        z = rng.standard_normal(y.shape[0])
        yy = np.clip(y, max(stop_low * 0.5, y_floor), None)
        y_new = y + _psi_d(yy, r_d, c_y) * dt + sqdt * z
        y = np.where(above, y_new, y)
        above &= y > stop_low
    return above


def ydp_descent_check(r_d, c_y, t_d, y_grid, n_paths, seed, dt=1e-4):
    """Failure probability of descending below y_inf within t_d, per start.

    Rows report P_y(t_d < time-to-descend); the table should be monotone in
    y and plateau (uniform in the start), with every entry comfortably below
    one half.  Starts already below y_inf report zero.
    """
    y_v, y_inf = descent_thresholds(r_d, c_y, t_d)
    n_steps = int(math.ceil(t_d / dt))
    rows = []
    for i, y0 in enumerate(sorted(float(v) for v in y_grid)):
        if y0 <= y_inf:
            rows.append({"y0": y0, "p_fail": 0.0, "stderr": 0.0,
                         "started_below": True})
            continue
        rng = stream(seed, i)
        above = _y_paths((y0, n_paths), r_d, c_y, dt, n_steps, rng, y_inf)
        p = float(np.count_nonzero(above)) / n_paths
        rows.append({"y0": y0, "p_fail": p,
                     "stderr": math.sqrt(max(p * (1 - p), 1e-300) / n_paths),
                     "started_below": False})
    return {"y_v": y_v, "y_inf": y_inf, "t_d": t_d, "rows": rows}


def ydp_rd_sweep(r_d_grid, c_y, t_d, y0, n_paths, seed, dt=1e-4,
                 y_extinct=0.02):
    """P_{y0}(t_d < extinction of Y^D) along an r_d grid; the stronger the
    downward drift, the closer to zero."""
    n_steps = int(math.ceil(t_d / dt))
    rows = []
    for i, r_d in enumerate(r_d_grid):
        rng = stream(seed, 10_000 + i)
        above = _y_paths((float(y0), n_paths), float(r_d), c_y, dt, n_steps,
                         rng, y_extinct)
        p = float(np.count_nonzero(above)) / n_paths
        rows.append({"r_d": float(r_d), "p_alive": p,
                     "stderr": math.sqrt(max(p * (1 - p), 1e-300) / n_paths)})
    return rows


# --- transitory decomposition and escape moments ----------------------------

@dataclass(frozen=True)
class TransitoryDecomposition:
    """Partition of (x, y) outside the coupling box Delta_c:
    T^Y_inf above y_inf, T_0 below y_lo, T^X_inf beyond trait radius n_c at
    moderate y; Delta_c is the remaining compact box."""

    y_inf: float
    n_c: float
    y_lo: float

    REGIONS = ("Dc", "T0", "TYinf", "TXinf")

    def __post_init__(self):
        if not (self.n_c > self.y_inf > self.y_lo > 0):
            raise ValueError("need n_c > y_inf > y_lo > 0")

    def classify(self, x, y):
        """Region codes: 0 Delta_c, 1 T_0, 2 T^Y_inf, 3 T^X_inf."""
        x = np.atleast_2d(x)
        y = np.asarray(y)
        radius = np.sqrt(np.sum(x ** 2, axis=-1))
        code = np.zeros(y.shape, dtype=np.int8)
        code[y < self.y_lo] = 1
        code[y > self.y_inf] = 2
        mid = (code == 0)
        code[mid & (radius > self.n_c)] = 3
        return code

    def start_grid(self, region, spec):
        """Deterministic starts just inside the named region."""
        y_mid = 0.5 * (self.y_lo + self.y_inf)
        if region == "T0":
            ys = [0.8 * self.y_lo, 0.5 * self.y_lo]
            xs = [0.0, 0.5 * self.n_c]
        elif region == "TYinf":
            ys = [1.05 * self.y_inf, 2.0 * self.y_inf, 4.0 * self.y_inf]
            xs = [0.0, 0.5 * self.n_c]
        elif region == "TXinf":
            ys = [y_mid, 0.9 * self.y_inf]
            xs = [1.05 * self.n_c, 1.5 * self.n_c, 2.5 * self.n_c]
        else:
            raise ValueError(f"no start grid for region {region!r}")
        starts = []
        for yv in ys:
            for xv in xs:
                x = np.zeros(spec.d)
                x[0] = xv
                starts.append((x, float(yv)))
        return starts


def _xy_escape_batch(spec, decomp, x0, y0, rho, dt, t_cap, rng, n_paths,
                     home_code):
    """Paths in (x, y) from one start until Delta_c, extinction, first region
    change, or the cap.  Returns per-path exp(rho V), the first-exit values
    exp(rho tau) with landing codes, and the capped mask."""
    d = spec.d
    x = np.tile(np.asarray(x0, dtype=float), (n_paths, 1))
    y = np.full(n_paths, float(y0))
    n_steps = int(math.ceil(t_cap / dt))
    sqdt = math.sqrt(dt)
    noise_y = 0.25 * spec.sigma_N ** 2
    y_abs = max(1e-3, float(spec.y_of_n(1e-6 * max(spec.carrying_capacity(), 1.0))))
    v_time = np.full(n_paths, math.nan)
    tau_time = np.full(n_paths, math.nan)
    land = np.full(n_paths, -1, dtype=np.int8)
    running = np.ones(n_paths, dtype=bool)
    rho_bound = 0.0
    for k in range(n_steps):
        zy = rng.standard_normal(n_paths)
        zx = rng.standard_normal((n_paths, d))
        if k % _BOUND_REFRESH == 0:
            n_now = spec.n_of_y(np.clip(y, y_abs, None))
            rho_bound = 1.2 * float(np.asarray(spec.rho_c(x, n_now)).max(initial=0.0))
        if rho_bound > 0.0:
            uc = rng.random(n_paths)
            ua = rng.random(n_paths)
        n_now = spec.n_of_y(np.clip(y, y_abs, None))
        growth = np.asarray(spec.r(x), dtype=float)
        yy = np.clip(y, 0.5 * y_abs, None)
        drift_y = 0.5 * yy * (growth - spec.c * spec.n_of_y(yy)) \
            - spec.sigma_N ** 4 / (32.0 * yy)
        y_new = y + drift_y * dt + noise_y * sqdt * zy
        x_new = x + np.asarray(spec.b(x, n_now), dtype=float) * dt \
            + np.asarray(spec.sigma_X(x, n_now), dtype=float) * sqdt * zx
        t_now = (k + 1) * dt
        dead = running & (y_new <= y_abs)
        if rho_bound > 0.0:
            rho_now = np.asarray(spec.rho_c(x, n_now), dtype=float)
            dead |= running & (uc < rho_bound * dt) & (ua * rho_bound < rho_now)
        y = np.where(running, np.clip(y_new, 0.0, None), y)
        x = np.where(running[:, None], x_new, x)
        code = decomp.classify(x, y)
        code[dead] = 1  # extinction exits through the bottom region
        moved = running & (dead | (code != home_code))
        first = moved & np.isnan(tau_time)
        tau_time[first] = t_now
        land[first] = np.where(dead[first], 1, code[first])
        settled = moved & (dead | (code == 0))
        v_first = settled & np.isnan(v_time)
        v_time[v_first] = t_now
        running = running & ~settled
        if not running.any():
            break
    capped = running
    v_time[capped] = t_cap
    tau_capped = np.isnan(tau_time)
    tau_time[tau_capped] = t_cap
    land[tau_capped & capped] = home_code
    v_vals = np.exp(rho * v_time)
    tau_vals = np.exp(rho * tau_time)
    return v_vals, tau_vals, land, capped


def escape_moment_mc(spec, decomp, rho, region, n_paths, seed, dt=2e-3,
                     t_cap=30.0):
    """Exponential moment of the time to reach Delta_c or die, from starts
    just inside one transitory region; reports the max over the start grid
    with normal-theory confidence bounds and the capped-path fraction
    (capped paths enter at the cap value and flag a possibly infinite
    moment)."""
    if region == "Dc":
        return {"region": region, "estimate": 1.0, "ci_half": 0.0,
                "capped_fraction": 0.0, "per_start": []}
    home = TransitoryDecomposition.REGIONS.index(region)
    per_start = []
    for i, (x0, y0) in enumerate(decomp.start_grid(region, spec)):
        rng = stream(seed, i)
        v_vals, _, _, capped = _xy_escape_batch(
            spec, decomp, x0, y0, rho, dt, t_cap, rng, n_paths, home)
        m = float(v_vals.mean())
        se = float(v_vals.std(ddof=1) / math.sqrt(n_paths))
        per_start.append({"x0": float(np.asarray(x0)[0]), "y0": y0,
                          "estimate": m, "stderr": se,
                          "capped_fraction": float(capped.mean())})
    worst = max(per_start, key=lambda r: r["estimate"])
    return {"region": region, "estimate": worst["estimate"],
            "ci_half": 1.96 * worst["stderr"],
            "capped_fraction": max(r["capped_fraction"] for r in per_start),
            "per_start": per_start}


def estimate_linked_constants(spec, decomp, rho, n_paths, seed, dt=2e-3,
                              t_cap=30.0):
    """MC estimates of the per-region moments E and the first-exit constants
    (C, eps) feeding the linked inequalities

        E_Y <= C_Y (1 + E_X)
        E_X <= C_X (1 + E_0) + eps_X E_Y
        E_0 <= C_0 + eps_0 (E_Y + E_X)

    eps_X weights T^X first exits landing in T^Y; eps_0 weights T_0 first
    exits landing in either unbounded region.  All values are statistical
    estimates (maxima over start grids) with standard errors.
    """
    def mean_se(vals):
        return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals)))

    out = {}
    for gi, region in enumerate(("TYinf", "TXinf", "T0")):
        home = TransitoryDecomposition.REGIONS.index(region)
        acc = {"E": (0.0, 0.0), "C": (0.0, 0.0), "eps": (0.0, 0.0)}
        capped_frac = 0.0
        for i, (x0, y0) in enumerate(decomp.start_grid(region, spec)):
            rng = stream(seed, 1000 * (gi + 1) + i)
            v_vals, tau_vals, land, capped = _xy_escape_batch(
                spec, decomp, x0, y0, rho, dt, t_cap, rng, n_paths, home)
            if region == "TXinf":
                mark = (land == 2).astype(float)
            elif region == "T0":
                mark = ((land == 2) | (land == 3)).astype(float)
            else:
                mark = np.zeros(n_paths)
            for key, vals in (("E", v_vals), ("C", tau_vals),
                              ("eps", tau_vals * mark)):
                m, se = mean_se(vals)
                if m > acc[key][0]:
                    acc[key] = (m, se)
            capped_frac = max(capped_frac, float(capped.mean()))
        out[region] = {"E": acc["E"][0], "E_se": acc["E"][1],
                       "C": acc["C"][0], "C_se": acc["C"][1],
                       "eps": acc["eps"][0], "eps_se": acc["eps"][1],
                       "capped_fraction": capped_frac}
    return {"rho": rho, "TYinf": out["TYinf"], "TXinf": out["TXinf"],
            "T0": out["T0"], "statistical": True}


def combine_escape_bounds(c_y, c_x, c_0, eps_x, eps_0):
    """Solve the linked inequalities at equality for upper bounds on the
    three moments and evaluate the product form of the global bound.

    thresholds_ok reflects eps_X <= 1/(2 C_Y) and eps_0 <= 1/(8 C_Y C_X),
    under which the solved bounds obey E_0 <= 4 C_0, E_X <= 11 C_X C_0 and
    e_T = max(E) <= 12 C_Y C_X C_0 whenever the constants are >= 1.
    """
    m = np.array([[0.0, c_y, 0.0],
                  [eps_x, 0.0, c_x],
                  [eps_0, eps_0, 0.0]])
    rhs = np.array([c_y, c_x, c_0])
    eigvals = np.linalg.eigvals(m)
    spectral_ok = bool(np.max(np.abs(eigvals)) < 1.0)
    if spectral_ok:
        e_y, e_x, e_0 = np.linalg.solve(np.eye(3) - m, rhs)
    else:
        e_y = e_x = e_0 = math.inf
    thresholds_ok = eps_x <= 1.0 / (2.0 * c_y) and \
        eps_0 <= 1.0 / (8.0 * c_y * c_x)
    product = 12.0 * c_y * c_x * c_0
    return {"E_y": float(e_y), "E_x": float(e_x), "E_0": float(e_0),
            "spectral_ok": spectral_ok, "thresholds_ok": thresholds_ok,
            "product_bound": product,
            "bound_holds": spectral_ok and max(e_y, e_x, e_0) <= product}


def discretize_diffusion(spec, x_range, n_range, nx, nn):
    """Upwind finite-volume sub-generator of the 1-trait model on a compact
    window; mass crossing the window edge is killed (honest truncation), and
    the catastrophe rate enters the kill vector directly."""
    if spec.d != 1:
        raise ValueError("grid discretization implemented for d = 1")
    xs = np.linspace(x_range[0], x_range[1], nx)
    ns = np.linspace(n_range[0], n_range[1], nn)
    if n_range[0] <= 0:
        raise ValueError("population window must stay positive")
    hx = xs[1] - xs[0] if nx > 1 else 1.0
    hn = ns[1] - ns[0] if nn > 1 else 1.0
    xg, ng = np.meshgrid(xs, ns, indexing="ij")
    pts_x = xg.reshape(-1, 1)
    pts_n = ng.reshape(-1)
    growth = np.asarray(spec.r(pts_x), dtype=float)
    drift_n = (growth - spec.c * pts_n) * pts_n
    drift_x = np.asarray(spec.b(pts_x, pts_n), dtype=float)[:, 0]
    diff_x = 0.5 * np.asarray(spec.sigma_X(pts_x, pts_n), dtype=float)[:, 0] ** 2
    diff_n = 0.5 * spec.sigma_N ** 2 * pts_n
    kill = np.asarray(spec.rho_c(pts_x, pts_n), dtype=float).copy()

    def flat(i, j):
        return i * nn + j

    rows, cols, vals = [], [], []
    for i in range(nx):
        for j in range(nn):
            s = flat(i, j)
            rate_xp = diff_x[s] / hx ** 2 + max(drift_x[s], 0.0) / hx
            rate_xm = diff_x[s] / hx ** 2 + max(-drift_x[s], 0.0) / hx
            rate_np = diff_n[s] / hn ** 2 + max(drift_n[s], 0.0) / hn
            rate_nm = diff_n[s] / hn ** 2 + max(-drift_n[s], 0.0) / hn
            for rate, ii, jj in ((rate_xp, i + 1, j), (rate_xm, i - 1, j),
                                 (rate_np, i, j + 1), (rate_nm, i, j - 1)):
                if rate <= 0.0:
                    continue
                if 0 <= ii < nx and 0 <= jj < nn:
                    rows.append(s)
                    cols.append(flat(ii, jj))
                    vals.append(rate)
                else:
                    kill[s] += rate
    from scipy.sparse import coo_matrix
    from ..generator import SubMarkovGenerator
    rates = coo_matrix((vals, (rows, cols)),
                       shape=(nx * nn, nx * nn)).tocsr()
    return SubMarkovGenerator(rates, kill), (xs, ns)
