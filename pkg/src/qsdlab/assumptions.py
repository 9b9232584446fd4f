"""Checkable sufficient conditions with replayable numeric certificates.

Each check_* routine certifies one structural inequality for an absorbed
chain over a nested family of state windows (an Exhaustion):

  mix  -- windowed regeneration: killed-window rows at a fixed time dominate
          a common reference law with weight c,
  dc   -- survival-ratio ceiling over a coupling window,
  et   -- finite exponential moment of the escape time from the complement
          of the coupling window, via an M-matrix linear solve,
  sv   -- exponential survival floor on the core window,
  lj   -- jump-containment note for finite truncations (holds by build).

Checks return AssumptionCertificate records carrying the derived constants,
the inputs needed to rerun them (params), and supporting arrays (witness);
replay_certificate reruns a record against a generator and compares.
derive_coupling_constants turns a consistent bundle of certificates into the
CouplingConstants consumed by the coupling engine.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .coupling import CouplingConstants
from .errors import (DominationViolatedError, EmptyDomainError,
                     NoConvergenceError, SingularSystemError)
from .generator import (_PLAIN_LIMIT, _series_plain, _series_scaled, as_weights,
                        dcne)
from .spectral import default_t_grid, solve_eigentriple

_REL = 1e-9


@dataclass(frozen=True)
class Exhaustion:
    """Nested state windows D_0 < D_1 < ... with named roles.

    sets holds sorted global index arrays under strict inclusion; survival,
    coupling and mixing are indices of the core window D_s, the coupling
    window D_c and the default enclosure used by the survival check.
    """

    sets: tuple
    survival: int
    coupling: int
    mixing: int = None

    def __post_init__(self):
        sets = tuple(np.unique(np.asarray(s, dtype=np.int64)) for s in self.sets)
        if not sets:
            raise ValueError("need at least one window")
        for a, b in zip(sets, sets[1:]):
            if len(a) >= len(b) or not np.isin(a, b).all():
                raise ValueError("windows must strictly increase by inclusion")
        object.__setattr__(self, "sets", sets)
        k = len(sets)
        if not (0 <= self.survival <= self.coupling < k):
            raise ValueError("need 0 <= survival <= coupling < n_sets")
        if self.mixing is not None and not (self.survival <= self.mixing < k):
            raise ValueError("mixing index out of range")

    @property
    def n_sets(self):
        return len(self.sets)

    def set(self, i):
        return self.sets[i]

    def mask(self, i, n_states):
        m = np.zeros(n_states, dtype=bool)
        m[self.sets[i]] = True
        return m

    def masks(self, n_states):
        out = np.zeros((self.n_sets, n_states), dtype=bool)
        for i, s in enumerate(self.sets):
            out[i, s] = True
        return out

    def positions_in(self, inner, outer):
        """Positions of sets[inner] inside sets[outer]; both are sorted."""
        pos = np.searchsorted(self.sets[outer], self.sets[inner])
        if not np.array_equal(self.sets[outer][pos], self.sets[inner]):
            raise ValueError("inner window is not contained in outer window")
        return pos

    def to_json_dict(self):
        return {
            "sets": [[int(i) for i in s] for s in self.sets],
            "survival": int(self.survival),
            "coupling": int(self.coupling),
            "mixing": None if self.mixing is None else int(self.mixing),
        }

    @classmethod
    def from_json_dict(cls, d):
        return cls(sets=tuple(np.asarray(s, dtype=np.int64) for s in d["sets"]),
                   survival=int(d["survival"]), coupling=int(d["coupling"]),
                   mixing=None if d.get("mixing") is None else int(d["mixing"]))


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return [float(v) for v in np.asarray(obj, dtype=float).ravel()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    return obj


@dataclass
class AssumptionCertificate:
    """Outcome of one check: constants plus everything needed to rerun it."""

    name: str
    holds: bool
    constants: dict
    params: dict
    witness: dict = field(default_factory=dict)
    notes: str = ""

    def to_json_dict(self):
        return {"name": self.name, "holds": bool(self.holds),
                "constants": _jsonify(self.constants),
                "params": _jsonify(self.params),
                "witness": _jsonify(self.witness),
                "notes": self.notes}

    @classmethod
    def from_json_dict(cls, d):
        return cls(name=str(d["name"]), holds=bool(d["holds"]),
                   constants=dict(d["constants"]), params=dict(d["params"]),
                   witness=dict(d.get("witness", {})),
                   notes=str(d.get("notes", "")))


def _killed_rows(sub, rows_local, t, tol):
    """Rows (one per start state) of the killed-window kernel at time t."""
    kt = sub.kernel_t()
    v = np.zeros((sub.n_states, len(rows_local)))
    v[rows_local, np.arange(len(rows_local))] = 1.0
    mu_ = sub.uniformization_rate * t
    if mu_ <= _PLAIN_LIMIT:
        out = _series_plain(lambda m: kt @ m, v, mu_, tol)
    else:
        vec, log_scale = _series_scaled(lambda m: kt @ m, v, mu_, tol)
        out = vec * math.exp(log_scale)
    return np.clip(out.T, 0.0, None)


def check_mix(gen, exh, n, t, alpha_c="auto", tol=1e-12):
    """Windowed regeneration: rows from D_n, killed on leaving D_m, must
    dominate c * alpha_c at time t for some enclosure D_m >= D_n.

    With alpha_c="auto" the reference law is the normalized entrywise row
    minimum and c its overlap mass (largest constant for that enclosure);
    every enclosure m in n..n_sets-1 is scanned and the best kept.
    """
    if t <= 0:
        raise ValueError("need t > 0")
    d_n = exh.set(n)
    best = None
    per_m = []
    for m in range(n, exh.n_sets):
        d_m = exh.set(m)
        sub, idx = gen.restricted(d_m)
        rows_local = exh.positions_in(n, m)
        rows = _killed_rows(sub, rows_local, t, tol)
        if isinstance(alpha_c, str) and alpha_c == "auto":
            v = rows.min(axis=0)
            c = float(v.sum())
            ref = np.zeros(gen.n_states)
            if c > 0:
                ref[idx] = v / c
        else:
            ref = np.clip(as_weights(alpha_c, gen.n_states), 0.0, None)
            ref = ref / ref.sum()
            outside = ref.sum() - ref[idx].sum()
            if outside > 1e-12:
                c = 0.0
            else:
                a_sub = ref[idx]
                support = a_sub > 0
                with np.errstate(divide="ignore", invalid="ignore"):
                    ratios = rows[:, support] / a_sub[support]
                c = float(ratios.min()) if support.any() else 0.0
        per_m.append((m, c))
        if best is None or c > best[1]:
            best = (m, c, ref)
    m_best, c_best, ref_best = best
    mode = "auto" if isinstance(alpha_c, str) else "given"
    return AssumptionCertificate(
        name="mix", holds=c_best > 0,
        constants={"c": c_best, "t": float(t), "n": int(n), "m": int(m_best)},
        params={"n": int(n), "t": float(t), "alpha_c_mode": mode, "tol": tol},
        witness={"alpha_c": ref_best, "per_m": per_m},
        notes="rows of the killed-window kernel dominate c * alpha_c")


def mix_extension(cert, exh, k):
    """Weight at time k*t from chaining the one-step regeneration:
    each extra cycle restarts from the alpha_c mass sitting on the row
    window, giving c(k t) >= c * (c * alpha_c(D_n))^(k-1)."""
    if k < 1:
        raise ValueError("need k >= 1")
    c = cert.constants["c"]
    alpha = np.asarray(cert.witness["alpha_c"], dtype=float)
    m_rows = float(alpha[exh.set(int(cert.constants["n"]))].sum())
    return c * (c * m_rows) ** (k - 1)


def check_dc(gen, exh, alpha_c, t_floor, t_grid=None, eigen=None, tol=1e-12,
             safety=1.05):
    """Survival-ratio ceiling on the coupling window:
    P_x(t < death) <= c * P_{alpha_c}(t < death) for x in D_c, t >= t_floor.

    The ratio is scanned over a geometric grid and closed with the exact
    large-time limit from the survival capacity; a safety factor pads the
    maximum against off-grid wiggle.
    """
    if t_floor <= 0:
        raise ValueError("need t_floor > 0")
    alpha = np.clip(as_weights(alpha_c, gen.n_states), 0.0, None)
    alpha = alpha / alpha.sum()
    d_c = exh.set(exh.coupling)
    if t_grid is None:
        t_grid = default_t_grid(t_floor, 100.0 * t_floor)
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    t_grid = t_grid[t_grid >= t_floor * (1 - 1e-12)]
    if t_grid.size == 0:
        raise ValueError("grid has no points at or beyond t_floor")
    from .generator import _right_op, _series_scaled as _scaled
    op = _right_op(gen)
    rate = gen.uniformization_rate
    vec = np.ones(gen.n_states)
    prev_t = 0.0
    grid_ratios = np.empty(t_grid.size)
    for i, t in enumerate(t_grid):
        vec, _ = _scaled(op, vec, rate * (t - prev_t), tol)
        vec = np.clip(vec, 0.0, None)
        prev_t = t
        denom = float(np.dot(alpha, vec))
        grid_ratios[i] = float(vec[d_c].max()) / denom
    if eigen is None:
        eigen = solve_eigentriple(gen, tol=tol)
    asym = float(eigen.eta[d_c].max()) / float(np.dot(alpha, eigen.eta))
    c = safety * max(float(grid_ratios.max()), asym)
    return AssumptionCertificate(
        name="dc", holds=math.isfinite(c) and c > 0,
        constants={"c": c, "t_floor": float(t_floor),
                   "grid_max": float(grid_ratios.max()), "asymptotic": asym},
        params={"t_floor": float(t_floor), "t_grid": t_grid,
                "alpha_c": alpha, "safety": safety, "tol": tol},
        witness={"grid_ratios": grid_ratios},
        notes="survival-ratio ceiling over the coupling window")


def _transitory_block(gen, exh):
    d_c = exh.set(exh.coupling)
    outside = np.setdiff1d(np.arange(gen.n_states), d_c)
    if outside.size == 0:
        raise EmptyDomainError("coupling window already covers every state")
    sub, idx = gen.restricted(outside)
    return sub, idx


def check_et(gen, exh, rho, tol=1e-12):
    """Exponential moment of the entry time into the coupling window.

    Solves (Q_TT + rho I) g = -rho 1 on the complement T; a nonnegative
    solution certifies sup_x E_x[exp(rho * (entry ^ death))] <= 1 + max g,
    and a sign failure certifies rho at or beyond the admissible ceiling.
    """
    if rho <= 0:
        raise ValueError("need rho > 0")
    if exh.set(exh.coupling).size == gen.n_states:
        return AssumptionCertificate(
            name="et", holds=True,
            constants={"rho": float(rho), "e_T": 1.0},
            params={"rho": float(rho), "tol": tol},
            witness={"g": np.zeros(0), "block_states": np.zeros(0, dtype=np.int64),
                     "residual": 0.0},
            notes="coupling window covers every state; the entry time vanishes")
    sub, idx = _transitory_block(gen, exh)
    a = sub.dense_q()
    np.fill_diagonal(a, a.diagonal() + rho)
    rhs = np.full(sub.n_states, -rho)
    try:
        g = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"escape system singular at rho={rho!r}") from exc
    resid = float(np.abs(a @ g - rhs).max())
    scale = float(np.abs(a).sum(axis=1).max() * max(1.0, np.abs(g).max()) + rho)
    if not np.isfinite(g).all() or resid > 1e-7 * scale:
        raise SingularSystemError(
            f"escape system unstable at rho={rho!r} (residual {resid:.3e})")
    floor = -1e-9 * max(1.0, float(np.abs(g).max()))
    holds = bool(g.min() >= floor)
    e_t = 1.0 + float(max(g.max(), 0.0)) if holds else math.inf
    return AssumptionCertificate(
        name="et", holds=holds,
        constants={"rho": float(rho), "e_T": e_t},
        params={"rho": float(rho), "tol": tol},
        witness={"g": g, "block_states": idx, "residual": resid},
        notes="moment bound from an M-matrix solve on the window complement")


def max_escape_rate(gen, exh, iterations=40):
    """Largest certified-admissible rho for check_et, by bisection.

    The admissible set is an interval (0, rho*) with rho* at most twice the
    largest exit rate on the complement; 0.99 of the bisected edge is
    returned so downstream solves stay well-conditioned.
    """
    if exh.set(exh.coupling).size == gen.n_states:
        return gen.uniformization_rate + 1.0
    sub, _ = _transitory_block(gen, exh)
    ceiling = 2.01 * float(sub.exit_rate.max()) + 1.0

    def admissible(rho):
        try:
            return check_et(gen, exh, rho).holds
        except SingularSystemError:
            return False

    lo, hi = 0.0, min(1.0, ceiling)
    while admissible(hi):
        lo = hi
        hi = min(2.0 * hi, ceiling)
        if hi >= ceiling and admissible(ceiling):
            return 0.99 * ceiling
        if hi >= ceiling:
            break
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if admissible(mid):
            lo = mid
        else:
            hi = mid
    if lo <= 0:
        raise NoConvergenceError("no admissible escape rate found",
                                 iterations=iterations)
    return 0.99 * lo


def check_sv(gen, exh, m=None, t_grid=None, tol=1e-12, safety=1.05):
    """Exponential survival floor on the core window:
    P_x(t < exit-or-death from D_m) >= c_sv * exp(-rho_sv t) for x in D_s.

    rho_sv is the decay rate of the D_m-killed chain; the constant is the
    smaller of a grid scan of exp(rho t) * survival and its exact limit (the
    killed survival capacity), shaved by a safety factor.
    """
    if m is None:
        m = exh.mixing if exh.mixing is not None else exh.n_sets - 1
    if not (exh.survival <= m < exh.n_sets):
        raise ValueError("enclosure must contain the core window")
    sub, idx = gen.restricted(exh.set(m))
    pos_s = exh.positions_in(exh.survival, m)
    eig = solve_eigentriple(sub, tol=tol)
    rho = eig.lambda0
    if rho <= 0:
        raise ValueError("killed window shows no decay; supply a kill rate")
    if t_grid is None:
        t_grid = default_t_grid(0.01 / rho, 5.0 / rho)
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    from .generator import _right_op, _series_scaled as _scaled
    op = _right_op(sub)
    rate = sub.uniformization_rate
    vec = np.ones(sub.n_states)
    log_scale = 0.0
    prev_t = 0.0
    grid_min = math.inf
    for t in t_grid:
        vec, step = _scaled(op, vec, rate * (t - prev_t), tol)
        vec = np.clip(vec, 0.0, None)
        log_scale += step
        prev_t = t
        vals = vec[pos_s] * math.exp(log_scale + rho * t)
        grid_min = min(grid_min, float(vals.min()))
    limit = float(eig.eta[pos_s].min())
    c_sv = min(grid_min, limit) / safety
    return AssumptionCertificate(
        name="sv", holds=c_sv > 0,
        constants={"rho_sv": float(rho), "c_sv": float(c_sv), "m": int(m)},
        params={"m": int(m), "t_grid": t_grid, "safety": safety, "tol": tol},
        witness={"grid_min": grid_min, "limit": limit,
                 "killed_lambda0": rho, "killed_gap": eig.gap},
        notes="survival floor from the killed-window decay rate")


def sv_from_regeneration(mix_cert, exh):
    """Survival floor implied by the regeneration certificate alone:
    restarting into alpha_c restricted to D_s every t_m units survives with
    weight c_rg = c * alpha_c(D_s) per cycle."""
    c_m = mix_cert.constants["c"]
    t_m = mix_cert.constants["t"]
    alpha = np.asarray(mix_cert.witness["alpha_c"], dtype=float)
    mass_s = float(alpha[exh.set(exh.survival)].sum())
    c_rg = c_m * mass_s
    if not (0.0 < c_rg < 1.0):
        raise ValueError(f"regeneration weight {c_rg!r} outside (0, 1)")
    rho = -math.log(c_rg) / t_m
    return AssumptionCertificate(
        name="sv", holds=True,
        constants={"rho_sv": rho, "c_sv": c_rg, "m": int(mix_cert.constants["m"])},
        params={"route": "regeneration", "t_m": t_m, "c_m": c_m},
        witness={"alpha_mass_core": mass_s},
        notes="survival floor chained from the regeneration certificate")


def lj_certificate(gen, notes=None):
    """Jump containment for finite truncations: transitions move through the
    stored adjacency only, so jumps from any retained window are bounded by
    construction and carry no extra condition to test."""
    return AssumptionCertificate(
        name="lj", holds=True, constants={},
        params={"n_states": int(gen.n_states)},
        notes=notes or "finite truncation; one-step jumps bounded by build")


@dataclass
class RetentionReport:
    """Where conditioned evolutions park their mass across the windows.

    xi_table rows hold, per window, the best uniform retained mass over the
    grid tail and the onset time from which it holds; chosen picks the
    smallest window retaining at least half the mass (falling back to the
    largest window).
    """

    t_grid: np.ndarray
    xi_table: list
    chosen: dict
    holds: bool

    def to_json_dict(self):
        return {"t_grid": _jsonify(self.t_grid),
                "xi_table": _jsonify(self.xi_table),
                "chosen": _jsonify(self.chosen), "holds": bool(self.holds)}


def verify_mass_retention(gen, exh, mus, t_grid, tol=1e-12):
    """Scan conditioned mass on every window over the grid for stress laws.

    For each window the uniform-in-tail retained fraction xi(i) = min over
    laws and grid times >= t_i is computed; the reported onset is the first
    grid time whose tail value reaches 95% of the final one.
    """
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    masks = exh.masks(gen.n_states).astype(float)
    table = np.full((exh.n_sets, t_grid.size), np.inf)
    for mu in mus:
        law = as_weights(mu, gen.n_states)
        law = np.clip(law, 0.0, None)
        law = law / law.sum()
        prev_t = 0.0
        for i, t in enumerate(t_grid):
            if t > prev_t:
                law = dcne(gen, law, t - prev_t, tol=tol).w
                prev_t = t
            table[:, i] = np.minimum(table[:, i], masks @ law)
    xi_rows = []
    for n in range(exh.n_sets):
        suffix = np.minimum.accumulate(table[n, ::-1])[::-1]
        target = 0.95 * suffix[-1]
        onset = int(np.argmax(suffix >= target)) if suffix[-1] > 0 else t_grid.size - 1
        xi_rows.append({"n": n, "xi": float(suffix[onset]),
                        "t_xt": 0.0 if onset == 0 else float(t_grid[onset]),
                        "xi_from_start": float(suffix[0])})
    chosen = None
    for row in xi_rows:
        if row["xi"] >= 0.5:
            chosen = row
            break
    if chosen is None:
        chosen = xi_rows[-1]
    return RetentionReport(t_grid=t_grid, xi_table=xi_rows,
                           chosen=dict(chosen), holds=chosen["xi"] > 0)


def _stress_laws(gen, d_rn, alpha_c, cap=64):
    laws = []
    states = np.asarray(d_rn, dtype=np.int64)
    if states.size > cap:
        pick = np.unique(np.linspace(0, states.size - 1, cap).astype(int))
        states = states[pick]
    for x in states:
        w = np.zeros(gen.n_states)
        w[x] = 1.0
        laws.append(w)
    uni = np.zeros(gen.n_states)
    uni[np.asarray(d_rn, dtype=np.int64)] = 1.0
    laws.append(uni / uni.sum())
    laws.append(np.asarray(alpha_c, dtype=float))
    return laws


def derive_coupling_constants(gen, exh, certs, eigen=None, retention=None,
                              t_grid=None, safety=1.05, tol=1e-12,
                              stress_cap=64):
    """Assemble engine constants from a certified bundle.

    Requires mix, dc, et and sv certificates that hold, with the escape rate
    strictly above the survival floor rate.  The floor step reuses the
    regeneration time (t_db = t_m, c_db = c_m * xi_rn with xi_rn half the
    certified retention), is stress-tested against delta starts across the
    retention window, and the persistence pair (t_ps, c_ps) is read off the
    survival-ratio profile at its 1% stabilization onset.
    """
    for key in ("mix", "dc", "et", "sv"):
        if key not in certs:
            raise ValueError(f"missing certificate {key!r}")
        if not certs[key].holds:
            raise ValueError(f"certificate {key!r} does not hold")
    rho_et = certs["et"].constants["rho"]
    rho_sv = certs["sv"].constants["rho_sv"]
    if not rho_et > rho_sv:
        raise ValueError(
            f"escape rate {rho_et!r} must exceed the survival floor rate "
            f"{rho_sv!r}; enlarge the coupling window or re-tune rho")
    mix = certs["mix"]
    c_m, t_m = mix.constants["c"], mix.constants["t"]
    alpha_c = np.asarray(mix.witness["alpha_c"], dtype=float)

    if retention is None:
        full = exh.set(exh.n_sets - 1)
        if full.size != gen.n_states:
            raise ValueError("no retention report and the exhaustion does not "
                             "end at the full state space")
        chosen = {"n": exh.n_sets - 1, "xi": 1.0, "t_xt": 0.0}
    elif isinstance(retention, RetentionReport):
        chosen = retention.chosen
    else:
        chosen = dict(retention)
    n_rn, xi_xt, t_xt = int(chosen["n"]), float(chosen["xi"]), float(chosen["t_xt"])
    if int(mix.constants["n"]) != n_rn:
        raise ValueError("regeneration rows must live on the retention window")
    xi_rn = 0.5 * xi_xt
    c_db = c_m * xi_rn
    t_db = t_m

    # stress re-verification of the floor and class invariance
    d_rn = exh.set(n_rn)
    alpha_rn_mass = float(alpha_c[d_rn].sum())
    for law in _stress_laws(gen, d_rn, alpha_c, cap=stress_cap):
        nu = dcne(gen, law, t_db, tol=tol).w
        deficit = float((nu - c_db * alpha_c).min())
        if deficit < -1e-12:
            raise DominationViolatedError(
                f"floor fails under stress start (deficit {-deficit:.3e})")
        retained = (float(nu[d_rn].sum()) - c_db * alpha_rn_mass) / (1.0 - c_db)
        if retained < xi_rn - 1e-12:
            raise DominationViolatedError(
                f"residual retention {retained!r} below {xi_rn!r}")

    if eigen is None:
        eigen = solve_eigentriple(gen, tol=tol)
    t_ps, c_ps, profile = _persistence_onset(gen, alpha_c, eigen, t_db,
                                             t_grid=t_grid, safety=safety,
                                             tol=tol)
    meta = {"c_m": c_m, "t_m": t_m, "rho_et": rho_et, "rho_sv": rho_sv,
            "e_T": certs["et"].constants["e_T"],
            "c_dc": certs["dc"].constants["c"],
            "lambda0": eigen.lambda0, "gap": eigen.gap,
            "profile_tail_max": profile}
    return CouplingConstants(t_db=t_db, c_db=c_db, t_ps=t_ps, c_ps=c_ps,
                             t_xt=t_xt, n_rn=n_rn, xi_rn=xi_rn,
                             alpha_c=alpha_c, meta=meta)


def _persistence_onset(gen, alpha_c, eigen, t_db, t_grid=None, safety=1.05,
                       tol=1e-12, rel_band=0.01, attempts=4):
    """First grid time from which the survival-ratio sup stays within 1% of
    its limit, and a padded ceiling for the sup beyond that time."""
    from .generator import _right_op, _series_scaled as _scaled
    r_inf = float(eigen.eta.max()) / float(np.dot(alpha_c, eigen.eta))
    t_lo = t_db / 4.0
    scale = 8.0 / eigen.gap if math.isfinite(eigen.gap) and eigen.gap > 0 \
        else 8.0 / max(eigen.lambda0, 1.0 / t_db)
    t_hi = max(4.0 * t_db, scale)
    for _ in range(attempts):
        grid = np.sort(np.asarray(
            t_grid if t_grid is not None else default_t_grid(t_lo, t_hi),
            dtype=float))
        op = _right_op(gen)
        rate = gen.uniformization_rate
        vec = np.ones(gen.n_states)
        prev_t = 0.0
        ratios = np.empty(grid.size)
        for i, t in enumerate(grid):
            vec, _ = _scaled(op, vec, rate * (t - prev_t), tol)
            vec = np.clip(vec, 0.0, None)
            prev_t = t
            ratios[i] = float(vec.max()) / float(np.dot(alpha_c, vec))
        within = np.abs(ratios - r_inf) <= rel_band * r_inf
        stable = np.logical_and.accumulate(within[::-1])[::-1]
        if stable.any():
            i0 = int(np.argmax(stable))
            t_ps = float(grid[i0])
            c_ps = safety * max(r_inf, float(ratios[i0:].max()))
            return t_ps, c_ps, float(ratios[i0:].max())
        if t_grid is not None:
            break
        t_hi *= 4.0
    raise NoConvergenceError("survival-ratio profile did not stabilize; "
                             "extend the search grid")


def eta_sup_bound(gen, eigen, mix_cert, exh, consts, check_tol=1e-9):
    """Ceiling on the survival capacity from the persistence pair:
    eta <= max(c_ps * exp(-lambda0 t_m) / (alpha(D_n) c_m), exp(lambda0 t_ps))."""
    c_m, t_m = mix_cert.constants["c"], mix_cert.constants["t"]
    d_n = exh.set(int(mix_cert.constants["n"]))
    denom = float(eigen.alpha.w[d_n].sum()) * c_m
    c_ps_prime = consts.c_ps * math.exp(-eigen.lambda0 * t_m) / denom
    bound = max(c_ps_prime, math.exp(eigen.lambda0 * consts.t_ps))
    eta_max = float(eigen.eta.max())
    return {"bound": bound, "c_ps_prime": c_ps_prime, "eta_max": eta_max,
            "holds": eta_max <= bound * (1.0 + check_tol)}


def replay_certificate(gen, exh, cert, rel=_REL):
    """Rerun a certificate from its recorded params and compare constants.

    Returns (matches, fresh_certificate); matches requires the holds flag to
    agree and every recorded constant to agree to relative tolerance.
    """
    p = cert.params
    if cert.name == "mix":
        alpha = "auto" if p.get("alpha_c_mode", "auto") == "auto" \
            else np.asarray(cert.witness["alpha_c"], dtype=float)
        fresh = check_mix(gen, exh, int(p["n"]), float(p["t"]), alpha_c=alpha,
                          tol=float(p.get("tol", 1e-12)))
    elif cert.name == "dc":
        fresh = check_dc(gen, exh, np.asarray(p["alpha_c"], dtype=float),
                         float(p["t_floor"]),
                         t_grid=np.asarray(p["t_grid"], dtype=float),
                         safety=float(p.get("safety", 1.05)),
                         tol=float(p.get("tol", 1e-12)))
    elif cert.name == "et":
        fresh = check_et(gen, exh, float(p["rho"]),
                         tol=float(p.get("tol", 1e-12)))
    elif cert.name == "sv":
        if p.get("route") == "regeneration":
            raise ValueError("regeneration-route records replay through their "
                             "source mix certificate")
        fresh = check_sv(gen, exh, m=int(p["m"]),
                         t_grid=np.asarray(p["t_grid"], dtype=float),
                         safety=float(p.get("safety", 1.05)),
                         tol=float(p.get("tol", 1e-12)))
    elif cert.name == "lj":
        fresh = lj_certificate(gen)
    else:
        raise ValueError(f"unknown certificate {cert.name!r}")
    ok = fresh.holds == cert.holds
    for key, val in cert.constants.items():
        ref = fresh.constants.get(key)
        if ref is None:
            ok = False
            continue
        if isinstance(val, float) and math.isinf(val):
            ok = ok and math.isinf(ref)
            continue
        tol_here = rel * max(1.0, abs(val))
        ok = ok and abs(ref - val) <= tol_here
    return ok, fresh
