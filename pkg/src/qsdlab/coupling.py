"""Exact-arithmetic coupling of conditioned evolutions against a floor law.

Given certified constants (a floor time/weight pair (t_db, c_db), a
persistence onset (t_ps, c_ps) and the reference law alpha_c), the engine
peels a geometric series of alpha_c-shaped pieces off the conditioned
evolution of an arbitrary start law mu over a horizon t_h.  Every step is
re-certified numerically: the per-step weight c_j must stay within (0, c_db],
the residual law must stay entrywise nonnegative after the certified floor is
subtracted, and two independent bookkeeping routes for the residual weight
r_j (recursive and closed-form) must agree to identity tolerance.

All survival probabilities are carried in log space and evaluated through
shared right-action survival vectors on the step lattice, so a full run costs
O(J) semigroup applications.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (DominationViolatedError, HorizonTooShortError,
                     InductionBrokenError)
from .generator import (ProbabilityVector, _right_op, _series_scaled, as_weights,
                        dcne, tv_distance)

IDENTITY_TOL = 1e-10
SLACK = 1e-12


@dataclass(frozen=True)
class CouplingConstants:
    """Certified constants driving the coupling induction.

    c_bar = c_db / c_ps is the per-step coupled fraction; zeta is the
    certified exponential contact rate -ln(1 - c_bar) / t_db; bound_constant
    is the prefactor 2 exp(zeta (t_ps + t_db + t_xt)) of the class-uniform
    convergence bound.  (n_rn, xi_rn) names the retention class the floor
    inequality was certified on.
    """

    t_db: float
    c_db: float
    t_ps: float
    c_ps: float
    t_xt: float
    n_rn: int
    xi_rn: float
    alpha_c: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        a = np.asarray(self.alpha_c, dtype=float)
        if abs(a.sum() - 1.0) > 1e-9 or a.min(initial=0.0) < 0:
            raise ValueError("alpha_c must be a probability vector")
        object.__setattr__(self, "alpha_c", a)
        if not (0.0 < self.c_db < self.c_ps):
            raise ValueError("need 0 < c_db < c_ps")
        if self.t_db <= 0 or self.t_ps < 0 or self.t_xt < 0:
            raise ValueError("times must be nonnegative with t_db > 0")

    @property
    def c_bar(self):
        return self.c_db / self.c_ps

    @property
    def zeta(self):
        return -math.log1p(-self.c_bar) / self.t_db

    @property
    def bound_constant(self):
        return 2.0 * math.exp(self.zeta * (self.t_ps + self.t_db + self.t_xt))

    def to_json_dict(self):
        return {
            "t_db": self.t_db, "c_db": self.c_db,
            "t_ps": self.t_ps, "c_ps": self.c_ps,
            "t_xt": self.t_xt, "n_rn": int(self.n_rn), "xi_rn": self.xi_rn,
            "c_bar": self.c_bar, "zeta": self.zeta,
            "bound_constant": self.bound_constant,
            "alpha_c": [float(v) for v in self.alpha_c],
            "meta": self.meta,
        }

    @classmethod
    def from_json_dict(cls, d):
        return cls(t_db=float(d["t_db"]), c_db=float(d["c_db"]),
                   t_ps=float(d["t_ps"]), c_ps=float(d["c_ps"]),
                   t_xt=float(d["t_xt"]), n_rn=int(d["n_rn"]),
                   xi_rn=float(d["xi_rn"]),
                   alpha_c=np.asarray(d["alpha_c"], dtype=float),
                   meta=dict(d.get("meta", {})))


def horizon_steps(consts, t_h):
    """Number of floor extractions J = floor((t_h - t_ps) / t_db)."""
    if t_h < consts.t_ps:
        raise HorizonTooShortError(
            f"horizon {t_h!r} is below the persistence onset {consts.t_ps!r}")
    return int(math.floor((t_h - consts.t_ps) / consts.t_db + 1e-12))


def _log_weight(consts, k):
    """log of c_bar * (1 - c_bar)^(k-1)."""
    return math.log(consts.c_bar) + (k - 1) * math.log1p(-consts.c_bar)


class CouplingRun:
    """One coupling induction of mu against alpha_c over horizon t_h.

    Precomputes the conditioned lattices of mu and alpha_c, their cumulative
    log-survivals, and the right-action survival vectors at the lattice
    offsets, then advances the residual law step by step.
    """

    def __init__(self, gen, consts, mu, t_h, tol=1e-12,
                 identity_tol=IDENTITY_TOL, slack=SLACK):
        self.gen = gen
        self.consts = consts
        self.tol = tol
        self.identity_tol = identity_tol
        self.slack = slack
        self.t_h = float(t_h)
        self.J = horizon_steps(consts, t_h)
        self.t_rem = self.t_h - self.J * consts.t_db
        mu = as_weights(mu, gen.n_states)
        if mu.sum() <= 0:
            raise ValueError("mu must have positive mass")
        mu = np.clip(mu, 0.0, None) / mu.sum()
        self.mu = mu

        t_db = consts.t_db
        # conditioned lattices and cumulative log survival along them
        self.mu_panel, self.mu_logsurv = self._lattice(mu, t_db, self.J)
        self.ac_panel, self.ac_logsurv = self._lattice(consts.alpha_c, t_db, self.J)
        # right survival vectors at m * t_db + t_rem, m = 0..J (log-scaled)
        op = _right_op(gen)
        rate = gen.uniformization_rate
        vec, log_scale = _series_scaled(op, np.ones(gen.n_states),
                                        rate * self.t_rem, tol)
        self.s_rem = [np.clip(vec, 0.0, None)]
        self.s_rem_log = [log_scale]
        for _ in range(self.J):
            vec, step = _series_scaled(op, self.s_rem[-1], rate * t_db, tol)
            self.s_rem.append(np.clip(vec, 0.0, None))
            self.s_rem_log.append(self.s_rem_log[-1] + step)
        svec, slog = _series_scaled(op, np.ones(gen.n_states), rate * t_db, tol)
        self.s_db = np.clip(svec, 0.0, None)
        self.s_db_log = slog
        # log P_mu(t_h < death) via the deepest right vector
        self.log_surv_mu_th = self._log_dot(mu, self.J)
        self.log_surv_ac_th = self._log_dot(consts.alpha_c, self.J)
        # trace rows appended by advance()
        self.trace = []
        self.clamped = 0
        self._state = {"j": 0, "r": 1.0, "nu": mu.copy()}
        self._check_identities(self._state)

    def _lattice(self, start, t_db, n_steps):
        panel = [np.asarray(start, dtype=float) / np.sum(start)]
        logsurv = [0.0]
        for _ in range(n_steps):
            nxt, step = dcne(self.gen, panel[-1], t_db, tol=self.tol,
                             return_log_mass=True)
            panel.append(nxt.w)
            logsurv.append(logsurv[-1] + step)
        return panel, logsurv

    def _log_dot(self, w, m):
        """log( w . s(m t_db + t_rem) ) for a nonnegative vector w."""
        val = float(np.dot(w, self.s_rem[m]))
        if val <= 0.0:
            return -math.inf
        return math.log(val) + self.s_rem_log[m]

    def log_surv_mu(self, j):
        """log P_mu(j t_db < death)."""
        return self.mu_logsurv[j]

    def log_surv_ac_offset(self, k):
        """log P_{alpha_c}(t_h - k t_db < death)."""
        return math.log(float(np.dot(self.consts.alpha_c, self.s_rem[self.J - k]))) \
            + self.s_rem_log[self.J - k]

    def floor_weight(self, k, j):
        """Extracted weight a(k, j t_db) of the k-th floor piece at step j."""
        consts = self.consts
        if k < 1 or k > self.J or k > j:
            return 0.0
        lw = _log_weight(consts, k)
        lw += self.log_surv_mu_th - self.mu_logsurv[j]
        lw += self.ac_logsurv[j - k] - self.log_surv_ac_offset(k)
        return math.exp(lw)

    @property
    def state(self):
        return self._state

    def _nu_views(self, state):
        j, nu = state["j"], state["nu"]
        log_nu_hor = self._log_dot(nu, self.J - j)
        surv_db = float(np.dot(nu, self.s_db))
        log_nu_db = (math.log(surv_db) + self.s_db_log) if surv_db > 0 else -math.inf
        return log_nu_hor, log_nu_db

    def _check_identities(self, state):
        """Closed-form residual identity and vector mass conservation."""
        j, r, nu = state["j"], state["r"], state["nu"]
        log_nu_hor, _ = self._nu_views(state)
        ser = math.exp(j * math.log1p(-self.consts.c_bar)
                       + self.log_surv_mu_th - self.mu_logsurv[j]
                       - log_nu_hor)
        ser_dev = abs(r - ser)
        recon = r * nu
        for k in range(1, j + 1):
            recon = recon + self.floor_weight(k, j) * self.ac_panel[j - k]
        mass_dev = float(np.abs(recon - self.mu_panel[j]).sum())
        state["ser_deviation"] = ser_dev
        state["mass_deviation"] = mass_dev
        if ser_dev > self.identity_tol:
            raise InductionBrokenError(
                f"residual identity off by {ser_dev:.3e} at step {j}",
                step=j, details={"ser_deviation": ser_dev})
        if mass_dev > self.identity_tol:
            raise InductionBrokenError(
                f"mass reconstruction off by {mass_dev:.3e} at step {j}",
                step=j, details={"mass_deviation": mass_dev})
        return ser_dev, mass_dev

    def advance(self):
        """One extraction step: certify, subtract the floor, update r.

        Raises InductionBrokenError when the per-step weight leaves
        (0, c_db], when the residual law goes negative beyond slack, or when
        either bookkeeping identity drifts beyond identity tolerance.
        """
        state = self._state
        j, r, nu = state["j"], state["r"], state["nu"]
        if j >= self.J:
            raise InductionBrokenError("no steps remain beyond the horizon",
                                       step=j)
        consts = self.consts
        log_nu_hor, log_nu_db = self._nu_views(state)
        # persistence of the residual law: its horizon survival must be
        # covered by one floor step followed by the reference survival
        log_c = (math.log(consts.c_bar) + log_nu_hor - log_nu_db
                 - self.log_surv_ac_offset(j + 1))
        c_j = math.exp(log_c)
        if not (0.0 < c_j <= consts.c_db * (1.0 + 1e-9)):
            raise InductionBrokenError(
                f"step weight c_j={c_j!r} outside (0, c_db={consts.c_db!r}]",
                step=j, details={"c_j": c_j, "c_db": consts.c_db})
        nu_ev, _ = dcne(self.gen, nu, consts.t_db, tol=self.tol,
                        return_log_mass=True)
        nu_ev = nu_ev.w
        floor = consts.c_db * consts.alpha_c
        worst = float((nu_ev - floor).min())
        if worst < -self.slack:
            raise InductionBrokenError(
                f"evolved residual misses the certified floor by {-worst:.3e}",
                step=j, details={"floor_deficit": -worst})
        nxt = (nu_ev - c_j * consts.alpha_c) / (1.0 - c_j)
        neg = nxt < 0.0
        if nxt.min(initial=0.0) < -self.slack:
            raise InductionBrokenError(
                f"residual law negative beyond slack at step {j}",
                step=j, details={"min_entry": float(nxt.min())})
        if neg.any():
            self.clamped += int(neg.sum())
            nxt = np.clip(nxt, 0.0, None)
        nxt = nxt / nxt.sum()
        ell = r * math.exp(self.mu_logsurv[j] - self.mu_logsurv[j + 1]
                           + log_nu_db)
        r_next = ell * (1.0 - c_j)
        new_state = {"j": j + 1, "r": r_next, "nu": nxt, "c_prev": c_j}
        ser_dev, mass_dev = self._check_identities(new_state)
        self.trace.append({
            "j": j + 1, "r": r_next, "c": c_j,
            "nu_min": float(nxt.min()),
            "ser_deviation": ser_dev, "mass_deviation": mass_dev,
        })
        self._state = new_state
        return new_state

    def run(self):
        """Advance through all J steps; returns the trace list."""
        while self._state["j"] < self.J:
            self.advance()
        return self.trace

    def minorizing_at_horizon(self):
        """Floor mixture sum_k c_bar (1-c_bar)^{k-1} alpha_c A_{t_h - k t_db}."""
        out = np.zeros(self.gen.n_states)
        for k in range(1, self.J + 1):
            piece = dcne(self.gen, self.ac_panel[self.J - k], self.t_rem,
                         tol=self.tol).w
            out += math.exp(_log_weight(self.consts, k)) * piece
        return ProbabilityVector(out)

    def law_at_horizon(self):
        return dcne(self.gen, self.mu_panel[self.J], self.t_rem, tol=self.tol)

    def check_domination(self):
        """Entrywise mu A_{t_h} >= floor mixture, within slack."""
        lhs = self.law_at_horizon().w
        rhs = self.minorizing_at_horizon().w
        worst = float((lhs - rhs).min())
        if worst < -self.slack:
            raise DominationViolatedError(
                f"conditioned law misses the floor mixture by {-worst:.3e}")
        return worst


def coupling_mass(gen, consts, mu, k, t, t_h, tol=1e-12):
    """Weight of the k-th floor piece at elapsed time t under horizon t_h."""
    J = horizon_steps(consts, t_h)
    if k < 1 or k > J or k * consts.t_db > t + 1e-15:
        return 0.0
    from .generator import survival_probability
    lw = _log_weight(consts, k)
    lw += survival_probability(gen, mu, t_h, tol=tol)
    lw -= survival_probability(gen, mu, t, tol=tol)
    lw += survival_probability(gen, consts.alpha_c, t - k * consts.t_db, tol=tol)
    lw -= survival_probability(gen, consts.alpha_c, t_h - k * consts.t_db, tol=tol)
    return math.exp(lw)


def minorizing_measure(gen, consts, t_h, tol=1e-12):
    """Floor mixture at horizon t_h; mass 1 - (1 - c_bar)^J, empty when J=0."""
    J = horizon_steps(consts, t_h)
    out = np.zeros(gen.n_states)
    cur = np.asarray(consts.alpha_c, dtype=float)
    # alpha_c A_{t_h - k t_db} for k = J..1, built by flowing the remainder
    # first and then whole steps, reusing each stage
    t_rem = t_h - J * consts.t_db
    if J == 0:
        return ProbabilityVector(out)
    cur = dcne(gen, cur, t_rem, tol=tol).w
    pieces = {J: cur}
    for k in range(J - 1, 0, -1):
        cur = dcne(gen, cur, consts.t_db, tol=tol).w
        pieces[k] = cur
    for k in range(1, J + 1):
        out += math.exp(_log_weight(consts, k)) * pieces[k]
    return ProbabilityVector(out)


def residual_identity(run, j=None):
    """Deviation of the recursive residual weight from its closed form."""
    state = run.state if j is None else None
    if state is None:
        raise ValueError("pass j=None; identities are checked per advance()")
    return state.get("ser_deviation", math.nan)


def verify_lower_bound(gen, consts, mus, time_pairs, tol=1e-12, slack=SLACK):
    """Floor domination and two-sided contraction for general start laws.

    For each (t1, t2) with t_xt + t_ps <= t1 <= t2 and every start law mu,
    checks that the conditioned law at t2 (reduced through the retention
    shift) dominates the floor mixture at t1 - t_xt entrywise, and that all
    resulting laws are pairwise within 2 (1 - c_bar)^J in l1 (which is itself
    below bound_constant * exp(-zeta t1)).  Raises DominationViolatedError on
    the first failure; returns a per-pair report otherwise.
    """
    report = []
    for (t1, t2) in time_pairs:
        if not (consts.t_xt + consts.t_ps <= t1 <= t2):
            raise ValueError(f"need t_xt + t_ps <= t1 <= t2, got {(t1, t2)!r}")
        horizon = t1 - consts.t_xt
        floor = minorizing_measure(gen, consts, horizon, tol=tol)
        J = horizon_steps(consts, horizon)
        laws = []
        for mu in mus:
            shifted = dcne(gen, as_weights(mu, gen.n_states),
                           consts.t_xt + (t2 - t1), tol=tol)
            law2 = dcne(gen, shifted, horizon, tol=tol)
            law1 = dcne(gen, as_weights(mu, gen.n_states), t1, tol=tol)
            for law in (law1, law2):
                worst = float((law.w - floor.w).min())
                if worst < -slack:
                    raise DominationViolatedError(
                        f"law at {(t1, t2)!r} misses the floor by {-worst:.3e}")
            laws.extend([law1, law2])
        resid = math.exp(J * math.log1p(-consts.c_bar))
        worst_tv = 0.0
        for i in range(len(laws)):
            for k in range(i + 1, len(laws)):
                worst_tv = max(worst_tv, tv_distance(laws[i], laws[k]))
        if worst_tv > resid + slack:
            raise DominationViolatedError(
                f"pairwise distance {worst_tv!r} exceeds residual {resid!r}")
        envelope = consts.bound_constant * math.exp(-consts.zeta * t1)
        if 2.0 * resid > envelope + slack:
            raise DominationViolatedError(
                "residual exceeds the certified envelope")
        report.append({"t1": t1, "t2": t2, "J": J, "residual": resid,
                       "worst_tv": worst_tv, "envelope": envelope})
    return report


def conditioned_time_marginal(gen, mu, t_ev, t_h, tol=1e-12):
    """Law of the state at t_ev conditioned on surviving until t_h >= t_ev."""
    if not (0.0 <= t_ev <= t_h):
        raise ValueError("need 0 <= t_ev <= t_h")
    w = as_weights(mu, gen.n_states)
    fwd, _ = _series_scaled(_left_op_cached(gen), np.clip(w, 0, None) / w.sum(),
                            gen.uniformization_rate * t_ev, tol)
    tail, _ = _series_scaled(_right_op(gen), np.ones(gen.n_states),
                             gen.uniformization_rate * (t_h - t_ev), tol)
    prod = np.clip(fwd, 0.0, None) * np.clip(tail, 0.0, None)
    total = prod.sum()
    if total <= 0:
        raise DominationViolatedError("no surviving mass at the horizon")
    return ProbabilityVector(prod / total, strict=True)


def _left_op_cached(gen):
    kt = gen.kernel_t()
    return lambda v: kt @ v


def glb_minorant(gen, consts, t_ev, t_h, tol=1e-12):
    """Floor mixture for the conditioned time-t_ev marginal under horizon t_h."""
    J = horizon_steps(consts, t_h)
    if t_ev > t_h:
        raise ValueError("evaluation time beyond the horizon")
    if t_ev < J * consts.t_db:
        raise ValueError("evaluation time below the floor lattice depth")
    out = np.zeros(gen.n_states)
    for k in range(1, J + 1):
        piece = conditioned_time_marginal(gen, consts.alpha_c,
                                          t_ev - k * consts.t_db,
                                          t_h - k * consts.t_db, tol=tol)
        out += math.exp(_log_weight(consts, k)) * piece.w
    return ProbabilityVector(out)


def verify_glb(gen, consts, mu, t_ev, t_h, tol=1e-12, slack=SLACK):
    """Conditioned-marginal domination, reduced through the retention shift."""
    t_xt = consts.t_xt
    if t_xt > 0:
        mu = dcne(gen, as_weights(mu, gen.n_states), t_xt, tol=tol)
    lhs = conditioned_time_marginal(gen, mu, t_ev - t_xt, t_h - t_xt, tol=tol)
    rhs = glb_minorant(gen, consts, t_ev - t_xt, t_h - t_xt, tol=tol)
    worst = float((lhs.w - rhs.w).min())
    if worst < -slack:
        raise DominationViolatedError(
            f"conditioned marginal misses its floor by {-worst:.3e}")
    return worst
