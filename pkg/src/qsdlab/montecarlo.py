"""Stochastic cross-checks for the exact engine.

Single trajectories use event-driven (Gillespie) simulation; batch
estimators walk the uniformized chain instead (distributionally exact, and
vectorizable), drawing a fixed pattern of variates per chunk so results are
bitwise reproducible for a given (seed, n_paths) at any worker count.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AllExtinctError
from .generator import ProbabilityVector, as_weights
from .rng import run_chunked, stream

DEAD = -1


def _as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return stream(int(rng))


class JumpSampler:
    """Per-state cumulative transition tables for event-driven simulation.

    Row layout per state: the off-diagonal targets then the kill channel;
    holding times are exponential with the state's total exit rate.
    """

    def __init__(self, gen):
        self.gen = gen
        csr = gen.off
        self.rates = np.asarray(gen.exit_rate, dtype=float)
        self.targets = []
        self.cums = []
        for i in range(gen.n_states):
            lo, hi = csr.indptr[i], csr.indptr[i + 1]
            tg = csr.indices[lo:hi].astype(np.int64)
            rt = csr.data[lo:hi]
            tg = np.append(tg, DEAD)
            rt = np.append(rt, gen.kill[i])
            keep = rt > 0
            tg, rt = tg[keep], rt[keep]
            self.targets.append(tg)
            self.cums.append(np.cumsum(rt))

    def next_state(self, i, u):
        cum = self.cums[i]
        if cum.size == 0:
            return i  # no transitions at all; absorbing-in-place
        j = int(np.searchsorted(cum, u * cum[-1], side="right"))
        j = min(j, cum.size - 1)
        return int(self.targets[i][j])


def gillespie(gen, x0, t_max, rng, sampler=None):
    """Exact event-driven path; returns (events, extinction_time or None)
    with events a list of (time, state) starting at (0, x0)."""
    rng = _as_rng(rng)
    sampler = sampler or JumpSampler(gen)
    t = 0.0
    state = int(x0)
    path = [(0.0, state)]
    while True:
        rate = sampler.rates[state]
        if rate <= 0:
            return path, None
        t += rng.exponential(1.0 / rate)
        if t >= t_max:
            return path, None
        state = sampler.next_state(state, rng.random())
        path.append((t, state))
        if state == DEAD:
            return path, t


def _uniformized_walk(gen, start_states, t, rng):
    """Advance a batch of chains to time t via the uniformized skeleton.

    Each path takes Poisson(rate * t) kernel steps; per global step one
    uniform is drawn for every path in the batch (used or not), so the
    variate pattern is a function of the batch size alone.
    """
    n = gen.n_states
    rate = gen.uniformization_rate
    state = np.asarray(start_states, dtype=np.int64).copy()
    if rate <= 0 or t <= 0:
        return state
    k_mat = gen.kernel().toarray() if n <= 4096 else None
    if k_mat is not None:
        cums = np.cumsum(np.column_stack([k_mat, gen.kill / rate]), axis=1)
    steps = rng.poisson(rate * t, size=state.shape[0])
    for k in range(int(steps.max(initial=0))):
        u = rng.random(state.shape[0])
        act = (steps > k) & (state != DEAD)
        if not act.any():
            continue
        if cums is not None:
            rows = cums[state[act]]
            pick = (u[act, None] * rows[:, -1:] < rows).argmax(axis=1)
            nxt = np.where(pick >= n, DEAD, pick)
            state[act] = nxt
        else:
            idx = np.flatnonzero(act)
            for i in idx:
                s = state[i]
                state[i] = _kernel_step(gen, s, u[i], rate)
    return state


def _kernel_step(gen, s, u, rate):
    csr = gen.off
    lo, hi = csr.indptr[s], csr.indptr[s + 1]
    acc = u * rate
    run = 0.0
    for pos in range(lo, hi):
        run += csr.data[pos]
        if acc < run:
            return int(csr.indices[pos])
    if acc < run + gen.kill[s]:
        return DEAD
    return s


def estimate_dcne_naive(gen, mu, t, n_paths, rng, n_workers=1,
                        chunk_size=8192):
    """Empirical conditioned law from survivors at t; ESS = survivor count.

    Raises AllExtinctError when every path dies -- the expected signal that
    t is too deep for naive conditioning at this sample size.
    """
    w = as_weights(mu, gen.n_states)
    w = np.clip(w, 0.0, None)
    w = w / w.sum()
    if isinstance(rng, np.random.Generator):
        seed = int(rng.integers(2 ** 62))
    else:
        seed = int(rng)

    def task(lo, hi, idx):
        r = stream(seed, idx)
        starts = r.choice(gen.n_states, size=hi - lo, p=w)
        final = _uniformized_walk(gen, starts, t, r)
        alive = final != DEAD
        return np.bincount(final[alive], minlength=gen.n_states)

    counts = sum(run_chunked(task, n_paths, chunk_size, n_workers=n_workers))
    ess = int(counts.sum())
    if ess == 0:
        raise AllExtinctError(
            f"all {n_paths} paths extinct by t={t}; survival is too rare "
            "for naive conditioning at this sample size")
    return ProbabilityVector(counts / ess, strict=True), ess


@dataclass
class ParticleEnsemble:
    """Fleming-Viot population summarized by per-state counts."""

    counts: np.ndarray
    clock: float
    seed: int
    resample_log: int
    resample_times: list = field(default_factory=list)

    @property
    def n_particles(self):
        return int(self.counts.sum())

    @property
    def positions(self):
        return np.repeat(np.arange(self.counts.shape[0]), self.counts)

    def empirical_law(self):
        return ProbabilityVector(self.counts / self.counts.sum(), strict=True)

    def lambda0_estimate(self, window=0.5):
        """Resampling intensity per particle over the trailing window
        fraction of the run; unbiased for the decay rate at stationarity."""
        if not 0.0 < window <= 1.0:
            raise ValueError("window is the trailing fraction of the run, "
                             "must lie in (0, 1]")
        t0 = self.clock * (1.0 - window)
        n_late = sum(1 for s in self.resample_times if s >= t0)
        span = self.clock - t0
        if span <= 0:
            return math.nan
        return n_late / (self.n_particles * span)


def fleming_viot(gen, mu, t, n_particles, rng):
    """N interacting particles tracking the conditioned evolution: each
    absorption instantly respawns the particle at a uniformly chosen other
    one.  Sequential event loop over state counts (particles exchangeable),
    so the result depends only on (seed, n_particles)."""
    if n_particles < 2:
        raise ValueError("need at least two particles")
    seed_tag = -1 if isinstance(rng, np.random.Generator) else int(rng)
    rng = _as_rng(rng)
    w = as_weights(mu, gen.n_states)
    w = np.clip(w, 0.0, None)
    w = w / w.sum()
    n = gen.n_states
    counts = np.bincount(rng.choice(n, size=n_particles, p=w), minlength=n)
    sampler = JumpSampler(gen)
    exit_rate = sampler.rates
    clock = 0.0
    resamples = 0
    resample_times = []
    while True:
        weights = counts * exit_rate
        total = float(weights.sum())
        if total <= 0:
            break
        clock += rng.exponential(1.0 / total)
        if clock >= t:
            clock = t
            break
        cum = np.cumsum(weights)
        s = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        s = min(s, n - 1)
        nxt = sampler.next_state(s, rng.random())
        counts[s] -= 1
        if nxt == DEAD:
            living = np.cumsum(counts)
            pick = int(np.searchsorted(living, rng.random() * living[-1],
                                       side="right"))
            pick = min(pick, n - 1)
            counts[pick] += 1
            resamples += 1
            resample_times.append(clock)
        else:
            counts[nxt] += 1
    return ParticleEnsemble(counts=counts, clock=clock, seed=seed_tag,
                            resample_log=resamples,
                            resample_times=resample_times)


def qprocess_generator(gen, eigen):
    """Doob transform by the survival capacity: rates q(i,j) eta_j / eta_i,
    absorption removed.  The result is conservative by construction: the
    stored kill vector is zero, so row sums vanish identically."""
    eta = np.asarray(eigen.eta, dtype=float)
    if (eta <= 0).any():
        raise ValueError("survival capacity must be strictly positive")
    from scipy.sparse import csr_matrix
    csr = gen.off.tocoo()
    vals = csr.data * eta[csr.col] / eta[csr.row]
    rates = csr_matrix((vals, (csr.row, csr.col)), shape=csr.shape)
    from .generator import SubMarkovGenerator
    return SubMarkovGenerator(rates, np.zeros(gen.n_states))


def qprocess_simulate(gen, eigen, x0, t_max, rng, max_steps=None):
    """Path of the never-absorbed transform plus its time-weighted occupation
    law (the natural estimator of the stationary law eta * alpha)."""
    rng = _as_rng(rng)
    qgen = qprocess_generator(gen, eigen)
    sampler = JumpSampler(qgen)
    state = int(x0)
    t = 0.0
    occupation = np.zeros(gen.n_states)
    path = [(0.0, state)]
    steps = 0
    while t < t_max and (max_steps is None or steps < max_steps):
        rate = sampler.rates[state]
        if rate <= 0:
            occupation[state] += t_max - t
            t = t_max
            break
        hold = min(rng.exponential(1.0 / rate), t_max - t)
        occupation[state] += hold
        t += hold
        if t >= t_max:
            break
        state = sampler.next_state(state, rng.random())
        path.append((t, state))
        steps += 1
    total = occupation.sum()
    law = ProbabilityVector(occupation / total, strict=True) if total > 0 \
        else ProbabilityVector(np.zeros(gen.n_states))
    return path, law
