"""Sub-Markovian generators on finite state spaces and their killed semigroups.

A generator holds nonnegative jump rates q(i, j) off the diagonal and a
nonnegative kill rate kappa(i) into an implicit cemetery state.  The diagonal
is minus the total exit rate, so row sums equal -kappa <= 0.  The killed
semigroup P_t = exp(tQ) propagates sub-probability row vectors and loses mass
exactly through the kill channel.

Semigroup evaluation uses uniformization: with L = max_i |q(i, i)| and
K = I + Q/L, mu P_t = sum_k Poisson(Lt)(k) * mu K^k, truncated when the
Poisson tail drops below the requested tolerance.  For large L*t or deeply
decayed mass the same series runs with per-term L1 renormalization and
log-space Poisson weights, so conditioning stays well defined far below the
smallest positive double.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from .errors import ExtinctMassError, NoConvergenceError, SchemaError

MASS_TOL = 1e-9


@dataclass(frozen=True)
class ProbabilityVector:
    """Nonnegative weights; mass <= 1 (sub-probability) or == 1 when strict."""

    w: np.ndarray
    strict: bool = False

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).copy()
        if w.ndim != 1:
            raise ValueError("weights must be a 1-d array")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if w.min(initial=0.0) < -1e-12:
            raise ValueError("weights must be nonnegative")
        np.clip(w, 0.0, None, out=w)
        m = w.sum()
        if self.strict:
            if abs(m - 1.0) > MASS_TOL:
                raise ValueError(f"strict vector has mass {m!r}, expected 1")
        elif m > 1.0 + MASS_TOL:
            raise ValueError(f"sub-probability vector has mass {m!r} > 1")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def mass(self):
        return float(self.w.sum())

    def normalized(self):
        m = self.w.sum()
        if m <= 0.0:
            raise ExtinctMassError("cannot normalize a zero-mass vector")
        return ProbabilityVector(self.w / m, strict=True)

    def tv(self, other):
        return tv_distance(self, other)

    def __len__(self):
        return self.w.shape[0]


def as_weights(mu, n=None):
    """Coerce a ProbabilityVector / array / state index to a weight array."""
    if isinstance(mu, ProbabilityVector):
        w = np.asarray(mu.w, dtype=float)
    elif np.isscalar(mu) and float(mu) == int(mu) and n is not None:
        w = np.zeros(n)
        w[int(mu)] = 1.0
    else:
        w = np.asarray(mu, dtype=float)
    if n is not None and w.shape != (n,):
        raise ValueError(f"expected a length-{n} vector, got shape {w.shape}")
    return w


def point_mass(i, n):
    w = np.zeros(n)
    w[i] = 1.0
    return ProbabilityVector(w, strict=True)


def tv_distance(a, b):
    """Total-variation distance, half the l1 norm of the difference."""
    wa = a.w if isinstance(a, ProbabilityVector) else np.asarray(a, dtype=float)
    wb = b.w if isinstance(b, ProbabilityVector) else np.asarray(b, dtype=float)
    if wa.shape != wb.shape:
        raise ValueError("length mismatch")
    return 0.5 * float(np.abs(wa - wb).sum())


class SubMarkovGenerator:
    """Finite-state sub-Markovian generator (off-diagonal rates + kill rates)."""

    def __init__(self, rates, kill, *, validate=True):
        if sp.issparse(rates):
            off = rates.tocsr().astype(float)
        else:
            off = sp.csr_matrix(np.asarray(rates, dtype=float))
        kill = np.asarray(kill, dtype=float).copy()
        n = off.shape[0]
        if off.shape != (n, n):
            raise ValueError("rate matrix must be square")
        if kill.shape != (n,):
            raise ValueError("kill vector length must match the state count")
        if validate:
            if off.nnz and off.data.min() < 0:
                raise ValueError("jump rates must be nonnegative")
            if not np.all(np.isfinite(kill)) or (off.nnz and not np.all(np.isfinite(off.data))):
                raise ValueError("rates must be finite")
            if kill.min(initial=0.0) < 0:
                raise ValueError("kill rates must be nonnegative")
            if off.diagonal().any():
                raise ValueError("diagonal entries are implied; pass off-diagonal rates only")
        off.eliminate_zeros()
        kill.setflags(write=False)
        self.off = off
        self.kill = kill
        self.n_states = n
        self.exit_rate = np.asarray(off.sum(axis=1)).ravel() + kill
        self.exit_rate.setflags(write=False)
        self.uniformization_rate = float(self.exit_rate.max(initial=0.0))
        self._kernel = None
        self._kernel_t = None

    def __repr__(self):
        return (f"SubMarkovGenerator(n_states={self.n_states}, "
                f"nnz={self.off.nnz}, uniformization_rate={self.uniformization_rate!r})")

    def dense_q(self):
        """Full generator matrix including the diagonal."""
        q = self.off.toarray()
        q[np.diag_indices(self.n_states)] = -self.exit_rate
        return q

    def kernel(self, rate=None):
        """Sub-stochastic jump kernel K = I + Q/rate (default: the max exit rate)."""
        if rate is None:
            if self._kernel is None:
                self._kernel = self._build_kernel(self.uniformization_rate)
            return self._kernel
        return self._build_kernel(float(rate))

    def _build_kernel(self, rate):
        if rate <= 0.0:
            return sp.identity(self.n_states, format="csr")
        if rate < self.uniformization_rate * (1 - 1e-12):
            raise ValueError("uniformization rate below the maximal exit rate")
        k = (self.off / rate + sp.diags(1.0 - self.exit_rate / rate)).tocsr()
        return k

    def kernel_t(self):
        if self._kernel_t is None:
            self._kernel_t = self.kernel().T.tocsr()
        return self._kernel_t

    def restricted(self, states):
        """Killed-on-exit restriction to a subset of states.

        Flow out of the subset joins the kill channel, so the restricted
        semigroup propagates exactly P_x[X_t in dy; t < death and exit].
        Returns the restricted generator and the retained state indices.
        """
        idx = np.unique(np.asarray(states, dtype=int))
        if idx.size == 0:
            raise ValueError("cannot restrict to an empty state set")
        if idx.min() < 0 or idx.max() >= self.n_states:
            raise ValueError("state index out of range")
        sub_rows = self.off[idx]
        off_sub = sub_rows[:, idx]
        leak = np.asarray(sub_rows.sum(axis=1)).ravel() - np.asarray(off_sub.sum(axis=1)).ravel()
        kill_sub = self.kill[idx] + leak
        return SubMarkovGenerator(off_sub, kill_sub, validate=False), idx

    def embed(self, w_sub, idx):
        """Embed a restricted-space vector back into the full state space."""
        full = np.zeros(self.n_states)
        full[np.asarray(idx, dtype=int)] = w_sub
        return full

    def to_json_dict(self):
        coo = self.off.tocoo()
        triples = sorted(
            ([int(i), int(j), float(v)] for i, j, v in zip(coo.row, coo.col, coo.data)),
            key=lambda r: (r[0], r[1]),
        )
        return {
            "states": int(self.n_states),
            "rates": triples,
            "kill": [float(x) for x in self.kill],
        }

    @classmethod
    def from_json_dict(cls, d):
        try:
            n = int(d["states"])
            triples = d["rates"]
            kill = np.asarray(d["kill"], dtype=float)
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"generator object needs states/rates/kill: {exc}") from exc
        if n <= 0:
            raise SchemaError("states must be positive")
        if kill.shape != (n,):
            raise SchemaError("kill vector length must equal states")
        rows, cols, vals = [], [], []
        for entry in triples:
            if len(entry) != 3:
                raise SchemaError(f"rate entry {entry!r} is not [i, j, q]")
            i, j, q = int(entry[0]), int(entry[1]), float(entry[2])
            if i == j:
                raise SchemaError("diagonal rate entries are not allowed")
            if not (0 <= i < n and 0 <= j < n):
                raise SchemaError(f"rate entry {entry!r} out of range")
            if q < 0:
                raise SchemaError("rates must be nonnegative")
            rows.append(i)
            cols.append(j)
            vals.append(q)
        off = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        if kill.min(initial=0.0) < 0:
            raise SchemaError("kill rates must be nonnegative")
        return cls(off, kill)


def _poisson_weights(mu, tol):
    """Poisson(mu) pmf values truncated where the analytic tail is below tol.

    The geometric bound sum_{k>K} pmf(k) <= pmf(K) * r / (1 - r) with
    r = mu / (K + 1) certifies the discarded mass directly; comparing
    1 - w.sum() against tol would stall once the summed rounding error of
    the log-domain pmf exceeds tol (large mu), growing the array forever.
    """
    if mu <= 0.0:
        return np.ones(1)
    k_hi = int(mu + 10.0 * math.sqrt(mu) + 20.0)
    for _ in range(64):
        k = np.arange(k_hi + 1, dtype=float)
        w = np.exp(k * math.log(mu) - mu - gammaln(k + 1.0))
        r = mu / (k_hi + 1.0)
        if r < 1.0 and w[-1] * r / (1.0 - r) < tol:
            return w
        k_hi = int(k_hi * 1.5) + 20
    raise NoConvergenceError("Poisson weight tail did not close", iterations=k_hi)


def _series_plain(apply_kernel, v, mu, tol):
    """sum_k Poisson(mu)(k) * K^k v with a pre-truncated weight array."""
    w = _poisson_weights(mu, tol)
    acc = w[0] * v
    cur = v
    for k in range(1, w.shape[0]):
        cur = apply_kernel(cur)
        if w[k] != 0.0:
            acc = acc + w[k] * cur
    return acc


def _series_scaled(apply_kernel, v, mu, tol):
    """Same Poisson mixture, renormalized per term.

    Returns (vec, log_scale) with the true result vec * exp(log_scale).
    The kernel is sub-stochastic so per-term L1 norms never grow; folding
    them into the log weight keeps every intermediate within double range,
    which is what lets conditioning run long after the raw mass underflows.
    """
    norm0 = float(np.abs(v).sum())
    if norm0 <= 0.0:
        return v.copy(), 0.0
    vhat = v / norm0
    log_in = math.log(norm0)
    if mu <= 0.0:
        return vhat.copy(), log_in
    log_mu = math.log(mu)
    bulk = mu + 10.0 * math.sqrt(mu) + 10.0
    max_terms = int(mu + 30.0 * math.sqrt(mu + 1.0) + 5e4)
    acc = vhat.copy()
    frame = -mu  # log weight of term 0
    cum = 0.0
    k = 0
    while True:
        if k >= bulk:
            # geometric tail bound relative to the accumulated sum
            r = mu / (k + 1.0)
            lw = k * log_mu - mu - float(gammaln(k + 1.0)) + cum
            acc_norm = float(np.abs(acc).sum())
            if r >= 1.0:
                tail_log = math.inf
            elif r <= 0.0:  # ratio underflowed: remaining weights are zero
                tail_log = -math.inf
            else:
                tail_log = lw + math.log(r / (1.0 - r))
            if acc_norm > 0.0 and tail_log < frame + math.log(acc_norm) + math.log(tol):
                break
        if k > max_terms:
            raise NoConvergenceError("uniformization series did not close",
                                     iterations=k)
        nxt = apply_kernel(vhat)
        s = float(np.abs(nxt).sum())
        if s <= 0.0:
            break  # every later term is identically zero
        vhat = nxt / s
        cum += math.log(s)
        k += 1
        lw = k * log_mu - mu - float(gammaln(k + 1.0)) + cum
        c = lw - frame
        if c > 50.0:
            acc *= math.exp(frame - lw)
            frame = lw
            c = 0.0
        if c > -745.0:
            acc += math.exp(c) * vhat
    return acc, frame + log_in


_PLAIN_LIMIT = 200.0  # switch to the renormalized series above this L*t


def _left_op(gen):
    kt = gen.kernel_t()
    return lambda v: kt @ v


def _right_op(gen):
    k = gen.kernel()
    return lambda v: k @ v


def semigroup_apply(gen, mu, t, tol=1e-12):
    """Propagate a sub-probability vector: mu P_t by uniformization."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    w = as_weights(mu, gen.n_states)
    pv = ProbabilityVector(w)  # validates sign and mass
    rate = gen.uniformization_rate
    mu_rate = rate * t
    if mu_rate == 0.0:
        return ProbabilityVector(pv.w.copy())
    if mu_rate <= _PLAIN_LIMIT:
        out = _series_plain(_left_op(gen), pv.w.astype(float), mu_rate, tol)
    else:
        vec, log_scale = _series_scaled(_left_op(gen), pv.w.astype(float), mu_rate, tol)
        out = vec * (math.exp(log_scale) if log_scale > -745.0 else 0.0)
    np.clip(out, 0.0, None, out=out)
    return ProbabilityVector(out)


def dcne(gen, mu, t, tol=1e-12, return_log_mass=False):
    """Decay-conditioned evolution: mu P_t normalized by its surviving mass.

    The flow property dcne(dcne(mu, s), t) == dcne(mu, s + t) is exact, and
    the renormalized series keeps the conditional law meaningful even when
    the raw surviving mass is far below the double-precision floor.  Raises
    ExtinctMassError only when no representable mass survives at all.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    w = as_weights(mu, gen.n_states)
    m0 = w.sum()
    if m0 <= 0.0:
        raise ExtinctMassError("input vector has zero mass")
    if w.min(initial=0.0) < -1e-12:
        raise ValueError("weights must be nonnegative")
    w = np.clip(w, 0.0, None) / m0
    vec, log_scale = _series_scaled(_left_op(gen), w, gen.uniformization_rate * t, tol)
    norm = float(vec.sum())
    if norm <= 0.0:
        raise ExtinctMassError("no mass survives conditioning")
    out = ProbabilityVector(np.clip(vec / norm, 0.0, None), strict=True)
    if return_log_mass:
        return out, log_scale + math.log(norm)
    return out


def survival_vector(gen, t, tol=1e-12, return_log=False):
    """P_x(t < death) for every state x at once (right action on ones).

    With return_log=True, returns (vec, log_scale): the true probabilities
    are vec * exp(log_scale), useful once survival decays below double range.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    ones = np.ones(gen.n_states)
    mu_rate = gen.uniformization_rate * t
    if mu_rate == 0.0:
        return (ones, 0.0) if return_log else ones
    if return_log or mu_rate > _PLAIN_LIMIT:
        vec, log_scale = _series_scaled(_right_op(gen), ones, mu_rate, tol)
        np.clip(vec, 0.0, None, out=vec)
        if return_log:
            return vec, log_scale
        return vec * (math.exp(log_scale) if log_scale > -745.0 else 0.0)
    out = _series_plain(_right_op(gen), ones, mu_rate, tol)
    np.clip(out, 0.0, None, out=out)
    return out


def survival_probability(gen, mu, t, tol=1e-12):
    """log P_mu(t < death) for a probability vector mu."""
    pv, log_mass = dcne(gen, mu, t, tol=tol, return_log_mass=True)
    return log_mass


def exit_probability_vector(gen, t, tol=1e-12, kill=None):
    """P_x(death <= t) accumulated additively, accurate for tiny values.

    Uses the complement recursion e_{k+1} = K e_k + kill/L, which only adds
    nonnegative terms, so exit probabilities near zero keep full relative
    accuracy instead of cancelling against 1.  Passing kill counts only that
    sub-channel of the absorption rate (the rest still absorbs silently).
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    n = gen.n_states
    rate = gen.uniformization_rate
    mu_rate = rate * t
    if mu_rate == 0.0:
        return np.zeros(n)
    if kill is None:
        kill = gen.kill
    else:
        kill = np.asarray(kill, dtype=float)
        if kill.shape != (n,) or (kill < -1e-15).any() or \
                (kill > gen.kill + 1e-9).any():
            raise ValueError("counted kill must be a sub-channel of the "
                             "absorption rate")
    w = _poisson_weights(mu_rate, tol)
    k_mat = gen.kernel()
    src = np.clip(kill, 0.0, None) / rate
    e = np.zeros(n)
    acc = np.zeros(n)
    for k in range(1, w.shape[0]):
        e = k_mat @ e + src
        if w[k] != 0.0:
            acc += w[k] * e
    # the truncated Poisson tail can only add exits; report it as-is
    return np.clip(acc, 0.0, None)
