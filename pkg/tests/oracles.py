"""Independent reference computations for the test suite.

Everything here is derived from first principles (hand-solved eigenproblems,
Taylor-series matrix exponentials, separable ODE solutions) with no imports
from the package under test, so agreement between the two code paths is
evidence rather than tautology.
"""

import math

import numpy as np

SQRT5 = math.sqrt(5.0)
PHI = (1.0 + SQRT5) / 2.0

# Two-state chain with jump rates 0->1 and 1->0 both equal to 1 and kill
# rate 1 at state 0.  The characteristic polynomial of Q = [[-2,1],[1,-1]]
# is x^2 + 3x + 1, giving eigenvalues -(3 -+ sqrt5)/2; the Perron pair is
# alpha prop (1, phi) on the left and eta prop (1, phi) on the right, with
# the normalizations sum(alpha) = 1 and <alpha|eta> = 1 solved by hand.
GOLDEN_Q = np.array([[-2.0, 1.0], [1.0, -1.0]])
GOLDEN_OFF = np.array([[0.0, 1.0], [1.0, 0.0]])
GOLDEN_KILL = np.array([1.0, 0.0])
GOLDEN_LAMBDA0 = (3.0 - SQRT5) / 2.0
GOLDEN_LAMBDA1 = (3.0 + SQRT5) / 2.0
GOLDEN_GAP = SQRT5
GOLDEN_ALPHA = np.array([1.0, PHI]) / (1.0 + PHI)
GOLDEN_ETA = (1.0 + PHI) / (2.0 + PHI) * np.array([1.0, PHI])
GOLDEN_BETA = GOLDEN_ALPHA * GOLDEN_ETA
# h-transform of the off-diagonal rates by eta: rate(0->1)*eta1/eta0 = phi,
# rate(1->0)*eta0/eta1 = 1/phi.
GOLDEN_QPROC_RATES = np.array([PHI, 1.0 / PHI])


def dense_expm(a, t=1.0):
    """exp(t*a) by scaling-and-squaring over a plain Taylor series."""
    a = np.asarray(a, dtype=float) * float(t)
    n = a.shape[0]
    norm = float(np.abs(a).sum(axis=1).max(initial=0.0))
    s = max(0, int(math.ceil(math.log2(norm))) + 4) if norm > 1e-300 else 0
    b = a / (2.0 ** s)
    out = np.eye(n)
    term = np.eye(n)
    for k in range(1, 60):
        term = term @ b / k
        out = out + term
        if np.abs(term).max() < 1e-22:
            break
    for _ in range(s):
        out = out @ out
    return out


def dense_eigen(q):
    """(lambda0, alpha, eta, gap) of a dense generator via np.linalg.eig.

    alpha sums to one, eta satisfies <alpha|eta> = 1; the gap is the spread
    of the two largest real parts.
    """
    q = np.asarray(q, dtype=float)
    w, vr = np.linalg.eig(q)
    order = np.argsort(w.real)[::-1]
    lam0 = -float(w.real[order[0]])
    gap = float(w.real[order[0]] - w.real[order[1]]) if q.shape[0] > 1 \
        else math.inf
    eta = vr[:, order[0]].real.copy()
    wl, vl = np.linalg.eig(q.T)
    ol = np.argsort(wl.real)[::-1]
    alpha = vl[:, ol[0]].real.copy()
    alpha = alpha / alpha.sum()
    eta = eta / float(alpha @ eta)
    return lam0, alpha, eta, gap


def dense_dcne(q, mu, t):
    """Conditioned law mu e^{tQ} / mass via the Taylor exponential."""
    law = np.asarray(mu, dtype=float) @ dense_expm(q, t)
    return law / law.sum()


def dense_exit_integral(q, kill, t):
    """P_x(absorbed through the kill channel by t) = int_0^t (e^{sQ} kill) ds,
    evaluated exactly on the augmented (n+1)-state generator where the kill
    channel feeds an extra absorbing state."""
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = q
    aug[:n, n] = np.asarray(kill, dtype=float)
    return dense_expm(aug, t)[:n, n]


def feller_u(r_plus, sigma, t, lam):
    """Hand-solved Riccati flow du/dt = r u - (sigma^2/2) u^2, u(0) = lam."""
    if t == 0 or lam == 0:
        return float(lam)
    if r_plus == 0.0:
        return lam / (1.0 + 0.5 * sigma ** 2 * lam * t)
    e = math.exp(r_plus * t)
    return e * lam / (1.0 + 0.5 * sigma ** 2 * lam * (e - 1.0) / r_plus)


def feller_u_inf(r_plus, sigma, t):
    """Large-initial-value limit of feller_u."""
    if r_plus == 0.0:
        return 2.0 / (sigma ** 2 * t)
    return (2.0 * r_plus / sigma ** 2) / (1.0 - math.exp(-r_plus * t))


def feller_extinction(z0, r_plus, sigma, t):
    return math.exp(-z0 * feller_u_inf(r_plus, sigma, t))


def exp_mgf(gamma, rho):
    """E[exp(rho * T)] for T ~ Exp(gamma), rho < gamma."""
    return gamma / (gamma - rho)


def random_subgenerator_arrays(rng, max_states=8, min_states=2):
    """Random irreducible sub-generator as (off, kill) dense arrays: sparse
    positive jumps plus a cycle for irreducibility and at least one kill."""
    n = int(rng.integers(min_states, max_states + 1))
    off = rng.uniform(0.0, 2.0, (n, n))
    off[rng.random((n, n)) < 0.35] = 0.0
    np.fill_diagonal(off, 0.0)
    for i in range(n):
        off[i, (i + 1) % n] += rng.uniform(0.1, 1.0)
    kill = rng.uniform(0.0, 1.5, n) * (rng.random(n) < 0.5)
    if kill.max() <= 0.0:
        kill[int(rng.integers(n))] = rng.uniform(0.5, 1.5)
    return off, kill


def dense_q_from(off, kill):
    q = np.asarray(off, dtype=float).copy()
    np.fill_diagonal(q, -(off.sum(axis=1) + kill))
    return q


def random_law(rng, n):
    w = rng.uniform(0.0, 1.0, n) + 1e-3
    return w / w.sum()


def tv(a, b):
    return 0.5 * float(np.abs(np.asarray(a) - np.asarray(b)).sum())
