"""Inner loops for the optics and detector-loss code.

The two hot kernels (joint photocount grid, loss matrix) exist twice: an
explicit-loop version compiled with ``numba.njit`` and a vectorised numpy
version. The loop versions are used when numba imports cleanly and
``PROJTOMO_DISABLE_NUMBA`` is unset or falsy; otherwise the numpy versions
are bound to the public names. Both are importable directly
(``*_loops`` / ``*_numpy``) so the test suite can check one against the
other.

The beam-splitter amplitude table is built once per splitter and cached by
the caller, so it has a single (spectral) implementation; the closed-form
sum is kept alongside as a reference.
"""
import math
import os

import numpy as np
from scipy.linalg import schur
from scipy.special import gammaln

_FLAG = os.environ.get("PROJTOMO_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False


def _jit(fn):
    if HAS_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn


# ---------------------------------------------------------------------------
# loop kernels


@_jit
def _xlogy(e, logb):
    # e * log(b) with the 0 * log(0) = 0 convention
    if e == 0:
        return 0.0
    return e * logb


@_jit
def joint_grid_loops(rho, psi, table, smax):
    """Joint photocount probabilities P[p, q] for p + q <= smax.

    ``rho`` is the signal, ``psi`` the probe amplitudes; ``table`` is an
    amplitude table with first index the signal photon number.
    """
    dim = rho.shape[0]
    npsi = psi.shape[0]
    nmax = table.shape[0] - 1
    out = np.zeros((smax + 1, smax + 1))
    v = np.zeros(dim, dtype=np.complex128)
    for s in range(smax + 1):
        lo = max(0, s - npsi + 1, s - nmax)
        hi = min(dim - 1, s, nmax)
        if lo > hi:
            continue
        for p in range(s + 1):
            for i in range(dim):
                v[i] = 0.0
            for i in range(lo, hi + 1):
                v[i] = psi[s - i] * table[i, s - i, p]
            acc = 0.0
            for i in range(lo, hi + 1):
                if v[i] == 0:
                    continue
                row = 0.0 + 0.0j
                for j in range(lo, hi + 1):
                    row += rho[i, j] * np.conj(v[j])
                acc += (v[i] * row).real
            out[p, s - p] = acc
    return out


@_jit
def loss_matrix_loops(cutoff, eta):
    """L[m, n] = C(n, m) eta^m (1 - eta)^(n - m), upper triangular."""
    out = np.zeros((cutoff + 1, cutoff + 1))
    log_e = math.log(eta) if eta > 0.0 else -np.inf
    log_1me = math.log(1.0 - eta) if eta < 1.0 else -np.inf
    for n in range(cutoff + 1):
        for m in range(n + 1):
            lw = _xlogy(1.0 * m, log_e) + _xlogy(1.0 * (n - m), log_1me)
            if lw == -np.inf:
                continue
            lc = math.lgamma(n + 1.0) - math.lgamma(m + 1.0) - math.lgamma(n - m + 1.0)
            out[m, n] = math.exp(lc + lw)
    return out


# ---------------------------------------------------------------------------
# numpy kernels


def _xlogy_np(e, logb):
    with np.errstate(invalid="ignore"):
        return np.where(e == 0, 0.0, e * logb)


def joint_grid_numpy(rho, psi, table, smax):
    dim = rho.shape[0]
    npsi = psi.shape[0]
    nmax = table.shape[0] - 1
    out = np.zeros((smax + 1, smax + 1))
    for s in range(smax + 1):
        i = np.arange(max(0, s - npsi + 1, s - nmax), min(dim - 1, s, nmax) + 1)
        if i.size == 0:
            continue
        p = np.arange(s + 1)
        v = psi[s - i][None, :] * table[i[:, None], s - i[:, None], p[None, :]].T
        block = rho[np.ix_(i, i)]
        probs = np.einsum("pi,ij,pj->p", v, block, v.conj()).real
        out[p, s - p] = probs
    return out


def loss_matrix_numpy(cutoff, eta):
    n = np.arange(cutoff + 1)[None, :]
    m = np.arange(cutoff + 1)[:, None]
    mask = m <= n
    d = np.clip(n - m, 0, None)
    log_e = np.log(eta) if eta > 0 else -np.inf
    log_1me = np.log1p(-eta) if eta < 1 else -np.inf
    lw = _xlogy_np(m * 1.0, log_e) + _xlogy_np(d * 1.0, log_1me)
    lc = gammaln(n + 1) - gammaln(np.minimum(m, n) + 1) - gammaln(d + 1)
    with np.errstate(under="ignore"):
        return np.where(mask, np.exp(lc + lw), 0.0)


# ---------------------------------------------------------------------------
# beam-splitter amplitudes


def amplitude_table_spectral(nmax, tau, refl, phi_tau, phi_rho):
    """A[nu, mu, p] for 0 <= nu, mu <= nmax and 0 <= p <= 2 nmax.

    The mode transformation
    ``a1^dag -> sqrt(tau) e^{i phi_tau} c1^dag - sqrt(refl) e^{-i phi_rho} c2^dag``,
    ``a2^dag -> sqrt(refl) e^{i phi_rho} c1^dag + sqrt(tau) e^{-i phi_tau} c2^dag``
    is a 2x2 SU(2) matrix ``S``. On ``s`` photons it acts as ``exp(i H_s)``
    with ``H_s`` the tridiagonal lift of ``K = -i log(S^T)``; diagonalising
    the Hermitian ``H_s`` gives every block unitary to rounding, unlike the
    alternating closed-form sum whose cancellation grows with photon number.
    """
    smax = 2 * nmax
    t, r = math.sqrt(tau), math.sqrt(refl)
    S = np.array([[t * np.exp(1j * phi_tau), -r * np.exp(-1j * phi_rho)],
                  [r * np.exp(1j * phi_rho), t * np.exp(-1j * phi_tau)]])
    T, Z = schur(S.T, output="complex")
    K = (Z * np.angle(np.diag(T))) @ Z.conj().T
    K = 0.5 * (K + K.conj().T)
    out = np.zeros((nmax + 1, nmax + 1, smax + 1), dtype=np.complex128)
    for s in range(smax + 1):
        k = np.arange(s + 1)
        H = np.diag((K[0, 0] * k + K[1, 1] * (s - k)).astype(complex))
        hop = np.sqrt((k[:-1] + 1.0) * (s - k[:-1]))
        H[k[:-1] + 1, k[:-1]] = K[0, 1] * hop
        H[k[:-1], k[:-1] + 1] = K[1, 0] * hop
        lam, V = np.linalg.eigh(H)
        U = (V * np.exp(1j * lam)) @ V.conj().T
        nu = np.arange(max(0, s - nmax), min(s, nmax) + 1)
        out[nu, s - nu, : s + 1] = U[:, nu].T
    return out


def amplitude_closed_form(nmax, tau, refl, phi_tau, phi_rho):
    """Reference: the explicit double sum over binomial terms, in log space.

    Kept for cross-checking the recurrence at moderate photon numbers; it
    loses accuracy to cancellation as ``nu + mu`` grows.
    """
    smax = 2 * nmax
    nu = np.arange(nmax + 1)[:, None, None, None]
    mu = np.arange(nmax + 1)[None, :, None, None]
    p = np.arange(smax + 1)[None, None, :, None]
    k = np.arange(nmax + 1)[None, None, None, :]
    l = p - k
    s = nu + mu
    valid = (l >= 0) & (l <= mu) & (k <= nu) & (p <= s)
    # clamp indices so gammaln sees non-negative arguments; masked out below
    kc = np.minimum(k, nu)
    lc_ = np.clip(l, 0, None)
    lcm = np.clip(mu - l, 0, None)
    nkc = np.clip(nu - k, 0, None)
    spc = np.clip(s - p, 0, None)
    pre = 0.5 * (gammaln(p + 1) + gammaln(spc + 1) - gammaln(nu + 1) - gammaln(mu + 1))
    lc = (gammaln(nu + 1) - gammaln(kc + 1) - gammaln(nkc + 1)
          + gammaln(mu + 1) - gammaln(lc_ + 1) - gammaln(lcm + 1))
    log_t = np.log(tau) if tau > 0 else -np.inf
    log_r = np.log(refl) if refl > 0 else -np.inf
    lw = _xlogy_np(0.5 * (mu + k - l), log_t) + _xlogy_np(0.5 * (nu - k + l), log_r)
    with np.errstate(invalid="ignore", over="ignore"):
        terms = np.where(valid, (-1.0) ** k * np.exp(pre + lc + lw), 0.0)
    acc = terms.sum(axis=-1) * (-1.0) ** nu[..., 0]
    nu3, mu3, p3 = nu[..., 0], mu[..., 0], p[..., 0]
    phase = phi_tau * (p3 - mu3) + phi_rho * (p3 - nu3)
    return (acc * np.exp(1j * phase)).astype(np.complex128)


# computed once per beam splitter and cached by the caller, so one implementation serves both
amplitude_table = amplitude_table_spectral

if HAS_NUMBA and not _DISABLED:
    BACKEND = "numba"
    joint_grid = joint_grid_loops
    loss_matrix = loss_matrix_loops
else:
    BACKEND = "numpy"
    joint_grid = joint_grid_numpy
    loss_matrix = loss_matrix_numpy
