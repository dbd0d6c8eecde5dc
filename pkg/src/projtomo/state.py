"""Density operators, pure states, rank-1 projectors and distances.

All indices are 0-based. Fidelity uses the squared-overlap convention
``F(rho, sigma) = (Tr sqrt(sqrt(rho) sigma sqrt(rho)))**2`` so that
``F(|0><0|, I/2) == 1/2``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    EqualIndices,
    IndexOutOfRange,
    InvalidRank,
    TomographyError,
    ZeroCoefficient,
    ZeroTrace,
)
from .tolerances import TOL


def _frozen(arr: np.ndarray, dtype=np.complex128) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise TomographyError(f"{what} contains NaN or Inf")


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite operator.

    Construction validates the invariants; pass ``check=False`` only for
    intermediate results that are known to be physical up to rounding.
    """

    matrix: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise DimensionMismatch(f"density matrix must be square, got shape {m.shape}")
        _check_finite(m, "density matrix")
        object.__setattr__(self, "matrix", _frozen(m))
        if self.check:
            self._validate()

    def _validate(self) -> None:
        m = self.matrix
        if not np.array_equal(m, m.conj().T):
            raise TomographyError("density matrix is not Hermitian")
        tr = np.trace(m).real
        if abs(tr - 1.0) > TOL.spectral:
            raise TomographyError(f"trace {tr!r} differs from 1")
        lam = np.linalg.eigvalsh(m)
        if lam.min() < -TOL.spectral:
            raise TomographyError(f"negative eigenvalue {lam.min()!r}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))

    @classmethod
    def from_pure(cls, psi: "PureState") -> "DensityMatrix":
        v = psi.amplitudes
        m = np.outer(v, v.conj())
        return cls(0.5 * (m + m.conj().T))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim) / dim)

    @classmethod
    def basis(cls, k: int, dim: int) -> "DensityMatrix":
        if not 0 <= k < dim:
            raise IndexOutOfRange(f"basis index {k} outside [0, {dim})")
        m = np.zeros((dim, dim))
        m[k, k] = 1.0
        return cls(m)

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.amplitudes)
        if v.ndim != 1 or v.size < 1:
            raise DimensionMismatch("pure state must be a non-empty vector")
        _check_finite(v, "state vector")
        norm = np.linalg.norm(v)
        if abs(norm - 1.0) > TOL.structural:
            raise TomographyError(f"state norm {norm!r} differs from 1")
        object.__setattr__(self, "amplitudes", _frozen(v))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @classmethod
    def basis(cls, k: int, dim: int) -> "PureState":
        if not 0 <= k < dim:
            raise IndexOutOfRange(f"basis index {k} outside [0, {dim})")
        v = np.zeros(dim, dtype=complex)
        v[k] = 1.0
        return cls(v)


@dataclass(frozen=True)
class SuperpositionSpec:
    """Coefficients of ``N_a (|n> + a |m>)`` with ``N_a = 1/sqrt(1 + |a|^2)``."""

    n: int
    m: int
    a: complex

    def __post_init__(self):
        object.__setattr__(self, "a", complex(self.a))
        if self.n == self.m:
            raise EqualIndices(f"n and m must differ (both {self.n})")
        if self.a == 0:
            raise ZeroCoefficient("superposition coefficient a must be nonzero")
        if not np.isfinite(self.a):
            raise TomographyError("superposition coefficient must be finite")

    @property
    def norm_sq(self) -> float:
        """N_a squared."""
        return 1.0 / (1.0 + abs(self.a) ** 2)


@dataclass(frozen=True, eq=False)
class Projector:
    state: PureState

    @property
    def dim(self) -> int:
        return self.state.dim

    def matrix(self) -> np.ndarray:
        v = self.state.amplitudes
        return np.outer(v, v.conj())


def make_superposition(spec: SuperpositionSpec, dim: int) -> PureState:
    if not (0 <= spec.n < dim and 0 <= spec.m < dim):
        raise IndexOutOfRange(f"indices ({spec.n}, {spec.m}) outside [0, {dim})")
    na = np.sqrt(spec.norm_sq)
    v = np.zeros(dim, dtype=complex)
    v[spec.n] = na
    v[spec.m] = na * spec.a
    return PureState(v)


def expectation(rho: DensityMatrix, p: Projector) -> float:
    """Tr(rho P) for a rank-1 projector, clamped to [0, 1]."""
    if rho.dim != p.dim:
        raise DimensionMismatch(f"state dim {rho.dim} vs projector dim {p.dim}")
    v = p.state.amplitudes
    val = np.vdot(v, rho.matrix @ v).real
    return float(min(1.0, max(0.0, val)))


def _sqrtm_psd(m: np.ndarray) -> np.ndarray:
    lam, vec = np.linalg.eigh(m)
    # eigenvalues at rounding level are zeros; their square roots (~1e-8) are not
    cut = 64 * np.finfo(float).eps * max(1.0, float(np.abs(lam).max()))
    lam = np.where(lam > cut, lam, 0.0)
    return (vec * np.sqrt(lam)) @ vec.conj().T


def fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Squared-overlap Uhlmann fidelity, computed as the squared nuclear norm of sqrt(rho) sqrt(sigma)."""
    if rho.dim != sigma.dim:
        raise DimensionMismatch(f"dims {rho.dim} and {sigma.dim} differ")
    sv = np.linalg.svd(_sqrtm_psd(rho.matrix) @ _sqrtm_psd(sigma.matrix), compute_uv=False)
    return float(min(1.0, sv.sum() ** 2))


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    if rho.dim != sigma.dim:
        raise DimensionMismatch(f"dims {rho.dim} and {sigma.dim} differ")
    lam = np.linalg.eigvalsh(rho.matrix - sigma.matrix)
    return float(min(1.0, 0.5 * np.abs(lam).sum()))


def random_density(dim: int, rank: int | None = None, seed: int = 0) -> DensityMatrix:
    """Ginibre-ensemble state G G^dag / Tr(G G^dag), G of shape (dim, rank)."""
    if rank is None:
        rank = dim
    if not 1 <= rank <= dim:
        raise InvalidRank(f"rank {rank} outside [1, {dim}]")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    m = g @ g.conj().T
    m = 0.5 * (m + m.conj().T)
    return DensityMatrix(m / np.trace(m).real)


def nearest_physical(rho_hat: np.ndarray) -> DensityMatrix:
    """Clip negative eigenvalues of a Hermitian estimate and renormalise."""
    m = np.asarray(rho_hat, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    if np.abs(m - m.conj().T).max(initial=0.0) > TOL.spectral:
        raise TomographyError("input to nearest_physical is not Hermitian")
    m = 0.5 * (m + m.conj().T)
    lam, vec = np.linalg.eigh(m)
    if lam.min() >= 0.0 and abs(lam.sum() - 1.0) <= TOL.structural:
        return DensityMatrix(m)
    lam = np.clip(lam, 0.0, None)
    total = lam.sum()
    if total <= 0.0:
        raise ZeroTrace("all eigenvalues clipped to zero")
    out = (vec * (lam / total)) @ vec.conj().T
    return DensityMatrix(0.5 * (out + out.conj().T))


# ---------------------------------------------------------------------------
# JSON


def density_to_json(rho: DensityMatrix) -> dict:
    m = rho.matrix
    return {"dim": rho.dim, "re": m.real.tolist(), "im": m.imag.tolist()}


def density_from_json(obj: dict) -> tuple[DensityMatrix, float]:
    """Read the ``{"dim", "re", "im"}`` layout.

    Returns the state and the Frobenius norm of the Hermitian correction
    ``(rho + rho^dag)/2 - rho`` that was applied on read.
    """
    try:
        dim = int(obj["dim"])
        m = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise TomographyError(f"malformed density matrix JSON: {exc}") from exc
    if m.shape != (dim, dim):
        raise DimensionMismatch(f"declared dim {dim} but data has shape {m.shape}")
    sym = 0.5 * (m + m.conj().T)
    correction = float(np.linalg.norm(sym - m))
    return DensityMatrix(sym), correction


def save_density(rho: DensityMatrix, path) -> None:
    Path(path).write_text(json.dumps(density_to_json(rho), indent=1))


def load_density(path) -> tuple[DensityMatrix, float]:
    return density_from_json(json.loads(Path(path).read_text()))
