"""Reconstruction from two-state projector expectations.

Two schemes live here:

* the *minimal* scheme: every diagonal element plus two superposition
  projectors per index pair ``n < m``, inverted pair by pair through a 2x2
  trigonometric system (optionally with a third, redundant projector fitted
  by least squares);
* the *operator basis* scheme: the quadruplet ``(|n> +- |m>)/sqrt2``,
  ``(|n> +- i|m>)/sqrt2`` per pair, combined into the orthogonal Hermitian
  basis ``R^{nm}``, ``J^{nm}``.

Both are non-recursive: each matrix element depends only on the diagonal
and on the projectors of its own subspace.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Union

import numpy as np

from .errors import (
    DegenerateAngles,
    IndexOutOfRange,
    MissingExpectation,
    NonSquare,
    TomographyError,
    ZeroCoefficient,
    ZeroTrace,
)
from .state import (
    DensityMatrix,
    Projector,
    PureState,
    SuperpositionSpec,
    make_superposition,
    nearest_physical,
)
from .tolerances import TOL

SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# projector specs and plans


@dataclass(frozen=True)
class Diagonal:
    n: int

    kind = "diag"

    def projector(self, dim: int) -> Projector:
        return Projector(PureState.basis(self.n, dim))


@dataclass(frozen=True)
class TwoState:
    n: int
    m: int
    a: complex

    kind = "pair"

    def __post_init__(self):
        object.__setattr__(self, "a", complex(self.a))
        SuperpositionSpec(self.n, self.m, self.a)  # validates

    @property
    def superposition(self) -> SuperpositionSpec:
        return SuperpositionSpec(self.n, self.m, self.a)

    def projector(self, dim: int) -> Projector:
        return Projector(make_superposition(self.superposition, dim))


ProjectorSpec = Union[Diagonal, TwoState]


def _order_key(spec: ProjectorSpec):
    if isinstance(spec, Diagonal):
        return (0, spec.n, -1)
    return (1, spec.n, spec.m)


@dataclass(frozen=True)
class AnglePair:
    """Phases and magnitudes of the two probe coefficients ``a`` and ``b``.

    The default is the sensitivity-optimised choice ``a = 1``, ``b = i``.
    """

    alpha: float = 0.0
    beta: float = math.pi / 2
    mag_a: float = 1.0
    mag_b: float = 1.0

    def __post_init__(self):
        if self.mag_a <= 0 or self.mag_b <= 0:
            raise ZeroCoefficient("probe magnitudes must be positive")
        if abs(math.sin(self.beta - self.alpha)) < TOL.cond:
            raise DegenerateAngles(
                f"|sin(beta - alpha)| = {abs(math.sin(self.beta - self.alpha)):.3g} below {TOL.cond}"
            )

    @property
    def a(self) -> complex:
        return self.mag_a * complex(math.cos(self.alpha), math.sin(self.alpha))

    @property
    def b(self) -> complex:
        return self.mag_b * complex(math.cos(self.beta), math.sin(self.beta))


@dataclass(frozen=True)
class MeasurementPlan:
    """Ordered, duplicate-free list of projector specs for a ``dim``-level system.

    Specs are stored diagonals first (ascending), then pairs ordered by
    ``(n, m)``; projectors sharing a pair keep the order they were given in,
    which is how the reconstruction tells probe ``a`` from probe ``b``.
    """

    dim: int
    specs: tuple

    def __post_init__(self):
        specs = tuple(self.specs)
        if len(set(specs)) != len(specs):
            raise TomographyError("measurement plan contains duplicate specs")
        for s in specs:
            idx = (s.n,) if isinstance(s, Diagonal) else (s.n, s.m)
            if any(not 0 <= i < self.dim for i in idx):
                raise IndexOutOfRange(f"{s} outside dimension {self.dim}")
            if isinstance(s, TwoState) and not s.n < s.m:
                raise TomographyError(f"pair spec must have n < m, got {s}")
        object.__setattr__(self, "specs", tuple(sorted(specs, key=_order_key)))

    def __len__(self):
        return len(self.specs)

    def __iter__(self):
        return iter(self.specs)

    def pairs(self) -> dict:
        """Map ``(n, m)`` to the pair specs of that subspace, in plan order."""
        out = defaultdict(list)
        for s in self.specs:
            if isinstance(s, TwoState):
                out[(s.n, s.m)].append(s)
        return dict(out)


def minimal_plan(dim: int, angles: AnglePair = AnglePair()) -> MeasurementPlan:
    """All ``dim`` diagonals plus probes ``a`` and ``b`` on every pair.

    That is ``dim**2`` projectors; one diagonal is redundant given the unit
    trace, but measuring all of them keeps the diagonal estimate symmetric.
    """
    if dim < 2:
        raise TomographyError("minimal plan needs dim >= 2")
    specs = [Diagonal(k) for k in range(dim)]
    for n in range(dim):
        for m in range(n + 1, dim):
            specs += [TwoState(n, m, angles.a), TwoState(n, m, angles.b)]
    return MeasurementPlan(dim, tuple(specs))


def redundant_plan(dim: int, angles: AnglePair = AnglePair(), gamma: float = math.pi / 4,
                   mag_c: float = 1.0) -> MeasurementPlan:
    """Minimal plan with a third probe ``c = mag_c e^{i gamma}`` on each pair."""
    _check_triple(angles.alpha, angles.beta, gamma)
    c = mag_c * complex(math.cos(gamma), math.sin(gamma))
    specs = [Diagonal(k) for k in range(dim)]
    for n in range(dim):
        for m in range(n + 1, dim):
            specs += [TwoState(n, m, angles.a), TwoState(n, m, angles.b), TwoState(n, m, c)]
    return MeasurementPlan(dim, tuple(specs))


QUADRUPLET_COEFFS = (1, -1, 1j, -1j)  # a+, a-, b+, b-


def operator_basis_plan(dim: int) -> MeasurementPlan:
    """``2 dim**2 - dim`` projectors: the quadruplet for each pair plus diagonals.

    For ``n == m`` only ``|a+^{nn}> = sqrt2 |n>`` survives, so its expectation
    is twice the diagonal projector's and the diagonal spec stands in for it.
    """
    specs = [Diagonal(k) for k in range(dim)]
    for n in range(dim):
        for m in range(n + 1, dim):
            specs += [TwoState(n, m, c) for c in QUADRUPLET_COEFFS]
    return MeasurementPlan(dim, tuple(specs))


# ---------------------------------------------------------------------------
# expectation containers


@dataclass(frozen=True)
class ExpectationRecord:
    spec: ProjectorSpec
    estimate: float
    shots: int | None = None
    seed: int | None = None


class ExpectationMap(Mapping):
    """Read-only mapping ``ProjectorSpec -> ExpectationRecord``."""

    def __init__(self, dim: int, records: Iterable[ExpectationRecord]):
        self.dim = dim
        self._records = {}
        for r in records:
            if not -TOL.structural <= r.estimate <= 1 + TOL.structural:
                raise TomographyError(f"estimate {r.estimate!r} for {r.spec} outside [0, 1]")
            self._records[r.spec] = r

    def __getitem__(self, spec):
        try:
            return self._records[spec]
        except KeyError:
            raise MissingExpectation(f"no expectation for {spec}") from None

    def __iter__(self):
        return iter(sorted(self._records, key=_order_key))

    def __len__(self):
        return len(self._records)

    def estimate(self, spec) -> float:
        return self[spec].estimate

    def records(self) -> list[ExpectationRecord]:
        return [self._records[s] for s in self]

    def plan(self) -> MeasurementPlan:
        return MeasurementPlan(self.dim, tuple(r.spec for r in self._records.values()))


# ---------------------------------------------------------------------------
# minimal scheme


def big_m(expect_a: float, rho_nn: float, rho_mm: float, a: complex) -> float:
    """Coherence part of ``Tr(rho A)``: equals ``N_a^2 (a rho_nm + a* rho_mn)``."""
    na2 = 1.0 / (1.0 + abs(a) ** 2)
    return expect_a - na2 * (rho_nn + abs(a) ** 2 * rho_mm)


def m_value(big: float, a: complex) -> float:
    """``M / (2|a| N_a^2) = R cos(alpha) - J sin(alpha)``."""
    if a == 0:
        raise ZeroCoefficient("coefficient a must be nonzero")
    na2 = 1.0 / (1.0 + abs(a) ** 2)
    return big / (2.0 * abs(a) * na2)


def _sin_diff(alpha: float, beta: float) -> float:
    s = math.sin(beta - alpha)
    if abs(s) < TOL.cond:
        raise DegenerateAngles(f"|sin(beta - alpha)| = {abs(s):.3g} below {TOL.cond}")
    return s


def solve_pair(m_a: float, m_b: float, angles) -> tuple[float, float]:
    """Invert ``m = R cos(theta) - J sin(theta)`` for two phases.

    ``angles`` is an :class:`AnglePair` or a plain ``(alpha, beta)`` tuple.
    """
    alpha, beta = (angles.alpha, angles.beta) if isinstance(angles, AnglePair) else angles
    s = _sin_diff(alpha, beta)
    r = (math.sin(beta) * m_a - math.sin(alpha) * m_b) / s
    j = (math.cos(beta) * m_a - math.cos(alpha) * m_b) / s
    return r, j


def _check_triple(alpha, beta, gamma) -> None:
    for x, y in ((alpha, beta), (alpha, gamma), (beta, gamma)):
        _sin_diff(x, y)


def consistency_c(m_a: float, m_b: float, alpha: float, beta: float, gamma: float) -> float:
    """Value of ``m_c`` implied by ``m_a`` and ``m_b``.

    Only ``beta - alpha`` must avoid multiples of pi; ``gamma`` equal to
    ``alpha`` or ``beta`` simply reproduces ``m_a`` or ``m_b``.
    """
    _sin_diff(alpha, beta)
    return (m_a * math.sin(beta - gamma) - m_b * math.sin(alpha - gamma)) / math.sin(beta - alpha)


def least_squares_triple(meas, angles, weights=None) -> tuple[float, float, float]:
    """Closest point to ``meas`` on the plane of consistent ``(m_a, m_b, m_c)``.

    With ``weights`` the distance is ``sum w_i (x_i - meas_i)^2``; the default
    is plain Euclidean.
    """
    alpha, beta, gamma = angles
    _check_triple(alpha, beta, gamma)
    x = np.asarray(meas, dtype=float)
    normal = np.array([math.sin(beta - gamma), -math.sin(alpha - gamma), -math.sin(beta - alpha)])
    winv = np.ones(3) if weights is None else 1.0 / np.asarray(weights, dtype=float)
    step = winv * normal * (normal @ x) / (normal @ (winv * normal))
    out = x - step
    # pin the dependent coordinate so the constraint holds to rounding
    out[2] = (out[0] * normal[0] + out[1] * normal[1]) / math.sin(beta - alpha)
    return float(out[0]), float(out[1]), float(out[2])


@dataclass
class ReconstructionReport:
    rho_hat: DensityMatrix
    raw_hermitian: np.ndarray
    per_element_residual: np.ndarray
    scheme: str
    condition_summary: float
    diagnostics: dict = field(default_factory=dict)


def _diagonal_estimates(dim: int, data: Mapping) -> tuple[np.ndarray, np.ndarray]:
    d = np.array([data[Diagonal(k)].estimate for k in range(dim)], dtype=float)
    total = d.sum()
    if total <= 0:
        raise ZeroTrace("diagonal estimates sum to zero")
    return d / total, d


def _m_variance(record: ExpectationRecord) -> float:
    if not record.shots:
        return 1.0
    p = min(max(record.estimate, 0.5 / record.shots), 1 - 0.5 / record.shots)
    a = record.spec.a
    na2 = 1.0 / (1.0 + abs(a) ** 2)
    return p * (1 - p) / record.shots / (2 * abs(a) * na2) ** 2


def reconstruct_minimal(plan: MeasurementPlan, data: Mapping, weighted: bool = False
                        ) -> ReconstructionReport:
    """Linear inversion with two (or three, least-squares) probes per pair.

    ``weighted`` switches the three-probe projection to inverse-variance
    weights estimated from the recorded shot counts.
    """
    dim = plan.dim
    for spec in plan:
        data[spec]  # raises MissingExpectation
    diag, measured_diag = _diagonal_estimates(dim, data)
    raw = np.diag(diag).astype(complex)
    resid = np.zeros((dim, dim))
    resid[np.diag_indices(dim)] = np.abs(measured_diag - diag)
    worst = 1.0
    pairs = plan.pairs()
    for n in range(dim):
        for m in range(n + 1, dim):
            specs = pairs.get((n, m))
            if not specs:
                raise MissingExpectation(f"no probes for pair ({n}, {m})")
            ms = [m_value(big_m(data[s].estimate, diag[n], diag[m], s.a), s.a) for s in specs]
            phases = [math.atan2(s.a.imag, s.a.real) for s in specs]
            if len(specs) == 2:
                r, j = solve_pair(ms[0], ms[1], (phases[0], phases[1]))
                worst = min(worst, abs(math.sin(phases[1] - phases[0])))
            elif len(specs) == 3:
                w = [1 / _m_variance(data[s]) for s in specs] if weighted else None
                fit = least_squares_triple(ms, phases, w)
                r, j = solve_pair(fit[0], fit[1], (phases[0], phases[1]))
                resid[n, m] = resid[m, n] = float(np.linalg.norm(np.subtract(ms, fit)))
                worst = min(worst, *(abs(math.sin(x - y)) for x, y in
                                     ((phases[0], phases[1]), (phases[0], phases[2]),
                                      (phases[1], phases[2]))))
            else:
                raise TomographyError(f"pair ({n}, {m}) has {len(specs)} probes; expected 2 or 3")
            raw[n, m] = complex(r, j)
            raw[m, n] = complex(r, -j)
    scheme = "minimal" if all(len(v) == 2 for v in pairs.values()) else "three_state"
    return ReconstructionReport(nearest_physical(raw), raw, resid, scheme, worst)


# ---------------------------------------------------------------------------
# operator basis scheme


class Quadruplet(NamedTuple):
    a_plus: np.ndarray
    a_minus: np.ndarray
    b_plus: np.ndarray
    b_minus: np.ndarray


def quadruplet_states(n: int, m: int, dim: int) -> Quadruplet:
    """The four vectors ``(|n> +- |m>)/sqrt2`` and ``(|n> +- i|m>)/sqrt2``.

    For ``n == m`` this yields ``sqrt2 |n>`` and three zero vectors, so the
    results are plain arrays rather than :class:`PureState`.
    """
    if not (0 <= n < dim and 0 <= m < dim):
        raise IndexOutOfRange(f"indices ({n}, {m}) outside [0, {dim})")
    en = np.zeros(dim, dtype=complex)
    em = np.zeros(dim, dtype=complex)
    en[n] = 1.0
    em[m] = 1.0
    if n == m:
        zero = np.zeros(dim, dtype=complex)
        return Quadruplet(SQRT2 * en, zero, zero.copy(), zero.copy())
    return Quadruplet((en + em) / SQRT2, (en - em) / SQRT2,
                      (en + 1j * em) / SQRT2, (en - 1j * em) / SQRT2)


def operator_basis_element(a_plus: float, a_minus: float, b_plus: float, b_minus: float) -> complex:
    """``rho_mn`` from the quadruplet expectations of the ``(n, m)`` subspace."""
    return 0.5 * complex(a_plus - a_minus, b_plus - b_minus)


def rj_operators(n: int, m: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    if not (0 <= n < dim and 0 <= m < dim):
        raise IndexOutOfRange(f"indices ({n}, {m}) outside [0, {dim})")
    nm = np.zeros((dim, dim), dtype=complex)
    nm[n, m] = 1.0
    mn = nm.T.copy()
    return (nm + mn) / SQRT2, 1j * (nm - mn) / SQRT2


def expand_in_basis(q) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients ``r[n, m] = (Q_mn + Q_nm)/2`` and ``j[n, m] = i(Q_mn - Q_nm)/2``.

    Only ``n <= m`` (``r``) and ``n < m`` (``j``) are meaningful; the rest of
    each table is filled by the same formula. For Hermitian ``Q`` these are the
    real and imaginary parts of ``Q_nm``.
    """
    q = np.asarray(q)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise NonSquare(f"expected a square matrix, got shape {q.shape}")
    r = 0.5 * (q.T + q)
    j = 0.5j * (q.T - q)
    return r, j


def reassemble(r: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Inverse of :func:`expand_in_basis` via the weighted sum over basis operators."""
    dim = r.shape[0]
    q = np.zeros((dim, dim), dtype=complex)
    for m in range(dim):
        rmm, _ = rj_operators(m, m, dim)
        q += r[m, m] * rmm / SQRT2
        for n in range(m):
            rop, jop = rj_operators(n, m, dim)
            q += SQRT2 * (r[n, m] * rop + j[n, m] * jop)
    return q


def reconstruct_operator_basis(plan: MeasurementPlan, data: Mapping) -> ReconstructionReport:
    dim = plan.dim
    for spec in plan:
        data[spec]
    diag, measured_diag = _diagonal_estimates(dim, data)
    raw = np.diag(diag).astype(complex)
    resid = np.zeros((dim, dim))
    resid[np.diag_indices(dim)] = np.abs(measured_diag - diag)
    for n in range(dim):
        for m in range(n + 1, dim):
            ap, am, bp, bm = (data[TwoState(n, m, c)].estimate for c in QUADRUPLET_COEFFS)
            # A+ + A- and B+ + B- both equal rho_nn + rho_mm; their spread is a consistency check
            resid[n, m] = resid[m, n] = abs((ap + am) - (bp + bm))
            raw[m, n] = operator_basis_element(ap, am, bp, bm)
            raw[n, m] = raw[m, n].conjugate()
    return ReconstructionReport(nearest_physical(raw), raw, resid, "operator_basis", 1.0)


# ---------------------------------------------------------------------------
# JSON


def spec_to_json(spec: ProjectorSpec) -> dict:
    if isinstance(spec, Diagonal):
        return {"kind": "diag", "n": spec.n}
    return {"kind": "pair", "n": spec.n, "m": spec.m, "a_re": spec.a.real, "a_im": spec.a.imag}


def spec_from_json(obj: dict) -> ProjectorSpec:
    kind = obj.get("kind")
    if kind == "diag":
        return Diagonal(int(obj["n"]))
    if kind == "pair":
        return TwoState(int(obj["n"]), int(obj["m"]), complex(float(obj["a_re"]), float(obj["a_im"])))
    raise TomographyError(f"unknown projector kind {kind!r}")


def plan_to_json(plan: MeasurementPlan) -> dict:
    return {"dim": plan.dim, "specs": [spec_to_json(s) for s in plan]}


def plan_from_json(obj: dict) -> MeasurementPlan:
    return MeasurementPlan(int(obj["dim"]), tuple(spec_from_json(s) for s in obj["specs"]))


def expectations_to_json(data: ExpectationMap) -> dict:
    recs = data.records()
    return {
        "dim": data.dim,
        "specs": [spec_to_json(r.spec) for r in recs],
        "estimates": [r.estimate for r in recs],
        "shots": [r.shots for r in recs],
    }


def expectations_from_json(obj: dict) -> ExpectationMap:
    specs = [spec_from_json(s) for s in obj["specs"]]
    est = obj["estimates"]
    shots = obj.get("shots") or [None] * len(specs)
    if not len(specs) == len(est) == len(shots):
        raise TomographyError("specs, estimates and shots arrays differ in length")
    return ExpectationMap(int(obj["dim"]),
                          (ExpectationRecord(s, float(e), h) for s, e, h in zip(specs, est, shots)))


def save_plan(plan: MeasurementPlan, path) -> None:
    Path(path).write_text(json.dumps(plan_to_json(plan), indent=1))


def load_plan(path) -> MeasurementPlan:
    return plan_from_json(json.loads(Path(path).read_text()))
