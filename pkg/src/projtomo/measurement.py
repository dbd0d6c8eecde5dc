"""Expectation oracle, finite-shot sampling and detector loss.

Random streams: each projector (or histogram) gets its own generator seeded
from ``SeedSequence([seed, ordinal])``, so results do not depend on the
order or the process in which projectors are sampled.
"""
from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln

from . import _kernels
from .errors import (
    DimensionMismatch,
    IllConditioned,
    IllConditionedWarning,
    InvalidEfficiency,
    TomographyError,
)
from .representations import (
    Diagonal,
    ExpectationMap,
    ExpectationRecord,
    MeasurementPlan,
    TwoState,
)
from .state import DensityMatrix, Projector, expectation
from .tolerances import TOL


@dataclass(frozen=True)
class ShotConfig:
    """Repetitions per projector (or per photocount histogram), master seed, detector efficiency.

    ``efficiency`` only enters photocount histograms; projector expectations
    are sampled as ideal binomial counts.
    """

    shots: int
    seed: int = 0
    efficiency: float = 1.0

    def __post_init__(self):
        if int(self.shots) != self.shots or self.shots < 1:
            raise TomographyError(f"shots must be a positive integer, got {self.shots!r}")
        if not 0 < self.efficiency <= 1:
            raise InvalidEfficiency(f"efficiency {self.efficiency!r} outside (0, 1]")


def stream(seed: int, ordinal: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(ordinal)]))


def sample_expectation(rho: DensityMatrix, p: Projector, cfg: ShotConfig, ordinal: int = 0,
                       spec=None) -> ExpectationRecord:
    if rho.dim != p.dim:
        raise DimensionMismatch(f"state dim {rho.dim} vs projector dim {p.dim}")
    prob = expectation(rho, p)
    k = stream(cfg.seed, ordinal).binomial(cfg.shots, prob)
    return ExpectationRecord(spec, k / cfg.shots, cfg.shots, cfg.seed)


def exact_expectations(rho: DensityMatrix, plan: MeasurementPlan) -> ExpectationMap:
    if rho.dim != plan.dim:
        raise DimensionMismatch(f"state dim {rho.dim} vs plan dim {plan.dim}")
    return ExpectationMap(plan.dim, (ExpectationRecord(s, expectation(rho, s.projector(plan.dim)))
                                     for s in plan))


def sample_expectations(rho: DensityMatrix, plan: MeasurementPlan, cfg: ShotConfig) -> ExpectationMap:
    """One binomial draw per projector; the ordinal is the spec's position in the plan."""
    if rho.dim != plan.dim:
        raise DimensionMismatch(f"state dim {rho.dim} vs plan dim {plan.dim}")
    recs = (sample_expectation(rho, s.projector(plan.dim), cfg, i, s) for i, s in enumerate(plan))
    return ExpectationMap(plan.dim, recs)


# ---------------------------------------------------------------------------
# photon counting


@dataclass(frozen=True, eq=False)
class PhotonCountDistribution:
    """Probabilities of 0..cutoff counts.

    ``strict=False`` skips the positivity / normalisation checks; inverse
    Bernoulli output on noisy data is built that way so negative entries
    survive for inspection (see :attr:`negative_mass`).
    """

    probs: np.ndarray
    tail_tol: float = TOL.tail
    strict: bool = True

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise DimensionMismatch("photon-count distribution must be a non-empty vector")
        if not np.all(np.isfinite(p)):
            raise TomographyError("photon-count distribution contains NaN or Inf")
        if self.strict:
            if p.min() < -TOL.structural:
                raise TomographyError(f"negative probability {p.min()!r}")
            if abs(p.sum() - 1.0) > self.tail_tol:
                raise TomographyError(f"total probability {p.sum()!r} differs from 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def cutoff(self) -> int:
        return self.probs.size - 1

    @property
    def negative_mass(self) -> float:
        return float(-self.probs[self.probs < 0].sum())

    def cleaned(self) -> "PhotonCountDistribution":
        """Clip negatives and renormalise."""
        p = np.clip(self.probs, 0.0, None)
        return PhotonCountDistribution(p / p.sum(), self.tail_tol)

    def to_json(self) -> dict:
        return {"cutoff": self.cutoff, "probs": self.probs.tolist()}

    @classmethod
    def from_json(cls, obj: dict, **kw) -> "PhotonCountDistribution":
        probs = obj["probs"]
        if len(probs) != int(obj["cutoff"]) + 1:
            raise DimensionMismatch("cutoff does not match length of probs")
        return cls(np.asarray(probs, dtype=float), **kw)


def _check_eta(eta: float) -> None:
    if not 0 < eta <= 1:
        raise InvalidEfficiency(f"efficiency {eta!r} outside (0, 1]")


def loss_matrix(cutoff: int, eta: float) -> np.ndarray:
    _check_eta(eta)
    return _kernels.loss_matrix(int(cutoff), float(eta))


def bernoulli_loss(d: PhotonCountDistribution, eta: float) -> PhotonCountDistribution:
    """Counts after each photon is detected independently with probability ``eta``."""
    out = loss_matrix(d.cutoff, eta) @ d.probs
    return PhotonCountDistribution(out, d.tail_tol, d.strict)


def amplification(cutoff: int, eta: float) -> float:
    """Infinity norm of the inverse loss matrix, i.e. the worst-case noise gain.

    The inverse has entries ``C(n, m) eta^-n (eta - 1)^(n - m)``.
    """
    _check_eta(eta)
    n = np.arange(cutoff + 1)[None, :]
    m = np.arange(cutoff + 1)[:, None]
    d = np.clip(n - m, 0, None)
    log_1me = np.log1p(-eta) if eta < 1 else -np.inf
    with np.errstate(invalid="ignore"):
        lw = -n * np.log(eta) + np.where(d == 0, 0.0, d * log_1me)
    lc = gammaln(n + 1) - gammaln(np.minimum(m, n) + 1) - gammaln(d + 1)
    mag = np.where(m <= n, np.exp(lc + lw), 0.0)
    return float(mag.sum(axis=1).max())


def _invert(meas: np.ndarray, eta: float, axis: int, max_amp: float) -> np.ndarray:
    cutoff = meas.shape[axis] - 1
    if eta <= 0.5:
        warnings.warn(f"inverse Bernoulli at efficiency {eta} <= 0.5 amplifies noise strongly",
                      IllConditionedWarning, stacklevel=3)
    gain = amplification(cutoff, eta)
    if gain > max_amp:
        raise IllConditioned(f"inverse Bernoulli amplification {gain:.3g} exceeds {max_amp:.3g}")
    lmat = loss_matrix(cutoff, eta)
    moved = np.moveaxis(meas, axis, 0)
    solved = solve_triangular(lmat, moved.reshape(cutoff + 1, -1), lower=False)
    return np.moveaxis(solved.reshape(moved.shape), 0, axis)


def inverse_bernoulli(d: PhotonCountDistribution, eta: float, clip: bool = False,
                      max_amplification: float = TOL.max_amplification) -> PhotonCountDistribution:
    """Undo :func:`bernoulli_loss` by back substitution.

    Negative entries produced by noisy input are kept unless ``clip`` is set.
    """
    _check_eta(eta)
    out = PhotonCountDistribution(_invert(d.probs, eta, 0, max_amplification), d.tail_tol,
                                  strict=False)
    return out.cleaned() if clip else out


def bernoulli_loss_2d(grid: np.ndarray, eta: float) -> np.ndarray:
    """Independent loss on both detectors of a joint ``P[p, q]`` grid."""
    lmat = loss_matrix(grid.shape[0] - 1, eta)
    return lmat @ grid @ lmat.T


def inverse_bernoulli_2d(grid: np.ndarray, eta: float,
                         max_amplification: float = TOL.max_amplification) -> np.ndarray:
    _check_eta(eta)
    return _invert(_invert(grid, eta, 0, max_amplification), eta, 1, max_amplification)


def sample_histogram(probs: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Relative frequencies of ``shots`` multinomial draws over any-shaped ``probs``."""
    flat = np.clip(np.asarray(probs, dtype=float).ravel(), 0.0, None)
    flat = flat / flat.sum()
    counts = rng.multinomial(shots, flat)
    return (counts / shots).reshape(np.shape(probs))


# ---------------------------------------------------------------------------
# CSV


CSV_COLUMNS = ("spec_id", "kind", "n", "m", "a_re", "a_im", "estimate", "shots", "seed")


def records_to_csv(data: ExpectationMap) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for i, r in enumerate(data.records()):
        s = r.spec
        if isinstance(s, Diagonal):
            row = [i, "diag", s.n, "", "", ""]
        else:
            row = [i, "pair", s.n, s.m, repr(s.a.real), repr(s.a.imag)]
        row += [repr(r.estimate), "" if r.shots is None else r.shots,
                "" if r.seed is None else r.seed]
        w.writerow(row)
    return buf.getvalue()


def records_from_csv(text: str, dim: int | None = None) -> ExpectationMap:
    """Parse the expectation CSV; errors name the offending line."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != CSV_COLUMNS:
        raise TomographyError(f"line 1: expected header {','.join(CSV_COLUMNS)}")
    recs = []
    top = -1
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        try:
            if len(row) != len(CSV_COLUMNS):
                raise ValueError(f"expected {len(CSV_COLUMNS)} fields, got {len(row)}")
            _, kind, n, m, a_re, a_im, est, shots, seed = row
            if kind == "diag":
                spec = Diagonal(int(n))
                top = max(top, spec.n)
            elif kind == "pair":
                spec = TwoState(int(n), int(m), complex(float(a_re), float(a_im)))
                top = max(top, spec.n, spec.m)
            else:
                raise ValueError(f"unknown kind {kind!r}")
            if not 0.0 <= float(est) <= 1.0:
                raise ValueError(f"estimate {est} outside [0, 1]")
            recs.append(ExpectationRecord(spec, float(est), int(shots) if shots else None,
                                          int(seed) if seed else None))
        except (ValueError, TomographyError) as exc:
            raise TomographyError(f"line {line}: {exc}") from exc
    return ExpectationMap(dim if dim is not None else top + 1, recs)


def save_records(data: ExpectationMap, path) -> None:
    Path(path).write_text(records_to_csv(data))


def load_records(path, dim: int | None = None) -> ExpectationMap:
    return records_from_csv(Path(path).read_text(), dim)


def save_distribution(d: PhotonCountDistribution, path) -> None:
    Path(path).write_text(json.dumps(d.to_json()))
