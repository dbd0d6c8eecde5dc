"""Single-mode optical implementation of the minimal scheme.

A probe prepared in ``N_a(|n> + a|m>)`` (``n > m``) and the signal mode are
mixed on a lossless beam splitter and both outputs are photon-counted. For
total photon number ``s = N + n = M + m`` the joint count probability
``P(p, s - p)`` contains the coherence ``rho_MN`` (``M - N = n - m``) through

    2 Re{a rho_MN A_p(M, m) A_p(N, n)^*}

so two probes with different phases give every element of the diagonal
band ``M - N = n - m`` from just two joint distributions. Each usable
``p`` gives an independent estimate; by default they are averaged.

Amplitudes ``A_p(nu, mu)`` follow the beam-splitter conventions with
transmittance ``tau``, reflectance ``refl`` and phases ``phi_tau``,
``phi_rho``. In the joint distribution the signal photon number occupies
the first argument and the probe photon number the second.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import (
    CutoffTooSmall,
    DimensionMismatch,
    EqualIndices,
    IndexOutOfRange,
    TomographyError,
    VanishingAmplitude,
    ZeroCoefficient,
)
from .measurement import (
    PhotonCountDistribution,
    ShotConfig,
    inverse_bernoulli,
    inverse_bernoulli_2d,
    loss_matrix,
    sample_histogram,
    stream,
)
from .representations import ReconstructionReport, solve_pair
from .state import DensityMatrix, PureState, SuperpositionSpec, make_superposition, nearest_physical
from .tolerances import TOL


@dataclass(frozen=True)
class BeamSplitterParams:
    tau: float = 0.5
    refl: float = 0.5
    phi_tau: float = 0.0
    phi_rho: float = 0.0

    def __post_init__(self):
        if self.tau < 0 or self.refl < 0 or abs(self.tau + self.refl - 1.0) > TOL.structural:
            raise TomographyError(
                f"beam splitter must be lossless with tau, refl >= 0 (got {self.tau}, {self.refl})")


@dataclass(frozen=True)
class ProbeSpec:
    """Probe ``N_a(|n> + a|m>)`` with ``n > m``."""

    n: int
    m: int
    a: complex

    def __post_init__(self):
        object.__setattr__(self, "a", complex(self.a))
        if self.n == self.m:
            raise EqualIndices("probe Fock indices must differ")
        if not self.n > self.m >= 0:
            raise TomographyError(f"probe needs n > m >= 0, got n={self.n}, m={self.m}")
        if self.a == 0:
            raise ZeroCoefficient("probe coefficient must be nonzero")

    @property
    def norm_sq(self) -> float:
        return 1.0 / (1.0 + abs(self.a) ** 2)

    @property
    def phase(self) -> float:
        return math.atan2(self.a.imag, self.a.real)

    def state(self, dim: int) -> PureState:
        if self.n >= dim:
            raise CutoffTooSmall(f"probe index {self.n} needs dimension > {dim}")
        return make_superposition(SuperpositionSpec(self.n, self.m, self.a), dim)

    @property
    def label(self) -> str:
        return f"n{self.n}m{self.m}"


@dataclass(frozen=True, eq=False)
class JointPhotonDistribution:
    """``probs[p, q]`` for detector counts with ``p + q <= 2 * cutoff``."""

    cutoff: int
    probs: np.ndarray

    def __post_init__(self):
        k = 2 * self.cutoff + 1
        p = np.array(self.probs, dtype=float)
        if p.shape != (k, k):
            raise DimensionMismatch(f"expected a {k}x{k} grid for cutoff {self.cutoff}, got {p.shape}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def total(self) -> float:
        return float(self.probs.sum())

    def __getitem__(self, pq):
        return self.probs[pq]

    def to_json(self) -> dict:
        ps, qs = np.nonzero(self.probs)
        return {"cutoff": self.cutoff,
                "entries": [{"p": int(p), "q": int(q), "prob": float(self.probs[p, q])}
                            for p, q in zip(ps, qs)]}

    @classmethod
    def from_json(cls, obj: dict) -> "JointPhotonDistribution":
        cutoff = int(obj["cutoff"])
        k = 2 * cutoff + 1
        grid = np.zeros((k, k))
        for e in obj["entries"]:
            p, q = int(e["p"]), int(e["q"])
            if p < 0 or q < 0 or p + q > 2 * cutoff:
                raise IndexOutOfRange(f"entry ({p}, {q}) outside cutoff {cutoff}")
            grid[p, q] = float(e["prob"])
        return cls(cutoff, grid)


@dataclass(frozen=True)
class OpticsConfig:
    """Fock truncation, beam splitter and the rule for using the redundant ``p`` values.

    ``cutoff`` bounds the photon number of each input mode. ``p_policy`` is
    ``"average"`` (every ``p`` with a usable amplitude product) or
    ``"single"`` (``p_single`` if given, else the ``p`` with the largest
    amplitude product).
    """

    cutoff: int
    bs: BeamSplitterParams = field(default_factory=BeamSplitterParams)
    p_policy: str = "average"
    p_single: int | None = None

    def __post_init__(self):
        if self.cutoff < 1:
            raise CutoffTooSmall("cutoff must be at least 1")
        if self.p_policy not in ("average", "single"):
            raise TomographyError(f"unknown p_policy {self.p_policy!r}")


# ---------------------------------------------------------------------------
# amplitudes


@functools.lru_cache(maxsize=32)
def amplitude_table(nmax: int, bs: BeamSplitterParams) -> np.ndarray:
    """``A[nu, mu, p]`` for ``nu, mu <= nmax``; zero where ``p > nu + mu``."""
    table = _kernels.amplitude_table(int(nmax), float(bs.tau), float(bs.refl),
                                     float(bs.phi_tau), float(bs.phi_rho))
    table.setflags(write=False)
    return table


def bs_amplitude(p: int, nu: int, mu: int, bs: BeamSplitterParams) -> complex:
    if nu < 0 or mu < 0 or not 0 <= p <= nu + mu:
        raise IndexOutOfRange(f"p={p} outside [0, {nu + mu}]")
    return complex(amplitude_table(max(nu, mu), bs)[nu, mu, p])


def _trim(vec_or_mat: np.ndarray, limit: int, what: str) -> np.ndarray:
    n = vec_or_mat.shape[0]
    if n <= limit:
        return vec_or_mat
    tail = vec_or_mat[limit:] if vec_or_mat.ndim == 1 else vec_or_mat[limit:, :]
    if np.abs(tail).max() > 0:
        raise CutoffTooSmall(f"{what} populated beyond Fock cutoff {limit - 1}")
    return vec_or_mat[:limit] if vec_or_mat.ndim == 1 else vec_or_mat[:limit, :limit]


def joint_distribution(rho: DensityMatrix, probe: PureState, cfg: OpticsConfig) -> JointPhotonDistribution:
    """Exact joint photocount distribution for ``probe`` (port 1) and ``rho`` (port 2)."""
    k = cfg.cutoff
    r = _trim(rho.matrix, k + 1, "signal")
    psi = _trim(probe.amplitudes, k + 1, "probe")
    table = amplitude_table(k, cfg.bs)
    grid = _kernels.joint_grid(np.ascontiguousarray(r), np.ascontiguousarray(psi), table, 2 * k)
    return JointPhotonDistribution(k, grid)


# ---------------------------------------------------------------------------
# extraction


def _amp_pair(probe: ProbeSpec, big_n: int, p: int, bs: BeamSplitterParams):
    big_m = big_n + probe.n - probe.m
    s = big_n + probe.n
    if big_n < 0 or not 0 <= p <= s:
        raise IndexOutOfRange(f"p={p} outside [0, {s}] for N={big_n}")
    table = amplitude_table(max(big_m, probe.n), bs)
    return table[big_n, probe.n, p], table[big_m, probe.m, p]


def extract_M(P: JointPhotonDistribution, probe: ProbeSpec, bigN: int, p: int,
              bs: BeamSplitterParams, diag) -> float:
    """``2 Re{a rho_MN A_p(M,m) A_p(N,n)^*}`` from one cell of the joint distribution.

    ``diag`` holds the (separately measured) diagonal of the signal state.
    """
    big_m = bigN + probe.n - probe.m
    s = bigN + probe.n
    if big_m >= len(diag):
        raise IndexOutOfRange(f"M={big_m} beyond the {len(diag)} known diagonal elements")
    if s > 2 * P.cutoff:
        raise IndexOutOfRange(f"total photon number {s} beyond grid of cutoff {P.cutoff}")
    a_n, a_m = _amp_pair(probe, bigN, p, bs)
    if abs(a_m * np.conj(a_n)) < TOL.amp:
        raise VanishingAmplitude(f"|A_p(M,m) A_p(N,n)| below {TOL.amp} at p={p}, N={bigN}")
    na2 = probe.norm_sq
    background = na2 * (abs(a_n) ** 2 * diag[bigN] + abs(probe.a) ** 2 * abs(a_m) ** 2 * diag[big_m])
    return float((P[p, s - p] - background) / na2)


class BandElement(NamedTuple):
    M: int
    N: int
    value: complex
    spread: float  # max deviation of single-p estimates from the combined value
    n_p: int  # number of p values used
    per_p: tuple = ()  # (p, estimate) for every p that was used


def _usable_p(probe: ProbeSpec, big_n: int, bs: BeamSplitterParams) -> list[int]:
    s = big_n + probe.n
    out = []
    for p in range(s + 1):
        a_n, a_m = _amp_pair(probe, big_n, p, bs)
        if abs(a_m * np.conj(a_n)) >= TOL.amp:
            out.append(p)
    return out


def _m_and_angle(P, probe, big_n, p, bs, diag):
    big = extract_M(P, probe, big_n, p, bs, diag)
    a_n, a_m = _amp_pair(probe, big_n, p, bs)
    k = a_m * np.conj(a_n)
    scale = 2 * abs(probe.a) * abs(k)
    return big / scale, probe.phase + float(np.angle(k)), scale


def reconstruct_band(P_a: JointPhotonDistribution, P_b: JointPhotonDistribution,
                     probe_a: ProbeSpec, probe_b: ProbeSpec, bs: BeamSplitterParams, diag,
                     cfg: OpticsConfig, shots: int | None = None) -> list[BandElement]:
    """Every ``rho_MN`` with ``M - N = n - m`` obtainable from two probe distributions.

    The known phase of ``A_p(M,m) A_p(N,n)^*`` is folded into each probe's
    phase before the 2x2 inversion. With ``shots`` given, the per-``p``
    estimates are combined with inverse-variance weights.
    """
    if (probe_a.n, probe_a.m) != (probe_b.n, probe_b.m):
        raise TomographyError("probes must share (n, m)")
    diag = np.asarray(diag, dtype=float)
    d = probe_a.n - probe_a.m
    out = []
    big_n = 0
    while big_n + d < len(diag) and big_n + probe_a.n <= 2 * P_a.cutoff:
        usable = _usable_p(probe_a, big_n, bs)
        if not usable:
            raise VanishingAmplitude(f"no usable p for N={big_n}")
        if cfg.p_policy == "single":
            if cfg.p_single is not None:
                ps = [cfg.p_single]
            else:
                def weight(p):
                    a_n, a_m = _amp_pair(probe_a, big_n, p, bs)
                    return abs(a_m * np.conj(a_n))
                ps = [max(usable, key=weight)]
        else:
            ps = usable
        vals, wts = [], []
        s = big_n + probe_a.n
        for p in ps:
            m_a, th_a, sc_a = _m_and_angle(P_a, probe_a, big_n, p, bs, diag)
            m_b, th_b, sc_b = _m_and_angle(P_b, probe_b, big_n, p, bs, diag)
            r, j = solve_pair(m_a, m_b, (th_a, th_b))
            vals.append(complex(r, j))
            if shots:
                var = sum(max(P[p, s - p], 1.0 / shots) / (shots * (pr.norm_sq * sc) ** 2)
                          for P, pr, sc in ((P_a, probe_a, sc_a), (P_b, probe_b, sc_b)))
                wts.append(1.0 / var)
            else:
                wts.append(1.0)
        vals = np.array(vals)
        value = complex(np.average(vals, weights=wts))
        out.append(BandElement(big_n + d, big_n, value, float(np.abs(vals - value).max()), len(ps),
                               tuple(zip(ps, vals.tolist()))))
        big_n += 1
    return out


# ---------------------------------------------------------------------------
# pipelines


@dataclass(frozen=True)
class DetectorModel:
    """Efficiency, optional finite sampling and the loss correction applied afterwards."""

    efficiency: float = 1.0
    shots: int | None = None
    seed: int = 0

    @classmethod
    def from_noise(cls, noise: ShotConfig | None, efficiency: float | None = None) -> "DetectorModel":
        if noise is None:
            return cls(1.0 if efficiency is None else efficiency)
        eta = noise.efficiency if efficiency is None else efficiency
        return cls(eta, noise.shots, noise.seed)

    def measure(self, probs: np.ndarray, ordinal: int) -> np.ndarray:
        """Loss on every detector axis, sampling, then inverse Bernoulli correction."""
        eta = self.efficiency
        lmats = [loss_matrix(n - 1, eta) for n in probs.shape] if eta < 1 else None
        out = probs
        if lmats:
            for axis, lm in enumerate(lmats):
                out = np.moveaxis(np.tensordot(lm, out, axes=([1], [axis])), 0, axis)
        if self.shots is not None:
            out = sample_histogram(out, self.shots, stream(self.seed, ordinal))
        if lmats:
            if out.ndim == 1:
                out = inverse_bernoulli(PhotonCountDistribution(out, strict=False), eta).probs
            else:
                out = inverse_bernoulli_2d(out, eta)
        return out


def measured_diagonal(rho: DensityMatrix, cfg: OpticsConfig, detector: DetectorModel,
                      ordinal: int = 0) -> np.ndarray:
    """Photon-number distribution of the signal alone, as seen through ``detector``."""
    probs = np.zeros(cfg.cutoff + 1)
    probs[: rho.dim] = np.diag(rho.matrix).real
    return detector.measure(probs, ordinal)[: rho.dim]


def optics_tomography(rho_true: DensityMatrix, cfg: OpticsConfig, noise: ShotConfig | None = None,
                      efficiency: float | None = None) -> ReconstructionReport:
    """Simulate the full measurement and reconstruct ``rho_true`` band by band.

    Band ``d`` uses probes ``(|d> + |0>)/sqrt2`` and ``(|d> + i|0>)/sqrt2``.
    ``noise=None`` uses exact histograms; ``efficiency`` (default: the one in
    ``noise``, else 1) applies detector loss that is undone by the inverse
    Bernoulli transformation before reconstruction.
    """
    dim = rho_true.dim
    if dim > cfg.cutoff + 1:
        raise CutoffTooSmall(f"state of dimension {dim} exceeds cutoff {cfg.cutoff}")
    detector = DetectorModel.from_noise(noise, efficiency)
    diag = measured_diagonal(rho_true, cfg, detector, 0)
    raw = np.diag(diag / diag.sum()).astype(complex)
    spread = np.zeros((dim, dim))
    rows = []
    for d in range(1, dim):
        pa, pb = ProbeSpec(d, 0, 1.0), ProbeSpec(d, 0, 1j)
        grids = []
        for i, pr in enumerate((pa, pb)):
            exact = joint_distribution(rho_true, pr.state(cfg.cutoff + 1), cfg)
            grids.append(JointPhotonDistribution(cfg.cutoff, detector.measure(exact.probs, 2 * d - 1 + i)))
        for el in reconstruct_band(grids[0], grids[1], pa, pb, cfg.bs, raw.diagonal().real, cfg,
                                   detector.shots):
            raw[el.M, el.N] = el.value
            raw[el.N, el.M] = el.value.conjugate()
            spread[el.M, el.N] = spread[el.N, el.M] = el.spread
            rows.append({"band": d, "M": el.M, "N": el.N, "value": el.value,
                         "true": complex(rho_true.matrix[el.M, el.N]),
                         "spread": el.spread, "n_p": el.n_p})
    report = ReconstructionReport(nearest_physical(raw), raw, spread, "optics", 1.0)
    report.diagnostics["bands"] = rows
    report.diagnostics["efficiency"] = detector.efficiency
    return report


@dataclass
class ShiftReport:
    band: int
    offsets: tuple
    values: dict  # offset t -> array of band values
    max_discrepancy: float


def probe_shift_equivalence_check(rho: DensityMatrix, offsets, cfg: OpticsConfig, band: int = 1
                                  ) -> ShiftReport:
    """Reconstruct one band with probes ``(t + band, t)`` for each ``t`` and compare."""
    diag = np.diag(rho.matrix).real
    values = {}
    for t in offsets:
        if t + band > cfg.cutoff:
            raise CutoffTooSmall(f"probe index {t + band} exceeds cutoff {cfg.cutoff}")
        pa, pb = ProbeSpec(t + band, t, 1.0), ProbeSpec(t + band, t, 1j)
        grids = [joint_distribution(rho, pr.state(cfg.cutoff + 1), cfg) for pr in (pa, pb)]
        values[t] = np.array([el.value for el in
                              reconstruct_band(grids[0], grids[1], pa, pb, cfg.bs, diag, cfg)])
    vs = list(values.values())
    disc = 0.0
    for i in range(len(vs)):
        for j in range(i + 1, len(vs)):
            n = min(len(vs[i]), len(vs[j]))
            if n:
                disc = max(disc, float(np.abs(vs[i][:n] - vs[j][:n]).max()))
    return ShiftReport(band, tuple(offsets), values, disc)
