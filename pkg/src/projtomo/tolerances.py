"""Global numerical tolerances.

A single frozen record so every module checks invariants against the same
thresholds. Replace ``TOL`` with :func:`dataclasses.replace` copies when a
caller needs something looser.
"""
from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    structural: float = 1e-12  # hermiticity, idempotence, norms
    spectral: float = 1e-9  # trace, eigenvalue positivity
    cond: float = 1e-6  # minimum |sin(beta - alpha)|
    amp: float = 1e-8  # minimum |A_p(M,m) A_p(N,n)|
    tail: float = 1e-9  # photon-count distribution normalisation
    max_amplification: float = 1e12  # inverse Bernoulli bound


TOL = Tolerances()
