"""Finite-shot noise emulation for 2-RDMs.

Each independent packed element (diagonal and upper triangle) receives an
independent Gaussian error with standard deviation ``alpha / sqrt(shots)``.
Working in the packed basis keeps antisymmetry exact; positivity and the
trace are what the noise breaks. The uniform per-element variance is a
simplification of a real shadow-tomography estimator.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .hamiltonians import ReducedHamiltonian
from .rdm import TwoRDM

GAUSSIAN_ELEMENT = "gaussian-element"


@dataclass(frozen=True)
class NoiseSpec:
    shots: float
    alpha: float
    seed: int = 0
    model: str = GAUSSIAN_ELEMENT

    def __post_init__(self):
        if not self.shots >= 1:
            raise ValueError(f"shots must be >= 1, got {self.shots}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.model != GAUSSIAN_ELEMENT:
            raise ValueError(f"unknown noise model {self.model!r}")

    @property
    def sigma(self) -> float:
        return self.alpha / np.sqrt(self.shots)

    def with_seed(self, seed: int) -> "NoiseSpec":
        return NoiseSpec(self.shots, self.alpha, seed, self.model)

    def to_json(self) -> dict:
        return asdict(self)


def apply_noise(D: TwoRDM, spec: NoiseSpec) -> TwoRDM:
    rng = np.random.default_rng(spec.seed)
    p = D.dim
    upper = np.triu(rng.normal(0.0, spec.sigma, size=(p, p)))
    noise = upper + np.triu(upper, 1).T
    return TwoRDM(D.r, D.N, D.data + noise)


def energy_noise_factor(K: ReducedHamiltonian) -> float:
    """Standard error of ``Tr(K D_noisy)`` per unit element sigma.

    Energy is ``4 * sum(K * D)`` in packed storage; an off-diagonal noise draw
    enters twice.
    """
    Kp = K.K
    diag = np.sum(np.diag(Kp) ** 2)
    off = np.sum(np.triu(Kp, 1) ** 2)
    return 4.0 * float(np.sqrt(diag + 4.0 * off))


def calibrate_alpha(target_energy_stderr: float, K: ReducedHamiltonian, D: TwoRDM,
                    shots: float) -> float:
    """``alpha`` whose shot noise gives the target energy standard error."""
    if K.r != D.r:
        raise ValueError(f"dimension mismatch: K has r={K.r}, D has r={D.r}")
    if not target_energy_stderr > 0:
        raise ValueError("target standard error must be positive")
    factor = energy_noise_factor(K)
    if factor == 0.0:
        raise ValueError("reduced Hamiltonian is zero; energy carries no noise signal")
    return target_energy_stderr * np.sqrt(shots) / factor
