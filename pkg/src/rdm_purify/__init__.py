"""Correlated purification of noisy two-electron reduced density matrices."""
from importlib.metadata import PackageNotFoundError, version

from .estimator import CorrelatedPurifier
from .hamiltonians import (
    MolecularIntegrals, ReducedHamiltonian, build_reduced_hamiltonian, energy, hubbard_chain,
    load_manifest, parse_fcidump, read_fcidump,
)
from .noise import NoiseSpec, apply_noise, calibrate_alpha
from .purifier import (
    CP, PROJECTION, V2RDM, PurificationConfig, PurificationResult, assemble_cp_problem, purify,
    v2rdm, weight_sweep,
)
from .rdm import GMatrix, OneRDM, TwoRDM, deviation_norms, map_G, map_Q, min_eigenvalues
from .sdp import BlockSDPProblem, SDPSolution, SolverError, SolverOptions, check_kkt, solve

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

__all__ = [
    "BlockSDPProblem", "CP", "CorrelatedPurifier", "GMatrix", "MolecularIntegrals", "NoiseSpec", "OneRDM",
    "PROJECTION", "PurificationConfig", "PurificationResult", "ReducedHamiltonian",
    "SDPSolution", "SolverError", "SolverOptions", "TwoRDM", "V2RDM", "apply_noise",
    "assemble_cp_problem", "build_reduced_hamiltonian", "calibrate_alpha", "check_kkt",
    "deviation_norms", "energy", "hubbard_chain", "load_manifest", "map_G", "map_Q",
    "min_eigenvalues", "parse_fcidump", "purify", "read_fcidump", "solve", "v2rdm",
    "weight_sweep",
]
