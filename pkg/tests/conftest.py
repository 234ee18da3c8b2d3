import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rdm_purify.fock import build_basis, ground_and_excited, rdm2_from_state  # noqa: E402
from rdm_purify.hamiltonians import (  # noqa: E402
    build_reduced_hamiltonian, hubbard_chain, load_manifest,
)

CRITERIA: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])


@pytest.fixture(scope="session")
def manifest():
    return load_manifest()


@pytest.fixture(scope="session")
def hubbard2():
    """2-site Hubbard, t=1, U=4, N=2: ground state and reduced Hamiltonian."""
    ints = hubbard_chain(2, 1.0, 4.0)
    basis, states = ground_and_excited(ints, 2, 0, 4)
    K = build_reduced_hamiltonian(ints, 2)
    return {"ints": ints, "basis": basis, "states": states, "K": K, "N": 2,
            "D": rdm2_from_state(states[0][1]), "E0": states[0][0]}


@pytest.fixture(scope="session")
def h4(manifest):
    """Bundled H4 chain at 1.0 angstrom: the default noisy benchmark system."""
    entry = manifest["h4_1.0000"]
    ints = entry.load()
    basis, states = ground_and_excited(ints, 4, 0, 1)
    return {"ints": ints, "basis": basis, "K": build_reduced_hamiltonian(ints, 4), "N": 4,
            "D": rdm2_from_state(states[0][1]), "E0": states[0][0],
            "fci": entry.fci_energy}


def random_fcidump(norb: int, nelec: int, rng: np.random.Generator, ecore: float = 0.3) -> str:
    """FCIDUMP text with random real integrals carrying the 8-fold symmetry."""
    h = rng.normal(size=(norb, norb))
    h = 0.5 * (h + h.T)
    eri = rng.normal(size=(norb,) * 4) * 0.3
    eri = (eri + eri.transpose(1, 0, 2, 3) + eri.transpose(0, 1, 3, 2)
           + eri.transpose(1, 0, 3, 2))
    eri = eri + eri.transpose(2, 3, 0, 1)
    lines = [f"&FCI NORB={norb},NELEC={nelec},MS2=0,", "ORBSYM=" + "1," * norb, "ISYM=1,", "&END"]
    for i in range(norb):
        for j in range(i + 1):
            for k in range(norb):
                for l in range(k + 1):
                    if i * (i + 1) // 2 + j >= k * (k + 1) // 2 + l:
                        lines.append(f"{float(eri[i, j, k, l])!r} {i + 1} {j + 1} {k + 1} {l + 1}")
    for i in range(norb):
        for j in range(i + 1):
            lines.append(f"{float(h[i, j])!r} {i + 1} {j + 1} 0 0")
    lines.append(f"{ecore!r} 0 0 0 0")
    return "\n".join(lines) + "\n"



@pytest.fixture(scope="session")
def default_weight_sweep():
    """The default noisy benchmark: H4 chain, 20 seeds, w from 1e-4 to 1e3."""
    from rdm_purify.experiments import run_weight_sweep
    return run_weight_sweep({"experiment": "weight-sweep"})


@pytest.fixture(scope="session")
def default_excited():
    """Excited-state sweep with the default 50 seeds."""
    from rdm_purify.experiments import run_excited
    return run_excited({"experiment": "excited"})


@pytest.fixture(scope="session")
def default_dissociation():
    from rdm_purify.experiments import run_dissociation
    return run_dissociation({"experiment": "dissociation"})


__all__ = ["record_criterion", "random_fcidump", "build_basis"]
