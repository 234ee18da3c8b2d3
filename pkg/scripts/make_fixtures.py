"""Regenerate the bundled hydrogen-chain FCIDUMP fixtures.

Needs pyscf, which the package itself does not depend on:

    pip install pyscf
    python scripts/make_fixtures.py

Writes src/rdm_purify/data/*.fcidump and manifest.json. Each manifest entry
records the pyscf full-CI energy of the same integrals as the reference.
"""
import json
from pathlib import Path

import numpy as np
from pyscf import fci, gto, scf
from pyscf.tools import fcidump

OUT = Path(__file__).resolve().parents[1] / "src" / "rdm_purify" / "data"

H2_BONDS = [0.5, 0.6, 0.7414, 0.9, 1.1, 1.3, 1.5, 1.8, 2.1, 2.5]
H4_BONDS = [0.75, 1.0, 1.5, 2.0]
H6_BONDS = [1.0]


def chain(n, bond):
    atom = [("H", (0.0, 0.0, k * bond)) for k in range(n)]
    mol = gto.M(atom=atom, basis="sto-3g", unit="Angstrom", spin=0, verbose=0)
    mf = scf.RHF(mol)
    mf.conv_tol = 1e-12
    mf.kernel()
    return mol, mf


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    systems = {}
    for n, bonds in ((2, H2_BONDS), (4, H4_BONDS), (6, H6_BONDS)):
        for bond in bonds:
            mol, mf = chain(n, bond)
            label = f"h{n}_{bond:.4f}"
            path = OUT / f"{label}.fcidump"
            fcidump.from_scf(mf, str(path), tol=1e-16)
            e_fci, _ = fci.FCI(mf).kernel()
            systems[label] = {
                "path": path.name,
                "geometry": f"linear H{n}, spacing {bond} angstrom",
                "bond_length": bond,
                "chain_length": n,
                "n_electrons": n,
                "fci_energy": float(e_fci),
                "provenance": "pyscf RHF/STO-3G integrals, pyscf FCI energy of the same integrals",
            }
            print(label, e_fci)
    manifest = {"description": "hydrogen chains in STO-3G", "systems": systems}
    (OUT / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


if __name__ == "__main__":
    np.set_printoptions(precision=12)
    main()
