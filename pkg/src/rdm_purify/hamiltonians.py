"""Molecular and lattice integrals, and the reduced Hamiltonian K.

Spin orbitals are interleaved: spatial orbital ``p`` gives spin orbitals
``2p`` (alpha) and ``2p + 1`` (beta). Two-body integrals are kept in
physicist notation ``V[i, j, k, l] = <ij|kl>`` so that

    H = sum_ik h[i,k] a+_i a_k + 1/2 sum_ijkl V[i,j,k,l] a+_i a+_j a_l a_k + e_core
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .rdm import TwoRDM, n_pairs, pack, unpack


class FCIDUMPError(ValueError):
    """Malformed FCIDUMP content; ``lineno`` is 1-based."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class FCIDUMPBoundsError(FCIDUMPError):
    pass


@dataclass(frozen=True, eq=False)
class MolecularIntegrals:
    r: int
    h: np.ndarray
    V: np.ndarray
    e_core: float = 0.0
    n_electrons: int | None = None
    ms2: int | None = None
    label: str = ""
    geometry: str = ""

    def __post_init__(self):
        r = self.r
        h = np.asarray(self.h, dtype=float)
        V = np.asarray(self.V, dtype=float)
        if r % 2:
            raise ValueError(f"spin-orbital count must be even, got r={r}")
        if h.shape != (r, r) or V.shape != (r,) * 4:
            raise ValueError(f"integral shapes {h.shape}, {V.shape} do not match r={r}")
        if not np.allclose(h, h.T, atol=1e-12):
            raise ValueError("one-body integrals are not Hermitian")
        if not np.allclose(V, V.transpose(1, 0, 3, 2), atol=1e-12):
            raise ValueError("two-body integrals violate <ij|kl> = <ji|lk>")
        if not np.allclose(V, V.transpose(2, 3, 0, 1), atol=1e-12):
            raise ValueError("two-body integrals violate <ij|kl> = <kl|ij>")
        h.setflags(write=False)
        V.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "V", V)


_DATA_LINE = re.compile(r"^[-+]?(\d+\.?\d*|\.\d+)([EeDd][-+]?\d+)?(\s+\d+){4}$")


def _parse_header(header: str, lineno: int) -> dict:
    parts = re.split(r"([A-Za-z_]\w*)\s*=", header)
    if parts[0].strip(" ,"):
        raise FCIDUMPError(f"unexpected header text {parts[0].strip()!r}", lineno)
    fields = {key.upper(): value.strip().strip(",").strip()
              for key, value in zip(parts[1::2], parts[2::2])}
    if "NORB" not in fields:
        raise FCIDUMPError("header has no NORB entry", lineno)
    out = {}
    for key in ("NORB", "NELEC", "MS2"):
        if key in fields:
            try:
                out[key] = int(fields[key])
            except ValueError:
                raise FCIDUMPError(f"{key}={fields[key]!r} is not an integer", lineno) from None
    if out["NORB"] < 1:
        raise FCIDUMPError(f"NORB must be positive, got {out['NORB']}", lineno)
    return out


def _spin_expand(h_sp: np.ndarray, eri_chem: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = h_sp.shape[0]
    r = 2 * n
    h = np.zeros((r, r))
    V = np.zeros((r,) * 4)
    phys = eri_chem.transpose(0, 2, 1, 3)  # <pq|rs> = (pr|qs)
    for s in (0, 1):
        h[s::2, s::2] = h_sp
        for t in (0, 1):
            V[s::2, t::2, s::2, t::2] = phys
    return h, V


def parse_fcidump(text: str, label: str = "", geometry: str = "") -> MolecularIntegrals:
    """Parse Molpro-style FCIDUMP text into spin-orbital integrals.

    Orbital symmetry labels are read past and ignored. Values are assumed real
    with full 8-fold permutational symmetry, as written by common codes.
    """
    lines = text.splitlines()
    header_parts = []
    body_start = None
    for n, line in enumerate(lines):
        stripped = line.strip()
        if n == 0 and not stripped.upper().startswith("&FCI"):
            raise FCIDUMPError("expected '&FCI' namelist header", 1)
        upper = stripped.upper()
        if n > 0 and _DATA_LINE.match(stripped):
            body_start = n  # header left unterminated; data starts here
            break
        if upper.startswith("&END") or upper == "/" or upper.endswith("&END") or upper.endswith("/"):
            header_parts.append(re.sub(r"(&END|/)\s*$", "", stripped, flags=re.I))
            body_start = n + 1
            break
        header_parts.append(stripped)
    if body_start is None:
        raise FCIDUMPError("header is not terminated by '&END' or '/'", len(lines) or 1)
    header_text = " ".join(header_parts)
    header_text = re.sub(r"^&FCI(DUMP)?", "", header_text, flags=re.I)
    meta = _parse_header(header_text, 1)
    norb = meta["NORB"]

    h_sp = np.zeros((norb, norb))
    eri = np.zeros((norb,) * 4)
    e_core = 0.0
    for n in range(body_start, len(lines)):
        lineno = n + 1
        tokens = lines[n].split()
        if not tokens:
            continue
        if len(tokens) != 5:
            raise FCIDUMPError(f"expected 'value i j k l', got {lines[n].strip()!r}", lineno)
        try:
            value = float(tokens[0].replace("D", "E").replace("d", "e"))
        except ValueError:
            raise FCIDUMPError(f"non-numeric value {tokens[0]!r}", lineno) from None
        try:
            i, j, k, l = (int(t) for t in tokens[1:])
        except ValueError:
            raise FCIDUMPError(f"non-integer orbital index in {lines[n].strip()!r}", lineno) from None
        for idx in (i, j, k, l):
            if not 0 <= idx <= norb:
                raise FCIDUMPBoundsError(f"orbital index {idx} outside [0, {norb}]", lineno)
        if i == j == k == l == 0:
            e_core = value
        elif k == 0 and l == 0:
            if j == 0:
                continue  # orbital energy line
            h_sp[i - 1, j - 1] = h_sp[j - 1, i - 1] = value
        else:
            if 0 in (i, j, k, l):
                raise FCIDUMPError(f"partial zero indices in {lines[n].strip()!r}", lineno)
            p, q, s, t = i - 1, j - 1, k - 1, l - 1
            for a, b, c, d in (
                (p, q, s, t), (q, p, s, t), (p, q, t, s), (q, p, t, s),
                (s, t, p, q), (t, s, p, q), (s, t, q, p), (t, s, q, p),
            ):
                eri[a, b, c, d] = value

    h, V = _spin_expand(h_sp, eri)
    return MolecularIntegrals(
        r=2 * norb, h=h, V=V, e_core=e_core,
        n_electrons=meta.get("NELEC"), ms2=meta.get("MS2"),
        label=label, geometry=geometry,
    )


def read_fcidump(path, label: str = "", geometry: str = "") -> MolecularIntegrals:
    path = Path(path)
    return parse_fcidump(path.read_text(), label=label or path.stem, geometry=geometry)


def hubbard_chain(L: int, t: float = 1.0, U: float = 0.0, boundary: str = "open") -> MolecularIntegrals:
    """One-dimensional Hubbard chain with ``L`` sites in spin-orbital form.

    With periodic boundaries and ``L == 2`` the two bonds coincide and the
    hopping between the sites is ``-2t``.
    """
    if L < 2:
        raise ValueError(f"Hubbard chain needs L >= 2, got L={L}")
    if t < 0 or U < 0:
        raise ValueError("hopping t and repulsion U must be non-negative")
    if boundary not in ("open", "periodic"):
        raise ValueError(f"boundary must be 'open' or 'periodic', got {boundary!r}")
    r = 2 * L
    h = np.zeros((r, r))
    bonds = [(a, a + 1) for a in range(L - 1)]
    if boundary == "periodic":
        bonds.append((L - 1, 0))
    for a, b in bonds:
        for s in (0, 1):
            h[2 * a + s, 2 * b + s] -= t
            h[2 * b + s, 2 * a + s] -= t
    V = np.zeros((r,) * 4)
    for a in range(L):
        up, dn = 2 * a, 2 * a + 1
        V[up, dn, up, dn] = U
        V[dn, up, dn, up] = U
    return MolecularIntegrals(
        r=r, h=h, V=V, label=f"hubbard_L{L}_t{t:g}_U{U:g}_{boundary}",
        geometry=f"L={L}",
    )


@dataclass(frozen=True, eq=False)
class ReducedHamiltonian:
    """Two-body operator K with ``E = Tr(K D) + e_core`` over full indices.

    ``K`` is stored packed like a :class:`TwoRDM`; the full-index trace is
    ``4 * sum(K * D)`` in packed storage.
    """

    r: int
    N: int
    K: np.ndarray
    e_core: float = 0.0

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        if K.shape != (n_pairs(self.r),) * 2:
            raise ValueError(f"packed K for r={self.r} has wrong shape {K.shape}")
        K.setflags(write=False)
        object.__setattr__(self, "K", K)

    def full(self) -> np.ndarray:
        return unpack(self.K, self.r)


def build_reduced_hamiltonian(ints: MolecularIntegrals, N: int) -> ReducedHamiltonian:
    r = ints.r
    if N < 2:
        raise ValueError(f"reduced Hamiltonian needs N >= 2 (1/(N-1) fold), got N={N}")
    if N > r:
        raise ValueError(f"N={N} exceeds the spin-orbital count r={r}")
    X = np.einsum("ik,jl->ijkl", ints.h, np.eye(r)) / (N - 1) + 0.5 * ints.V
    X = 0.25 * (X - X.transpose(1, 0, 2, 3) - X.transpose(0, 1, 3, 2) + X.transpose(1, 0, 3, 2))
    X = 0.5 * (X + X.transpose(2, 3, 0, 1))
    return ReducedHamiltonian(r, N, pack(X), float(ints.e_core))


def energy(K: ReducedHamiltonian, D: TwoRDM) -> float:
    if K.r != D.r:
        raise ValueError(f"dimension mismatch: K has r={K.r}, D has r={D.r}")
    return 4.0 * float(np.sum(K.K * D.data)) + K.e_core


# bundled fixtures ----------------------------------------------------------

@dataclass(frozen=True)
class FixtureEntry:
    label: str
    path: Path
    geometry: str
    fci_energy: float
    n_electrons: int
    provenance: str = ""
    extra: dict = field(default_factory=dict)

    def load(self) -> MolecularIntegrals:
        return read_fcidump(self.path, label=self.label, geometry=self.geometry)


def data_dir() -> Path:
    return Path(str(resources.files("rdm_purify") / "data"))


def load_manifest(path=None) -> dict[str, FixtureEntry]:
    """Read a fixture manifest: label -> path, geometry, recorded FCI energy."""
    path = Path(path) if path is not None else data_dir() / "manifest.json"
    raw = json.loads(path.read_text())
    entries = {}
    for label, item in raw["systems"].items():
        missing = {"path", "geometry", "fci_energy", "n_electrons"} - set(item)
        if missing:
            raise KeyError(f"manifest entry {label!r} lacks {sorted(missing)}")
        extra = {k: v for k, v in item.items()
                 if k not in ("path", "geometry", "fci_energy", "n_electrons", "provenance")}
        entries[label] = FixtureEntry(
            label=label,
            path=(path.parent / item["path"]).resolve(),
            geometry=str(item["geometry"]),
            fci_energy=float(item["fci_energy"]),
            n_electrons=int(item["n_electrons"]),
            provenance=item.get("provenance", ""),
            extra=extra,
        )
    return entries
