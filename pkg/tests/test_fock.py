import numpy as np
import pytest

import oracles
from conftest import random_fcidump
from rdm_purify.fock import (
    EmptySectorError, FockState, apply_string, build_basis, build_hamiltonian_matrix, eigensolve,
    ground_and_excited, random_state, rdm1_from_state, rdm2_from_state, rdmG_from_state,
    rdmQ_from_state,
)
from rdm_purify.hamiltonians import MolecularIntegrals, hubbard_chain, parse_fcidump
from rdm_purify.rdm import contract_to_1rdm, min_eigenvalues


# bases ---------------------------------------------------------------------

@pytest.mark.parametrize("r,N,sz2,size", [(4, 2, 0, 4), (8, 4, 0, 36), (4, 0, 0, 1),
                                          (6, 3, 1, 9), (12, 6, 0, 400)])
def test_basis_sizes(r, N, sz2, size):
    assert len(build_basis(r, N, sz2).dets) == size


def test_basis_is_canonical():
    basis = build_basis(8, 3, -1)
    dets = list(basis.dets)
    assert dets == sorted(set(dets))
    for d in dets:
        assert bin(d).count("1") == 3
        up = sum((d >> (2 * p)) & 1 for p in range(4))
        assert up - (3 - up) == -1


@pytest.mark.parametrize("N,sz2", [(2, 1), (3, 5), (1, 3)])
def test_unreachable_sector(N, sz2):
    with pytest.raises(EmptySectorError):
        build_basis(4, N, sz2)


def test_particle_count_out_of_range():
    with pytest.raises(ValueError, match="outside"):
        build_basis(4, 5, 0)


def test_state_must_be_normalized():
    basis = build_basis(4, 2, 0)
    with pytest.raises(ValueError, match="norm"):
        FockState(basis, np.ones(4))


def test_apply_string_sign():
    # a+_0 acting on |1> (orbital 1 occupied) creates |0,1> with no sign;
    # a+_1 acting on |0> passes orbital 0 and flips the sign
    assert apply_string([(0, True)], 0b10) == (1, 0b11)
    assert apply_string([(1, True)], 0b01) == (-1, 0b11)
    assert apply_string([(0, False)], 0b10) is None


# Hamiltonian matrices --------------------------------------------------------

def test_vacuum_sector():
    ints = MolecularIntegrals(4, np.eye(4), np.zeros((4,) * 4), e_core=1.25)
    H = build_hamiltonian_matrix(ints, build_basis(4, 0, 0))
    assert H.shape == (1, 1) and H[0, 0] == 1.25


def test_two_site_hubbard_matrix():
    H = build_hamiltonian_matrix(hubbard_chain(2, 1.0, 4.0), build_basis(4, 2, 0))
    assert H.shape == (4, 4) and np.allclose(H, H.T)
    assert np.linalg.eigvalsh(H)[0] == pytest.approx(2 - np.sqrt(8), abs=1e-12)


@pytest.mark.parametrize("norb,nelec,sz2", [(2, 2, 0), (3, 3, 1), (3, 2, 0), (3, 4, 0)])
def test_slater_condon_matches_operator_application(norb, nelec, sz2):
    rng = np.random.default_rng(norb * 7 + nelec)
    ints = parse_fcidump(random_fcidump(norb, nelec, rng))
    basis = build_basis(ints.r, nelec, sz2)
    dense = oracles.sector_block(oracles.dense_hamiltonian(ints), basis)
    assert np.allclose(build_hamiltonian_matrix(ints, basis), dense, atol=1e-12)


# eigensolve ------------------------------------------------------------------

def test_eigensolve_scalar():
    [(e, v)] = eigensolve(np.array([[2.5]]), 1)
    assert e == 2.5 and v.tolist() == [1.0]


def test_eigensolve_ascending():
    pairs = eigensolve(np.diag([3.0, 1.0, 2.0]), 2)
    assert [e for e, _ in pairs] == [1.0, 2.0]


def test_eigensolve_two_site_spectrum():
    H = build_hamiltonian_matrix(hubbard_chain(2, 1.0, 4.0), build_basis(4, 2, 0))
    energies = [e for e, _ in eigensolve(H, 4)]
    expected = sorted([2 - np.sqrt(8), 0.0, 4.0, 2 + np.sqrt(8)])
    assert np.allclose(energies, expected, atol=1e-12)


def test_eigensolve_rejects_large_k():
    with pytest.raises(ValueError):
        eigensolve(np.eye(3), 4)


def test_degenerate_subspace_is_canonical():
    # rotate a matrix with a doubly degenerate level by a random orthogonal Q;
    # the returned basis must not depend on how the subspace was presented
    rng = np.random.default_rng(0)
    Q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    H = Q @ np.diag([1.0, 1.0, 2.0, 3.0]) @ Q.T
    first = eigensolve(H, 3)
    for _ in range(3):
        R = np.eye(4)
        c, s = np.cos(0.3), np.sin(0.3)
        R[:2, :2] = [[c, -s], [s, c]]
        V = Q @ R  # same degenerate subspace, different eigh input ordering
        again = eigensolve(V @ np.diag([1.0, 1.0, 2.0, 3.0]) @ V.T, 3)
        for (e1, v1), (e2, v2) in zip(first, again):
            assert e1 == pytest.approx(e2)
            assert np.allclose(v1, v2, atol=1e-8)
    v_a, v_b = first[0][1], first[1][1]
    assert abs(v_a @ v_b) < 1e-12
    assert tuple(np.round(v_a, 10)) > tuple(np.round(v_b, 10))


def test_eigensolve_deterministic_sign():
    H = build_hamiltonian_matrix(hubbard_chain(3, 1.0, 2.0), build_basis(6, 3, 1))
    for _, v in eigensolve(H, 5):
        first = v[np.flatnonzero(np.abs(v) > 1e-8)[0]]
        assert first > 0


# direct RDMs ---------------------------------------------------------------

def test_slater_pair_density():
    basis = build_basis(4, 2, 0)
    amps = np.zeros(4)
    amps[basis.index[0b0011]] = 1.0
    full = rdm2_from_state(FockState(basis, amps)).full()
    assert full[0, 1, 0, 1] == 1.0 and full[0, 1, 1, 0] == -1.0 and full[1, 0, 1, 0] == 1.0
    assert np.count_nonzero(full) == 4
    assert np.einsum("ijij->", full) == pytest.approx(2.0)


def test_four_electron_trace():
    psi = random_state(build_basis(8, 4, 0), np.random.default_rng(1))
    assert rdm2_from_state(psi).trace() == pytest.approx(12.0, abs=1e-12)


@pytest.mark.parametrize("r,N,sz2", [(4, 2, 0), (6, 3, 1), (8, 4, 0)])
def test_rdms_match_dense_operators(r, N, sz2):
    rng = np.random.default_rng(r + N)
    psi = random_state(build_basis(r, N, sz2), rng)
    v = oracles.embed(psi)
    assert np.allclose(rdm2_from_state(psi).full(), oracles.rdm2_full(v, r), atol=1e-12)
    assert np.allclose(rdmQ_from_state(psi).full(), oracles.q_full(v, r), atol=1e-12)
    assert np.allclose(rdmG_from_state(psi).full(), oracles.g_full(v, r), atol=1e-12)
    assert np.allclose(rdm1_from_state(psi).data, oracles.rdm1(v, r), atol=1e-12)


def test_rdm2_needs_two_electrons():
    basis = build_basis(4, 1, 1)
    with pytest.raises(ValueError):
        rdm2_from_state(FockState(basis, np.array([1.0, 0.0])))


def test_vacuum_two_hole_and_particle_hole():
    vac = FockState(build_basis(4, 0, 0), np.array([1.0]))
    assert np.allclose(rdmQ_from_state(vac).data, np.eye(6))
    assert np.allclose(rdmG_from_state(vac).data, 0.0)


def test_filled_state_has_no_holes():
    full = FockState(build_basis(4, 4, 0), np.array([1.0]))
    assert np.allclose(rdmQ_from_state(full).data, 0.0)


@pytest.mark.parametrize("r,N,sz2", [(6, 2, 0), (6, 3, -1), (8, 5, 1)])
def test_direct_Q_and_G_are_positive(r, N, sz2):
    rng = np.random.default_rng(3)
    for _ in range(5):
        psi = random_state(build_basis(r, N, sz2), rng)
        assert min_eigenvalues(rdmQ_from_state(psi)).min_eigenvalue >= -1e-10
        assert min_eigenvalues(rdmG_from_state(psi)).min_eigenvalue >= -1e-10


@pytest.mark.parametrize("r,N,sz2", [(4, 2, 0), (6, 3, 1), (8, 4, 0)])
def test_contraction_property(r, N, sz2):
    rng = np.random.default_rng(5)
    for _ in range(10):
        psi = random_state(build_basis(r, N, sz2), rng)
        D = rdm2_from_state(psi)
        summed = np.einsum("ijkj->ik", D.full())
        one = rdm1_from_state(psi).data
        assert np.allclose(summed, (N - 1) * one, atol=1e-12)
        w = np.linalg.eigvalsh(contract_to_1rdm(D).data)
        assert w.min() >= -1e-10 and w.max() <= 1 + 1e-10


def test_ground_and_excited_pairs(manifest):
    entry = manifest["h4_2.0000"]
    basis, states = ground_and_excited(entry.load(), 4, 0, 3)
    assert len(basis.dets) == 36
    energies = [e for e, _ in states]
    assert energies == sorted(energies)
    assert energies[0] == pytest.approx(entry.fci_energy, abs=1e-10)
