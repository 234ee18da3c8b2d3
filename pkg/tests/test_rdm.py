import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from rdm_purify.fock import (
    FockState, build_basis, random_state, rdm1_from_state, rdm2_from_state, rdmG_from_state,
    rdmQ_from_state,
)
from rdm_purify.rdm import (
    FULL, PACKED, GMatrix, TwoRDM, contract_to_1rdm, deviation_norms, load_rdm, map_G, map_Q,
    min_eigenvalues, n_pairs, pack, pair_lookup, save_rdm, unpack,
)


def slater(r, occupied):
    basis = build_basis(r, len(occupied), sum(1 if o % 2 == 0 else -1 for o in occupied))
    amps = np.zeros(len(basis.dets))
    amps[basis.index[sum(1 << o for o in occupied)]] = 1.0
    return FockState(basis, amps)


def random_sym(p, rng):
    M = rng.normal(size=(p, p))
    return 0.5 * (M + M.T)


# storage -------------------------------------------------------------------

def test_pack_unpack_roundtrip():
    rng = np.random.default_rng(0)
    P = random_sym(n_pairs(5), rng)
    full = unpack(P, 5)
    assert np.array_equal(pack(full), P)
    assert np.allclose(full, -full.transpose(1, 0, 2, 3))
    assert np.allclose(full, -full.transpose(0, 1, 3, 2))


def test_pair_lookup_order():
    table = pair_lookup(4)
    assert table[0, 1] == 0 and table[0, 3] == 2 and table[2, 3] == 5
    assert table[1, 0] == -1


def test_full_index_frobenius_is_twice_packed():
    rng = np.random.default_rng(1)
    P = random_sym(n_pairs(6), rng)
    full = unpack(P, 6)
    assert np.linalg.norm(full) == pytest.approx(2 * np.linalg.norm(P), abs=1e-12)


def test_full_index_trace_and_spectrum_are_twice_packed():
    rng = np.random.default_rng(2)
    D = TwoRDM(5, 3, random_sym(n_pairs(5), rng))
    full = D.full().reshape(25, 25)
    assert np.trace(full) == pytest.approx(D.trace(FULL), abs=1e-12)
    assert D.trace(FULL) == pytest.approx(2 * D.trace(PACKED))
    nonzero = np.sort(np.linalg.eigvalsh(full))
    packed = 2 * np.linalg.eigvalsh(D.data)
    # the full matrix carries the doubled packed spectrum plus zeros
    assert np.allclose(np.sort(np.concatenate([packed, np.zeros(25 - len(packed))])), nonzero,
                       atol=1e-12)


def test_asymmetric_data_rejected():
    with pytest.raises(ValueError, match="not symmetric"):
        TwoRDM(3, 2, np.array([[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))


def test_wrong_shape_rejected():
    with pytest.raises(ValueError, match="must be 6x6"):
        TwoRDM(4, 2, np.eye(3))


def test_from_noisy_hermitizes_and_logs(caplog):
    M = np.array([[1.0, 0.2, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    with caplog.at_level(logging.INFO, logger="rdm_purify.rdm"):
        D = TwoRDM.from_noisy(M, 3, 2)
    assert np.allclose(D.data, D.data.T)
    assert D.data[0, 1] == pytest.approx(0.1)
    assert "asymmetry 2.000e-01" in caplog.text


def test_json_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    D = TwoRDM(4, 2, random_sym(6, rng))
    obj = D.to_json()
    assert obj["convention"] == "packed" and len(obj["data"]) == 21
    path = tmp_path / "d.json"
    save_rdm(D, path)
    assert np.array_equal(load_rdm(path).data, D.data)
    json.loads(path.read_text())


def test_json_rejects_wrong_length():
    with pytest.raises(ValueError, match="lower-triangle"):
        TwoRDM.from_json({"r": 4, "N": 2, "convention": "packed", "data": [0.0] * 20})


# contraction ---------------------------------------------------------------

def test_contract_slater_is_idempotent_projector():
    D = rdm2_from_state(slater(4, [0, 1]))
    assert np.allclose(contract_to_1rdm(D).data, np.diag([1.0, 1.0, 0.0, 0.0]))


def test_contract_is_linear_in_scaling():
    D = rdm2_from_state(slater(6, [0, 1, 2]))
    assert np.allclose(contract_to_1rdm(D.scaled(0.3)).data, 0.3 * contract_to_1rdm(D).data)


def test_contract_matches_direct_expectation():
    rng = np.random.default_rng(4)
    psi = random_state(build_basis(6, 3, 1), rng)
    direct = oracles.rdm1(oracles.embed(psi), 6)
    assert np.allclose(contract_to_1rdm(rdm2_from_state(psi)).data, direct, atol=1e-12)
    assert np.allclose(rdm1_from_state(psi).data, direct, atol=1e-12)


def test_contract_needs_two_electrons():
    with pytest.raises(ValueError):
        contract_to_1rdm(TwoRDM(4, 1, np.zeros((6, 6))))


# Q and G maps ----------------------------------------------------------------

def test_map_Q_of_zero_is_antisymmetrized_identity():
    Q = map_Q(TwoRDM(4, 2, np.zeros((6, 6))))
    assert np.allclose(Q.data, np.eye(6))


def test_map_Q_of_filled_state_vanishes():
    D = rdm2_from_state(slater(4, [0, 1, 2, 3]))
    assert np.allclose(map_Q(D).data, 0.0, atol=1e-14)


def test_map_Q_matches_oracle():
    rng = np.random.default_rng(5)
    psi = random_state(build_basis(8, 4, 0), rng)
    assert np.allclose(map_Q(rdm2_from_state(psi)).data, rdmQ_from_state(psi).data, atol=1e-10)


def test_map_G_of_zero_vanishes():
    assert np.allclose(map_G(TwoRDM(4, 2, np.zeros((6, 6)))).data, 0.0)


def test_map_G_slater_diagonal():
    G = map_G(rdm2_from_state(slater(4, [0, 1]))).full()
    assert G[0, 0, 0, 0] == pytest.approx(1.0)
    assert G[2, 2, 2, 2] == pytest.approx(0.0)


def test_map_G_matches_oracle():
    rng = np.random.default_rng(6)
    psi = random_state(build_basis(6, 3, 1), rng)
    assert np.allclose(map_G(rdm2_from_state(psi)).data, rdmG_from_state(psi).data, atol=1e-10)


def test_maps_match_dense_operator_definitions():
    rng = np.random.default_rng(7)
    psi = random_state(build_basis(6, 2, 0), rng)
    v = oracles.embed(psi)
    D = rdm2_from_state(psi)
    assert np.allclose(map_Q(D).full(), oracles.q_full(v, 6), atol=1e-12)
    assert np.allclose(map_G(D).full(), oracles.g_full(v, 6), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(0.0, 1.0), seed=st.integers(0, 2**32 - 1))
def test_maps_preserve_convex_combinations(alpha, seed):
    rng = np.random.default_rng(seed)
    r, N = 5, 3
    D1 = TwoRDM(r, N, random_sym(n_pairs(r), rng))
    D2 = TwoRDM(r, N, random_sym(n_pairs(r), rng))
    mix = TwoRDM(r, N, alpha * D1.data + (1 - alpha) * D2.data)
    assert np.allclose(map_Q(mix).data, alpha * map_Q(D1).data + (1 - alpha) * map_Q(D2).data,
                       atol=1e-12)
    assert np.allclose(map_G(mix).data, alpha * map_G(D1).data + (1 - alpha) * map_G(D2).data,
                       atol=1e-12)


@pytest.mark.parametrize("r,N,sz2", [(4, 2, 0), (6, 3, 1), (8, 4, 0), (6, 4, 0)])
def test_pure_state_matrices_are_positive(r, N, sz2):
    rng = np.random.default_rng(r * 10 + N)
    for _ in range(5):
        D = rdm2_from_state(random_state(build_basis(r, N, sz2), rng))
        assert min_eigenvalues(D).min_eigenvalue >= -1e-10
        assert min_eigenvalues(map_Q(D)).min_eigenvalue >= -1e-10
        assert min_eigenvalues(map_G(D)).min_eigenvalue >= -1e-10


# spectra and norms ---------------------------------------------------------

def test_min_eigenvalue_of_identity():
    assert min_eigenvalues(TwoRDM(4, 2, np.eye(6))).min_eigenvalue == pytest.approx(1.0)


def test_min_eigenvalue_counts_negative_modes():
    spec = min_eigenvalues(np.diag([1.0, -0.2]))
    assert spec.min_eigenvalue == pytest.approx(-0.2)
    assert spec.n_negative == 1


def test_min_eigenvalues_accepts_gmatrix():
    G = GMatrix(2, np.diag([0.5, 0.0, -0.1, 2.0]))
    assert min_eigenvalues(G).n_negative == 1


def test_deviation_of_identical_is_zero():
    D = TwoRDM(4, 2, np.eye(6))
    assert deviation_norms(D, D) == (0.0, 0.0)


def test_deviation_packed_and_full():
    A = TwoRDM(3, 2, np.diag([0.5, -0.3, 0.0]))
    B = TwoRDM(3, 2, np.zeros((3, 3)))
    fro, nuc = deviation_norms(A, B, convention=PACKED)
    assert nuc == pytest.approx(0.8) and fro == pytest.approx(np.sqrt(0.34))
    fro_f, nuc_f = deviation_norms(A, B)
    assert nuc_f == pytest.approx(1.6) and fro_f == pytest.approx(2 * np.sqrt(0.34))
    assert fro_f == pytest.approx(np.linalg.norm(A.full() - B.full()))


def test_deviation_dimension_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        deviation_norms(TwoRDM(3, 2, np.eye(3)), TwoRDM(4, 2, np.eye(6)))
