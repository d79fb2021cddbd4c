# tests/test_spectral_core.py
import logging

import numpy as np
import pytest

from src.network_model import build_laplacian, case_from_dict, reduced_dynamics
from src.spectral_core import (
    PartitionedLaplacian,
    ReducedDynamics,
    absolute_eigensystem,
    eigensystem,
    extend_dnw,
    extension_matrix,
    inertia_coefficients,
    kron_reduce,
    merw_dnw,
    perron_power_iteration,
)
from src.utils import MatrixChecks, SpectralError


def test_inertia_coefficients(chain_case):
    m = inertia_coefficients(chain_case.generators, (1, 2), 60.0)
    np.testing.assert_allclose(m, [1.0, 1.0])
    with pytest.raises(SpectralError):
        inertia_coefficients(chain_case.generators, (1, 2, 3), 60.0)


def test_chain_kron_reduction(chain_case):
    """Eliminating the middle load gives two generators coupled by 2.5."""
    rd = reduced_dynamics(chain_case)
    np.testing.assert_allclose(rd.l_red, [[2.5, -2.5], [-2.5, 2.5]], atol=1e-12)
    np.testing.assert_allclose(rd.lm_red, rd.l_red, atol=1e-12)
    np.testing.assert_allclose(rd.extension, [[0.5, 0.5]], atol=1e-12)


def test_kron_matches_schur_complement(random_case_factory):
    for seed in range(20):
        case = random_case_factory(seed)
        pl = build_laplacian(case)
        rd = kron_reduce(pl, case.generators, case.nominal_freq)
        if pl.load_order:
            expected = pl.p_gg - pl.p_gk @ np.linalg.inv(pl.p_kk) @ pl.p_kg
        else:
            expected = pl.p_gg
        scale = max(1.0, np.max(np.abs(expected)))
        assert np.max(np.abs(rd.l_red - expected)) < 1e-8 * scale
        assert np.max(np.abs(rd.l_red.sum(axis=1))) < 1e-10 * scale
        assert np.max(np.abs(rd.l_red - rd.l_red.T)) < 1e-12 * scale


def test_extension_matrix_is_stochastic(ieee39_s1, random_case_factory):
    for case in [ieee39_s1] + [random_case_factory(seed) for seed in range(5)]:
        ext = extension_matrix(build_laplacian(case))
        if ext.size:
            np.testing.assert_allclose(ext.sum(axis=1), 1.0, atol=1e-10)
            assert np.min(ext) > -1e-12


def test_extension_zero_pattern_blocked_paths(ieee39_s4):
    """
    With bus 19 hosting a generator, bus 33 reaches no load bus except
    through 19 and bus 34 reaches only bus 20.
    """
    pl = build_laplacian(ieee39_s4)
    ext = extension_matrix(pl)
    col33 = ext[:, pl.gen_order.index(33)]
    col34 = ext[:, pl.gen_order.index(34)]
    assert np.max(np.abs(col33)) < 1e-14
    row20 = pl.load_order.index(20)
    assert col34[row20] > 0.1
    assert np.max(np.abs(np.delete(col34, row20))) < 1e-14


def test_load_island_is_rejected():
    pl = PartitionedLaplacian(
        p_gg=[[1.0, -1.0], [-1.0, 1.0]],
        p_gk=[[0.0], [0.0]],
        p_kg=[[0.0, 0.0]],
        p_kk=[[0.0]],
        gen_order=(1, 2),
        load_order=(3,)
    )
    with pytest.raises(SpectralError, match='load island'):
        extension_matrix(pl)


def test_partitioned_blocks_are_read_only(chain_case):
    pl = build_laplacian(chain_case)
    with pytest.raises(ValueError):
        pl.p_gg[0, 0] = 1.0


def test_eigensystem_decomposes_lm_red(ieee39_s1, toy_case):
    for case in (ieee39_s1, toy_case):
        rd = reduced_dynamics(case)
        es = eigensystem(rd)
        n = len(rd.gen_order)
        np.testing.assert_allclose(es.left_vectors @ es.right_vectors, np.eye(n), atol=1e-9)
        scale = np.max(np.abs(es.eigenvalues))
        residual = rd.lm_red @ es.right_vectors - es.right_vectors * es.eigenvalues
        assert np.max(np.abs(residual)) < 1e-9 * scale
        assert np.all(np.diff(es.eigenvalues) >= 0)
        assert abs(es.eigenvalues[0]) < 1e-8 * scale


def test_eigenvector_sign_convention(toy_case):
    es = eigensystem(reduced_dynamics(toy_case))
    for col in es.right_vectors.T:
        assert col[np.argmax(np.abs(col))] > 0


def _check_merw(dnw, rd):
    assert np.max(np.abs(dnw.transition.sum(axis=1) - 1.0)) < 1e-12
    pi = dnw.gen_weights
    assert np.max(np.abs(pi @ dnw.transition - pi)) < 1e-10
    assert np.all(pi > 0)
    assert abs(pi.sum() - 1.0) < 1e-12
    # P_M is the same whether built from |lm_red| or its symmetric conjugate
    magnitude = np.abs(rd.lm_red)
    u = dnw.perron_vector / np.sqrt(rd.m_diag)
    direct = magnitude * u[None, :] / (dnw.perron_value * u[:, None])
    np.testing.assert_allclose(direct, dnw.transition, atol=1e-9)


def test_merw_invariants_fixtures(ieee39_s1, ieee39_s2, ieee39_s3, ieee39_s4):
    for case in (ieee39_s1, ieee39_s2, ieee39_s3, ieee39_s4):
        rd = reduced_dynamics(case)
        _check_merw(merw_dnw(rd), rd)


def test_merw_invariants_random(random_case_factory):
    for seed in range(100):
        rd = reduced_dynamics(random_case_factory(seed))
        _check_merw(merw_dnw(rd), rd)


def test_symmetric_two_generator_dnw(chain_case):
    dnw = merw_dnw(reduced_dynamics(chain_case))
    np.testing.assert_allclose(dnw.gen_weights, [0.5, 0.5], atol=1e-12)
    assert dnw.metadata['nonnegative_transform'] == 'absolute'


def test_power_iteration_matches_eigensolver(toy_case, chain_case):
    for case in (toy_case, chain_case):
        rd = reduced_dynamics(case)
        by_eigh = merw_dnw(rd)
        by_power = merw_dnw(rd, method='power')
        np.testing.assert_allclose(by_power.gen_weights, by_eigh.gen_weights, atol=1e-8)
        assert by_power.perron_value == pytest.approx(by_eigh.perron_value, rel=1e-10)


def test_power_iteration_simple_matrix():
    value, vector = perron_power_iteration(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert value == pytest.approx(3.0)
    np.testing.assert_allclose(vector, [np.sqrt(0.5), np.sqrt(0.5)], atol=1e-10)


def test_unknown_merw_method(chain_case):
    with pytest.raises(SpectralError):
        merw_dnw(reduced_dynamics(chain_case), method='arnoldi')


def test_reducible_matrix_is_rejected():
    l_red = np.array([
        [1.0, -1.0, 0.0, 0.0],
        [-1.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 2.0, -2.0],
        [0.0, 0.0, -2.0, 2.0],
    ])
    rd = ReducedDynamics.from_matrices(l_red, [1.0, 1.0, 1.0, 1.0])
    with pytest.raises(SpectralError, match='reducible'):
        merw_dnw(rd)


def test_extend_dnw_is_convex_combination(ieee39_s1):
    pl = build_laplacian(ieee39_s1)
    rd = kron_reduce(pl, ieee39_s1.generators, ieee39_s1.nominal_freq)
    dnw = extend_dnw(merw_dnw(rd), pl)
    assert dnw.extended
    assert dnw.bus_order == pl.bus_order
    loads = dnw.all_weights[len(pl.gen_order):]
    np.testing.assert_allclose(loads, extension_matrix(pl) @ dnw.gen_weights, atol=1e-12)
    assert np.all(loads >= dnw.gen_weights.min() - 1e-12)
    assert np.all(loads <= dnw.gen_weights.max() + 1e-12)
    frame = dnw.to_frame()
    assert list(frame.columns) == ['bus_id', 'weight']
    assert dnw.weight_of(20) == pytest.approx(frame.set_index('bus_id').loc[20, 'weight'])


def test_absolute_eigensystem_perron_column(ieee39_s1):
    rd = reduced_dynamics(ieee39_s1)
    es = absolute_eigensystem(rd)
    perron = es.right_vectors[:, -1]
    assert np.all(perron > 0)
    dnw = merw_dnw(rd)
    assert es.eigenvalues[-1] == pytest.approx(dnw.perron_value, rel=1e-10)


def test_reduction_keeps_laplacian_structure(random_case_factory, caplog):
    with caplog.at_level(logging.WARNING, logger='src.spectral_core'):
        for seed in range(20):
            case = random_case_factory(seed)
            pl = build_laplacian(case)
            full = np.block([[pl.p_gg, pl.p_gk], [pl.p_kg, pl.p_kk]])
            assert MatrixChecks.max_asymmetry(full) < 1e-12
            assert MatrixChecks.max_row_sum(full) < 1e-10 * max(1.0, np.max(np.abs(full)))
            rd = kron_reduce(pl, case.generators, case.nominal_freq)
            assert MatrixChecks.max_asymmetry(rd.l_red) == 0.0
            assert MatrixChecks.max_row_sum(rd.l_red) < 1e-8 * max(1.0, np.max(np.abs(rd.l_red)))
    assert 'ill-conditioned' not in caplog.text


def test_scaling_all_inertia_scales_lm_red(toy_doc):
    scale = 2.5
    scaled_doc = dict(toy_doc, generators=[dict(g, h_s=g['h_s'] * scale) for g in toy_doc['generators']])
    base = reduced_dynamics(case_from_dict(toy_doc))
    scaled = reduced_dynamics(case_from_dict(scaled_doc))
    np.testing.assert_allclose(scaled.lm_red, base.lm_red / scale, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(merw_dnw(scaled).gen_weights, merw_dnw(base).gen_weights, atol=1e-12)


def test_complete_graph_eigensystem_orders_ties():
    """K3 with unit inertia: eigenvalues 0, 3, 3 and a reproducible basis for the pair."""
    l_red = 3.0 * np.eye(3) - np.ones((3, 3))
    rd = ReducedDynamics.from_matrices(l_red, [1.0, 1.0, 1.0])
    es = eigensystem(rd)
    np.testing.assert_allclose(es.eigenvalues, [0.0, 3.0, 3.0], atol=1e-12)
    np.testing.assert_allclose(np.abs(es.right_vectors[:, 0]), np.full(3, 1 / np.sqrt(3)), atol=1e-12)
    peaks = np.argmax(np.abs(es.right_vectors), axis=0)
    assert peaks[1] <= peaks[2]
    for col in es.right_vectors.T:
        assert col[np.argmax(np.abs(col))] > 0
    again = eigensystem(ReducedDynamics.from_matrices(l_red, [1.0, 1.0, 1.0]))
    np.testing.assert_array_equal(again.right_vectors, es.right_vectors)


def test_power_iteration_handles_periodic_matrix():
    """Unshifted iteration on a bipartite matrix oscillates; the default shift converges."""
    value, vector = perron_power_iteration(np.array([[0.0, 1.0], [4.0, 0.0]]))
    assert value == pytest.approx(2.0)
    np.testing.assert_allclose(vector, np.array([1.0, 2.0]) / np.sqrt(5.0), atol=1e-10)
