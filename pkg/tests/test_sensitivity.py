# tests/test_sensitivity.py
import numpy as np
import pytest

from src.network_model import case_from_dict, reduced_dynamics
from src.sensitivity import (
    PerturbationSpec,
    SensitivityReport,
    dnw_sensitivity,
    eigenvalue_residual,
    first_order_eigs,
    perturb_case,
    perturbation_matrix,
    sensitivity_table,
    targets_from_text,
    u1var_metric,
)
from src.spectral_core import EigenSystem, eigensystem
from src.utils import SensitivityError


def _diag_system(values):
    n = len(values)
    return EigenSystem(eigenvalues=np.asarray(values, dtype=float), right_vectors=np.eye(n), left_vectors=np.eye(n))


def test_hand_two_by_two():
    """Base diag(1, 3) perturbed by [[0, 1], [1, 0]]."""
    report = first_order_eigs(_diag_system([1.0, 3.0]), np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(report.lambda1, [0.0, 0.0])
    np.testing.assert_allclose(report.u1, [[0.0, 0.5], [-0.5, 0.0]])


def test_hand_example_matches_exact_derivative():
    """Column j of U_1 is the derivative of the j-th eigenvector of [[1, e], [e, 3]] at e = 0."""
    eps = 1e-6
    values, vectors = np.linalg.eigh(np.array([[1.0, eps], [eps, 3.0]]))
    vectors = vectors * np.sign(vectors[np.argmax(np.abs(vectors), axis=0), [0, 1]])
    report = first_order_eigs(_diag_system([1.0, 3.0]), np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose((vectors - np.eye(2)) / eps, report.u1, atol=1e-5)


def test_zero_perturbation():
    report = first_order_eigs(_diag_system([1.0, 2.0, 5.0]), np.zeros((3, 3)))
    assert not report.lambda1.any()
    assert not report.u1.any()


def test_first_order_is_linear():
    rng = np.random.default_rng(0)
    es = _diag_system([0.5, 1.5, 4.0])
    a, b = rng.random((3, 3)), rng.random((3, 3))
    combined = first_order_eigs(es, 2.0 * a - 3.0 * b)
    ra, rb = first_order_eigs(es, a), first_order_eigs(es, b)
    np.testing.assert_allclose(combined.lambda1, 2.0 * ra.lambda1 - 3.0 * rb.lambda1, atol=1e-12)
    np.testing.assert_allclose(combined.u1, 2.0 * ra.u1 - 3.0 * rb.u1, atol=1e-12)


def test_symmetric_consistency():
    """For orthonormal U, Lambda_1 equals diag(U^T LM_1 U)."""
    rng = np.random.default_rng(1)
    base = rng.random((4, 4))
    base = base + base.T
    values, vectors = np.linalg.eigh(base)
    es = EigenSystem(eigenvalues=values, right_vectors=vectors, left_vectors=vectors.T)
    lm1 = rng.random((4, 4))
    report = first_order_eigs(es, lm1)
    np.testing.assert_allclose(report.lambda1, np.diag(vectors.T @ lm1 @ vectors), atol=1e-12)
    # No component along the unperturbed eigenvector itself
    np.testing.assert_allclose(np.diag(vectors.T @ report.u1), 0.0, atol=1e-12)


def test_degenerate_spectrum_is_rejected():
    with pytest.raises(SensitivityError, match='near-degenerate'):
        first_order_eigs(_diag_system([1.0, 1.0, 2.0]), np.ones((3, 3)))


def test_shape_mismatch_is_rejected():
    with pytest.raises(SensitivityError):
        first_order_eigs(_diag_system([1.0, 2.0]), np.ones((3, 3)))


def test_u1var_arithmetic():
    es = EigenSystem(
        eigenvalues=np.array([1.0, 2.0]),
        right_vectors=np.array([[0.8, 0.6], [-0.6, 0.8]]),
        left_vectors=np.array([[0.8, -0.6], [0.6, 0.8]])
    )
    report = SensitivityReport(lambda1=np.zeros(2), u1=np.array([[0.0, 0.06], [0.0, -0.08]]))
    assert u1var_metric(es, report) == pytest.approx(0.2)
    assert u1var_metric(es, SensitivityReport(np.zeros(2), np.zeros((2, 2)))) == 0.0


def test_u1var_rejects_vanishing_base_entry():
    es = _diag_system([1.0, 2.0])
    with pytest.raises(SensitivityError, match='ill-posed'):
        u1var_metric(es, SensitivityReport(np.zeros(2), np.ones((2, 2))))


@pytest.mark.parametrize('kwargs', [
    {'parameter': 'inertia', 'magnitude': 0.0},
    {'parameter': 'inertia', 'magnitude': -0.2},
    {'parameter': 'frequency'},
    {'parameter': 'inertia', 'mode': 'log'},
    {'parameter': 'inertia', 'targets': 'some'},
    {'parameter': 'inertia', 'targets': ()},
])
def test_perturbation_spec_validation(kwargs):
    with pytest.raises(SensitivityError):
        PerturbationSpec(**kwargs)


def test_perturb_case_targets(toy_case):
    spec = PerturbationSpec('voltage_mag', 0.1, targets=(2,))
    varied = perturb_case(toy_case, spec)
    assert varied.bus_map[2].voltage_mag == pytest.approx(1.1)
    assert varied.bus_map[1].voltage_mag == toy_case.bus_map[1].voltage_mag
    absolute = perturb_case(toy_case, PerturbationSpec('inertia', 0.5, targets=(3,), mode='absolute'))
    assert absolute.generator_map[3].inertia_h == pytest.approx(3.5)
    with pytest.raises(SensitivityError, match='no generator'):
        perturb_case(toy_case, PerturbationSpec('inertia', 0.2, targets=(4,)))


def test_uniform_inertia_scaling(toy_case):
    """Scaling every H by (1 + e) gives LM_1 = -LM_red / (1 + e)."""
    eps = 0.2
    lm1 = perturbation_matrix(toy_case, PerturbationSpec('inertia', eps, 'all'))
    lm0 = reduced_dynamics(toy_case).lm_red
    np.testing.assert_allclose(lm1, -lm0 / (1 + eps), rtol=1e-9, atol=1e-9)


def test_uniform_angle_scaling_cancels(make_case_doc):
    doc = make_case_doc(
        buses=[(1, 'generator', 1.0, 0.1), (2, 'generator', 1.0, 0.1), (3, 'load', 1.0, 0.1)],
        branches=[(1, 3, 5.0), (2, 3, 4.0), (1, 2, 1.0)],
        generators=[(1, 4.0), (2, 6.0)]
    )
    case = case_from_dict(doc)
    lm1 = perturbation_matrix(case, PerturbationSpec('voltage_ang', 0.2, 'all'))
    assert not lm1.any()
    report = dnw_sensitivity(case, PerturbationSpec('voltage_ang', 0.2, 'all'))
    assert report.u1var == 0.0


def test_difference_quotient_converges(toy_case):
    """Forward differences at 1e-6 and 1e-7 agree to 1e-3 relative."""
    coarse = perturbation_matrix(toy_case, PerturbationSpec('voltage_mag', 1e-6, 'all'))
    fine = perturbation_matrix(toy_case, PerturbationSpec('voltage_mag', 1e-7, 'all'))
    assert np.linalg.norm(coarse - fine) < 1e-3 * np.linalg.norm(coarse)


def test_residual_is_second_order_toy(toy_case):
    rd = reduced_dynamics(toy_case)
    es = eigensystem(rd)
    lm1 = perturbation_matrix(toy_case, PerturbationSpec('voltage_mag', 0.2, (1,)))
    report = first_order_eigs(es, lm1)
    residuals = [eigenvalue_residual(rd.lm_red, lm1, es, report, eps) for eps in (0.04, 0.02, 0.01)]
    for big, small in zip(residuals, residuals[1:]):
        assert 3.0 <= big / small <= 5.0


def test_each_sums_single_bus_reports(toy_case):
    each = dnw_sensitivity(toy_case, PerturbationSpec('inertia', 0.2, 'each'))
    singles = [dnw_sensitivity(toy_case, PerturbationSpec('inertia', 0.2, (bus,))) for bus in (1, 2, 3)]
    assert each.u1var == pytest.approx(sum(s.u1var for s in singles))
    assert set(each.per_target) == {1, 2, 3}
    np.testing.assert_allclose(each.lambda1, np.sum([s.lambda1 for s in singles], axis=0))
    assert each.u1var >= 0


def test_sensitivity_table_columns(toy_case):
    table = sensitivity_table(toy_case, epsilon=0.2)
    assert list(table['parameter']) == ['inertia', 'voltage_mag', 'voltage_ang']
    assert list(table.columns[:3]) == ['parameter', 'epsilon', 'u1var']
    assert {'lambda1_1', 'lambda1_2', 'lambda1_3'} <= set(table.columns)
    assert (table['u1var'] >= 0).all()


def test_targets_from_text():
    assert targets_from_text(None) == 'each'
    assert targets_from_text(['all']) == 'all'
    assert targets_from_text(['30', '33']) == (30, 33)
    with pytest.raises(SensitivityError):
        targets_from_text(['x'])
