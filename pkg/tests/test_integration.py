import time

import numpy as np
import pytest

from src.network_model import (
    Replacement,
    ScenarioSpec,
    apply_scenario,
    load_case,
    reduced_dynamics,
    save_case,
)
from src.sensitivity import (
    PerturbationSpec,
    eigenvalue_residual,
    first_order_eigs,
    perturbation_matrix,
    sensitivity_table,
)
from src.spectral_core import eigensystem, merw_dnw
from src.swing_sim import DisturbanceSpec, coherence_score, simulate
from src.zoning import inertia_sweep, sweep_variation, sweep_values, zone_case


def test_end_to_end_flow(ieee39_s2):
    """Zone a scenario, disturb it and score the zones."""
    # Setup
    rd = reduced_dynamics(ieee39_s2)
    zr = zone_case(ieee39_s2)

    # Process flow
    tr = simulate(rd, DisturbanceSpec(bus_id=16, kind='power_step', size=0.1), horizon=4.0)
    score = coherence_score(tr, zr)

    # Assertions
    assert 1 <= zr.k <= len(rd.gen_order)
    assert score.n_intra + score.n_inter == len(rd.gen_order) * (len(rd.gen_order) - 1) // 2
    assert np.all(np.isfinite(tr.omega))


def test_sensitivity_ranking(ieee39_s1):
    """Inertia moves the DNW most, then voltage magnitude, then voltage angle."""
    table = sensitivity_table(ieee39_s1, epsilon=0.2).set_index('parameter')['u1var']
    assert table['inertia'] > table['voltage_mag'] > table['voltage_ang']


@pytest.mark.parametrize('parameter,targets', [
    ('inertia', (39,)),
    ('voltage_mag', (39,)),
    ('voltage_ang', 'all'),
])
def test_first_order_error_is_quadratic(ieee39_s1, parameter, targets):
    """Halving epsilon divides the eigenvalue prediction error by about four."""
    rd = reduced_dynamics(ieee39_s1)
    es = eigensystem(rd)
    lm1 = perturbation_matrix(ieee39_s1, PerturbationSpec(parameter, 0.2, targets))
    report = first_order_eigs(es, lm1)
    residuals = [eigenvalue_residual(rd.lm_red, lm1, es, report, eps) for eps in (0.04, 0.02, 0.01)]
    for big, small in zip(residuals, residuals[1:]):
        assert 3.0 <= big / small <= 5.0


def test_nearby_generator_moves_neighbour_weights_more(ieee39_s1, ieee39_s3, ieee39_s4):
    """Sweeping the unit added at bus 19 shifts the DNW around buses 33, 34 and 20 more than the unit at bus 28."""
    values = sweep_values(2.0, 6.0, 1.0)
    reference = zone_case(ieee39_s1)
    near = sweep_variation(inertia_sweep(ieee39_s4, 19, values), reference, (33, 34, 20))
    far = sweep_variation(inertia_sweep(ieee39_s3, 28, values), reference, (33, 34, 20))
    assert near.mean() > far.mean()
    assert (near > far).all()


def test_renewable_scenario_needs_fewer_zones(ieee39_s1, ieee39_s2):
    assert zone_case(ieee39_s1).k > zone_case(ieee39_s2).k


def test_heaviest_zone_sits_closest_to_system_sep(ieee39_s1):
    zr = zone_case(ieee39_s1)
    assert int(np.argmin(zr.sed)) == int(np.argmax(zr.zone_weight))


@pytest.mark.parametrize('bus', [4, 15, 16, 21, 30])
def test_zones_are_more_coherent_inside(ieee39_s1, bus):
    """Speed deviations after a power step correlate more within zones than across them."""
    zr = zone_case(ieee39_s1)
    tr = simulate(reduced_dynamics(ieee39_s1), DisturbanceSpec(bus_id=bus, kind='power_step', size=0.1))
    score = coherence_score(tr, zr)
    assert score.intra > score.inter


def test_sweep_endpoint_matches_replacement(ieee39_s1):
    df = inertia_sweep(ieee39_s1, 35, [4.0])
    zr = zone_case(apply_scenario(ieee39_s1, ScenarioSpec(replacements=(Replacement(35, 4.0, 'synchronous'),))))
    np.testing.assert_allclose(df['dnw'].to_numpy(), zr.bus_weights)


def test_saved_case_zones_identically(ieee39_s3, tmp_path):
    path = save_case(ieee39_s3, tmp_path / 'case.json')
    assert zone_case(load_case(path)).to_document() == zone_case(ieee39_s3).to_document()


def test_dnw_is_fast(ieee39_s1):
    rd = reduced_dynamics(ieee39_s1)
    timings = []
    for _ in range(100):
        start = time.perf_counter()
        merw_dnw(rd)
        timings.append(time.perf_counter() - start)
    assert np.median(timings) < 0.01


def test_zoning_is_fast(ieee39_s1):
    zone_case(ieee39_s1)
    start = time.perf_counter()
    zone_case(ieee39_s1)
    assert time.perf_counter() - start < 0.5
