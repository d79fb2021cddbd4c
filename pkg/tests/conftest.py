import math

import numpy as np
import pytest

from src.network_model import case_from_dict, fixture_case


def case_doc(buses, branches, generators, nominal_freq_hz=60.0, name='test'):
    """Assemble a schema-1 case document from compact tuples.

    buses: (id, kind, v_mag, v_ang_rad[, p_load_mw])
    branches: (from, to, b_pu)
    generators: (bus, h_s)
    """
    return {
        'schema_version': 1,
        'name': name,
        'nominal_freq_hz': nominal_freq_hz,
        'buses': [
            {'id': b[0], 'kind': b[1], 'v_mag_pu': b[2], 'v_ang_rad': b[3],
             'p_load_mw': b[4] if len(b) > 4 else 0.0}
            for b in buses
        ],
        'branches': [{'from': f, 'to': t, 'b_pu': b} for f, t, b in branches],
        'generators': [{'bus': g, 'h_s': h, 'rating_mva': 100.0} for g, h in generators]
    }


@pytest.fixture
def make_case_doc():
    return case_doc


# H giving M = 2H / (2 pi 60) = 1
UNIT_M_INERTIA = math.pi * 60.0


@pytest.fixture
def chain_doc():
    """Generator 1 -- load 3 -- generator 2, b = 5 on both branches, flat voltages."""
    return case_doc(
        buses=[(1, 'generator', 1.0, 0.0), (2, 'generator', 1.0, 0.0), (3, 'load', 1.0, 0.0, 50.0)],
        branches=[(1, 3, 5.0), (3, 2, 5.0)],
        generators=[(1, UNIT_M_INERTIA), (2, UNIT_M_INERTIA)],
        name='chain'
    )


@pytest.fixture
def chain_case(chain_doc):
    return case_from_dict(chain_doc)


@pytest.fixture
def toy_doc():
    """Three generators around a load hub, plus a tie between generators 1 and 2."""
    return case_doc(
        buses=[
            (1, 'generator', 1.02, 0.05),
            (2, 'generator', 1.00, 0.02),
            (3, 'generator', 0.98, -0.03),
            (4, 'load', 0.99, -0.06, 120.0),
        ],
        branches=[(1, 4, 8.0), (2, 4, 6.0), (3, 4, 4.0), (1, 2, 3.0)],
        generators=[(1, 4.0), (2, 6.5), (3, 3.0)],
        name='toy'
    )


@pytest.fixture
def toy_case(toy_doc):
    return case_from_dict(toy_doc)


def random_case_doc(seed, n_min=3, n_max=30, ng_max=10):
    """Random connected case: spanning tree plus extra branches, positive couplings."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_min, n_max + 1))
    ng = int(rng.integers(2, min(ng_max, n) + 1))
    ids = [int(i) for i in rng.permutation(np.arange(1, n + 1))]
    gens = set(ids[:ng])

    edges = set()
    for k in range(1, n):
        a, b = ids[k], ids[int(rng.integers(0, k))]
        edges.add((min(a, b), max(a, b)))
    for _ in range(int(rng.integers(0, n))):
        a, b = (int(x) for x in rng.choice(ids, size=2, replace=False))
        edges.add((min(a, b), max(a, b)))

    buses = [
        (i, 'generator' if i in gens else 'load', float(rng.uniform(0.95, 1.05)), float(rng.uniform(-0.2, 0.2)))
        for i in sorted(ids)
    ]
    branches = [(a, b, float(rng.uniform(2.0, 20.0))) for a, b in sorted(edges)]
    generators = [(g, float(rng.uniform(2.0, 8.0))) for g in sorted(gens)]
    return case_doc(buses, branches, generators, name=f'random_{seed}')


@pytest.fixture
def random_doc_factory():
    return random_case_doc


@pytest.fixture
def random_case_factory():
    def factory(seed, **kwargs):
        return case_from_dict(random_case_doc(seed, **kwargs))
    return factory


@pytest.fixture(scope='session')
def ieee39_s1():
    return fixture_case(1)


@pytest.fixture(scope='session')
def ieee39_s2():
    return fixture_case(2)


@pytest.fixture(scope='session')
def ieee39_s3():
    return fixture_case(3)


@pytest.fixture(scope='session')
def ieee39_s4():
    return fixture_case(4)
