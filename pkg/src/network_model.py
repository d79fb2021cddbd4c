# src/network_model.py
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

import networkx as nx
import numpy as np
import pandas as pd

from .config import get_fixture_dir
from .spectral_core import PartitionedLaplacian, ReducedDynamics, kron_reduce
from .utils import SCHEMA_VERSION, CaseValidationError, ScenarioError

logger = logging.getLogger(__name__)

BUS_KINDS = ('generator', 'load')
GENERATOR_TECHS = ('synchronous', 'dfig_wtg')
LOAD_REDISTRIBUTIONS = ('none', 'uniform')


@dataclass(frozen=True)
class BusRecord:
    id: int
    kind: str
    voltage_mag: float
    voltage_ang: float
    p_load_mw: float = 0.0


@dataclass(frozen=True)
class GeneratorRecord:
    bus_id: int
    inertia_h: float
    rating: float
    tech: str = 'synchronous'


@dataclass(frozen=True)
class BranchRecord:
    from_bus: int
    to_bus: int
    susceptance: float


@dataclass(frozen=True)
class NetworkCase:
    """
    Validated network case with its solved pre-disturbance operating point.

    Buses, branches and generators are stored as tuples so a case can be
    shared freely; every transformation returns a new case.
    """
    buses: Tuple[BusRecord, ...]
    branches: Tuple[BranchRecord, ...]
    generators: Tuple[GeneratorRecord, ...]
    nominal_freq: float
    name: str = ''

    @property
    def bus_map(self) -> Dict[int, BusRecord]:
        return {bus.id: bus for bus in self.buses}

    @property
    def generator_map(self) -> Dict[int, GeneratorRecord]:
        return {gen.bus_id: gen for gen in self.generators}

    @property
    def gen_bus_ids(self) -> List[int]:
        return sorted(bus.id for bus in self.buses if bus.kind == 'generator')

    @property
    def load_bus_ids(self) -> List[int]:
        return sorted(bus.id for bus in self.buses if bus.kind == 'load')

    @property
    def total_load_mw(self) -> float:
        return float(sum(bus.p_load_mw for bus in self.buses))

    def neighbors(self, bus_id: int) -> Dict[int, float]:
        """Susceptance to every adjacent bus."""
        adjacent = {}
        for branch in self.branches:
            if branch.from_bus == bus_id:
                adjacent[branch.to_bus] = branch.susceptance
            elif branch.to_bus == bus_id:
                adjacent[branch.from_bus] = branch.susceptance
        return adjacent


@dataclass(frozen=True)
class Replacement:
    bus_id: int
    inertia_h: float
    tech: str = 'dfig_wtg'


@dataclass(frozen=True)
class Addition:
    bus_id: int
    rating_mw: float
    inertia_h: float
    tech: str = 'dfig_wtg'


@dataclass(frozen=True)
class ScenarioSpec:
    replacements: Tuple[Replacement, ...] = field(default_factory=tuple)
    additions: Tuple[Addition, ...] = field(default_factory=tuple)
    load_redistribution: str = 'none'


class CaseValidator:
    """Checks every NetworkCase invariant and names the offending field."""

    @staticmethod
    def validate_case(case: NetworkCase) -> NetworkCase:
        """
        Validate a case in place of construction.

        Args:
            case: Case to check

        Returns:
            The same case when all invariants hold

        Raises:
            CaseValidationError: naming the first violated invariant
        """
        buses = pd.DataFrame([vars(bus) for bus in case.buses],
                             columns=['id', 'kind', 'voltage_mag', 'voltage_ang', 'p_load_mw'])
        generators = pd.DataFrame([vars(gen) for gen in case.generators],
                                  columns=['bus_id', 'inertia_h', 'rating', 'tech'])
        branches = pd.DataFrame([vars(br) for br in case.branches],
                                columns=['from_bus', 'to_bus', 'susceptance'])

        if not (np.isfinite(case.nominal_freq) and case.nominal_freq > 0):
            raise CaseValidationError(f"nominal_freq_hz must be > 0, got {case.nominal_freq}")

        duplicated = buses.loc[buses['id'].duplicated(), 'id'].tolist()
        if duplicated:
            raise CaseValidationError(f"buses: duplicate bus id(s) {duplicated}")

        bad_kind = buses.loc[~buses['kind'].isin(BUS_KINDS)]
        if not bad_kind.empty:
            row = bad_kind.iloc[0]
            raise CaseValidationError(f"buses[id={row['id']}].kind must be one of {BUS_KINDS}, got {row['kind']!r}")

        bad_mag = buses.loc[~(buses['voltage_mag'] > 0)]
        if not bad_mag.empty:
            row = bad_mag.iloc[0]
            raise CaseValidationError(f"buses[id={row['id']}].v_mag_pu must be > 0, got {row['voltage_mag']}")

        bad_ang = buses.loc[~np.isfinite(buses['voltage_ang'].astype(float))]
        if not bad_ang.empty:
            raise CaseValidationError(f"buses[id={bad_ang.iloc[0]['id']}].v_ang_rad must be finite")

        known = set(buses['id'])
        for idx, br in enumerate(branches.itertuples(index=False)):
            if br.from_bus not in known or br.to_bus not in known:
                raise CaseValidationError(
                    f"branches[{idx}] references unknown bus ({br.from_bus} -> {br.to_bus})")
            if br.from_bus == br.to_bus:
                raise CaseValidationError(f"branches[{idx}] is a self loop at bus {br.from_bus}")
            if not np.isfinite(br.susceptance) or br.susceptance == 0:
                raise CaseValidationError(
                    f"branches[{idx}].b_pu must be finite and nonzero, got {br.susceptance}")

        bad_h = generators.loc[~(generators['inertia_h'] > 0)]
        if not bad_h.empty:
            row = bad_h.iloc[0]
            raise CaseValidationError(f"generators[bus={row['bus_id']}].h_s must be > 0, got {row['inertia_h']}")

        bad_tech = generators.loc[~generators['tech'].isin(GENERATOR_TECHS)]
        if not bad_tech.empty:
            row = bad_tech.iloc[0]
            raise CaseValidationError(
                f"generators[bus={row['bus_id']}].tech must be one of {GENERATOR_TECHS}, got {row['tech']!r}")

        gen_kind = set(buses.loc[buses['kind'] == 'generator', 'id'])
        for bus_id in generators['bus_id']:
            if bus_id not in gen_kind:
                raise CaseValidationError(f"generators[bus={bus_id}].bus must refer to a bus of kind generator")
        counts = generators['bus_id'].value_counts()
        for bus_id in sorted(gen_kind):
            if counts.get(bus_id, 0) != 1:
                raise CaseValidationError(
                    f"generator bus {bus_id} must have exactly one generator record, found {counts.get(bus_id, 0)}")
        if len(gen_kind) < 2:
            raise CaseValidationError(f"case needs at least 2 generator buses, found {len(gen_kind)}")

        graph = nx.Graph()
        graph.add_nodes_from(buses['id'])
        graph.add_edges_from(zip(branches['from_bus'], branches['to_bus']))
        if not nx.is_connected(graph):
            components = [sorted(c) for c in nx.connected_components(graph)]
            raise CaseValidationError(f"branches: network is disconnected, components {components}")

        return case


def _branch_susceptance(entry: Mapping, idx: int) -> float:
    if 'b_pu' in entry:
        return float(entry['b_pu'])
    if 'x_pu' in entry:
        r = float(entry.get('r_pu', 0.0))
        x = float(entry['x_pu'])
        tap = float(entry.get('tap') or 1.0)
        if r == 0.0 and x == 0.0:
            raise CaseValidationError(f"branches[{idx}] has zero impedance")
        return x / (r * r + x * x) / tap
    raise CaseValidationError(f"branches[{idx}] needs b_pu or x_pu")


def _merge_parallel(branches: List[BranchRecord]) -> Tuple[BranchRecord, ...]:
    """Sum parallel branches into one equivalent susceptance per bus pair."""
    merged: Dict[Tuple[int, int], float] = {}
    for branch in branches:
        key = (min(branch.from_bus, branch.to_bus), max(branch.from_bus, branch.to_bus))
        merged[key] = merged.get(key, 0.0) + branch.susceptance
    return tuple(BranchRecord(a, b, susceptance) for (a, b), susceptance in sorted(merged.items()))


def case_from_dict(doc: Mapping, name: str = '') -> NetworkCase:
    """
    Build and validate a NetworkCase from a parsed case document.

    Args:
        doc: Parsed case document (schema_version 1)
        name: Label carried in reports

    Returns:
        Validated NetworkCase
    """
    try:
        if 'schema_version' not in doc:
            raise CaseValidationError(f"case document needs schema_version {SCHEMA_VERSION}")
        version = doc['schema_version']
        if version != SCHEMA_VERSION:
            raise CaseValidationError(f"schema_version must be {SCHEMA_VERSION}, got {version}")

        buses = []
        for idx, entry in enumerate(doc['buses']):
            if 'v_ang_rad' in entry:
                angle = float(entry['v_ang_rad'])
            elif 'v_ang_deg' in entry:
                angle = math.radians(float(entry['v_ang_deg']))
            else:
                raise CaseValidationError(f"buses[{idx}] needs v_ang_rad or v_ang_deg")
            buses.append(BusRecord(
                id=int(entry['id']),
                kind=str(entry['kind']),
                voltage_mag=float(entry['v_mag_pu']),
                voltage_ang=angle,
                p_load_mw=float(entry.get('p_load_mw', 0.0))
            ))

        branches = [
            BranchRecord(int(entry['from']), int(entry['to']), _branch_susceptance(entry, idx))
            for idx, entry in enumerate(doc['branches'])
        ]
        generators = [
            GeneratorRecord(
                bus_id=int(entry['bus']),
                inertia_h=float(entry['h_s']),
                rating=float(entry.get('rating_mva', 0.0)),
                tech=str(entry.get('tech', 'synchronous'))
            )
            for entry in doc['generators']
        ]
        nominal_freq = float(doc['nominal_freq_hz'])
    except KeyError as e:
        logger.error(f"Case document is missing field {e}")
        raise CaseValidationError(f"case document is missing field {e}") from e
    except CaseValidationError:
        raise
    except (TypeError, ValueError) as e:
        logger.error(f"Case document has a malformed value: {str(e)}")
        raise CaseValidationError(f"malformed case document: {e}") from e

    # Self loops must reach the validator before parallel merging hides them
    for idx, branch in enumerate(branches):
        if branch.from_bus == branch.to_bus:
            raise CaseValidationError(f"branches[{idx}] is a self loop at bus {branch.from_bus}")

    case = NetworkCase(
        buses=tuple(sorted(buses, key=lambda b: b.id)),
        branches=_merge_parallel(branches),
        generators=tuple(sorted(generators, key=lambda g: g.bus_id)),
        nominal_freq=nominal_freq,
        name=name or str(doc.get('name', ''))
    )
    return CaseValidator.validate_case(case)


def case_to_dict(case: NetworkCase) -> Dict:
    """Serialize a case back to the case schema."""
    return {
        'schema_version': SCHEMA_VERSION,
        'name': case.name,
        'nominal_freq_hz': case.nominal_freq,
        'buses': [
            {'id': b.id, 'kind': b.kind, 'v_mag_pu': b.voltage_mag,
             'v_ang_rad': b.voltage_ang, 'p_load_mw': b.p_load_mw}
            for b in case.buses
        ],
        'branches': [
            {'from': br.from_bus, 'to': br.to_bus, 'b_pu': br.susceptance}
            for br in case.branches
        ],
        'generators': [
            {'bus': g.bus_id, 'h_s': g.inertia_h, 'rating_mva': g.rating, 'tech': g.tech}
            for g in case.generators
        ]
    }


def _read_document(path: Union[str, Path]) -> Dict:
    path = Path(path)
    try:
        with open(path) as f:
            doc = json.load(f)
    except FileNotFoundError as e:
        logger.error(f"File not found: {path}")
        raise CaseValidationError(f"file not found: {path}") from e
    except json.JSONDecodeError as e:
        logger.error(f"Error parsing {path}: {str(e)}")
        raise CaseValidationError(f"cannot parse {path}: {e}") from e
    if not isinstance(doc, Mapping):
        logger.error(f"Top level of {path} is {type(doc).__name__}, not an object")
        raise CaseValidationError(f"{path} must hold a JSON object, got {type(doc).__name__}")
    return doc


def load_case(path: Union[str, Path]) -> NetworkCase:
    """
    Load and validate a case file.

    Args:
        path: Path to a JSON case document

    Returns:
        Validated NetworkCase
    """
    doc = _read_document(path)
    case = case_from_dict(doc, name=doc.get('name') or Path(path).stem)
    logger.info(f"Loaded case {case.name}: {len(case.buses)} buses, "
                f"{len(case.generators)} generators, {case.total_load_mw:.1f} MW load")
    return case


def save_case(case: NetworkCase, path: Union[str, Path]) -> Path:
    path = Path(path)
    with open(path, 'w') as f:
        json.dump(case_to_dict(case), f, indent=2)
    return path


def scenario_from_dict(doc: Mapping) -> ScenarioSpec:
    """Parse a scenario document into a ScenarioSpec."""
    try:
        if 'schema_version' not in doc:
            raise ScenarioError(f"scenario document needs schema_version {SCHEMA_VERSION}")
        version = doc['schema_version']
        if version != SCHEMA_VERSION:
            raise ScenarioError(f"schema_version must be {SCHEMA_VERSION}, got {version}")
        replacements = tuple(
            Replacement(int(r['bus']), float(r['h_s']), str(r.get('tech', 'dfig_wtg')))
            for r in doc.get('replacements', [])
        )
        additions = tuple(
            Addition(int(a['bus']), float(a['rating_mw']), float(a['h_s']), str(a.get('tech', 'dfig_wtg')))
            for a in doc.get('additions', [])
        )
        redistribution = str(doc.get('load_redistribution', 'none'))
    except KeyError as e:
        raise ScenarioError(f"scenario document is missing field {e}") from e
    if redistribution not in LOAD_REDISTRIBUTIONS:
        raise ScenarioError(f"load_redistribution must be one of {LOAD_REDISTRIBUTIONS}, got {redistribution!r}")
    return ScenarioSpec(replacements, additions, redistribution)


def load_scenario(path: Union[str, Path]) -> ScenarioSpec:
    return scenario_from_dict(_read_document(path))


def apply_scenario(base: NetworkCase, spec: ScenarioSpec) -> NetworkCase:
    """
    Overlay a scenario on a base case without touching the base.

    Args:
        base: Validated base case
        spec: Replacements, additions and load redistribution to apply

    Returns:
        New validated NetworkCase
    """
    bus_map = dict(base.bus_map)
    generators = dict(base.generator_map)

    for rep in spec.replacements:
        if rep.bus_id not in bus_map:
            raise ScenarioError(f"replacement references unknown bus {rep.bus_id}")
        if rep.bus_id not in generators:
            raise ScenarioError(f"replacement at bus {rep.bus_id} but the bus hosts no generator")
        generators[rep.bus_id] = replace(generators[rep.bus_id], inertia_h=rep.inertia_h, tech=rep.tech)

    added_mw = 0.0
    for add in spec.additions:
        if add.bus_id not in bus_map:
            raise ScenarioError(f"addition references unknown bus {add.bus_id}")
        if add.bus_id in generators:
            raise ScenarioError(f"addition at bus {add.bus_id} but the bus already hosts a generator")
        bus_map[add.bus_id] = replace(bus_map[add.bus_id], kind='generator')
        generators[add.bus_id] = GeneratorRecord(add.bus_id, add.inertia_h, add.rating_mw, add.tech)
        added_mw += add.rating_mw

    if spec.load_redistribution == 'uniform' and added_mw:
        load_ids = [bus_id for bus_id, bus in bus_map.items() if bus.kind == 'load']
        if not load_ids:
            logger.error(f"No load bus left to carry {added_mw:.1f} MW of redistributed load")
            raise ScenarioError("uniform load redistribution needs at least one load bus")
        share = added_mw / len(load_ids)
        for bus_id in load_ids:
            bus_map[bus_id] = replace(bus_map[bus_id], p_load_mw=bus_map[bus_id].p_load_mw + share)

    case = replace(
        base,
        buses=tuple(bus_map[i] for i in sorted(bus_map)),
        generators=tuple(generators[i] for i in sorted(generators))
    )
    try:
        return CaseValidator.validate_case(case)
    except CaseValidationError as e:
        logger.error(f"Scenario produced an invalid case: {str(e)}")
        raise ScenarioError(f"scenario produced an invalid case: {e}") from e


def fixture_case(scenario: int = 1, fixtures_dir: Optional[Union[str, Path]] = None) -> NetworkCase:
    """
    Bundled IEEE 39-bus case for Scenario 1-4.

    Args:
        scenario: Scenario number
        fixtures_dir: Directory holding the fixture files; IZONE_FIXTURES or
            the bundled directory when omitted

    Returns:
        Validated NetworkCase for the scenario
    """
    directory = Path(fixtures_dir) if fixtures_dir else get_fixture_dir()
    base = load_case(directory / 'ieee39_base.json')
    spec = load_scenario(directory / f'scenario{scenario}.json')
    case = apply_scenario(base, spec)
    return replace(case, name=f'ieee39_scenario{scenario}')


def sync_coefficient(case: NetworkCase, i: int, j: int) -> float:
    """
    Synchronizing power coefficient P_s,ij at the case operating point.

    Args:
        case: Validated case
        i: Row bus id
        j: Column bus id

    Returns:
        -V_i V_j B_ij cos(d_i - d_j) off the diagonal, the negated sum of the
        row's off-diagonal entries on it
    """
    bus_map = case.bus_map
    for bus_id in (i, j):
        if bus_id not in bus_map:
            raise CaseValidationError(f"unknown bus id {bus_id}")

    def coupling(a: BusRecord, b: BusRecord, susceptance: float) -> float:
        return a.voltage_mag * b.voltage_mag * susceptance * math.cos(a.voltage_ang - b.voltage_ang)

    adjacent = case.neighbors(i)
    if i == j:
        return float(sum(coupling(bus_map[i], bus_map[k], b) for k, b in adjacent.items()))
    if j not in adjacent:
        return 0.0
    return -coupling(bus_map[i], bus_map[j], adjacent[j])


def build_laplacian(case: NetworkCase) -> PartitionedLaplacian:
    """
    Assemble the synchronizing-power Laplacian, generators first.

    Args:
        case: Validated case

    Returns:
        PartitionedLaplacian with blocks P_sGG, P_sGk, P_skG, P_skk
    """
    gen_order = case.gen_bus_ids
    load_order = case.load_bus_ids
    order = gen_order + load_order
    position = {bus_id: k for k, bus_id in enumerate(order)}
    bus_map = case.bus_map

    n = len(order)
    full = np.zeros((n, n))
    for branch in case.branches:
        a, b = bus_map[branch.from_bus], bus_map[branch.to_bus]
        weight = a.voltage_mag * b.voltage_mag * branch.susceptance * np.cos(a.voltage_ang - b.voltage_ang)
        p, q = position[a.id], position[b.id]
        full[p, q] -= weight
        full[q, p] -= weight

    # Diagonal is the negated off-diagonal row sum
    full[np.diag_indices(n)] = -full.sum(axis=1)

    ng = len(gen_order)
    logger.debug(f"Built {n}x{n} Laplacian with {ng} generator buses")
    return PartitionedLaplacian(
        p_gg=full[:ng, :ng].copy(),
        p_gk=full[:ng, ng:].copy(),
        p_kg=full[ng:, :ng].copy(),
        p_kk=full[ng:, ng:].copy(),
        gen_order=tuple(gen_order),
        load_order=tuple(load_order)
    )


def reduced_dynamics(case: NetworkCase) -> ReducedDynamics:
    """build_laplacian followed by kron_reduce at the case's nominal frequency."""
    return kron_reduce(build_laplacian(case), case.generators, case.nominal_freq)
