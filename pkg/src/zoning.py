# src/zoning.py
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist
from sklearn.cluster import KMeans

from .config import OUTPUT_CONFIG, ZONING_CONFIG
from .network_model import NetworkCase, Replacement, ScenarioSpec, apply_scenario, build_laplacian
from .spectral_core import (
    DnwVector,
    EigenSystem,
    PartitionedLaplacian,
    eigensystem,
    extend_dnw,
    extension_matrix,
    kron_reduce,
    merw_dnw,
)
from .utils import MatrixChecks, ScenarioError, ZoningError, canonical_labels

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FeatureMatrix:
    """
    Per-bus feature vectors: r slow-mode eigenvector columns and one DNW column.

    values is the normalized matrix the clustering sees; raw keeps the
    columns before min-max scaling.
    """
    values: np.ndarray
    raw: np.ndarray
    bus_order: Tuple[int, ...]
    r: int
    mode_indices: Tuple[int, ...] = ()

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class KSelection:
    """Outcome of the farthest-point initialization."""
    k: int
    centroids: np.ndarray
    indices: Tuple[int, ...]
    spreads: Tuple[float, ...]


@dataclass(frozen=True)
class ZoningResult:
    k: int
    assignment: Dict[int, int]
    seps: np.ndarray
    zone_weight: np.ndarray
    bus_order: Tuple[int, ...]
    bus_weights: np.ndarray
    features: np.ndarray
    system_sep: Optional[np.ndarray] = None
    sed: Optional[np.ndarray] = None
    n_iter: int = 0
    metadata: Dict = field(default_factory=dict)

    def zone_of(self, bus_id: int) -> int:
        return self.assignment[bus_id]

    def members(self, zone: int) -> List[int]:
        return [bus_id for bus_id in self.bus_order if self.assignment[bus_id] == zone]

    def to_document(self) -> Dict:
        """Structured document of the zoning, JSON-serializable."""
        return {
            'schema_version': OUTPUT_CONFIG['schema_version'],
            'k': int(self.k),
            'tau': self.metadata.get('tau'),
            'seed': self.metadata.get('seed'),
            'r': self.metadata.get('r'),
            'assignment': {str(bus_id): int(self.assignment[bus_id]) for bus_id in self.bus_order},
            'seps': self.seps.tolist(),
            'system_sep': None if self.system_sep is None else self.system_sep.tolist(),
            'sed': None if self.sed is None else self.sed.tolist(),
            'zone_weight': self.zone_weight.tolist(),
            'n_iter': int(self.n_iter)
        }

    def to_frame(self) -> pd.DataFrame:
        """One row per bus: bus_id, zone, dnw, sed_of_zone."""
        zones = [self.assignment[bus_id] for bus_id in self.bus_order]
        sed = self.sed if self.sed is not None else np.full(self.k, np.nan)
        return pd.DataFrame({
            'bus_id': list(self.bus_order),
            'zone': zones,
            'dnw': self.bus_weights,
            'sed_of_zone': [float(sed[zone]) for zone in zones]
        })


def slow_mode_indices(es: EigenSystem, r: int, include_rigid_mode: bool = False,
                      zero_mode_rtol: float = ZONING_CONFIG['zero_mode_rtol']) -> Tuple[int, ...]:
    """
    Columns of the r slowest modes.

    The rigid-body mode (|lambda| below zero_mode_rtol * max|lambda|) is skipped
    unless include_rigid_mode is set.
    """
    values = np.asarray(es.eigenvalues)
    threshold = zero_mode_rtol * float(np.max(np.abs(values)))
    candidates = [i for i in np.argsort(values, kind='stable')
                  if include_rigid_mode or abs(values[i]) >= threshold]
    if r > len(candidates):
        raise ZoningError(f"r={r} exceeds the {len(candidates)} available slow modes")
    return tuple(int(i) for i in candidates[:r])


def build_features(es: EigenSystem, pl: PartitionedLaplacian, dnw: DnwVector, r: int,
                   include_rigid_mode: bool = ZONING_CONFIG['include_rigid_mode'],
                   normalize: bool = True) -> FeatureMatrix:
    """
    Assemble the feature matrix for every bus.

    Args:
        es: Eigensystem of lm_red
        pl: Partitioned Laplacian the reduction came from
        dnw: Dynamic Nodal Weight (extended to all buses if it is not yet)
        r: Number of slow modes, 1 <= r <= N_g - 1
        include_rigid_mode: Count the zero mode among the slow modes
        normalize: Min-max scale every column to [0, 1]

    Returns:
        FeatureMatrix of shape (N, r + 1), generators first
    """
    ng = len(pl.gen_order)
    if not 1 <= r <= ng - 1:
        logger.error(f"Slow mode count r={r} outside [1, {ng - 1}]")
        raise ZoningError(f"r must satisfy 1 <= r <= {ng - 1} (N_g - 1), got {r}")

    modes = slow_mode_indices(es, r, include_rigid_mode)
    gen_block = np.asarray(es.right_vectors)[:, list(modes)]
    load_block = extension_matrix(pl) @ gen_block

    if not dnw.extended:
        dnw = extend_dnw(dnw, pl)
    if tuple(dnw.bus_order) != tuple(pl.bus_order):
        raise ZoningError(f"DNW bus order {dnw.bus_order} does not match the Laplacian {pl.bus_order}")

    raw = np.column_stack([np.vstack([gen_block, load_block]), dnw.all_weights])
    if not np.all(np.isfinite(raw)):
        raise ZoningError("feature matrix has non-finite entries")

    values = MatrixChecks.min_max_normalize(raw) if normalize else raw.copy()
    return FeatureMatrix(values=values, raw=raw, bus_order=tuple(pl.bus_order), r=r, mode_indices=modes)


def auto_k_init(fm: FeatureMatrix, tau: float = ZONING_CONFIG['tau'], seed: int = ZONING_CONFIG['seed'],
                first_index: Optional[int] = None) -> KSelection:
    """
    Farthest-point centroid seeding that also picks the zone count.

    The first centroid is a row drawn with the seeded generator (or
    first_index). Each further centroid is the row farthest from its nearest
    centroid. S_i is that largest nearest-centroid distance; seeding stops once
    S_i reaches zero or its relative drop (S_{i-1} - S_i) / S_{i-1} falls
    below tau.

    Args:
        fm: Feature matrix
        tau: Relative tolerance on the spread drop
        seed: Seed of the first-centroid draw
        first_index: Fixed first row, bypassing the draw

    Returns:
        KSelection with k, the centroid rows and the S sequence
    """
    if tau <= 0:
        raise ZoningError(f"tau must be > 0, got {tau}")
    points = np.asarray(fm.values, dtype=float)
    n = points.shape[0]
    if n == 0:
        raise ZoningError("feature matrix is empty")

    if first_index is None:
        first_index = int(np.random.default_rng(seed).integers(n))
    elif not 0 <= first_index < n:
        raise ZoningError(f"first_index must be in [0, {n - 1}], got {first_index}")

    indices = [first_index]
    nearest = cdist(points, points[[first_index]]).ravel()
    spreads = [float(nearest.max())]

    while spreads[-1] > 0 and len(indices) < n:
        candidate = int(np.argmax(nearest))
        nearest = np.minimum(nearest, cdist(points, points[[candidate]]).ravel())
        indices.append(candidate)
        spreads.append(float(nearest.max()))
        if (spreads[-2] - spreads[-1]) / spreads[-2] < tau:
            break

    logger.debug(f"Farthest-point spreads {spreads}")
    return KSelection(
        k=len(indices),
        centroids=points[indices].copy(),
        indices=tuple(indices),
        spreads=tuple(spreads)
    )


def weighted_cost(points: np.ndarray, labels: np.ndarray, centers: np.ndarray,
                  sample_weight: np.ndarray) -> float:
    """Total weighted within-cluster squared distance."""
    diffs = points - centers[labels]
    return float(np.sum(sample_weight * np.sum(diffs * diffs, axis=1)))


def lloyd_weighted(points: np.ndarray, centroids: np.ndarray, sample_weight: np.ndarray,
                   max_iter: int = ZONING_CONFIG['max_iter']) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Weighted Lloyd iterations from fixed initial centroids.

    Args:
        points: Rows to cluster
        centroids: Initial centroids, one per cluster
        sample_weight: Strictly positive weight per row
        max_iter: Iteration cap

    Returns:
        Tuple of (labels, weighted-mean centers of the final labels, iterations)
    """
    points = np.asarray(points, dtype=float)
    centroids = np.asarray(centroids, dtype=float)
    sample_weight = np.asarray(sample_weight, dtype=float)
    if np.any(~np.isfinite(sample_weight)) or np.any(sample_weight <= 0):
        raise ZoningError("sample weights must be finite and strictly positive")

    k = centroids.shape[0]
    model = KMeans(
        n_clusters=k,
        init=centroids,
        n_init=1,
        max_iter=max_iter,
        tol=0.0,
        algorithm='lloyd'
    )
    model.fit(points, sample_weight=sample_weight)
    if model.n_iter_ >= max_iter:
        logger.warning(f"Weighted kmeans reached max_iter={max_iter} before assignments settled")

    labels = np.asarray(model.labels_, dtype=int)
    centers = np.array(model.cluster_centers_, dtype=float)
    for cluster in np.unique(labels):
        members = labels == cluster
        centers[cluster] = np.average(points[members], axis=0, weights=sample_weight[members])
    return labels, centers, int(model.n_iter_)


def weighted_kmeans(fm: FeatureMatrix, init: Union[KSelection, np.ndarray], weights: DnwVector,
                    max_iter: int = ZONING_CONFIG['max_iter']) -> ZoningResult:
    """
    Cluster buses with centroid weights w_i = 1 / Pi_net,i.

    Args:
        fm: Feature matrix
        init: KSelection from auto_k_init or an array of initial centroids
        weights: Extended DNW; all_weights must be strictly positive
        max_iter: Iteration cap

    Returns:
        ZoningResult with canonical zone labels, SEPs and zone weights
    """
    if tuple(weights.bus_order) != tuple(fm.bus_order):
        raise ZoningError(f"DNW covers buses {weights.bus_order}, features cover {fm.bus_order}")
    bus_weights = np.asarray(weights.all_weights, dtype=float)
    bad = [bus_id for bus_id, w in zip(fm.bus_order, bus_weights) if not (np.isfinite(w) and w > 0)]
    if bad:
        logger.error(f"Non-positive nodal weight at buses {bad}")
        raise ZoningError(f"nodal weight must be strictly positive, buses {bad}")

    centroids = init.centroids if isinstance(init, KSelection) else np.atleast_2d(np.asarray(init, dtype=float))
    raw_labels, raw_centers, n_iter = lloyd_weighted(fm.values, centroids, 1.0 / bus_weights, max_iter)

    labels = canonical_labels(raw_labels, fm.bus_order)
    k = int(labels.max()) + 1
    seps = np.empty((k, fm.values.shape[1]))
    zone_weight = np.zeros(k)
    for raw, zone in zip(raw_labels, labels):
        seps[zone] = raw_centers[raw]
    for zone, w in zip(labels, bus_weights):
        zone_weight[zone] += w

    return ZoningResult(
        k=k,
        assignment={int(bus_id): int(zone) for bus_id, zone in zip(fm.bus_order, labels)},
        seps=seps,
        zone_weight=zone_weight,
        bus_order=tuple(fm.bus_order),
        bus_weights=bus_weights.copy(),
        features=np.array(fm.values),
        n_iter=n_iter,
        metadata={'r': fm.r, 'max_iter': max_iter}
    )


def system_sep_and_sed(zr: ZoningResult, dnw: Optional[DnwVector] = None) -> ZoningResult:
    """
    Complete a zoning with the system SEP and the SED of each zone.

    Args:
        zr: Result of weighted_kmeans
        dnw: Extended DNW; when given, zone weights are re-summed from it

    Returns:
        Copy of zr with system_sep and sed filled in
    """
    zone_weight = np.asarray(zr.zone_weight, dtype=float)
    if dnw is not None:
        zone_weight = np.zeros(zr.k)
        for bus_id in zr.bus_order:
            zone_weight[zr.assignment[bus_id]] += dnw.weight_of(bus_id)

    system_sep = np.average(zr.seps, axis=0, weights=zone_weight)
    distances = np.linalg.norm(zr.seps - system_sep, axis=1)
    if zr.k == 1 or distances.max() == 0:
        sed = np.zeros(zr.k)
    else:
        sed = distances / distances.max()
    return replace(zr, zone_weight=zone_weight, system_sep=system_sep, sed=sed)


def zone_case(case: NetworkCase, r: int = ZONING_CONFIG['r'], tau: float = ZONING_CONFIG['tau'],
              seed: int = ZONING_CONFIG['seed'], max_iter: int = ZONING_CONFIG['max_iter'],
              include_rigid_mode: bool = ZONING_CONFIG['include_rigid_mode']) -> ZoningResult:
    """
    Full zoning pipeline for one case.

    build_laplacian -> kron_reduce -> merw_dnw -> extend_dnw -> build_features
    -> auto_k_init -> weighted_kmeans -> system_sep_and_sed.
    """
    pl = build_laplacian(case)
    rd = kron_reduce(pl, case.generators, case.nominal_freq)
    dnw = extend_dnw(merw_dnw(rd), pl)
    fm = build_features(eigensystem(rd), pl, dnw, r, include_rigid_mode)
    selection = auto_k_init(fm, tau, seed)
    logger.info(f"Selected k={selection.k} zones for {case.name or 'case'} (tau={tau}, seed={seed})")

    zr = system_sep_and_sed(weighted_kmeans(fm, selection, dnw, max_iter), dnw)
    metadata = dict(zr.metadata, tau=tau, seed=seed, r=r, include_rigid_mode=include_rigid_mode,
                    spreads=list(selection.spreads),
                    nonnegative_transform=dnw.metadata.get('nonnegative_transform'))
    return replace(zr, metadata=metadata)


def sweep_values(h_from: float, h_to: float, h_step: float) -> List[float]:
    """Inertia grid h_from, h_from + h_step, ... not beyond h_to."""
    if not h_from < h_to:
        raise ZoningError(f"h_from must be < h_to, got {h_from} and {h_to}")
    if h_step <= 0:
        raise ZoningError(f"h_step must be > 0, got {h_step}")
    count = int(np.floor((h_to - h_from) / h_step + 1e-9)) + 1
    return [float(h_from + i * h_step) for i in range(count)]


def inertia_sweep(case: NetworkCase, bus: int, values: Sequence[float], r: int = ZONING_CONFIG['r'],
                  tau: float = ZONING_CONFIG['tau'], seed: int = ZONING_CONFIG['seed'],
                  max_iter: int = ZONING_CONFIG['max_iter']) -> pd.DataFrame:
    """
    Re-zone the case for each inertia constant of one generator.

    Args:
        case: Base case
        bus: Generator bus whose H is swept
        values: Inertia constants in seconds
        r, tau, seed, max_iter: Zoning settings

    Returns:
        Long-format DataFrame with columns h, bus_id, dnw, zone, k
    """
    generator = case.generator_map.get(bus)
    if generator is None:
        logger.error(f"Sweep bus {bus} hosts no generator")
        raise ScenarioError(f"sweep target bus {bus} has no generator")

    frames = []
    for h in values:
        swept = apply_scenario(case, ScenarioSpec(replacements=(Replacement(bus, float(h), generator.tech),)))
        zr = zone_case(swept, r=r, tau=tau, seed=seed, max_iter=max_iter)
        frame = zr.to_frame()[['bus_id', 'dnw', 'zone']]
        frame.insert(0, 'h', float(h))
        frame['k'] = zr.k
        frames.append(frame)
    logger.info(f"Swept H at bus {bus} over {len(frames)} values")
    return pd.concat(frames, ignore_index=True)


def sweep_variation(sweep: pd.DataFrame, reference: ZoningResult,
                    buses: Optional[Sequence[int]] = None) -> pd.Series:
    """
    Span of each bus's DNW over a sweep, relative to its weight in a reference zoning.

    Dividing by the sweep's own mean overstates buses whose weight collapses
    toward zero while the walk localizes elsewhere; the reference keeps the
    scale fixed across sweeps of different cases.

    Args:
        sweep: Output of inertia_sweep
        reference: Zoning of the reference system, usually the unmodified case
        buses: Buses to report (all swept buses when omitted)

    Returns:
        Series bus_id -> (max - min) / reference DNW
    """
    spans = sweep.groupby('bus_id')['dnw'].agg(lambda s: s.max() - s.min())
    base = pd.Series(np.asarray(reference.bus_weights, dtype=float), index=list(reference.bus_order))
    if buses is not None:
        missing = [bus_id for bus_id in buses if bus_id not in spans.index or bus_id not in base.index]
        if missing:
            raise ZoningError(f"buses {missing} are missing from the sweep or the reference")
        spans = spans.loc[list(buses)]
    base = base.reindex(spans.index)
    if (base <= 0).any():
        raise ZoningError(f"reference DNW is zero at buses {list(base.index[base <= 0])}")
    return (spans / base).rename('variation')
