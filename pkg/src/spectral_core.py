# src/spectral_core.py
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import pandas as pd
import scipy.linalg as sla

from .config import OUTPUT_CONFIG, SPECTRAL_CONFIG
from .utils import MatrixChecks, SpectralError

logger = logging.getLogger(__name__)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class PartitionedLaplacian:
    """Synchronizing-power Laplacian blocked into generator/load partitions."""
    p_gg: np.ndarray
    p_gk: np.ndarray
    p_kg: np.ndarray
    p_kk: np.ndarray
    gen_order: Tuple[int, ...]
    load_order: Tuple[int, ...]

    def __post_init__(self):
        ng, nl = len(self.gen_order), len(self.load_order)
        for name, shape in (('p_gg', (ng, ng)), ('p_gk', (ng, nl)),
                            ('p_kg', (nl, ng)), ('p_kk', (nl, nl))):
            block = np.asarray(getattr(self, name), dtype=float).reshape(shape)
            object.__setattr__(self, name, _frozen(block))

    @property
    def bus_order(self) -> Tuple[int, ...]:
        return self.gen_order + self.load_order

    def full(self) -> np.ndarray:
        """Reassembled N x N matrix in bus_order."""
        return np.block([[self.p_gg, self.p_gk], [self.p_kg, self.p_kk]])


@dataclass(frozen=True)
class ReducedDynamics:
    """
    Generator-only dynamics after Kron reduction.

    lm_red = diag(m)^-1 l_red, with m_i = 2 H_i / (2 pi f_n). extension is
    -P_kk^-1 P_kG, kept so load-bus quantities can be mapped on generators.
    """
    lm_red: np.ndarray
    m_diag: np.ndarray
    l_red: np.ndarray
    gen_order: Tuple[int, ...]
    load_order: Tuple[int, ...] = ()
    extension: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ('lm_red', 'm_diag', 'l_red'):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        ext = self.extension
        if ext is None:
            ext = np.zeros((len(self.load_order), len(self.gen_order)))
        object.__setattr__(self, 'extension', _frozen(np.reshape(ext, (len(self.load_order), len(self.gen_order)))))

    @classmethod
    def from_matrices(cls, l_red: np.ndarray, m_diag: Sequence[float],
                      gen_order: Optional[Sequence[int]] = None) -> 'ReducedDynamics':
        """Wrap a ready-made reduced Laplacian (no load buses)."""
        l_red = np.atleast_2d(np.asarray(l_red, dtype=float))
        m = np.asarray(m_diag, dtype=float).reshape(-1)
        order = tuple(gen_order) if gen_order is not None else tuple(range(1, len(m) + 1))
        return cls(lm_red=l_red / m[:, None], m_diag=m, l_red=l_red, gen_order=order)


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues ascending, right vectors as columns, left vectors as rows (W* U = I)."""
    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray

    def __post_init__(self):
        for name in ('eigenvalues', 'right_vectors', 'left_vectors'):
            object.__setattr__(self, name, _frozen(getattr(self, name)))


@dataclass(frozen=True)
class DnwVector:
    """
    Dynamic Nodal Weight.

    gen_weights is the MERW stationary distribution on the generators;
    all_weights appends the load-bus extension once extend_dnw has run.
    """
    gen_weights: np.ndarray
    all_weights: np.ndarray
    perron_value: float
    perron_vector: np.ndarray
    transition: np.ndarray
    gen_order: Tuple[int, ...]
    bus_order: Tuple[int, ...]
    extended: bool = False
    metadata: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for name in ('gen_weights', 'all_weights', 'perron_vector', 'transition'):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    def weight_of(self, bus_id: int) -> float:
        return float(self.all_weights[self.bus_order.index(bus_id)])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'bus_id': list(self.bus_order), 'weight': self.all_weights})


def inertia_coefficients(generators: Sequence, gen_order: Sequence[int], f_n: float) -> np.ndarray:
    """
    M_i = 2 H_i / (2 pi f_n) in generator order.

    Args:
        generators: Records exposing bus_id and inertia_h
        gen_order: Generator bus ids in matrix order
        f_n: Nominal frequency in Hz

    Returns:
        Vector of M_i
    """
    inertia = {g.bus_id: g.inertia_h for g in generators}
    missing = [bus_id for bus_id in gen_order if bus_id not in inertia]
    if missing:
        raise SpectralError(f"no generator record for generator bus(es) {missing}")
    return np.array([2.0 * inertia[bus_id] / (2.0 * np.pi * f_n) for bus_id in gen_order])


def _load_islands(pl: PartitionedLaplacian) -> List[List[int]]:
    """Load-bus components with no coupling to any generator."""
    graph = nx.Graph()
    graph.add_nodes_from(range(len(pl.load_order)))
    rows, cols = np.nonzero(pl.p_kk)
    graph.add_edges_from((r, c) for r, c in zip(rows, cols) if r < c)
    islands = []
    for component in nx.connected_components(graph):
        members = sorted(component)
        if not np.any(pl.p_kg[members, :]):
            islands.append(sorted(pl.load_order[k] for k in members))
    return islands


def _solve_load_block(pl: PartitionedLaplacian, rhs: np.ndarray) -> np.ndarray:
    """Solve P_kk x = rhs through a factorization of P_kk."""
    islands = _load_islands(pl)
    if islands:
        logger.error(f"Load block is singular, isolated load buses {islands}")
        raise SpectralError(f"P_kk is singular: load island(s) without a generator {islands}")
    try:
        factor = sla.cho_factor(pl.p_kk, lower=True)
        return sla.cho_solve(factor, rhs)
    except sla.LinAlgError:
        # Not positive definite (negative susceptances); fall back to LU
        logger.debug("P_kk is not positive definite, using LU factorization")
        return sla.lu_solve(sla.lu_factor(pl.p_kk), rhs)


def extension_matrix(pl: PartitionedLaplacian) -> np.ndarray:
    """
    -P_kk^-1 P_kG, mapping generator-node vectors onto load buses.

    Rows sum to one; entry (k, g) is zero when every path from load bus k to
    generator g crosses another generator.
    """
    if not pl.load_order:
        return np.zeros((0, len(pl.gen_order)))
    return _solve_load_block(pl, -pl.p_kg)


def _check_reduction(l_red: np.ndarray, gen_order: Sequence[int]) -> None:
    """Warn when the Schur complement drifts from a symmetric zero-row-sum matrix."""
    scale = max(1.0, float(np.max(np.abs(l_red))))
    limit = SPECTRAL_CONFIG['reduction_rtol'] * scale
    asymmetry = MatrixChecks.max_asymmetry(l_red)
    row_sum = MatrixChecks.max_row_sum(l_red)
    if asymmetry > limit or row_sum > limit:
        logger.warning(f"Reduced Laplacian over generators {tuple(gen_order)} is ill-conditioned: "
                       f"asymmetry {asymmetry:.3e}, row sum {row_sum:.3e}")


def kron_reduce(pl: PartitionedLaplacian, gens: Sequence, f_n: float) -> ReducedDynamics:
    """
    Eliminate load buses: l_red = P_GG - P_Gk P_kk^-1 P_kG, lm_red = M^-1 l_red.

    Args:
        pl: Partitioned Laplacian
        gens: Generator records (bus_id, inertia_h)
        f_n: Nominal frequency in Hz

    Returns:
        ReducedDynamics
    """
    m = inertia_coefficients(gens, pl.gen_order, f_n)
    if pl.load_order:
        ext = extension_matrix(pl)
        l_red = pl.p_gg + pl.p_gk @ ext
        _check_reduction(l_red, pl.gen_order)
        l_red = 0.5 * (l_red + l_red.T)
    else:
        ext = np.zeros((0, len(pl.gen_order)))
        l_red = np.array(pl.p_gg)
    return ReducedDynamics(
        lm_red=l_red / m[:, None],
        m_diag=m,
        l_red=l_red,
        gen_order=tuple(pl.gen_order),
        load_order=tuple(pl.load_order),
        extension=ext
    )


def _similarity_eigensystem(symmetric: np.ndarray, m: np.ndarray) -> EigenSystem:
    """
    Eigensystem of diag(m)^-1 S for symmetric S via D^-1/2 S D^-1/2.

    Each right vector has its largest-magnitude entry positive; equal
    eigenvalues are ordered by the index of that entry.
    """
    root = np.sqrt(m)
    conjugate = symmetric / np.outer(root, root)
    conjugate = 0.5 * (conjugate + conjugate.T)
    try:
        values, vectors = sla.eigh(conjugate)
    except sla.LinAlgError as e:
        cond = np.linalg.cond(conjugate)
        logger.error(f"Eigensolver failed (condition number {cond:.3e}): {str(e)}")
        raise SpectralError(f"eigensolver did not converge, condition number {cond:.3e}") from e

    right = vectors / root[:, None]
    peaks = np.argmax(np.abs(right), axis=0)
    signs = np.sign(right[peaks, np.arange(len(values))])
    signs[signs == 0] = 1.0
    vectors = vectors * signs

    tol = SPECTRAL_CONFIG['tie_rtol'] * max(1.0, float(np.max(np.abs(values))) if len(values) else 1.0)
    groups = np.concatenate([[0], np.cumsum(np.diff(values) > tol)]).astype(int)
    order = np.lexsort((peaks, groups))
    values, vectors = values[order], vectors[:, order]

    return EigenSystem(
        eigenvalues=values,
        right_vectors=vectors / root[:, None],
        left_vectors=(vectors * root[:, None]).T
    )


def eigensystem(rd: ReducedDynamics) -> EigenSystem:
    """Full real eigendecomposition of lm_red."""
    return _similarity_eigensystem(rd.l_red, rd.m_diag)


def absolute_eigensystem(rd: ReducedDynamics) -> EigenSystem:
    """Eigendecomposition of |lm_red|, the matrix the random walk runs on."""
    return _similarity_eigensystem(np.abs(rd.l_red), rd.m_diag)


def _check_irreducible(matrix: np.ndarray, gen_order: Sequence[int]) -> None:
    n = matrix.shape[0]
    scale = float(np.max(matrix)) if matrix.size else 0.0
    graph = nx.Graph()
    graph.add_nodes_from(gen_order)
    rows, cols = np.nonzero(matrix > SPECTRAL_CONFIG['coupling_rtol'] * scale)
    graph.add_edges_from((gen_order[r], gen_order[c]) for r, c in zip(rows, cols) if r != c)
    if n == 0 or scale == 0.0 or not nx.is_connected(graph):
        components = [sorted(c) for c in nx.connected_components(graph)]
        logger.error(f"Reduced coupling matrix is reducible: {components}")
        raise SpectralError(f"|LM_red| is reducible, generator components {components}")


def perron_power_iteration(matrix: np.ndarray, tol: float = SPECTRAL_CONFIG['power_tol'],
                           max_iter: int = SPECTRAL_CONFIG['power_max_iter'],
                           shift: Optional[float] = None) -> Tuple[float, np.ndarray]:
    """
    Dominant eigenpair of a non-negative matrix by shifted power iteration.

    Args:
        matrix: Non-negative square matrix
        tol: Stop when successive iterates differ by less than tol (max norm)
        max_iter: Iteration cap
        shift: Diagonal shift applied during iteration; defaults to the largest
            row sum, which keeps periodic (bipartite) matrices from oscillating

    Returns:
        Tuple of (eigenvalue, unit-norm positive eigenvector)
    """
    n = matrix.shape[0]
    if shift is None:
        shift = float(np.max(matrix.sum(axis=1))) if n else 0.0
    x = np.full(n, 1.0 / np.sqrt(n))
    for iteration in range(max_iter):
        y = matrix @ x + shift * x
        y /= np.linalg.norm(y)
        if np.max(np.abs(y - x)) < tol:
            x = y
            break
        x = y
    else:
        logger.warning(f"Power iteration stopped at max_iter={max_iter} without reaching tol={tol}")
    value = float(x @ matrix @ x) / float(x @ x)
    return value, x


def merw_dnw(rd: ReducedDynamics, method: str = 'symmetric') -> DnwVector:
    """
    Dynamic Nodal Weight of the generators by maximal entropy random walk.

    The walk runs on |lm_red|. Its Perron pair is taken in the symmetric
    coordinates diag(m)^1/2 |lm_red| diag(m)^-1/2, where the transition
    matrix is unchanged and u_m squared is exactly its stationary law.

    Args:
        rd: Reduced dynamics
        method: 'symmetric' (dense eigensolver) or 'power' (power iteration)

    Returns:
        DnwVector holding the generator part only
    """
    magnitude = np.abs(rd.lm_red)
    _check_irreducible(magnitude, rd.gen_order)

    root = np.sqrt(rd.m_diag)
    conjugate = np.abs(rd.l_red) / np.outer(root, root)
    conjugate = 0.5 * (conjugate + conjugate.T)

    if method == 'symmetric':
        values, vectors = sla.eigh(conjugate)
        perron_value, perron_vector = float(values[-1]), vectors[:, -1]
    elif method == 'power':
        perron_value, perron_vector = perron_power_iteration(conjugate)
    else:
        raise SpectralError(f"unknown MERW method {method!r}")

    if perron_vector.sum() < 0:
        perron_vector = -perron_vector
    perron_vector = perron_vector / np.linalg.norm(perron_vector)
    if np.any(perron_vector <= 0):
        raise SpectralError(f"Perron vector is not strictly positive: {perron_vector}")

    transition = conjugate * perron_vector[None, :] / (perron_value * perron_vector[:, None])
    weights = perron_vector ** 2
    weights = weights / weights.sum()

    return DnwVector(
        gen_weights=weights,
        all_weights=weights,
        perron_value=perron_value,
        perron_vector=perron_vector,
        transition=transition,
        gen_order=tuple(rd.gen_order),
        bus_order=tuple(rd.gen_order),
        metadata={'nonnegative_transform': OUTPUT_CONFIG['nonnegative_transform'], 'method': method}
    )


def extend_dnw(dnw: DnwVector, pl: PartitionedLaplacian) -> DnwVector:
    """
    Net nodal weight over all buses: [Pi_M ; -(P_kk^-1 P_kG) Pi_M].

    Args:
        dnw: Generator DNW from merw_dnw
        pl: Partitioned Laplacian the reduction came from

    Returns:
        DnwVector with all_weights ordered generators first
    """
    if tuple(pl.gen_order) != tuple(dnw.gen_order):
        raise SpectralError(f"generator order mismatch: {dnw.gen_order} vs {pl.gen_order}")
    if pl.load_order:
        load_weights = _solve_load_block(pl, -pl.p_kg @ dnw.gen_weights)
    else:
        load_weights = np.zeros(0)
    return DnwVector(
        gen_weights=dnw.gen_weights,
        all_weights=np.concatenate([dnw.gen_weights, load_weights]),
        perron_value=dnw.perron_value,
        perron_vector=dnw.perron_vector,
        transition=dnw.transition,
        gen_order=dnw.gen_order,
        bus_order=tuple(pl.bus_order),
        extended=True,
        metadata=dict(dnw.metadata)
    )
