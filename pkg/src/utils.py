import logging
from datetime import datetime
from typing import Dict, Sequence, Union

import numpy as np

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class InertiaZoneError(ValueError):
    """Base class for every domain error raised by the library."""


class CaseValidationError(InertiaZoneError):
    """A case file or in-memory case violates the case schema."""


class ScenarioError(InertiaZoneError):
    """A scenario cannot be applied to the given base case."""


class SpectralError(InertiaZoneError):
    """Kron reduction, eigendecomposition or MERW failed."""


class ZoningError(InertiaZoneError):
    """Feature assembly or clustering received invalid input."""


class SensitivityError(InertiaZoneError):
    """First-order perturbation analysis is ill-posed."""


class SimulationError(InertiaZoneError):
    """Swing simulation settings are invalid."""


class MatrixChecks:
    """Small numeric predicates shared by the spectral modules."""

    @staticmethod
    def max_asymmetry(matrix: np.ndarray) -> float:
        """Largest |A_ij - A_ji|."""
        if matrix.size == 0:
            return 0.0
        return float(np.max(np.abs(matrix - matrix.T)))

    @staticmethod
    def max_row_sum(matrix: np.ndarray) -> float:
        """Largest absolute row sum."""
        if matrix.size == 0:
            return 0.0
        return float(np.max(np.abs(matrix.sum(axis=1))))

    @staticmethod
    def min_max_normalize(values: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
        """
        Normalize every column of a 2-D array to [0, 1].

        A degenerate column (max - min within rtol of its magnitude) maps to
        a constant 0.5.

        Args:
            values: Array of shape (rows, columns)
            rtol: Relative spread below which a column counts as constant

        Returns:
            Normalized copy of the array
        """
        values = np.asarray(values, dtype=float)
        out = np.empty_like(values)
        for col in range(values.shape[1]):
            column = values[:, col]
            lo, hi = column.min(), column.max()
            if hi - lo <= rtol * max(abs(hi), abs(lo)):
                out[:, col] = 0.5
            else:
                out[:, col] = (column - lo) / (hi - lo)
        return out


def canonical_labels(labels: Sequence[int], bus_ids: Sequence[int]) -> np.ndarray:
    """
    Relabel zones so zone 0 holds the lowest bus id, zone 1 the next, and so on.

    Args:
        labels: Raw cluster label per row
        bus_ids: Bus id per row

    Returns:
        Array of canonical zone indices, one per row
    """
    labels = np.asarray(labels)
    bus_ids = np.asarray(bus_ids)
    first_bus = {
        label: int(bus_ids[labels == label].min())
        for label in np.unique(labels)
    }
    order = sorted(first_bus, key=first_bus.get)
    mapping = {label: zone for zone, label in enumerate(order)}
    return np.array([mapping[label] for label in labels], dtype=int)


class ErrorHandler:
    """Utility class for standardized error documents."""

    @staticmethod
    def handle_domain_error(error: Exception) -> Dict[str, Union[int, str]]:
        """
        Turn a domain or unexpected error into a machine-readable document.

        Args:
            error: Exception object

        Returns:
            Dictionary with error details
        """
        error_message = str(error)
        error_type = type(error).__name__

        logger.error(f"Domain Error: {error_type} - {error_message}")

        return {
            'schema_version': SCHEMA_VERSION,
            'error_type': error_type,
            'message': error_message,
            'timestamp': datetime.now().isoformat()
        }
