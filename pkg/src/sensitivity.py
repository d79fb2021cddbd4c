# src/sensitivity.py
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .config import SENSITIVITY_CONFIG
from .network_model import CaseValidator, NetworkCase, reduced_dynamics
from .spectral_core import EigenSystem, absolute_eigensystem
from .utils import CaseValidationError, SensitivityError

logger = logging.getLogger(__name__)

PARAMETERS = ('inertia', 'voltage_mag', 'voltage_ang')
MODES = ('relative', 'absolute')

Targets = Union[str, Tuple[int, ...]]


@dataclass(frozen=True)
class PerturbationSpec:
    """
    Which quantity to vary, by how much and where.

    targets is 'all', 'each' (one generator bus at a time, results summed)
    or an explicit tuple of bus ids varied together.
    """
    parameter: str
    magnitude: float = SENSITIVITY_CONFIG['epsilon']
    targets: Targets = 'all'
    mode: str = 'relative'

    def __post_init__(self):
        if self.parameter not in PARAMETERS:
            raise SensitivityError(f"parameter must be one of {PARAMETERS}, got {self.parameter!r}")
        if not (np.isfinite(self.magnitude) and self.magnitude > 0):
            raise SensitivityError(f"magnitude must be > 0, got {self.magnitude}")
        if self.mode not in MODES:
            raise SensitivityError(f"mode must be one of {MODES}, got {self.mode!r}")
        if isinstance(self.targets, str):
            if self.targets not in ('all', 'each'):
                raise SensitivityError(f"targets must be 'all', 'each' or a bus list, got {self.targets!r}")
        else:
            buses = tuple(int(b) for b in self.targets)
            if not buses:
                raise SensitivityError("targets bus list is empty")
            object.__setattr__(self, 'targets', buses)


@dataclass(frozen=True)
class SensitivityReport:
    lambda1: np.ndarray
    u1: np.ndarray
    u1var: Optional[float] = None
    parameter: str = ''
    epsilon: float = 0.0
    per_target: Dict[int, float] = field(default_factory=dict)


def _target_buses(case: NetworkCase, spec: PerturbationSpec) -> Tuple[int, ...]:
    if spec.targets == 'each':
        raise SensitivityError("targets='each' is expanded by dnw_sensitivity, not by a single perturbation")
    if spec.targets == 'all':
        if spec.parameter == 'inertia':
            return tuple(case.gen_bus_ids)
        return tuple(bus.id for bus in case.buses)
    known = case.generator_map if spec.parameter == 'inertia' else case.bus_map
    missing = [bus_id for bus_id in spec.targets if bus_id not in known]
    if missing:
        what = 'generator' if spec.parameter == 'inertia' else 'bus'
        raise SensitivityError(f"perturbation targets with no {what}: {missing}")
    return tuple(spec.targets)


def _shifted(value: float, spec: PerturbationSpec) -> float:
    if spec.mode == 'relative':
        return value * (1.0 + spec.magnitude)
    return value + spec.magnitude


def perturb_case(case: NetworkCase, spec: PerturbationSpec) -> NetworkCase:
    """
    Copy of the case with the targeted quantity scaled by (1 + eps), or
    offset by eps in absolute mode.

    Raises:
        SensitivityError: if the perturbed case is no longer valid
    """
    targets = set(_target_buses(case, spec))
    if spec.parameter == 'inertia':
        generators = tuple(
            replace(g, inertia_h=_shifted(g.inertia_h, spec)) if g.bus_id in targets else g
            for g in case.generators
        )
        perturbed = replace(case, generators=generators)
    else:
        attr = 'voltage_mag' if spec.parameter == 'voltage_mag' else 'voltage_ang'
        buses = tuple(
            replace(b, **{attr: _shifted(getattr(b, attr), spec)}) if b.id in targets else b
            for b in case.buses
        )
        perturbed = replace(case, buses=buses)
    try:
        return CaseValidator.validate_case(perturbed)
    except CaseValidationError as e:
        logger.error(f"Perturbed case is invalid: {str(e)}")
        raise SensitivityError(f"perturbed case fails validation: {e}") from e


def perturbation_matrix(case: NetworkCase, spec: PerturbationSpec, absolute_value: bool = False) -> np.ndarray:
    """
    LM_red_1 = (LM_red(perturbed) - LM_red(base)) / eps through the full pipeline.

    Args:
        case: Base case
        spec: Perturbation (targets 'all' or a bus list)
        absolute_value: Difference the element-wise magnitudes |LM_red|,
            the matrix the random walk runs on

    Returns:
        N_g x N_g matrix
    """
    base = reduced_dynamics(case).lm_red
    varied = reduced_dynamics(perturb_case(case, spec)).lm_red
    if absolute_value:
        base, varied = np.abs(base), np.abs(varied)
    return (varied - base) / spec.magnitude


def first_order_eigs(es: EigenSystem, lm1: np.ndarray,
                     degeneracy_rtol: float = SENSITIVITY_CONFIG['degeneracy_rtol']) -> SensitivityReport:
    """
    First-order eigenvalue and eigenvector variations.

    Lambda_1 = diag(W* LM_1 U) and U_1 = -U (Y o (W* LM_1 U)), where
    Y_ij = 1 / (lambda_i - lambda_j) off the diagonal and 0 on it.

    Args:
        es: Base eigensystem (simple spectrum required)
        lm1: Perturbation matrix

    Returns:
        SensitivityReport with lambda1 and u1
    """
    values = np.asarray(es.eigenvalues, dtype=float)
    n = len(values)
    lm1 = np.asarray(lm1, dtype=float)
    if lm1.shape != (n, n):
        raise SensitivityError(f"perturbation matrix shape {lm1.shape} does not match {n} eigenvalues")

    gaps = values[:, None] - values[None, :]
    off_diagonal = ~np.eye(n, dtype=bool)
    radius = float(np.max(np.abs(values))) if n else 0.0
    if n > 1:
        smallest = float(np.min(np.abs(gaps[off_diagonal])))
        if smallest < degeneracy_rtol * radius:
            logger.error(f"Eigenvalue gap {smallest:.3e} below {degeneracy_rtol:.1e} x spectral radius")
            raise SensitivityError(
                f"near-degenerate eigenvalues (gap {smallest:.3e}); first-order formula does not apply")

    projected = np.asarray(es.left_vectors) @ lm1 @ np.asarray(es.right_vectors)
    upsilon = np.zeros((n, n))
    upsilon[off_diagonal] = 1.0 / gaps[off_diagonal]
    return SensitivityReport(
        lambda1=np.diag(projected).copy(),
        u1=-np.asarray(es.right_vectors) @ (upsilon * projected)
    )


def u1var_metric(es: EigenSystem, report: SensitivityReport,
                 min_base_entry: float = SENSITIVITY_CONFIG['min_base_entry']) -> float:
    """
    sum |U_1 / U_o| over the column of the largest eigenvalue.

    Raises:
        SensitivityError: if any entry of the base column is below min_base_entry
    """
    column = int(np.argmax(es.eigenvalues))
    base = np.asarray(es.right_vectors)[:, column]
    if np.any(np.abs(base) < min_base_entry):
        raise SensitivityError(f"base eigenvector has entries below {min_base_entry:g}; ratio is ill-posed")
    return float(np.sum(np.abs(report.u1[:, column] / base)))


def _single_report(case: NetworkCase, es: EigenSystem, spec: PerturbationSpec) -> SensitivityReport:
    report = first_order_eigs(es, perturbation_matrix(case, spec, absolute_value=True))
    return replace(report, u1var=u1var_metric(es, report), parameter=spec.parameter, epsilon=spec.magnitude)


def dnw_sensitivity(case: NetworkCase, spec: PerturbationSpec) -> SensitivityReport:
    """
    Sensitivity of the DNW to one parameter.

    Works on the |lm_red| system the random walk uses. With targets='each'
    every generator bus is perturbed on its own and lambda1, u1 and u1var
    are summed over buses.
    """
    es = absolute_eigensystem(reduced_dynamics(case))
    if spec.targets != 'each':
        return _single_report(case, es, spec)

    reports = {
        bus_id: _single_report(case, es, replace(spec, targets=(bus_id,)))
        for bus_id in case.gen_bus_ids
    }
    per_target = {bus_id: float(r.u1var) for bus_id, r in reports.items()}
    logger.debug(f"Per-bus u1var for {spec.parameter}: {per_target}")
    return SensitivityReport(
        lambda1=np.sum([r.lambda1 for r in reports.values()], axis=0),
        u1=np.sum([r.u1 for r in reports.values()], axis=0),
        u1var=float(sum(r.u1var for r in reports.values())),
        parameter=spec.parameter,
        epsilon=spec.magnitude,
        per_target=per_target
    )


def sensitivity_table(case: NetworkCase, epsilon: float = SENSITIVITY_CONFIG['epsilon'],
                      parameters: Iterable[str] = PARAMETERS, targets: Targets = 'each',
                      mode: str = 'relative') -> pd.DataFrame:
    """
    One row per parameter: parameter, epsilon, u1var, then lambda1 per generator.

    Args:
        case: Case to analyse
        epsilon: Perturbation magnitude
        parameters: Subset of inertia, voltage_mag, voltage_ang
        targets: 'each', 'all' or bus ids
        mode: 'relative' or 'absolute'

    Returns:
        DataFrame ready for CSV export
    """
    rows = []
    for parameter in parameters:
        report = dnw_sensitivity(case, PerturbationSpec(parameter, epsilon, targets, mode))
        row = {'parameter': parameter, 'epsilon': epsilon, 'u1var': report.u1var}
        row.update({f'lambda1_{bus_id}': float(v) for bus_id, v in zip(case.gen_bus_ids, report.lambda1)})
        rows.append(row)
        logger.info(f"u1var({parameter}) = {report.u1var:.6g} at epsilon={epsilon}")
    return pd.DataFrame(rows)


def eigenvalue_residual(lm0: np.ndarray, lm1: np.ndarray, es: EigenSystem, report: SensitivityReport,
                        epsilon: float) -> float:
    """
    max |eig(LM_o + eps LM_1) - (Lambda_o + eps Lambda_1)| with both sides sorted.

    Used to check that the first-order prediction error is O(eps^2).
    """
    exact = np.sort(np.real(np.linalg.eigvals(np.asarray(lm0) + epsilon * np.asarray(lm1))))
    predicted = np.asarray(es.eigenvalues) + epsilon * report.lambda1
    return float(np.max(np.abs(exact - np.sort(predicted))))


def targets_from_text(values: Optional[Sequence[str]]) -> Targets:
    """Parse CLI target tokens: none -> 'each', 'all'/'each', or bus ids."""
    if not values:
        return 'each'
    if len(values) == 1 and values[0] in ('all', 'each'):
        return values[0]
    try:
        return tuple(int(v) for v in values)
    except ValueError as e:
        raise SensitivityError(f"targets must be 'all', 'each' or bus ids, got {list(values)}") from e
