# src/swing_sim.py
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import SIMULATION_CONFIG
from .spectral_core import ReducedDynamics, eigensystem
from .utils import SimulationError

logger = logging.getLogger(__name__)

DISTURBANCE_KINDS = ('power_step', 'angle_impulse')
MIN_COHERENCE_WINDOW_S = 2.0


@dataclass(frozen=True)
class DisturbanceSpec:
    """A power step held over [t_start, t_end) or an angle impulse at t_start."""
    bus_id: int
    kind: str = 'power_step'
    size: float = 0.1
    t_start: float = 0.0
    t_end: float = 0.1

    def __post_init__(self):
        if self.kind not in DISTURBANCE_KINDS:
            raise SimulationError(f"kind must be one of {DISTURBANCE_KINDS}, got {self.kind!r}")
        if not np.isfinite(self.size) or self.size == 0:
            raise SimulationError(f"disturbance size must be finite and nonzero, got {self.size}")
        if not 0 <= self.t_start < self.t_end:
            raise SimulationError(f"need 0 <= t_start < t_end, got {self.t_start} and {self.t_end}")


@dataclass(frozen=True)
class Trajectory:
    """Angle and speed deviations of every generator, one column per time step."""
    times: np.ndarray
    delta: np.ndarray
    omega: np.ndarray
    gen_order: Tuple[int, ...]
    disturbance: Optional[DisturbanceSpec] = None

    def __post_init__(self):
        steps = len(self.times)
        for name in ('delta', 'omega'):
            shape = np.shape(getattr(self, name))
            if shape != (len(self.gen_order), steps):
                raise SimulationError(f"{name} has shape {shape}, expected {(len(self.gen_order), steps)}")

    @property
    def post_disturbance_start(self) -> float:
        return self.disturbance.t_end if self.disturbance is not None else float(self.times[0])

    def to_frame(self) -> pd.DataFrame:
        """time, then one speed-deviation column per generator."""
        frame = pd.DataFrame(self.omega.T, columns=[f'omega_{bus_id}' for bus_id in self.gen_order])
        frame.insert(0, 'time', self.times)
        return frame


@dataclass(frozen=True)
class CoherenceScore:
    intra: float
    inter: float
    n_intra: int
    n_inter: int


def stability_limit(rd: ReducedDynamics) -> float:
    """Largest time step the integrator accepts: 2 / sqrt(lambda_max)."""
    lam_max = float(np.max(eigensystem(rd).eigenvalues))
    return np.inf if lam_max <= 0 else 2.0 / np.sqrt(lam_max)


def _injection(rd: ReducedDynamics, d: DisturbanceSpec) -> Tuple[np.ndarray, Optional[int]]:
    """Generator-side injection of the disturbance and the disturbed generator index."""
    if d.bus_id in rd.gen_order:
        index = rd.gen_order.index(d.bus_id)
        vector = np.zeros(len(rd.gen_order))
        vector[index] = d.size
        return vector, index
    if d.bus_id in rd.load_order:
        if d.kind == 'angle_impulse':
            raise SimulationError(f"angle_impulse needs a generator bus, {d.bus_id} is a load bus")
        # Load injection reaches the generators through the extension row
        return rd.extension[rd.load_order.index(d.bus_id)] * d.size, None
    raise SimulationError(f"disturbance bus {d.bus_id} is not in the reduced network")


def simulate(rd: ReducedDynamics, d: Optional[DisturbanceSpec] = None, dt: float = SIMULATION_CONFIG['dt'],
             horizon: float = SIMULATION_CONFIG['horizon'], damping: float = SIMULATION_CONFIG['damping'],
             initial_delta: Optional[Sequence[float]] = None,
             initial_omega: Optional[Sequence[float]] = None) -> Trajectory:
    """
    Integrate d(delta)/dt = omega, d(omega)/dt = -lm_red delta - (D/m) omega + P(t)/m
    with classical fourth-order Runge-Kutta.

    Args:
        rd: Reduced dynamics
        d: Disturbance; None for a free response from the initial state
        dt: Time step in seconds, below 2 / sqrt(lambda_max)
        horizon: End time in seconds, at least d.t_end
        damping: Uniform damping coefficient D
        initial_delta: Initial angle deviations (zeros when omitted)
        initial_omega: Initial speed deviations (zeros when omitted)

    Returns:
        Trajectory sampled every dt
    """
    ng = len(rd.gen_order)
    if not dt > 0:
        raise SimulationError(f"dt must be > 0, got {dt}")
    if d is not None and horizon < d.t_end:
        raise SimulationError(f"horizon {horizon} ends before the disturbance ({d.t_end})")
    limit = stability_limit(rd)
    if dt >= limit:
        logger.error(f"Time step {dt} violates the stability bound {limit:.6g}")
        raise SimulationError(f"dt={dt} violates the stability bound dt < 2/sqrt(lambda_max) = {limit:.6g}")

    m = np.asarray(rd.m_diag)
    lm = np.asarray(rd.lm_red)
    delta = np.zeros(ng) if initial_delta is None else np.array(initial_delta, dtype=float)
    omega = np.zeros(ng) if initial_omega is None else np.array(initial_omega, dtype=float)
    if delta.shape != (ng,) or omega.shape != (ng,):
        raise SimulationError(f"initial state must have {ng} entries per generator")

    forcing = np.zeros(ng)
    impulse_step = None
    if d is not None:
        injection, index = _injection(rd, d)
        if d.kind == 'power_step':
            forcing = injection / m
        else:
            impulse_step = int(np.ceil(d.t_start / dt - 1e-9))

    def active(t: float) -> bool:
        return d is not None and d.kind == 'power_step' and d.t_start <= t < d.t_end

    def rhs(t: float, x_delta: np.ndarray, x_omega: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        accel = -lm @ x_delta - (damping / m) * x_omega
        if active(t):
            accel = accel + forcing
        return x_omega, accel

    steps = int(round(horizon / dt))
    times = np.arange(steps + 1) * dt
    deltas = np.empty((ng, steps + 1))
    omegas = np.empty((ng, steps + 1))

    for k in range(steps + 1):
        if k == impulse_step:
            delta[index] = d.size
        deltas[:, k], omegas[:, k] = delta, omega
        if k == steps:
            break
        t = times[k]
        k1d, k1w = rhs(t, delta, omega)
        k2d, k2w = rhs(t + dt / 2, delta + dt / 2 * k1d, omega + dt / 2 * k1w)
        k3d, k3w = rhs(t + dt / 2, delta + dt / 2 * k2d, omega + dt / 2 * k2w)
        k4d, k4w = rhs(t + dt, delta + dt * k3d, omega + dt * k3w)
        delta = delta + dt / 6 * (k1d + 2 * k2d + 2 * k3d + k4d)
        omega = omega + dt / 6 * (k1w + 2 * k2w + 2 * k3w + k4w)

    if not (np.all(np.isfinite(deltas)) and np.all(np.isfinite(omegas))):
        raise SimulationError("integration produced non-finite values")
    logger.debug(f"Simulated {steps} steps of {dt} s for {ng} generators")
    return Trajectory(times=times, delta=deltas, omega=omegas, gen_order=tuple(rd.gen_order), disturbance=d)


def swing_energy(rd: ReducedDynamics, tr: Trajectory) -> np.ndarray:
    """E(t) = sum m_i omega_i^2 / 2 + delta^T l_red delta / 2."""
    m = np.asarray(rd.m_diag)
    kinetic = 0.5 * np.sum(m[:, None] * tr.omega ** 2, axis=0)
    potential = 0.5 * np.einsum('it,ij,jt->t', tr.delta, np.asarray(rd.l_red), tr.delta)
    return kinetic + potential


def peak_response(tr: Trajectory) -> pd.Series:
    """Largest |omega| of each generator over the trajectory."""
    return pd.Series(np.max(np.abs(tr.omega), axis=1), index=list(tr.gen_order), name='peak_omega')


def coherence_score(tr: Trajectory, zr) -> CoherenceScore:
    """
    Mean Pearson correlation of speed deviations within zones and across zones.

    Only the free response after the disturbance is used, and pairs involving
    the disturbed generator are left out.

    Args:
        tr: Trajectory covering at least 2 s after the disturbance
        zr: ZoningResult (anything with an assignment bus -> zone)

    Returns:
        CoherenceScore; intra is NaN when no zone holds two generators
    """
    start = tr.post_disturbance_start
    if tr.times[-1] - start < MIN_COHERENCE_WINDOW_S - 1e-9:
        raise SimulationError(
            f"trajectory covers {tr.times[-1] - start:.3g} s after the disturbance, need {MIN_COHERENCE_WINDOW_S} s")

    excluded = tr.disturbance.bus_id if tr.disturbance is not None else None
    gens = [bus_id for bus_id in tr.gen_order if bus_id != excluded]
    missing = [bus_id for bus_id in gens if bus_id not in zr.assignment]
    if missing:
        raise SimulationError(f"generators {missing} have no zone")

    window = tr.times >= start - 1e-12
    rows = [tr.gen_order.index(bus_id) for bus_id in gens]
    corr = pd.DataFrame(tr.omega[rows][:, window].T, columns=gens).corr(method='pearson')

    intra, inter = [], []
    for a_pos, a in enumerate(gens):
        for b in gens[a_pos + 1:]:
            target = intra if zr.assignment[a] == zr.assignment[b] else inter
            target.append(corr.loc[a, b])

    zones = pd.Series({bus_id: zr.assignment[bus_id] for bus_id in gens})
    lonely = sorted(int(z) for z, size in zones.value_counts().items() if size < 2)
    if lonely:
        logger.warning(f"Zone(s) {lonely} hold fewer than 2 generators and add no intra pairs")

    def mean(values):
        values = np.asarray(values, dtype=float)
        values = values[np.isfinite(values)]
        return float(values.mean()) if values.size else float('nan')

    return CoherenceScore(intra=mean(intra), inter=mean(inter), n_intra=len(intra), n_inter=len(inter))
