"""Error metrics, freezing detection and the quantum-battery scenario.

The battery is the ``{|0>, |1>}`` subsystem driven by ``W01`` alone. Its
stored energy is ``eps = omega10 * P1``. A prescribed ``P1(t)`` that rises,
holds and falls is turned into a drive by the two-level reduction of the
population design,

    W01  = (Gamma1 f1 + f1') / (2 h3)
    h3'  = -(gamma1 + Gamma1) h3 / 2 - (2 f1 - 1) W01

During the hold ``f1' = 0`` and the drive does nothing but replace what
relaxation removes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _csv, _design
from .core import DecoherenceRates, family_matrix, ground_state, populations
from .errors import InfeasibleTarget
from .lindblad import DEFAULT_DT, PulseSchedule, Trajectory, evolve
from .population import DEFAULT_OMEGA_CAP, TRACKING_TOL

log = logging.getLogger(__name__)

FREEZING_TOL = 0.01
MIN_WINDOW_SAMPLES = 10
ENERGY_HEADER = ["t_us", "P1", "epsilon_inv_us"]


def _check_normalised(p, name):
    if abs(float(np.sum(p)) - 1.0) > 1e-6:
        log.warning("%s probabilities sum to %.8g, not 1", name, float(np.sum(p)))


def population_error(ideal, measured):
    """Root-mean-square deviation over the three populations."""
    ideal = np.asarray(ideal, dtype=float)
    measured = np.asarray(measured, dtype=float)
    _check_normalised(ideal, "ideal")
    _check_normalised(measured, "measured")
    return float(np.sqrt(np.sum((ideal - measured) ** 2) / 3.0))


def coherence_error(ideal, measured):
    """Root-mean-square deviation over the coherence pair ``(h2, h3)``."""
    ideal = np.asarray(ideal, dtype=float)
    measured = np.asarray(measured, dtype=float)
    return float(np.sqrt(np.sum((ideal - measured) ** 2) / 2.0))


@dataclass(frozen=True)
class FreezingWindow:
    t_start: float
    t_end: float

    @property
    def duration(self):
        return self.t_end - self.t_start


def freezing_window(traj, variation_tol=FREEZING_TOL, min_samples=MIN_WINDOW_SAMPLES):
    """Longest final stretch over which every population stays within ``variation_tol``.

    Returns ``None`` if fewer than ``min_samples`` trailing samples qualify.
    """
    pops = populations(traj.states) if isinstance(traj, Trajectory) else np.asarray(traj)
    times = traj.times
    rev = pops[::-1]
    spread = np.max(np.maximum.accumulate(rev, axis=0) - np.minimum.accumulate(rev, axis=0),
                    axis=1)
    # spread is non-decreasing, so the qualifying suffixes form a prefix of rev.
    n_ok = int(np.searchsorted(spread, variation_tol, side="right"))
    if n_ok < min_samples:
        return None
    return FreezingWindow(float(times[len(times) - n_ok]), float(times[-1]))


def two_level_rates(t1_01, t2_01):
    """Rates of the ``{|0>, |1>}`` subsystem; the ``|2>`` channels are off."""
    gamma_1 = 1.0 / t1_01
    return DecoherenceRates(Gamma1=gamma_1, Gamma2=0.0, gamma1=2.0 / t2_01 - gamma_1, gamma2=0.0)


def _device_qb_rates():
    return two_level_rates(9.5, 6.0)


@dataclass(frozen=True)
class QBConfig:
    """Charge, store and discharge schedule of the battery.

    ``P1`` rises from 0 to ``charge_level`` over ``t_charge``, is held for
    ``t_store`` and falls to ``discharge_level`` over ``t_discharge``. A
    driven but dephased qubit is mixed by the end of the hold and cannot be
    rotated back to ``P1 = 0``, hence the nonzero default floor.
    """

    omega10: float = 2.0 * math.pi * 5960.0  # rad/us
    charge_level: float = 0.8
    t_charge: float = 0.3
    t_store: float = 1.2
    t_discharge: float = 0.3
    discharge_level: float = 0.2
    rates: DecoherenceRates = field(default_factory=_device_qb_rates)

    def __post_init__(self):
        for name in ("t_charge", "t_store", "t_discharge"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 < self.charge_level <= 1:
            raise ValueError(f"charge_level must lie in (0, 1], got {self.charge_level}")
        if not 0 <= self.discharge_level < self.charge_level:
            raise ValueError("discharge_level must lie in [0, charge_level)")
        if self.rates.Gamma2 != 0 or self.rates.gamma2 != 0:
            raise ValueError("battery rates must have Gamma2 = gamma2 = 0")

    @property
    def duration(self):
        return self.t_charge + self.t_store + self.t_discharge

    @property
    def hold_interval(self):
        return self.t_charge, self.t_charge + self.t_store


def _logistic_segment(s, T):
    """Logistic step from exactly 0 at ``s = 0`` to exactly 1 at ``s = T``, and its slope."""
    a = 50.0 / T
    sig = 0.5 * (1.0 + np.tanh(0.5 * a * (s - 0.5 * T)))
    s0 = 0.5 * (1.0 + math.tanh(-0.25 * a * T))
    norm = 1.0 - 2.0 * s0
    return (sig - s0) / norm, a * sig * (1.0 - sig) / norm


def qb_profile(t, cfg):
    """Prescribed ``(P1, P1')`` of the battery at times ``t``."""
    t = np.asarray(t, dtype=float)
    t_hold, t_fall = cfg.hold_interval
    g_up, d_up = _logistic_segment(np.clip(t, 0.0, cfg.t_charge), cfg.t_charge)
    g_dn, d_dn = _logistic_segment(np.clip(t - t_fall, 0.0, cfg.t_discharge), cfg.t_discharge)
    c, drop = cfg.charge_level, cfg.charge_level - cfg.discharge_level
    f1 = np.where(t < t_hold, c * g_up, np.where(t < t_fall, c, c - drop * g_dn))
    df1 = np.where(t < t_hold, c * d_up, np.where(t < t_fall, 0.0, -drop * d_dn))
    return f1, df1


class _BatterySystem:
    def __init__(self, cfg):
        self.cfg = cfg
        self.r = cfg.rates

    def drives(self, t, y):
        f1, df1 = qb_profile(t, self.cfg)
        w01 = _design.ratio(self.r.Gamma1 * f1 + df1, 2.0 * y[:, 0])
        return w01, np.zeros_like(w01)

    def rhs(self, t, y, w01, w12):
        f1, _ = qb_profile(t, self.cfg)
        k1 = self.r.gamma1 + self.r.Gamma1
        return (-0.5 * k1 * y[:, 0] - (2.0 * f1 - 1.0) * w01)[:, None]

    def seed(self, t):
        f1, _ = qb_profile(t, self.cfg)
        return np.atleast_1d(np.sqrt(f1 * (1.0 - f1)))[:, None]

    def states(self, t, y):
        f1, _ = qb_profile(t, self.cfg)
        f1 = np.broadcast_to(f1, y[:, 0].shape)
        zero = np.zeros_like(f1)
        return family_matrix(f1, zero, zero, zero, y[:, 0])


@dataclass
class QBResult:
    config: QBConfig
    pulses: PulseSchedule
    traj: Trajectory
    energy: np.ndarray  # (S, 2): t, epsilon
    report: _design.DesignReport

    @property
    def feasible(self):
        return self.report.feasible

    def hold_variation(self):
        """Relative spread ``(max - min) / plateau`` of the simulated ``P1`` over the hold."""
        lo, hi = self.config.hold_interval
        sel = (self.traj.times >= lo - 1e-12) & (self.traj.times <= hi + 1e-12)
        p1 = populations(self.traj.states[sel])[:, 1]
        return float((p1.max() - p1.min()) / self.config.charge_level)

    def energy_rows(self):
        p1 = populations(self.traj.states)[:, 1]
        for (t, eps), p in zip(self.energy, p1):
            yield [float(t), float(p), float(eps)]

    def energy_csv(self, path=None):
        if path is None:
            return _csv.render(ENERGY_HEADER, self.energy_rows())
        return _csv.write(path, ENERGY_HEADER, self.energy_rows())


def free_decay_retention(t, rates):
    """Fraction of ``P1`` left after ``t`` us of undriven relaxation."""
    return math.exp(-rates.Gamma1 * t)


def qb_scenario(cfg, dt=DEFAULT_DT, omega_cap=DEFAULT_OMEGA_CAP,
                tracking_tol=TRACKING_TOL, raise_on_infeasible=True):
    """Design and simulate the charge, store and discharge cycle.

    Raises
    ------
    InfeasibleTarget
        If the drive exceeds ``omega_cap`` after startup, the designed state
        is unphysical, or the simulated ``P1`` misses the profile by more
        than ``tracking_tol``.
    """
    delta = _design.DEFAULT_DELTA_FRACTION * cfg.t_charge
    res = _design.integrate(_BatterySystem(cfg), cfg.duration, dt, omega_cap, delta=delta)
    pulses = PulseSchedule(res.t_grid, res.omega01[0], res.omega12[0])
    traj = evolve(ground_state(), pulses, cfg.rates, check=False)
    p1 = populations(traj.states)[:, 1]
    err = float(np.max(np.abs(p1 - qb_profile(traj.times, cfg)[0])))
    report = res.report(0).with_tracking(err, tracking_tol)
    if raise_on_infeasible and not report.feasible:
        raise InfeasibleTarget(
            f"battery cycle (charge {cfg.charge_level}, hold {cfg.t_store} us) is infeasible: "
            f"{report.describe()}",
            reason=report.reason,
        )
    energy = np.stack([traj.times, cfg.omega10 * p1], axis=-1)
    return QBResult(cfg, pulses, traj, energy, report)
