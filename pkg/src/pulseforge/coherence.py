"""Inverse-engineered drives that steer the coherences ``h2`` and ``h3``.

The coherences are prescribed as ``h2(t) = f(t) h2(t_f)`` and
``h3(t) = f(t) h3(t_f)``; solving their equations of motion for the two
drives gives, with ``c = 2 f1 + f2 - 1`` and ``k_j = gamma_j + Gamma_j``,

    D   = 2 h1 h2 - 2 h3 c
    W01 = [h3 (k1 h3 + 2 h3') + h2 (k2 h2 + 2 h2')] / D
    W12 = [c (k2 h2 + 2 h2') + h1 (k1 h3 + 2 h3')] / D

while ``(h1, f1, f2)`` are advanced by their own equations of motion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _design
from .core import DecoherenceRates, family_matrix, ground_state, min_eigenvalues
from .errors import DenominatorCollapse, InfeasibleTarget
from .lindblad import DEFAULT_DT, PulseSchedule, evolve_many, uniform_grid
from .population import (
    DEFAULT_OMEGA_CAP,
    TRACKING_TOL,
    default_gradient,
    sigmoid_df,
    sigmoid_f,
)

MAX_COMPONENT = 0.5
MAX_RADIUS_SQ = 1.0 / 3.0


@dataclass(frozen=True)
class CoherenceTarget:
    h2_final: float
    h3_final: float
    t_f: float
    a: float | None = None

    def __post_init__(self):
        if not self.t_f > 0:
            raise ValueError(f"t_f must be positive, got {self.t_f}")
        if self.a is None:
            object.__setattr__(self, "a", default_gradient(self.t_f))
        if not coherence_target_allowed(self.h2_final, self.h3_final):
            raise InfeasibleTarget(
                f"coherence target ({self.h2_final}, {self.h3_final}) violates "
                "|h2|, |h3| <= 0.5 and h2^2 + h3^2 <= 1/3",
                reason="constraint",
            )


def coherence_target_allowed(h2, h3):
    eps = 1e-12
    return (
        abs(h2) <= MAX_COMPONENT + eps
        and abs(h3) <= MAX_COMPONENT + eps
        and h2 * h2 + h3 * h3 <= MAX_RADIUS_SQ + eps
    )


def purity_margin(f1, f2, h1, h2, h3):
    """``1 - tr(rho^2)`` for a family state; non-negative for physical states."""
    p0 = 1.0 - f1 - f2
    return 1.0 - f1**2 - f2**2 - p0**2 - 2 * h1**2 - 2 * h2**2 - 2 * h3**2


@dataclass
class CoherenceDesign:
    target: CoherenceTarget
    rates: DecoherenceRates
    pulses: PulseSchedule
    aux: np.ndarray  # (f1, f2, h1) on the pulse grid, shape (K, 3)
    report: _design.DesignReport

    @property
    def feasible(self):
        return self.report.feasible

    def prescribed(self, t):
        """Prescribed ``(h2, h3)`` at times ``t``, shape ``(len(t), 2)``."""
        f = sigmoid_f(t, self.target.t_f, self.target.a)
        return np.stack([f * self.target.h2_final, f * self.target.h3_final], axis=-1)

    def predicted_h1(self):
        return self.aux[:, 2]

    def family_states(self):
        h2, h3 = self.prescribed(self.pulses.t_grid).T
        return family_matrix(self.aux[:, 0], self.aux[:, 1], self.aux[:, 2], h2, h3)

    def manifest(self, dt):
        return _design.manifest(
            {"kind": "coherence", "h2_final": self.target.h2_final,
             "h3_final": self.target.h3_final, "t_f": self.target.t_f},
            self.rates, dt, self.target.a, self.report,
        )


def coherence_rhs(f1, f2, h1, h2, h3, w01, w12, r):
    """Time derivatives ``(h1', f1', f2')`` of the iterated variables."""
    k1 = r.gamma1 + r.Gamma1
    k2 = r.gamma2 + r.Gamma2
    dh1 = w12 * (f1 - f2) - 0.5 * h1 * (k1 + k2) - h2 * w01
    df1 = -r.Gamma1 * f1 + r.Gamma2 * f2 + 2.0 * h3 * w01 - 2.0 * h1 * w12
    df2 = -r.Gamma2 * f2 + 2.0 * h1 * w12
    return dh1, df1, df2


def coherence_drives(f1, f2, h1, h2, h3, dh2, dh3, r):
    """Drive pair that imposes ``(h2', h3')`` on a family state; also returns the denominator."""
    k1 = r.gamma1 + r.Gamma1
    k2 = r.gamma2 + r.Gamma2
    c = 2.0 * f1 + f2 - 1.0
    den = 2.0 * h1 * h2 - 2.0 * h3 * c
    a3 = k1 * h3 + 2.0 * dh3
    a2 = k2 * h2 + 2.0 * dh2
    w01 = _design.ratio(h3 * a3 + h2 * a2, den)
    w12 = _design.ratio(c * a2 + h1 * a3, den)
    return w01, w12, den


class _CoherenceSystem:
    def __init__(self, h2f, h3f, t_f, a, r):
        self.h2f = np.asarray(h2f, dtype=float)
        self.h3f = np.asarray(h3f, dtype=float)
        self.t_f, self.a, self.r = t_f, a, r

    def ramp(self, t):
        return sigmoid_f(t, self.t_f, self.a)

    def prescribed(self, t):
        f = sigmoid_f(t, self.t_f, self.a)
        df = sigmoid_df(t, self.t_f, self.a)
        return f * self.h2f, f * self.h3f, df * self.h2f, df * self.h3f

    def _unpack(self, t, y):
        h2, h3, dh2, dh3 = self.prescribed(t)
        return y[:, 0], y[:, 1], y[:, 2], h2, h3, dh2, dh3

    def drives(self, t, y):
        f1, f2, h1, h2, h3, dh2, dh3 = self._unpack(t, y)
        w01, w12, _ = coherence_drives(f1, f2, h1, h2, h3, dh2, dh3, self.r)
        return w01, w12

    def denominator(self, t, y):
        """Shared drive denominator; infinite for targets that need no drive at all."""
        f1, f2, h1, h2, h3, dh2, dh3 = self._unpack(t, y)
        den = coherence_drives(f1, f2, h1, h2, h3, dh2, dh3, self.r)[2]
        idle = (self.h2f == 0) & (self.h3f == 0)
        return np.where(idle, np.inf, den)

    def rhs(self, t, y, w01, w12):
        f1, f2, h1, h2, h3, _, _ = self._unpack(t, y)
        dh1, df1, df2 = coherence_rhs(f1, f2, h1, h2, h3, w01, w12, self.r)
        return np.stack([df1, df2, dh1], axis=-1)

    def seed(self, t):
        """Pure state ``c0|0> - i|c1||1> + c2|2>`` carrying the prescribed coherences."""
        h2, h3, _, _ = self.prescribed(t)
        p0 = 0.5 * (1.0 + np.sqrt(1.0 - 4.0 * (h2**2 + h3**2)))
        return np.stack([h3**2 / p0, h2**2 / p0, -h2 * h3 / p0], axis=-1)

    def states(self, t, y):
        f1, f2, h1, h2, h3, _, _ = self._unpack(t, y)
        return family_matrix(f1, f2, h1, h2, h3)


def design_coherence_batch(h2f, h3f, t_f, r, dt=DEFAULT_DT, omega_cap=DEFAULT_OMEGA_CAP,
                           a=None, delta=None, cap_fraction=_design.DEFAULT_CAP_FRACTION,
                           keep_aux=True):
    a = default_gradient(t_f) if a is None else a
    system = _CoherenceSystem(h2f, h3f, t_f, a, r)
    return _design.integrate(system, t_f, dt, omega_cap, delta=delta,
                             cap_fraction=cap_fraction, keep_aux=keep_aux)


def tracking_errors(res, h2f, h3f, t_f, r, a=None, sample_every=1, rates_true=None):
    """Closed-loop deviation of ``(h2, h3)`` and, when ``res.aux`` is kept, of ``h1``.

    Returns ``(coherence_error, h1_error, min_eigenvalue)`` per target; the
    ``h1`` error is NaN without aux data.
    """
    a = default_gradient(t_f) if a is None else a
    rates_true = r if rates_true is None else rates_true
    h2f = np.asarray(h2f, dtype=float)
    h3f = np.asarray(h3f, dtype=float)
    n = len(res)
    err = np.zeros(n)
    h1_err = np.zeros(n) if res.aux is not None else np.full(n, np.nan)
    low = np.full(n, np.inf)
    step = res.t_grid[1] - res.t_grid[0]

    def on_sample(t, states):
        f = sigmoid_f(t, t_f, a)
        dev = np.maximum(np.abs(states[:, 2, 0].real - h2f * f),
                         np.abs(states[:, 2, 1].imag - h3f * f))
        np.maximum(err, dev, out=err)
        if res.aux is not None:
            k = int(round(t / step))
            np.maximum(h1_err, np.abs(states[:, 1, 0].imag - res.aux[:, k, 2]), out=h1_err)
        np.minimum(low, min_eigenvalues(states), out=low)

    rho0 = np.broadcast_to(ground_state(), (n, 3, 3))
    evolve_many(rho0, res.t_grid, res.omega01, res.omega12, rates_true,
                sample_every=sample_every, on_sample=on_sample)
    return err, h1_err, low


def design_coherence_pulses(
    target,
    r,
    dt=DEFAULT_DT,
    omega_cap=DEFAULT_OMEGA_CAP,
    delta=None,
    cap_fraction=_design.DEFAULT_CAP_FRACTION,
    raise_on_infeasible=True,
    verify=True,
    tracking_tol=TRACKING_TOL,
):
    """Design the drive pair that steers ``(h2, h3)`` to ``target``.

    Same conventions as :func:`pulseforge.population.design_population_pulses`.
    With ``verify`` the closed-loop check covers ``h2``, ``h3`` and the
    predicted ``h1``.

    Raises
    ------
    DenominatorCollapse
        The shared drive denominator vanishes or changes sign after startup.
    InfeasibleTarget
        Cap binding, unphysical designed state or failed tracking.
    """
    if target.h2_final == 0 and target.h3_final == 0:
        t = uniform_grid(target.t_f, dt)
        delta = _design.DEFAULT_DELTA_FRACTION * target.t_f if delta is None else delta
        report = _design.DesignReport.trivial(delta, omega_cap)
        aux = np.zeros((len(t), 3))
        return CoherenceDesign(target, r, PulseSchedule(t, 0 * t, 0 * t), aux, report)

    res = design_coherence_batch(
        [target.h2_final], [target.h3_final], target.t_f, r, dt=dt, omega_cap=omega_cap,
        a=target.a, delta=delta, cap_fraction=cap_fraction,
    )
    report = res.report(0)
    if verify:
        err, h1_err, _ = tracking_errors(res, [target.h2_final], [target.h3_final],
                                         target.t_f, r, target.a)
        report = report.with_tracking(max(err[0], h1_err[0]), tracking_tol)
    if raise_on_infeasible and not report.feasible:
        msg = (f"coherence target ({target.h2_final}, {target.h3_final}) at "
               f"t_f = {target.t_f} us is infeasible: {report.describe()}")
        if report.reason == "collapse":
            raise DenominatorCollapse(msg)
        raise InfeasibleTarget(msg, reason=report.reason)
    pulses = PulseSchedule(res.t_grid, res.omega01[0], res.omega12[0])
    return CoherenceDesign(target, r, pulses, res.aux[0], report)
