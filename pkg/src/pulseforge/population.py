"""Inverse-engineered drives that steer the qutrit populations.

Populations are prescribed as ``f1(t) = f(t) P1(t_f)`` and
``f2(t) = f(t) P2(t_f)`` with a logistic ramp ``f``. The drives follow in
closed form from the prescribed populations and the current coherences,

    W01 = (Gamma1 f1 + f1' + f2') / (2 h3)
    W12 = (Gamma2 f2 + f2') / (2 h1)

and the coherences ``(h1, h2, h3)`` are advanced by their own equations of
motion under those drives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _design
from .core import DecoherenceRates, family_matrix, ground_state, min_eigenvalues, populations
from .errors import InfeasibleTarget
from .lindblad import DEFAULT_DT, PulseSchedule, evolve_many, uniform_grid

DEFAULT_OMEGA_CAP = 100.0  # rad/us
TRACKING_TOL = 1e-3


def default_gradient(t_f):
    return 50.0 / t_f


def sigmoid_f(t, t_f, a=None):
    """Logistic ramp from ~0 at ``t = 0`` to ~1 at ``t = t_f``."""
    a = default_gradient(t_f) if a is None else a
    # 0.5*(1 + tanh(x/2)) is the overflow-free form of 1/(1 + exp(-x)).
    return 0.5 * (1.0 + np.tanh(0.5 * a * (np.asarray(t, dtype=float) - 0.5 * t_f)))


def sigmoid_df(t, t_f, a=None):
    a = default_gradient(t_f) if a is None else a
    f = sigmoid_f(t, t_f, a)
    return a * f * (1.0 - f)


@dataclass(frozen=True)
class PopulationTarget:
    p1_final: float
    p2_final: float
    t_f: float
    a: float | None = None

    def __post_init__(self):
        if not self.t_f > 0:
            raise ValueError(f"t_f must be positive, got {self.t_f}")
        if self.a is None:
            object.__setattr__(self, "a", default_gradient(self.t_f))
        p1, p2 = self.p1_final, self.p2_final
        if p1 < 0 or p2 < 0 or p1 + p2 > 1 + 1e-12:
            raise InfeasibleTarget(
                f"population target ({p1}, {p2}) violates P1, P2 >= 0, P1 + P2 <= 1",
                reason="constraint",
            )


@dataclass
class PopulationDesign:
    target: PopulationTarget
    rates: DecoherenceRates
    pulses: PulseSchedule
    aux: np.ndarray  # (h1, h2, h3) on the pulse grid, shape (K, 3)
    report: _design.DesignReport

    @property
    def feasible(self):
        return self.report.feasible

    def prescribed(self, t):
        """Prescribed ``(P0, P1, P2)`` at times ``t``, shape ``(len(t), 3)``."""
        return prescribed_populations(self.target, t)

    def family_states(self):
        f = sigmoid_f(self.pulses.t_grid, self.target.t_f, self.target.a)
        f1 = f * self.target.p1_final
        f2 = f * self.target.p2_final
        return family_matrix(f1, f2, self.aux[:, 0], self.aux[:, 1], self.aux[:, 2])

    def manifest(self, dt):
        return _design.manifest(
            {"kind": "population", "p1_final": self.target.p1_final,
             "p2_final": self.target.p2_final, "t_f": self.target.t_f},
            self.rates, dt, self.target.a, self.report,
        )


def prescribed_populations(target, t):
    f = sigmoid_f(t, target.t_f, target.a)
    p1 = f * target.p1_final
    p2 = f * target.p2_final
    return np.stack([1.0 - p1 - p2, p1, p2], axis=-1)


def population_rhs(f1, f2, h1, h2, h3, w01, w12, r):
    """Time derivatives ``(h1', h2', h3')`` of a family state under real drives."""
    dh1 = -0.5 * (r.gamma1 + r.gamma2 + r.Gamma1 + r.Gamma2) * h1 + (f1 - f2) * w12 - h2 * w01
    dh2 = -0.5 * (r.gamma2 + r.Gamma2) * h2 - h3 * w12 + h1 * w01
    dh3 = -0.5 * (r.gamma1 + r.Gamma1) * h3 + h2 * w12 - (2.0 * f1 + f2 - 1.0) * w01
    return dh1, dh2, dh3


class _PopulationSystem:
    """Batched right-hand side of the coherence equations with prescribed populations."""

    def __init__(self, p1, p2, t_f, a, r):
        self.p1 = np.asarray(p1, dtype=float)
        self.p2 = np.asarray(p2, dtype=float)
        self.t_f, self.a, self.r = t_f, a, r

    def drive_numerators(self, t):
        f = sigmoid_f(t, self.t_f, self.a)
        df = sigmoid_df(t, self.t_f, self.a)
        f1, f2 = f * self.p1, f * self.p2
        df1, df2 = df * self.p1, df * self.p2
        n01 = self.r.Gamma1 * f1 + df1 + df2
        n12 = self.r.Gamma2 * f2 + df2
        return f1, f2, n01, n12

    def drives(self, t, y):
        _, _, n01, n12 = self.drive_numerators(t)
        return _design.ratio(n01, 2.0 * y[:, 2]), _design.ratio(n12, 2.0 * y[:, 0])

    def rhs(self, t, y, w01, w12):
        f1, f2, _, _ = self.drive_numerators(t)
        return np.stack(population_rhs(f1, f2, y[:, 0], y[:, 1], y[:, 2], w01, w12, self.r),
                        axis=-1)

    def seed(self, t):
        """Coherences of the pure state with the prescribed populations at ``t``.

        Starting from the ground state, real drives keep the amplitudes in the
        pattern ``(c0, -i|c1|, -|c2|)``, which fixes the signs below.
        """
        f1, f2, _, _ = self.drive_numerators(t)
        p0 = 1.0 - f1 - f2
        h1 = np.sqrt(f1 * f2)
        h2 = -np.sqrt(f2 * p0)
        h3 = np.sqrt(f1 * p0)
        return np.stack([h1, h2, h3], axis=-1)

    def states(self, t, y):
        f1, f2, _, _ = self.drive_numerators(t)
        return family_matrix(f1, f2, y[:, 0], y[:, 1], y[:, 2])


def design_population_batch(
    p1,
    p2,
    t_f,
    r,
    dt=DEFAULT_DT,
    omega_cap=DEFAULT_OMEGA_CAP,
    a=None,
    delta=None,
    cap_fraction=_design.DEFAULT_CAP_FRACTION,
    keep_aux=True,
):
    """Design drives for many population targets sharing ``t_f`` and rates.

    Returns a :class:`_design.BatchResult`; targets are not validated here.
    """
    a = default_gradient(t_f) if a is None else a
    system = _PopulationSystem(p1, p2, t_f, a, r)
    return _design.integrate(
        system, t_f, dt, omega_cap,
        delta=delta, cap_fraction=cap_fraction, keep_aux=keep_aux,
    )


def tracking_errors(res, p1, p2, t_f, r, a=None, sample_every=1, rates_true=None):
    """Largest population deviation of each designed drive pair, evolved from ``|0>``.

    Returns ``(error, min_eigenvalue)`` arrays over the batch. ``rates_true``
    defaults to the design rates.
    """
    a = default_gradient(t_f) if a is None else a
    rates_true = r if rates_true is None else rates_true
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    n = len(res)
    err = np.zeros(n)
    low = np.full(n, np.inf)

    def on_sample(t, states):
        f = sigmoid_f(t, t_f, a)
        want = np.stack([1.0 - (p1 + p2) * f, p1 * f, p2 * f], axis=-1)
        np.maximum(err, np.max(np.abs(populations(states) - want), axis=-1), out=err)
        np.minimum(low, min_eigenvalues(states), out=low)

    rho0 = np.broadcast_to(ground_state(), (n, 3, 3))
    evolve_many(rho0, res.t_grid, res.omega01, res.omega12, rates_true,
                sample_every=sample_every, on_sample=on_sample)
    return err, low


def design_population_pulses(
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
    """Design the drive pair that steers the populations to ``target``.

    Parameters
    ----------
    target : PopulationTarget
    r : DecoherenceRates
        Rates assumed by the design. All zero gives the closed-system pulses.
    dt : float
        Pulse grid step in us.
    omega_cap : float
        Largest admissible ``|W|`` in rad/us.
    delta : float, optional
        Start offset of the design integration, default ``1e-4 * t_f``.

    Raises
    ------
    InfeasibleTarget
        If the cap binds on more than ``cap_fraction`` of the grid after the
        startup window, a designed state is not positive semidefinite, or
        (with ``verify``) the pulses evolved from ``|0>`` miss the prescribed
        populations by more than ``tracking_tol``.
    """
    if target.p1_final == 0 and target.p2_final == 0:
        t = uniform_grid(target.t_f, dt)
        report = _design.DesignReport.trivial(delta if delta is not None else 1e-4 * target.t_f, omega_cap)
        return PopulationDesign(target, r, PulseSchedule(t, 0 * t, 0 * t), np.zeros((len(t), 3)), report)

    res = design_population_batch(
        [target.p1_final], [target.p2_final], target.t_f, r,
        dt=dt, omega_cap=omega_cap, a=target.a, delta=delta, cap_fraction=cap_fraction,
    )
    report = res.report(0)
    if verify:
        err, _ = tracking_errors(res, [target.p1_final], [target.p2_final], target.t_f, r, target.a)
        report = report.with_tracking(err[0], tracking_tol)
    if raise_on_infeasible and not report.feasible:
        raise InfeasibleTarget(
            f"population target ({target.p1_final}, {target.p2_final}) at t_f = {target.t_f} us "
            f"is infeasible: {report.describe()}",
            reason=report.reason,
        )
    pulses = PulseSchedule(res.t_grid, res.omega01[0], res.omega12[0])
    return PopulationDesign(target, r, pulses, res.aux[0], report)
