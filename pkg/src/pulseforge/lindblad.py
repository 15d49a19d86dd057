"""Markovian master equation for the driven qutrit and a fixed-step RK4 solver.

The drive Hamiltonian in the interaction picture is

    H = W01 (|0><1| + |1><0|) + W12 (|1><2| + |2><1|)

with real Rabi frequencies, and the four jump operators are
``sqrt(gamma_k)|k><k|`` (dephasing) and ``sqrt(Gamma_k)|k-1><k|``
(relaxation) for ``k = 1, 2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _csv
from .core import (
    DecoherenceRates,
    level_index,
    matrix_to_params,
    min_eigenvalues,
    populations,
)
from .errors import UnphysicalState

DEFAULT_DT = 1e-3  # us
UNPHYSICAL_EIG = -1e-6

PULSE_HEADER = ["t_us", "omega01_inv_us", "omega12_inv_us"]
TRAJECTORY_HEADER = ["t_us", "P0", "P1", "P2", "h1", "h2", "h3", "trace_dev", "min_eig"]


def _ketbra(a, b):
    m = np.zeros((3, 3), dtype=complex)
    m[level_index(a), level_index(b)] = 1.0
    return m


def hamiltonian(omega01, omega12):
    """Drive Hamiltonian, vectorised over the shapes of the Rabi frequencies."""
    omega01, omega12 = np.broadcast_arrays(np.asarray(omega01, float), np.asarray(omega12, float))
    x01 = _ketbra(0, 1) + _ketbra(1, 0)
    x12 = _ketbra(1, 2) + _ketbra(2, 1)
    return omega01[..., None, None] * x01 + omega12[..., None, None] * x12


def lindblad_operators(r):
    return [
        np.sqrt(r.gamma1) * _ketbra(1, 1),
        np.sqrt(r.gamma2) * _ketbra(2, 2),
        np.sqrt(r.Gamma1) * _ketbra(0, 1),
        np.sqrt(r.Gamma2) * _ketbra(1, 2),
    ]


def lindblad_rhs(m, omega01, omega12, r):
    """Time derivative of ``m`` under the master equation.

    ``m`` may be a single 3x3 matrix or a stack ``(..., 3, 3)`` whose leading
    shape broadcasts against the Rabi frequencies.
    """
    m = np.asarray(m, dtype=complex)
    h = hamiltonian(omega01, omega12)
    out = -1j * (h @ m - m @ h)
    for L in lindblad_operators(r):
        Ld = L.conj().T
        LdL = Ld @ L
        out = out + L @ m @ Ld - 0.5 * (LdL @ m + m @ LdL)
    return out


@lru_cache(maxsize=64)
def _liouvillian_cached(rates_key):
    r = DecoherenceRates(*rates_key)
    basis = np.eye(9, dtype=complex).reshape(9, 3, 3)
    cols0 = lindblad_rhs(basis, 0.0, 0.0, r).reshape(9, 9)
    cols01 = lindblad_rhs(basis, 1.0, 0.0, r).reshape(9, 9) - cols0
    cols12 = lindblad_rhs(basis, 0.0, 1.0, r).reshape(9, 9) - cols0
    # Row k of cols* is the image of basis element k; transpose to act on columns.
    return cols0.T.copy(), cols01.T.copy(), cols12.T.copy()


def liouvillian(r):
    """Split the generator into ``A0 + W01*A01 + W12*A12`` acting on row-major ``vec(rho)``."""
    return _liouvillian_cached((r.Gamma1, r.Gamma2, r.gamma1, r.gamma2))


@dataclass
class PulseSchedule:
    """Rabi frequencies sampled on a uniform grid, linearly interpolated."""

    t_grid: np.ndarray
    omega01: np.ndarray
    omega12: np.ndarray
    interpolation: str = "piecewise-linear"

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        self.omega01 = np.asarray(self.omega01, dtype=float)
        self.omega12 = np.asarray(self.omega12, dtype=float)
        n = len(self.t_grid)
        if n < 2 or len(self.omega01) != n or len(self.omega12) != n:
            raise ValueError("t_grid, omega01 and omega12 must have equal length >= 2")
        if self.interpolation != "piecewise-linear":
            raise ValueError(f"unsupported interpolation {self.interpolation!r}")
        if not (np.all(np.isfinite(self.omega01)) and np.all(np.isfinite(self.omega12))):
            raise ValueError("pulse samples must be finite")
        if abs(self.t_grid[0]) > 1e-12:
            raise ValueError("t_grid must start at 0")
        steps = np.diff(self.t_grid)
        if np.any(steps <= 0):
            raise ValueError("t_grid must be strictly increasing")
        if np.max(np.abs(steps - steps[0])) > 1e-9 * max(1.0, self.t_grid[-1]):
            raise ValueError("t_grid must be uniformly spaced")

    @classmethod
    def constant(cls, omega01, omega12, t_f, dt=DEFAULT_DT):
        t = uniform_grid(t_f, dt)
        return cls(t, np.full_like(t, omega01), np.full_like(t, omega12))

    @classmethod
    def zero(cls, t_f, dt=DEFAULT_DT):
        return cls.constant(0.0, 0.0, t_f, dt)

    @property
    def dt(self):
        return (self.t_grid[-1] - self.t_grid[0]) / (len(self.t_grid) - 1)

    @property
    def t_f(self):
        return float(self.t_grid[-1])

    def at(self, t):
        t = np.asarray(t, dtype=float)
        return (
            np.interp(t, self.t_grid, self.omega01),
            np.interp(t, self.t_grid, self.omega12),
        )

    def max_abs(self, t_from=0.0, t_to=None):
        t_to = self.t_f if t_to is None else t_to
        sel = (self.t_grid >= t_from - 1e-12) & (self.t_grid <= t_to + 1e-12)
        return float(np.max(np.abs(self.omega01[sel]))), float(np.max(np.abs(self.omega12[sel])))

    def to_csv(self, path=None):
        rows = zip(self.t_grid.tolist(), self.omega01.tolist(), self.omega12.tolist())
        if path is None:
            return _csv.render(PULSE_HEADER, rows)
        return _csv.write(path, PULSE_HEADER, rows)

    @classmethod
    def from_csv(cls, path):
        header, rows = _csv.read(path)
        if header != PULSE_HEADER:
            raise ValueError(f"unexpected pulse CSV header {header}")
        data = np.array(rows, dtype=float).reshape(-1, 3)
        return cls(data[:, 0], data[:, 1], data[:, 2])


def uniform_grid(t_f, dt):
    n = int(round(t_f / dt))
    if n < 1 or abs(n * dt - t_f) > 1e-9 * max(1.0, t_f):
        raise ValueError(f"dt = {dt} does not divide t_f = {t_f}")
    return np.linspace(0.0, t_f, n + 1)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    def __len__(self):
        return len(self.times)

    @property
    def final(self):
        return self.states[-1]

    def populations(self):
        """Array of shape ``(n, 3)`` with columns ``P0, P1, P2``."""
        return populations(self.states)

    def coherences(self):
        """``(h1, h2, h3)`` read from the matrix entries, shape ``(n, 3)``."""
        s = self.states
        return np.stack(
            [s[:, 1, 0].imag, s[:, 2, 0].real, s[:, 2, 1].imag], axis=-1
        )

    def params(self, tol=1e-7):
        """Per-sample :class:`DensityParams`; raises ``OutsideFamily`` if the state left it."""
        return [matrix_to_params(m, tol) for m in self.states]

    def trace_deviation(self):
        return np.abs(np.trace(self.states, axis1=-2, axis2=-1) - 1.0)

    def hermiticity_deviation(self):
        diff = self.states - np.conj(np.swapaxes(self.states, -1, -2))
        return np.max(np.abs(diff), axis=(-2, -1))

    def min_eigenvalues(self):
        return min_eigenvalues(self.states)

    def csv_rows(self):
        pops = self.populations()
        coh = self.coherences()
        tr = self.trace_deviation()
        eig = self.min_eigenvalues()
        for k, t in enumerate(self.times):
            yield [float(t), *map(float, pops[k]), *map(float, coh[k]), float(tr[k]), float(eig[k])]

    def to_csv(self, path=None):
        if path is None:
            return _csv.render(TRAJECTORY_HEADER, self.csv_rows(), _csv.sig12)
        return _csv.write(path, TRAJECTORY_HEADER, self.csv_rows(), _csv.sig12)


def _step_count(t_f, dt):
    n = int(round(t_f / dt))
    if n < 1 or abs(n * dt - t_f) > 1e-9 * max(1.0, t_f):
        raise ValueError(f"dt = {dt} does not divide the schedule length {t_f}")
    return n


def _interp_weights(t, t_grid):
    """Left index and weight for linear interpolation on a uniform grid."""
    step = (t_grid[-1] - t_grid[0]) / (len(t_grid) - 1)
    x = (t - t_grid[0]) / step
    i = np.clip(np.floor(x + 1e-9).astype(int), 0, len(t_grid) - 2)
    w = np.clip(x - i, 0.0, 1.0)
    return i, w


def evolve_many(rho0, t_grid, omega01, omega12, r, dt=None, sample_every=1, on_sample=None):
    """RK4-integrate a batch of states, each under its own pulse pair.

    Parameters
    ----------
    rho0 : array, shape (N, 3, 3)
    t_grid : array, shape (K,)
        Uniform pulse grid shared by the batch.
    omega01, omega12 : array, shape (N, K)
    dt : float, optional
        Integration step; defaults to the grid step.
    sample_every : int
        Record every ``sample_every``-th step; the final time is always kept.
    on_sample : callable, optional
        ``on_sample(t, states)`` is called at each sample with the batch of
        shape ``(N, 3, 3)``; states are then not stored and ``None`` is
        returned in their place.

    Returns
    -------
    times : array, shape (S,)
    states : array, shape (N, S, 3, 3)
    """
    rho0 = np.asarray(rho0, dtype=complex)
    omega01 = np.atleast_2d(np.asarray(omega01, dtype=float))
    omega12 = np.atleast_2d(np.asarray(omega12, dtype=float))
    t_grid = np.asarray(t_grid, dtype=float)
    n_batch = rho0.shape[0]
    t_f = float(t_grid[-1])
    if dt is None:
        dt = (t_grid[-1] - t_grid[0]) / (len(t_grid) - 1)
    n_steps = _step_count(t_f, dt)
    sample_every = max(int(sample_every), 1)

    a0, a01, a12 = liouvillian(r)
    a0t, a01t, a12t = a0.T, a01.T, a12.T

    # Stage times t_n and t_n + dt/2; linear interpolation for every cell at once.
    stage_t = np.arange(2 * n_steps + 1) * (0.5 * dt)
    idx, w = _interp_weights(stage_t, t_grid)
    w01 = omega01[:, idx] * (1.0 - w) + omega01[:, idx + 1] * w
    w12 = omega12[:, idx] * (1.0 - w) + omega12[:, idx + 1] * w

    def rhs(v, j):
        return v @ a0t + w01[:, j, None] * (v @ a01t) + w12[:, j, None] * (v @ a12t)

    sample_steps = list(range(0, n_steps + 1, sample_every))
    if sample_steps[-1] != n_steps:
        sample_steps.append(n_steps)
    times = np.array(sample_steps, dtype=float) * dt
    out = None if on_sample else np.empty((n_batch, len(sample_steps), 3, 3), dtype=complex)

    def record(s, v):
        if on_sample:
            on_sample(times[s], v.reshape(n_batch, 3, 3))
        else:
            out[:, s] = v.reshape(n_batch, 3, 3)

    v = rho0.reshape(n_batch, 9).copy()
    record(0, v)
    s = 1
    half = 0.5 * dt
    for n in range(n_steps):
        j = 2 * n
        k1 = rhs(v, j)
        k2 = rhs(v + half * k1, j + 1)
        k3 = rhs(v + half * k2, j + 1)
        k4 = rhs(v + dt * k3, j + 2)
        v = v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if s < len(sample_steps) and n + 1 == sample_steps[s]:
            record(s, v)
            s += 1
    return times, out


def evolve(rho0, pulses, r, dt=None, sample_every=1, check=True):
    """Integrate the master equation from ``rho0`` under ``pulses``.

    The trace is never renormalised; deviations are visible through
    :meth:`Trajectory.trace_deviation`. With ``check`` set, a sampled state
    with an eigenvalue below ``-1e-6`` raises :class:`UnphysicalState`.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    times, states = evolve_many(
        rho0[None],
        pulses.t_grid,
        pulses.omega01[None],
        pulses.omega12[None],
        r,
        dt=dt,
        sample_every=sample_every,
    )
    traj = Trajectory(times, states[0])
    if check:
        eig = traj.min_eigenvalues()
        bad = np.flatnonzero(eig < UNPHYSICAL_EIG)
        if bad.size:
            k = bad[0]
            raise UnphysicalState(
                f"min eigenvalue {eig[k]:.3g} at t = {times[k]:.6g} us; "
                "step too large or pulses unphysical"
            )
    return traj


def step_doubling_error(rho0, pulses, r, dt=None):
    """Richardson estimate of the endpoint error of :func:`evolve` at step ``dt``."""
    dt = pulses.dt if dt is None else dt
    coarse = evolve(rho0, pulses, r, dt=dt, sample_every=10**9, check=False).final
    fine = evolve(rho0, pulses, r, dt=dt / 2, sample_every=10**9, check=False).final
    return float(np.max(np.abs(coarse - fine)) * 16.0 / 15.0)
