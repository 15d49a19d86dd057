"""Integration loop shared by the population and coherence designers.

A designer supplies a batched "system" object exposing ``seed(t)``,
``drives(t, y)``, ``rhs(t, y, w01, w12)`` and ``states(t, y)``. The drives are
singular at ``t = 0`` (the controlled coherences vanish there), so the
integration starts at a small offset ``delta`` from a seeded state and the
drives are clipped to ``omega_cap`` throughout. Clipping within the startup
window ``t < STARTUP_FACTOR * delta`` is expected; later clipping counts
towards infeasibility.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .core import min_eigenvalues
from .lindblad import uniform_grid

DEFAULT_CAP_FRACTION = 0.01
DEFAULT_DELTA_FRACTION = 1e-4
STARTUP_FACTOR = 100
DESIGN_EIG_TOL = 1e-7
# Relative to the ramp value, so a denominator that is small only because the
# prescribed coherences are still tiny does not count as a collapse.
DENOMINATOR_TOL = 1e-12


def ratio(num, den):
    """``num / den`` with ``0 / 0 = 0`` (a drive with nothing to do is off)."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / den
    return np.where(num == 0.0, 0.0, out)


@dataclass(frozen=True)
class DesignReport:
    feasible: bool
    reason: str | None
    cap_violations: int
    cap_checked: int
    min_eig: float
    max_omega01: float
    max_omega12: float
    delta: float
    omega_cap: float
    closed_loop_error: float | None = None

    @classmethod
    def trivial(cls, delta, omega_cap):
        return cls(True, None, 0, 0, 0.0, 0.0, 0.0, delta, omega_cap, 0.0)

    def with_tracking(self, error, tol):
        """Attach a closed-loop error; a feasible design that fails to track becomes infeasible."""
        if self.feasible and not error <= tol:
            return replace(self, closed_loop_error=float(error), feasible=False, reason="tracking")
        return replace(self, closed_loop_error=float(error))

    def describe(self):
        if self.feasible:
            return "feasible"
        if self.reason == "cap":
            return (f"drive cap {self.omega_cap} rad/us exceeded at {self.cap_violations} "
                    f"of {self.cap_checked} grid points after startup")
        if self.reason == "collapse":
            return "drive denominator collapsed after startup"
        if self.reason == "tracking":
            return f"closed-loop deviation {self.closed_loop_error:.3g} exceeds tolerance"
        return f"designed state not positive (min eigenvalue {self.min_eig:.3g})"

    def as_dict(self):
        return asdict(self)


@dataclass
class BatchResult:
    t_grid: np.ndarray
    omega01: np.ndarray  # (N, K)
    omega12: np.ndarray
    aux: np.ndarray | None  # (N, K, 3) or None
    cap_violations: np.ndarray  # (N,)
    cap_checked: int
    min_eig: np.ndarray  # (N,)
    finite: np.ndarray  # (N,)
    collapsed: np.ndarray  # (N,)
    delta: float
    omega_cap: float
    cap_fraction: float
    eig_tol: float

    def __len__(self):
        return self.omega01.shape[0]

    def reasons(self):
        """Per-target failure reason, ``None`` where the design is feasible."""
        allowed = self.cap_fraction * self.cap_checked
        out = []
        for i in range(len(self)):
            if self.collapsed[i]:
                out.append("collapse")
            elif self.cap_violations[i] > allowed:
                out.append("cap")
            elif not self.finite[i] or self.min_eig[i] < -self.eig_tol:
                out.append("unphysical")
            else:
                out.append(None)
        return out

    def report(self, i):
        reason = self.reasons()[i]
        return DesignReport(
            feasible=reason is None,
            reason=reason,
            cap_violations=int(self.cap_violations[i]),
            cap_checked=int(self.cap_checked),
            min_eig=float(self.min_eig[i]),
            max_omega01=float(np.max(np.abs(self.omega01[i]))),
            max_omega12=float(np.max(np.abs(self.omega12[i]))),
            delta=self.delta,
            omega_cap=self.omega_cap,
        )


def integrate(system, t_f, dt, omega_cap, delta=None, cap_fraction=DEFAULT_CAP_FRACTION,
              keep_aux=True, eig_tol=DESIGN_EIG_TOL):
    t_grid = uniform_grid(t_f, dt)
    n_pts = len(t_grid)
    delta = DEFAULT_DELTA_FRACTION * t_f if delta is None else float(delta)
    if not 0 < delta < t_f:
        raise ValueError(f"delta must lie in (0, t_f), got {delta}")
    startup_end = STARTUP_FACTOR * delta

    def clipped(t, y):
        w01, w12 = system.drives(t, y)
        return np.clip(w01, -omega_cap, omega_cap), np.clip(w12, -omega_cap, omega_cap)

    def rhs(t, y):
        return system.rhs(t, y, *clipped(t, y))

    y = system.seed(delta)
    n_batch = y.shape[0]
    omega01 = np.empty((n_batch, n_pts))
    omega12 = np.empty((n_batch, n_pts))
    aux = np.empty((n_batch, n_pts, y.shape[1])) if keep_aux else None
    violations = np.zeros(n_batch, dtype=int)
    min_eig = np.full(n_batch, np.inf)
    finite = np.ones(n_batch, dtype=bool)
    collapsed = np.zeros(n_batch, dtype=bool)
    watch_den = hasattr(system, "denominator")
    prev_den = None

    k0 = int(np.searchsorted(t_grid, delta, side="right"))
    w01, w12 = clipped(delta, y)
    omega01[:, :k0] = w01[:, None]
    omega12[:, :k0] = w12[:, None]
    if keep_aux:
        aux[:, :k0] = y[:, None]
    min_eig = np.minimum(min_eig, min_eigenvalues(system.states(delta, y)))

    checked = 0
    t = delta
    for k in range(k0, n_pts):
        t_next = t_grid[k]
        h = t_next - t
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t_next, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t_next

        raw01, raw12 = system.drives(t, y)
        if t >= startup_end:
            checked += 1
            over = ~(np.abs(raw01) <= omega_cap) | ~(np.abs(raw12) <= omega_cap)
            violations += over
            if watch_den:
                den = system.denominator(t, y)
                tiny = np.abs(den) < DENOMINATOR_TOL * np.maximum(system.ramp(t), 1e-300)
                if prev_den is not None:
                    tiny |= np.sign(den) * np.sign(prev_den) < 0
                collapsed |= tiny
                prev_den = den
        omega01[:, k] = np.clip(raw01, -omega_cap, omega_cap)
        omega12[:, k] = np.clip(raw12, -omega_cap, omega_cap)
        if keep_aux:
            aux[:, k] = y
        ok = np.all(np.isfinite(y), axis=1)
        finite &= ok
        states = system.states(t, np.where(ok[:, None], y, 0.0))
        min_eig = np.minimum(min_eig, np.where(ok, min_eigenvalues(states), -np.inf))

    omega01 = np.nan_to_num(omega01)
    omega12 = np.nan_to_num(omega12)
    return BatchResult(t_grid, omega01, omega12, aux, violations, checked, min_eig, finite,
                       collapsed, delta, omega_cap, cap_fraction, eig_tol)


def manifest(target, rates, dt, a, report):
    return {
        "target": target,
        "rates": rates.as_dict(),
        "dt": dt,
        "a": a,
        "omega_cap": report.omega_cap,
        "delta": report.delta,
        "feasible": report.feasible,
        "max_omega01": report.max_omega01,
        "max_omega12": report.max_omega12,
        "closed_loop_error": report.closed_loop_error,
    }
