"""Qutrit state family, decoherence rates and physicality checks.

Matrices use the basis order ``{|2>, |1>, |0>}``: row/column 0 is level
``|2>`` and row/column 2 is the ground state. Use :func:`level_index` instead
of hard-coding the mapping.

Units: times in microseconds, rates and Rabi frequencies in rad/us.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import NegativeRate, OutsideFamily

ALGEBRAIC_TOL = 1e-12
POSITIVITY_TOL = 1e-9

# Decoherence times (T1_01, T1_12, T2_01, T2_12) in us used for every
# experimental pulse of the reference device.
DEVICE_TIMES = (9.5, 4.6, 6.0, 1.9)


def level_index(level):
    """Matrix row of the basis state ``|level>``."""
    if level not in (0, 1, 2):
        raise ValueError(f"qutrit level must be 0, 1 or 2, got {level!r}")
    return 2 - level


@dataclass(frozen=True)
class DensityParams:
    """The five real functions that fix a member of the state family.

    ``f1``/``f2`` are the populations of ``|1>``/``|2>``; ``h1`` is the
    imaginary |2>-|1> coherence, ``h2`` the real |2>-|0> coherence and ``h3``
    the imaginary |1>-|0> coherence.
    """

    f1: float
    f2: float
    h1: float
    h2: float
    h3: float

    def as_tuple(self):
        return (self.f1, self.f2, self.h1, self.h2, self.h3)

    @property
    def p0(self):
        return 1.0 - self.f1 - self.f2


@dataclass(frozen=True)
class DecoherenceRates:
    """Relaxation (``Gamma*``) and dephasing (``gamma*``) rates in 1/us."""

    Gamma1: float = 0.0
    Gamma2: float = 0.0
    gamma1: float = 0.0
    gamma2: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not np.isfinite(value):
                raise ValueError(f"rate {name} is not finite: {value!r}")
            if value < 0:
                raise NegativeRate(f"rate {name} = {value:.6g} /us is negative")

    @classmethod
    def from_times(cls, t1_01, t1_12, t2_01, t2_12):
        return rates_from_times(t1_01, t1_12, t2_01, t2_12)

    @classmethod
    def device(cls):
        return rates_from_times(*DEVICE_TIMES)

    def as_dict(self):
        return asdict(self)

    def is_zero(self):
        return not any(asdict(self).values())


def rates_from_times(t1_01, t1_12, t2_01, t2_12):
    """Deduce the four Lindblad rates from measured T1/T2 times (us).

    Raises :class:`NegativeRate` when a combination is inconsistent, e.g.
    ``T2 > 2 T1`` on the 0-1 transition.
    """
    times = {"t1_01": t1_01, "t1_12": t1_12, "t2_01": t2_01, "t2_12": t2_12}
    for name, value in times.items():
        if not (np.isfinite(value) and value > 0):
            raise ValueError(f"{name} must be a positive time in us, got {value!r}")

    Gamma1 = 1.0 / t1_01
    gamma1 = 2.0 / t2_01 - Gamma1
    Gamma2 = 1.0 / t1_12
    gamma2 = 2.0 / t2_12 - Gamma2 - Gamma1 - gamma1

    rates = {"Gamma1": Gamma1, "Gamma2": Gamma2, "gamma1": gamma1, "gamma2": gamma2}
    for name, value in rates.items():
        # Cancellation can leave -1e-17 where the exact answer is zero.
        if value < -ALGEBRAIC_TOL:
            raise NegativeRate(
                f"deduced {name} = {value:.6g} /us < 0 from times {times}"
            )
        rates[name] = max(value, 0.0)
    return DecoherenceRates(**rates)


def family_matrix(f1, f2, h1, h2, h3):
    """Vectorised form of :func:`params_to_matrix`; returns shape ``(..., 3, 3)``."""
    f1, f2, h1, h2, h3 = np.broadcast_arrays(
        *(np.asarray(x, dtype=float) for x in (f1, f2, h1, h2, h3))
    )
    m = np.zeros(f1.shape + (3, 3), dtype=complex)
    m[..., 0, 0] = f2
    m[..., 0, 1] = -1j * h1
    m[..., 0, 2] = h2
    m[..., 1, 0] = 1j * h1
    m[..., 1, 1] = f1
    m[..., 1, 2] = -1j * h3
    m[..., 2, 0] = h2
    m[..., 2, 1] = 1j * h3
    m[..., 2, 2] = 1.0 - f1 - f2
    return m


def params_to_matrix(p):
    """Build the 3x3 density matrix of a family member (no physicality check)."""
    if isinstance(p, DensityParams):
        p = p.as_tuple()
    return family_matrix(*p)


def matrix_to_params(m, tol=ALGEBRAIC_TOL):
    """Read ``(f1, f2, h1, h2, h3)`` back from a family matrix.

    Raises :class:`OutsideFamily` when the state carries components the
    five-parameter family cannot represent.
    """
    m = np.asarray(m, dtype=complex)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")

    stray = max(
        abs(m[0, 2].imag),
        abs(m[2, 0].imag),
        abs(m[0, 1].real),
        abs(m[1, 0].real),
        abs(m[1, 2].real),
        abs(m[2, 1].real),
    )
    if stray > tol:
        raise OutsideFamily(
            f"state left the five-parameter family (stray component {stray:.3g} > {tol:.3g})"
        )

    p = DensityParams(
        f1=float(m[1, 1].real),
        f2=float(m[0, 0].real),
        h1=float(m[1, 0].imag),
        h2=float(m[2, 0].real),
        h3=float(m[2, 1].imag),
    )
    residual = np.max(np.abs(m - params_to_matrix(p)))
    if residual > tol:
        raise OutsideFamily(
            f"matrix differs from its family projection by {residual:.3g} > {tol:.3g}"
        )
    return p


def populations(m):
    """Return ``(P0, P1, P2)`` for one matrix or a stack ``(..., 3, 3)``."""
    m = np.asarray(m)
    diag = np.real(np.diagonal(m, axis1=-2, axis2=-1))
    return diag[..., [level_index(0), level_index(1), level_index(2)]]


@dataclass(frozen=True)
class PhysicalityReport:
    trace_dev: float
    herm_dev: float
    min_eig: float
    ok: bool


def physicality_check(m, tol=POSITIVITY_TOL):
    m = np.asarray(m, dtype=complex)
    trace_dev = float(abs(np.trace(m) - 1.0))
    herm_dev = float(np.max(np.abs(m - m.conj().T)))
    min_eig = float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0])
    ok = trace_dev <= tol and herm_dev <= tol and min_eig >= -tol
    return PhysicalityReport(trace_dev, herm_dev, min_eig, ok)


def min_eigenvalues(m):
    """Smallest eigenvalue of the Hermitian part, vectorised over leading axes."""
    m = np.asarray(m)
    return np.linalg.eigvalsh(0.5 * (m + np.conj(np.swapaxes(m, -1, -2))))[..., 0]


def basis_state(level):
    m = np.zeros((3, 3), dtype=complex)
    i = level_index(level)
    m[i, i] = 1.0
    return m


def ground_state():
    return basis_state(0)
