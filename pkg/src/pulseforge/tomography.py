"""Coherence readout from diagonal measurements, and readout-error correction.

Only level populations are measured. Four settings, identity, ``(X/2)_01``,
``(X/2)_12`` and ``(X/2)_12 (X/2)_01``, rotate the coherences
``h1, h2, h3`` into the diagonal, where they can be solved for.

Probability triples throughout this module are ordered by state label,
``(P0, P1, P2)``, regardless of the matrix basis order used in
:mod:`pulseforge.core`.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import level_index, populations
from .errors import ColumnSumMismatch, SingularMatrix

SQRT2 = np.sqrt(2.0)
MAX_CONDITION = 1e12


def x_half(a, b):
    """pi/2 rotation about X in the ``{|a>, |b>}`` subspace; identity on the third level."""
    u = np.eye(3, dtype=complex)
    ia, ib = level_index(a), level_index(b)
    c = np.cos(np.pi / 4)
    s = np.sin(np.pi / 4)
    u[ia, ia] = u[ib, ib] = c
    u[ia, ib] = u[ib, ia] = -1j * s
    return u


def tomography_unitaries():
    u2 = x_half(0, 1)
    u3 = x_half(1, 2)
    return [np.eye(3, dtype=complex), u2, u3, u3 @ u2]


@dataclass(frozen=True)
class DiagonalReads:
    """Populations after each of the four rotation settings, shape ``(4, 3)``.

    Row ``p`` holds ``(P0, P1, P2)`` measured after setting ``U_{p+1}``.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (4, 3):
            raise ValueError(f"expected 4 probability triples, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    def read(self, setting, level):
        """Population of ``|level>`` after rotation setting ``setting`` (1-based)."""
        return self.values[setting - 1, level]

    def normalisation_error(self):
        return float(np.max(np.abs(self.values.sum(axis=1) - 1.0)))


def tomo_rotations(m):
    m = np.asarray(m, dtype=complex)
    reads = [populations(u @ m @ u.conj().T) for u in tomography_unitaries()]
    return DiagonalReads(np.array(reads))


def reconstruct_coherences(reads):
    """Recover ``(h1, h2, h3)`` from the four diagonal reads.

    ``h2`` comes from the ``|1>`` population after the combined rotation,
    the only setting whose diagonal carries it.
    """
    f2 = reads.read(1, 2)
    f1 = reads.read(1, 1)
    h1 = reads.read(3, 2) - 0.5 * (f2 + f1)
    h3 = reads.read(2, 1) - 0.5 * (1.0 - f2)
    h2 = -(f2 - 2.0 * SQRT2 * h1 + 2.0 * h3 + 1.0 - 4.0 * reads.read(4, 1)) / (2.0 * SQRT2)
    return float(h1), float(h2), float(h3)


@dataclass(frozen=True)
class CalibrationMatrix:
    """Readout confusion matrix; ``F[i, j]`` = P(measure ``|i>`` | prepared ``|j>``)."""

    F: np.ndarray

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        if F.shape != (3, 3):
            raise ValueError(f"calibration matrix must be 3x3, got {F.shape}")
        if np.any(F < 0) or np.any(F > 1):
            raise ValueError("calibration entries must lie in [0, 1]")
        if np.max(np.abs(F.sum(axis=0) - 1.0)) > 1e-9:
            raise ValueError(f"calibration columns must sum to 1, got {F.sum(axis=0)}")
        object.__setattr__(self, "F", F)

    @classmethod
    def identity(cls):
        return cls(np.eye(3))

    @classmethod
    def device(cls):
        """Averaged confusion matrix of the reference device readout."""
        return cls(np.array([
            [0.974, 0.102, 0.041],
            [0.017, 0.885, 0.141],
            [0.009, 0.013, 0.818],
        ]))

    def condition(self):
        return float(np.linalg.cond(self.F))

    def apply(self, true_probs):
        return self.F @ np.asarray(true_probs, dtype=float)

    def save(self, path):
        lines = [
            "# readout calibration: F[i][j] = P(measure |i> | prepared |j>)",
            "# rows: measured state i = 0, 1, 2; columns: prepared state j = 0, 1, 2",
        ]
        lines += [" ".join(repr(float(x)) for x in row) for row in self.F]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        rows = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                rows.append([float(x) for x in line.split()])
        return cls(np.array(rows))


def calibrate(measured, F, clip=False):
    """Undo readout error: solve ``F @ P_true = measured``.

    The result may leave ``[0, 1]`` slightly for noisy data; ``clip`` clamps
    it and renormalises.
    """
    F = F.F if isinstance(F, CalibrationMatrix) else np.asarray(F, dtype=float)
    cond = np.linalg.cond(F)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularMatrix(f"calibration matrix is singular (condition number {cond:.3g})")
    out = np.linalg.solve(F, np.asarray(measured, dtype=float))
    if clip:
        out = np.clip(out, 0.0, 1.0)
        out = out / out.sum()
    return out


def calibration_from_counts(counts, shots):
    """Confusion matrix from cluster counts; column ``j`` counts outcomes for prepared ``|j>``."""
    counts = np.asarray(counts)
    if counts.shape != (3, 3):
        raise ValueError(f"counts must be 3x3, got shape {counts.shape}")
    sums = counts.sum(axis=0)
    if np.any(sums != shots):
        raise ColumnSumMismatch(f"column sums {sums.tolist()} differ from shots = {shots}")
    return CalibrationMatrix(counts / float(shots))
