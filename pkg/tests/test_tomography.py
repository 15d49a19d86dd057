import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from pulseforge.core import DensityParams, ground_state, level_index, params_to_matrix
from pulseforge.errors import ColumnSumMismatch, SingularMatrix
from pulseforge.tomography import (
    CalibrationMatrix,
    DiagonalReads,
    calibrate,
    calibration_from_counts,
    reconstruct_coherences,
    tomo_rotations,
    tomography_unitaries,
)

from conftest import random_family

S2 = np.sqrt(2.0)
DEVICE_F = np.array([[0.974, 0.102, 0.041], [0.017, 0.885, 0.141], [0.009, 0.013, 0.818]])


def printed_reads(f1, f2, h1, h2, h3):
    """Closed-form diagonal reads (P0, P1, P2) after each setting."""
    return np.array([
        [1 - f1 - f2, f1, f2],
        [(1 - f2 - 2 * h3) / 2, (1 - f2) / 2 + h3, f2],
        [1 - f1 - f2, (f1 + f2 - 2 * h1) / 2, (f1 + f2) / 2 + h1],
        [(1 - f2 - 2 * h3) / 2, (f2 - 2 * S2 * h1 + 2 * S2 * h2 + 2 * h3 + 1) / 4,
         (f2 + 2 * S2 * h1 - 2 * S2 * h2 + 2 * h3 + 1) / 4],
    ])


def test_unitarity():
    for u in tomography_unitaries():
        assert np.max(np.abs(u @ u.conj().T - np.eye(3))) <= 1e-14


def test_rotation_convention_matches_exponential():
    def gen(a, b):
        g = np.zeros((3, 3))
        g[level_index(a), level_index(b)] = g[level_index(b), level_index(a)] = 1.0
        return scipy.linalg.expm(-1j * np.pi / 4 * g)

    _, u2, u3, u4 = tomography_unitaries()
    assert np.max(np.abs(u2 - gen(0, 1))) <= 1e-15
    assert np.max(np.abs(u3 - gen(1, 2))) <= 1e-15
    assert np.max(np.abs(u4 - gen(1, 2) @ gen(0, 1))) <= 1e-15


def test_diagonal_state_reads():
    reads = tomo_rotations(params_to_matrix((0.3, 0.2, 0, 0, 0)))
    assert reads.read(2, 1) == pytest.approx((1 - 0.2) / 2, abs=1e-15)
    assert reads.read(3, 2) == pytest.approx((0.3 + 0.2) / 2, abs=1e-15)
    assert reconstruct_coherences(reads) == pytest.approx((0, 0, 0), abs=1e-15)


def test_ground_state_reads():
    reads = tomo_rotations(ground_state())
    assert reads.values[0] == pytest.approx([1, 0, 0], abs=1e-15)
    assert reads.read(2, 1) == pytest.approx(0.5, abs=1e-15)


def test_reads_match_printed_expressions():
    p = (0.3, 0.2, 0.05, 0.1, 0.15)
    got = tomo_rotations(params_to_matrix(p)).values
    assert np.max(np.abs(got - printed_reads(*p))) <= 1e-15


def test_reads_match_printed_expressions_randomly():
    rng = np.random.default_rng(11)
    for p in random_family(rng, 200):
        got = tomo_rotations(params_to_matrix(p)).values
        assert np.max(np.abs(got - printed_reads(*p))) <= 1e-14


def test_reference_reconstruction():
    h = reconstruct_coherences(tomo_rotations(params_to_matrix((0.3, 0.2, 0.05, 0.1, 0.15))))
    assert h == pytest.approx((0.05, 0.1, 0.15), abs=1e-12)


def test_round_trip_1000_states():
    rng = np.random.default_rng(12)
    worst = 0.0
    for p in random_family(rng, 1000):
        h = reconstruct_coherences(tomo_rotations(params_to_matrix(p)))
        worst = max(worst, np.max(np.abs(np.array(h) - p[2:])))
    assert worst <= 1e-12


@given(st.floats(0, 0.5), st.floats(0, 0.5), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3),
       st.floats(-0.3, 0.3))
def test_round_trip_property(f1, f2, h1, h2, h3):
    p = DensityParams(f1, f2, h1, h2, h3)
    reads = tomo_rotations(params_to_matrix(p))
    assert reads.normalisation_error() <= 1e-9
    assert reconstruct_coherences(reads) == pytest.approx((h1, h2, h3), abs=1e-12)


def test_reads_shape_checked():
    with pytest.raises(ValueError):
        DiagonalReads(np.zeros((3, 3)))


def test_identity_calibration():
    m = np.array([0.2, 0.3, 0.5])
    assert np.array_equal(calibrate(m, CalibrationMatrix.identity()), m)


def test_device_calibration_values():
    assert np.array_equal(CalibrationMatrix.device().F, DEVICE_F)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_calibration_inverts_columns(k):
    F = CalibrationMatrix.device()
    e = np.eye(3)[k]
    assert np.max(np.abs(calibrate(F.apply(e), F) - e)) <= 1e-12
    assert np.max(np.abs(calibrate(DEVICE_F[:, k], DEVICE_F) - e)) <= 1e-12


def test_device_example_measured_excited():
    got = calibrate([0.102, 0.885, 0.013], CalibrationMatrix.device())
    assert got == pytest.approx([0, 1, 0], abs=1e-12)


@given(st.floats(0, 1), st.floats(0, 1))
def test_calibration_round_trip_on_simplex(a, b):
    p = np.array([a, (1 - a) * b, (1 - a) * (1 - b)])
    F = CalibrationMatrix.device()
    assert np.max(np.abs(calibrate(F.apply(p), F) - p)) <= 1e-12


def test_clipping_renormalises():
    out = calibrate([0.99, 0.01, 0.0], CalibrationMatrix.device(), clip=True)
    assert np.all(out >= 0) and out.sum() == pytest.approx(1.0)
    raw = calibrate([0.99, 0.01, 0.0], CalibrationMatrix.device())
    assert raw.min() < 0


def test_singular_matrix():
    F = np.array([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(SingularMatrix):
        calibrate([0.3, 0.3, 0.4], F)


def test_calibration_matrix_validation():
    with pytest.raises(ValueError):
        CalibrationMatrix(np.full((3, 3), 0.5))
    with pytest.raises(ValueError):
        CalibrationMatrix(np.eye(2))


def test_counts_identity():
    assert np.array_equal(calibration_from_counts(3000 * np.eye(3, dtype=int), 3000).F, np.eye(3))


def test_counts_column_mismatch():
    counts = 3000 * np.eye(3, dtype=int)
    counts[0, 1] = 5
    with pytest.raises(ColumnSumMismatch):
        calibration_from_counts(counts, 3000)


def test_counts_reproduce_device_matrix():
    counts = np.rint(DEVICE_F * 3000).astype(int)
    F = calibration_from_counts(counts, 3000)
    assert np.max(np.abs(F.F - DEVICE_F)) <= 1 / 3000


def test_calibration_file_round_trip(tmp_path):
    path = tmp_path / "F.txt"
    CalibrationMatrix.device().save(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("#")
    assert len([ln for ln in lines if not ln.startswith("#")]) == 3
    assert np.array_equal(CalibrationMatrix.load(path).F, DEVICE_F)
