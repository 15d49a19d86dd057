import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from pulseforge import _csv
from pulseforge.core import DecoherenceRates, basis_state, ground_state, populations
from pulseforge.errors import UnphysicalState
from pulseforge.lindblad import (
    TRAJECTORY_HEADER,
    PulseSchedule,
    evolve,
    evolve_many,
    lindblad_rhs,
    step_doubling_error,
)


def label_liouvillian(w01, w12, r):
    """Column-stacked Liouvillian in the label basis (|0>, |1>, |2>); independent oracle."""
    def op(a, b):
        m = np.zeros((3, 3))
        m[a, b] = 1.0
        return m

    H = w01 * (op(0, 1) + op(1, 0)) + w12 * (op(1, 2) + op(2, 1))
    Ls = [np.sqrt(r.gamma1) * op(1, 1), np.sqrt(r.gamma2) * op(2, 2),
          np.sqrt(r.Gamma1) * op(0, 1), np.sqrt(r.Gamma2) * op(1, 2)]
    eye = np.eye(3)
    out = -1j * (np.kron(eye, H) - np.kron(H.T, eye))
    for L in Ls:
        LdL = L.conj().T @ L
        out += np.kron(L.conj(), L) - 0.5 * np.kron(eye, LdL) - 0.5 * np.kron(LdL.T, eye)
    return out


def to_label(m):
    return m[::-1, ::-1]


def random_density(rng):
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    m = a @ a.conj().T
    return m / np.trace(m)


def test_ground_state_is_dark(device_rates):
    assert np.array_equal(lindblad_rhs(ground_state(), 0.0, 0.0, device_rates), np.zeros((3, 3)))


def test_relaxation_of_one(device_rates):
    d = lindblad_rhs(basis_state(1), 0.0, 0.0, device_rates)
    dP = populations(d)
    assert dP == pytest.approx([device_rates.Gamma1, -device_rates.Gamma1, 0.0], abs=1e-15)
    assert np.max(np.abs(d - np.diag(np.diag(d)))) == 0.0


def test_relaxation_cascade_from_two(device_rates):
    dP = populations(lindblad_rhs(basis_state(2), 0.0, 0.0, device_rates))
    assert dP == pytest.approx([0.0, device_rates.Gamma2, -device_rates.Gamma2], abs=1e-15)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.floats(-20, 20), st.floats(-20, 20))
def test_rhs_is_hermitian_and_traceless(seed, w01, w12):
    rng = np.random.default_rng(seed)
    d = lindblad_rhs(random_density(rng), w01, w12, DecoherenceRates.device())
    assert abs(np.trace(d)) <= 1e-12
    assert np.max(np.abs(d - d.conj().T)) <= 1e-12


def test_rhs_matches_kron_oracle(device_rates):
    rng = np.random.default_rng(7)
    for _ in range(20):
        m = random_density(rng)
        w01, w12 = rng.uniform(-5, 5, size=2)
        want = (label_liouvillian(w01, w12, device_rates) @ to_label(m).reshape(-1, order="F"))
        got = to_label(lindblad_rhs(m, w01, w12, device_rates)).reshape(-1, order="F")
        assert np.max(np.abs(got - want)) <= 1e-13


def test_constant_drive_matches_matrix_exponential(device_rates):
    pulses = PulseSchedule.constant(1.3, -0.7, 2.0)
    rho0 = basis_state(0)
    traj = evolve(rho0, pulses, device_rates)
    prop = scipy.linalg.expm(2.0 * label_liouvillian(1.3, -0.7, device_rates))
    want = (prop @ to_label(rho0).reshape(-1, order="F")).reshape(3, 3, order="F")
    assert np.max(np.abs(to_label(traj.final) - want)) <= 1e-11


def test_free_decay_reaches_one_over_e():
    r = DecoherenceRates(Gamma1=1 / 9.5)
    traj = evolve(basis_state(1), PulseSchedule.zero(9.5), r, sample_every=100)
    assert traj.populations()[-1, 1] == pytest.approx(np.exp(-1.0), abs=1e-6)


def test_rabi_pi_pulse():
    pulses = PulseSchedule.constant(np.pi / 4, 0.0, 2.0)
    traj = evolve(ground_state(), pulses, DecoherenceRates())
    assert traj.populations()[-1, 1] == pytest.approx(1.0, abs=1e-6)


def test_undriven_ground_state_is_constant(device_rates):
    traj = evolve(ground_state(), PulseSchedule.zero(1.0), device_rates)
    assert np.all(traj.states == ground_state())


def test_physical_invariants_on_designed_run(pop_traj):
    assert np.max(pop_traj.trace_deviation()) <= 1e-9
    assert np.max(pop_traj.hermiticity_deviation()) <= 1e-10
    assert np.min(pop_traj.min_eigenvalues()) >= -1e-7


def test_family_closure(pop_traj):
    params = pop_traj.params(tol=1e-7)
    assert len(params) == len(pop_traj)


def test_rk4_order(pop_design, device_rates):
    def final(dt):
        return evolve(ground_state(), pop_design.pulses, device_rates, dt=dt,
                      sample_every=10**9, check=False).final

    ref = final(1e-3 / 8)
    e1 = np.max(np.abs(final(1e-3) - ref))
    e2 = np.max(np.abs(final(5e-4) - ref))
    assert 12 <= e1 / e2 <= 20


def test_step_doubling_error_is_small(pop_design, device_rates):
    assert step_doubling_error(ground_state(), pop_design.pulses, device_rates) < 1e-10


def test_linearity(device_rates):
    rng = np.random.default_rng(3)
    t = np.linspace(0, 1, 1001)
    pulses = PulseSchedule(t, 2 * np.sin(3 * t), np.cos(5 * t))
    a, b = random_density(rng), random_density(rng)
    lam = 0.37
    ta = evolve(a, pulses, device_rates)
    tb = evolve(b, pulses, device_rates)
    tab = evolve(lam * a + (1 - lam) * b, pulses, device_rates)
    assert np.max(np.abs(tab.states - (lam * ta.states + (1 - lam) * tb.states))) <= 1e-8


def test_batch_matches_single(device_rates):
    t = np.linspace(0, 0.5, 501)
    w = np.stack([np.sin(t), 2 * np.cos(t)])
    rho0 = np.stack([ground_state(), basis_state(2)])
    times, states = evolve_many(rho0, t, w, w[::-1], device_rates)
    for k in range(2):
        single = evolve(rho0[k], PulseSchedule(t, w[k], w[::-1][k]), device_rates)
        assert np.array_equal(times, single.times)
        assert np.max(np.abs(states[k] - single.states)) <= 1e-14


def test_sampling_keeps_final_time(device_rates):
    traj = evolve(ground_state(), PulseSchedule.constant(1.0, 0.0, 1.0), device_rates,
                  sample_every=300)
    assert traj.times.tolist() == pytest.approx([0.0, 0.3, 0.6, 0.9, 1.0])


def test_unstable_step_raises():
    pulses = PulseSchedule.constant(100.0, 100.0, 1.0, dt=0.05)
    with pytest.raises(UnphysicalState):
        evolve(ground_state(), pulses, DecoherenceRates.device())


@pytest.mark.parametrize("kwargs", [
    dict(t_grid=[0, 1, 2], omega01=[0, 0], omega12=[0, 0, 0]),
    dict(t_grid=[0, 1, 3], omega01=[0, 0, 0], omega12=[0, 0, 0]),
    dict(t_grid=[1, 2, 3], omega01=[0, 0, 0], omega12=[0, 0, 0]),
    dict(t_grid=[0, 1, 2], omega01=[0, np.nan, 0], omega12=[0, 0, 0]),
])
def test_pulse_schedule_validation(kwargs):
    with pytest.raises(ValueError):
        PulseSchedule(**kwargs)


def test_pulse_csv_round_trip_is_exact(tmp_path, pop_design):
    path = tmp_path / "p.csv"
    pop_design.pulses.to_csv(path)
    back = PulseSchedule.from_csv(path)
    assert np.array_equal(back.t_grid, pop_design.pulses.t_grid)
    assert np.array_equal(back.omega01, pop_design.pulses.omega01)
    assert np.array_equal(back.omega12, pop_design.pulses.omega12)
    assert b"\r\n" not in path.read_bytes()


def test_trajectory_csv(tmp_path, device_rates):
    traj = evolve(basis_state(1), PulseSchedule.constant(0.5, 0.2, 0.1), device_rates)
    path = tmp_path / "t.csv"
    traj.to_csv(path)
    header, rows = _csv.read(path)
    assert header == TRAJECTORY_HEADER
    assert len(rows) == len(traj)
    for cell in rows[-1]:
        mantissa = cell.lower().split("e")[0].lstrip("-").replace(".", "").lstrip("0")
        assert len(mantissa) <= 12
    assert float(rows[-1][2]) == pytest.approx(traj.populations()[-1, 1], rel=1e-11)
