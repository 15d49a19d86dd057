import numpy as np
import pytest

from pulseforge.coherence import (
    CoherenceTarget,
    coherence_drives,
    coherence_rhs,
    coherence_target_allowed,
    design_coherence_pulses,
    purity_margin,
)
from pulseforge.core import DecoherenceRates, family_matrix, ground_state
from pulseforge.errors import DenominatorCollapse, InfeasibleTarget
from pulseforge.lindblad import PulseSchedule, evolve, lindblad_rhs
from pulseforge.population import population_rhs, sigmoid_df

from conftest import random_family


def master_equation_derivatives(p, w01, w12, r):
    """(f1', f2', h1', h2', h3') read off the full right-hand side."""
    d = lindblad_rhs(family_matrix(*p.T), w01, w12, r)
    return np.stack([d[:, 1, 1].real, d[:, 0, 0].real, d[:, 1, 0].imag, d[:, 2, 0].real,
                     d[:, 2, 1].imag], axis=-1)


def test_cross_derivation_identity(device_rates):
    rng = np.random.default_rng(2024)
    p = random_family(rng, 1000)
    w01, w12 = rng.uniform(-10, 10, size=(2, 1000))
    want = master_equation_derivatives(p, w01, w12, device_rates)
    dh1, df1, df2 = coherence_rhs(*p.T, w01, w12, device_rates)
    dh1p, dh2, dh3 = population_rhs(*p.T, w01, w12, device_rates)
    got = np.stack([df1, df2, dh1, dh2, dh3], axis=-1)
    assert np.max(np.abs(got - want)) <= 1e-9
    assert np.max(np.abs(dh1p - dh1)) <= 1e-12


def test_drive_formulas_impose_prescribed_slopes(device_rates):
    rng = np.random.default_rng(5)
    p = random_family(rng, 200)
    dh2, dh3 = rng.uniform(-1, 1, size=(2, 200))
    w01, w12, den = coherence_drives(*p.T, dh2, dh3, device_rates)
    ok = np.abs(den) > 1e-3
    d = master_equation_derivatives(p[ok], w01[ok], w12[ok], device_rates)
    assert np.max(np.abs(d[:, 3] - dh2[ok])) <= 1e-9
    assert np.max(np.abs(d[:, 4] - dh3[ok])) <= 1e-9


def test_target_constraints():
    assert coherence_target_allowed(0.2, 0.3)
    assert not coherence_target_allowed(0.5, 0.5)
    assert not coherence_target_allowed(0.6, 0.0)
    with pytest.raises(InfeasibleTarget) as exc:
        CoherenceTarget(0.5, 0.5, 3.0)
    assert exc.value.reason == "constraint"


def test_zero_target(device_rates):
    d = design_coherence_pulses(CoherenceTarget(0.0, 0.0, 3.0), device_rates)
    assert np.all(d.pulses.omega01 == 0) and np.all(d.pulses.omega12 == 0)
    assert np.all(evolve(ground_state(), d.pulses, device_rates).states == ground_state())


def test_reference_target_closed_loop(coh_design, coh_traj):
    h = coh_traj.coherences()
    assert abs(h[-1, 1] - 0.2) <= 1e-3
    assert abs(h[-1, 2] - 0.3) <= 1e-3
    assert np.max(np.abs(h[:, 1:] - coh_design.prescribed(coh_traj.times))) <= 1e-3


def test_h1_prediction(coh_design, coh_traj):
    assert np.max(np.abs(coh_traj.coherences()[:, 0] - coh_design.predicted_h1())) <= 1e-3


def test_predicted_populations(coh_design, coh_traj):
    f1, f2 = coh_design.aux[:, 0], coh_design.aux[:, 1]
    pops = coh_traj.populations()
    assert np.max(np.abs(pops[:, 1] - f1)) <= 1e-3
    assert np.max(np.abs(pops[:, 2] - f2)) <= 1e-3


def test_purity_bound_along_design(coh_design):
    h2, h3 = coh_design.prescribed(coh_design.pulses.t_grid).T
    f1, f2, h1 = coh_design.aux.T
    assert np.min(purity_margin(f1, f2, h1, h2, h3)) >= -1e-9


def test_design_consistent_with_master_equation(coh_design, device_rates):
    t = coh_design.pulses.t_grid
    sel = t >= 100 * coh_design.report.delta
    states = coh_design.family_states()[sel]
    d = lindblad_rhs(states, coh_design.pulses.omega01[sel], coh_design.pulses.omega12[sel],
                     device_rates)
    df = sigmoid_df(t[sel], 3.0)
    assert np.max(np.abs(d[:, 2, 0].real - 0.2 * df)) <= 1e-6
    assert np.max(np.abs(d[:, 2, 1].imag - 0.3 * df)) <= 1e-6


def test_family_closure(coh_traj):
    assert len(coh_traj.params(tol=1e-7)) == len(coh_traj)


@pytest.mark.parametrize("h2,h3", [(-0.2, 0.3), (0.2, -0.3), (-0.2, -0.3)])
def test_sign_symmetry(coh_design, device_rates, h2, h3):
    d = design_coherence_pulses(CoherenceTarget(h2, h3, 3.0), device_rates)
    s01 = np.sign(h3)
    s12 = np.sign(h2 * h3)
    assert np.array_equal(d.pulses.omega01, s01 * coh_design.pulses.omega01)
    assert np.array_equal(d.pulses.omega12, s12 * coh_design.pulses.omega12)
    assert d.report.closed_loop_error == pytest.approx(coh_design.report.closed_loop_error)


def test_collapse_is_reported(device_rates):
    with pytest.raises(DenominatorCollapse) as exc:
        design_coherence_pulses(CoherenceTarget(0.3, 0.0, 3.0), device_rates)
    assert exc.value.reason == "collapse"
    assert exc.value.category == "denominator_collapse"


def test_undriven_coherence_decay(device_rates):
    # decay factors follow from the master equation: exp(-t (gamma_k + Gamma_k) / 2)
    r = device_rates
    rho0 = family_matrix(0.3, 0.2, 0.0, 0.1, 0.2)
    traj = evolve(rho0, PulseSchedule.zero(1.2), r)
    h = traj.coherences()
    ratio3 = h[-1, 2] / h[0, 2]
    ratio2 = h[-1, 1] / h[0, 1]
    assert ratio3 == pytest.approx(np.exp(-1.2 / 6.0), abs=1e-9)
    assert ratio3 == pytest.approx(0.8, abs=0.03)
    assert ratio2 == pytest.approx(np.exp(-0.6 * (r.gamma2 + r.Gamma2)), abs=1e-9)
    assert ratio2 == pytest.approx(0.6495, abs=1e-4)


def test_driven_hold_over_last_stretch(coh_design, coh_traj):
    sel = coh_traj.times >= 1.8 - 1e-12
    h = coh_traj.coherences()[sel, 1:]
    assert np.max(np.abs(h - coh_design.prescribed(coh_traj.times[sel]))) <= 1e-3
    late = coh_traj.times >= 2.0 - 1e-12
    assert np.all(np.ptp(coh_traj.coherences()[late, 1:], axis=0) < 1e-3)


def test_manifest(coh_design):
    m = coh_design.manifest(1e-3)
    assert m["target"] == {"kind": "coherence", "h2_final": 0.2, "h3_final": 0.3, "t_f": 3.0}
    assert m["closed_loop_error"] <= 1e-3


def test_zero_rates_design(zero_rates):
    d = design_coherence_pulses(CoherenceTarget(0.2, 0.3, 3.0), zero_rates)
    assert d.report.closed_loop_error <= 1e-3
    assert isinstance(d.rates, DecoherenceRates)
