import math
from dataclasses import replace

import numpy as np
import pytest

from rpveh.harvester import max_power, optimal_impedance
from rpveh.interface import TABLE1, EmulatedLoad
from rpveh.loads import ParallelImpedance, VoltageGenerator, fixed_load_powers, phasor_nodal_oracle
from rpveh.transient import (
    AVG_WINDOW_PERIODS,
    AccelProfile,
    IntegrationError,
    SimConfig,
    SimConfigError,
    expected_power,
    matched_load,
    mechanical_time_constant,
    run_fixed_generator,
    settle_time,
    simulate_behavioral,
    simulate_switched,
)

F = 137.6


def steady(h, load, a=1.0, duration=0.6, cfg=SimConfig(record_decimation=1000)):
    return simulate_behavioral(h, load, AccelProfile.constant(a, duration, F), cfg)


# -- profiles -----------------------------------------------------------------


def test_profile_constructors():
    p = AccelProfile.step(0.0, 1.0, 0.02, 0.5, F)
    assert p.segments == ((0.02, 0.0), (0.48, 1.0))
    assert p.duration == pytest.approx(0.5)
    assert p.steps() == [(0.02, 0.0, 1.0)]
    assert p.amplitude_at(0.01) == 0.0 and p.amplitude_at(0.3) == 1.0
    sq = AccelProfile.periodic_square(0.75, 1.25, 1.0, 2.0, F)
    assert [a for _, a in sq.segments] == [0.75, 1.25, 0.75, 1.25]
    assert AccelProfile.constant(1.0, 0.1, F).steps() == []


@pytest.mark.parametrize(
    "make",
    [
        lambda: AccelProfile(F, ()),
        lambda: AccelProfile(F, ((0.0, 1.0),)),
        lambda: AccelProfile(F, ((0.1, -1.0),)),
        lambda: AccelProfile(0.0, ((0.1, 1.0),)),
        lambda: AccelProfile.step(0, 1, 0.6, 0.5, F),
    ],
)
def test_profile_rejects_invalid(make):
    with pytest.raises(SimConfigError):
        make()


@pytest.mark.parametrize(
    "kwargs",
    [{"dt": 0}, {"t_end": -1}, {"fidelity": "spice"}, {"record_decimation": 0}, {"conditioning": "x"}],
)
def test_sim_config_rejects_invalid(kwargs):
    with pytest.raises(SimConfigError):
        SimConfig(**kwargs)


# -- behavioral ---------------------------------------------------------------


def test_matched_load_reaches_max_power(h):
    res = steady(h, matched_load(h))
    assert res.avg_power() == pytest.approx(max_power(h, 1.0), rel=1e-2)
    assert res.avg_power() == pytest.approx(3.11e-3, rel=1e-2)


def test_matched_load_voltage_in_phase_with_acceleration(h):
    v, i = steady(h, matched_load(h)).phasors()
    assert abs(v) == pytest.approx(4.0, rel=1e-3)
    assert abs(math.atan2(v.imag, v.real)) < 1e-3


def test_zero_amplitude_stays_at_rest(h):
    res = steady(h, matched_load(h), a=0.0, duration=0.1)
    assert res.avg_power() == 0.0
    assert res.final_state.x == 0.0 and res.final_state.v_p == 0.0


def test_free_decay_to_rest(h):
    prof = AccelProfile.step(1.0, 0.0, 0.3, 1.5, F)
    res = simulate_behavioral(h, matched_load(h), prof, SimConfig(record_decimation=1000))
    assert abs(res.final_state.x_dot) < 1e-4 * np.max(np.abs(res.traces["x_dot"]))


def test_mismatched_resistance(h):
    z = optimal_impedance(h)
    res = steady(h, ParallelImpedance(2 * z.r_opt, z.x_opt))
    assert res.avg_power() / max_power(h, 1.0) == pytest.approx(0.8889, rel=1e-2)


@pytest.mark.parametrize(
    "load",
    [
        ParallelImpedance(1500.0, 4000.0),
        ParallelImpedance(4000.0, -20000.0),
        EmulatedLoad(3000.0, -300e-9, 2 * math.pi * F),
        VoltageGenerator(3.0, 0.4),
    ],
    ids=["inductive", "capacitive", "negative-c", "generator"],
)
def test_behavioral_matches_phasor_prediction(h, load):
    res = steady(h, load, a=0.8)
    assert res.avg_power() == pytest.approx(expected_power(h, load, 0.8), rel=1e-2)


def test_emulated_load_demodulates(h):
    load = EmulatedLoad(3000.0, -300e-9, 2 * math.pi * F)
    r, c = steady(h, load).emulated_load()
    assert r == pytest.approx(3000.0, rel=1e-3)
    assert c == pytest.approx(-300e-9, rel=1e-3)


def test_generator_current_matches_phasor(h):
    load = VoltageGenerator(3.0, 0.4)
    _, i = steady(h, load).phasors()
    _, _, i_ref = phasor_nodal_oracle(h, 1.0, load)
    assert abs(i - i_ref) < 1e-2 * abs(i_ref)


@pytest.mark.parametrize("a", [0.75, 1.0, 1.25])
def test_energy_balance(h, a):
    res = steady(h, matched_load(h), a=a)
    p_in = res.avg_power(kind="p_in")
    p_out = res.avg_power(kind="p_damp") + res.avg_power(kind="p_load")
    assert p_out == pytest.approx(p_in, rel=5e-3)


def test_halving_dt_changes_little(h):
    p1 = steady(h, matched_load(h), cfg=SimConfig(dt=2e-6, record_decimation=1000)).avg_power()
    p2 = steady(h, matched_load(h), cfg=SimConfig(dt=1e-6, record_decimation=1000)).avg_power()
    assert abs(p1 - p2) / p2 < 1e-3


def test_dt_snaps_to_whole_period(h):
    res = steady(h, matched_load(h), duration=0.1, cfg=SimConfig(dt=3e-6))
    spp = (1 / F) / res.dt
    assert spp == pytest.approx(round(spp), abs=1e-9)


def test_continuation_equals_single_run(h):
    prof = AccelProfile.step(0.5, 1.0, 0.1, 0.3, F)
    period = 1 / F
    n1 = 20
    full = simulate_behavioral(h, VoltageGenerator(3.0, 0.1), prof, SimConfig(t_end=2 * n1 * period))
    a = simulate_behavioral(h, VoltageGenerator(3.0, 0.1), prof, SimConfig(t_end=n1 * period))
    b = simulate_behavioral(
        h, VoltageGenerator(3.0, 0.1), prof, SimConfig(t_end=n1 * period), state=a.final_state, t0=a.final_state.t
    )
    assert b.final_state.x == pytest.approx(full.final_state.x, rel=1e-9)
    assert np.allclose(np.concatenate([a.period["p_load"], b.period["p_load"]]), full.period["p_load"], rtol=1e-9)


def test_negative_total_capacitance_rejected(h):
    with pytest.raises(SimConfigError, match="negative"):
        steady(h, EmulatedLoad(2570.0, -2 * h.c_p, h.omega), duration=0.01)


def test_non_finite_state_is_integration_error(h):
    prof = AccelProfile.constant(1e308, 0.01, F)
    with pytest.raises(IntegrationError):
        simulate_behavioral(h, matched_load(h), prof)


def test_q_override_changes_settle_not_power(h):
    prof = AccelProfile.step(0.0, 1.0, 0.02, 0.6, F)
    fast = simulate_behavioral(h, matched_load(h), prof, SimConfig(q_factor_override=10.0, record_decimation=1000))
    slow = simulate_behavioral(h, matched_load(h), prof, SimConfig(record_decimation=1000))
    assert fast.settle_time() < slow.settle_time()
    assert fast.avg_power() == pytest.approx(slow.avg_power(), rel=1e-2)


def test_avg_window_needs_whole_periods(h):
    res = steady(h, matched_load(h), duration=0.02)
    with pytest.raises(ValueError):
        res.avg_power(AVG_WINDOW_PERIODS)


# -- fixed generator ----------------------------------------------------------


def test_fixed_generator_segments(h):
    prof = AccelProfile(F, ((0.5, 1.0), (0.5, 2.0), (0.5, 0.5)))
    res = run_fixed_generator(h, 4.0, 0.0, prof, SimConfig(record_decimation=1000))
    p0 = max_power(h, 1.0)
    assert res.avg_power(end=0.5) == pytest.approx(p0, rel=1e-2)
    _, p_v0, _ = fixed_load_powers(h, 1.0, 2.0)
    assert res.avg_power(end=1.0) == pytest.approx(p_v0, rel=1e-2)
    assert res.avg_power(end=1.0) / max_power(h, 2.0) == pytest.approx(0.75, rel=1e-2)
    assert abs(res.avg_power(end=1.5)) < 1e-2 * p0


# -- settle time --------------------------------------------------------------


def test_settle_time_step(h):
    prof = AccelProfile.step(0.0, 1.0, 0.02, 0.6, F)
    res = simulate_behavioral(h, matched_load(h), prof, SimConfig(record_decimation=1000))
    assert 0.05 <= res.settle_time() <= 0.2
    assert settle_time(res, 0.05) == res.settle_time(0.05)


def test_settle_time_zero_height_step(h):
    prof = AccelProfile.step(1.0, 1.0, 0.4, 0.8, F)
    res = simulate_behavioral(h, matched_load(h), prof, SimConfig(record_decimation=1000))
    assert res.settle_time() == 0.0


def test_settle_time_absent_without_step(h):
    assert steady(h, matched_load(h), duration=0.1).settle_time() is None


def test_time_constant(h):
    assert mechanical_time_constant(h) == pytest.approx(2 * h.q_factor / h.omega)


# -- switched -----------------------------------------------------------------


@pytest.mark.parametrize("a, p_paper", [(0.75, 1.66e-3), (1.0, 2.98e-3), (1.25, 4.46e-3)])
def test_switched_power_band(switched_runs, a, p_paper):
    assert switched_runs[a].avg_power() == pytest.approx(p_paper, rel=0.10)


@pytest.mark.parametrize("a", [0.75, 1.0, 1.25])
def test_switched_ohmic_inductive(switched_runs, h, a):
    res = switched_runs[a]
    assert res.phase_lag() > 0
    v, _ = res.phasors()
    assert abs(v) == pytest.approx(h.delta * a / 2, rel=0.05)
    assert abs(math.degrees(math.atan2(v.imag, v.real))) < 10


def test_switched_current_tracks_reference(switched_runs, h):
    res = switched_runs[1.0]
    v, i = res.phasors()
    y_ref = 1 / 2564.8 + 1 / (1j * 2891.6)
    assert abs(i - y_ref * v) / abs(i) < 0.1
    assert res.stats["n_switch"] > 1000


def test_switched_error_signal_stays_in_band(switched_runs):
    for res in switched_runs.values():
        # overshoot past the thresholds is limited to what one dead time lets through
        assert res.stats["ve_excess_high"] < 0.05
        assert res.stats["ve_excess_low"] < 0.05


def test_switched_dead_time_shorter_than_dt(h):
    cp = replace(TABLE1, dead_time=0.1e-6)
    with pytest.raises(SimConfigError, match="dead time"):
        simulate_switched(h, cp, AccelProfile.constant(1.0, 0.01, F), SimConfig(dt=0.25e-6, fidelity="switched"))


def test_switched_warns_on_coarse_step(h):
    cfg = SimConfig(dt=2e-6, fidelity="switched")
    cp = replace(TABLE1, dead_time=2e-6)
    with pytest.warns(UserWarning, match="steps"):
        res = simulate_switched(h, cp, AccelProfile.constant(1.0, 0.05, F), cfg)
    assert res.warnings


def test_switched_exact_conditioning_runs(h):
    cfg = SimConfig(dt=0.25e-6, fidelity="switched", conditioning="exact", record_decimation=1000)
    res = simulate_switched(h, TABLE1, AccelProfile.constant(0.75, 0.3, F), cfg)
    assert res.avg_power() > 0
    assert res.phase_lag() > 0


def test_switched_step_settles(h):
    cfg = SimConfig(dt=0.25e-6, fidelity="switched", record_decimation=1000)
    res = simulate_switched(h, TABLE1, AccelProfile.step(0.0, 1.0, 0.02, 0.5, F), cfg)
    assert 0.05 <= res.settle_time() <= 0.2
