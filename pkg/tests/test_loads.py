import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpveh.harvester import HarvesterParams, max_power, open_circuit_voltage, optimal_impedance
from rpveh.loads import (
    OPEN_CIRCUIT_OHMS,
    Axis,
    GridSpec,
    ParallelImpedance,
    SingularNetworkError,
    VoltageGenerator,
    fixed_load_powers,
    grid_sweep,
    lambda_waste,
    normalized_power_generator,
    normalized_power_impedance,
    phasor_nodal_oracle,
    power_generator_load,
    power_impedance_load,
    psi_n,
    psi_z,
    ratio_sweep,
    solve_mna,
)

harvesters = st.builds(
    HarvesterParams,
    delta=st.floats(0.5, 50),
    rho=st.floats(0.1, 5),
    f_res=st.floats(10, 2000),
    c_p=st.floats(1e-9, 1e-5),
    q_factor=st.floats(2, 200),
)
ratios = st.floats(1e-1, 1e1)


# -- impedance load -----------------------------------------------------------


def test_power_at_optimal_impedance(h):
    p = power_impedance_load(h, 1.0, 2570.0, 2856.0)
    assert p == pytest.approx(3.11e-3, rel=2e-3)
    z = optimal_impedance(h)
    assert power_impedance_load(h, 1.0, z.r_opt, z.x_opt) == pytest.approx(max_power(h, 1.0), rel=1e-12)


def test_power_impedance_zero_amplitude(h):
    assert power_impedance_load(h, 0.0, 2570.0, 2856.0) == 0.0


def test_power_double_resistance(h):
    z = optimal_impedance(h)
    p = power_impedance_load(h, 1.0, 2 * z.r_opt, z.x_opt)
    assert p / max_power(h, 1.0) == pytest.approx(8 / 9, rel=1e-12)
    oracle = phasor_nodal_oracle(h, 1.0, ParallelImpedance(2 * z.r_opt, z.x_opt))[0]
    assert oracle == pytest.approx(p, rel=1e-9)


@pytest.mark.parametrize("r", [0.0, -10.0])
def test_power_impedance_rejects_nonpositive_resistance(h, r):
    with pytest.raises(ValueError):
        power_impedance_load(h, 1.0, r, 2856.0)


def test_power_impedance_rejects_zero_reactance(h):
    with pytest.raises(ValueError):
        power_impedance_load(h, 1.0, 2570.0, 0.0)


@given(harvesters, st.floats(0.01, 5), ratios, ratios)
def test_normalized_identity(h, a, rn, xn):
    z = optimal_impedance(h)
    p = power_impedance_load(h, a, rn * z.r_opt, xn * z.x_opt)
    assert p / max_power(h, a) == pytest.approx(normalized_power_impedance(h.rho, rn, xn), rel=1e-12)
    # the series resistance ratio is what the normalized psi tracks
    assert psi_z(h, rn * z.r_opt, xn * z.x_opt) == pytest.approx(psi_n(h.rho, rn, xn) * xn, rel=1e-12)


@given(harvesters, st.floats(0.01, 5), ratios, ratios)
def test_impedance_power_never_exceeds_max(h, a, rn, xn):
    z = optimal_impedance(h)
    assert power_impedance_load(h, a, rn * z.r_opt, xn * z.x_opt) <= max_power(h, a) * (1 + 1e-12)


@pytest.mark.parametrize(
    "rho, rn, xn, expected",
    [(0.4, 1, 1, 1.0), (2.5, 1, 1, 1.0), (0.9, 1, 1, 1.0), (0.9, 2, 1, 0.888889)],
)
def test_normalized_power_impedance_points(rho, rn, xn, expected):
    assert normalized_power_impedance(rho, rn, xn) == pytest.approx(expected, abs=5e-7)


def test_normalized_power_impedance_vectorizes():
    out = normalized_power_impedance(0.9, np.array([1.0, 2.0]), np.array([1.0, 1.0]))
    assert out.shape == (2,)
    with pytest.raises(ValueError):
        normalized_power_impedance(0.9, np.array([1.0, -1.0]), 1.0)


# -- generator load -----------------------------------------------------------


def test_generator_optimum(h):
    p, i = power_generator_load(h, 1.0, 4.0, 0.0)
    assert p == pytest.approx(3.11e-3, rel=2e-3)
    assert p == pytest.approx(max_power(h, 1.0), rel=1e-12)


def test_generator_at_source_voltage_extracts_nothing(h):
    p, _ = power_generator_load(h, 1.0, 8.0, 0.0)
    assert p == pytest.approx(0.0, abs=1e-18)


def test_generator_halved_amplitude_zero_series_current(h):
    # matched at 1 g, amplitude drops to 0.5 g: the generator cancels the source
    p, i = power_generator_load(h, 0.5, 4.0, 0.0)
    assert p == pytest.approx(0.0, abs=1e-18)
    # with no piezo current the load only supplies the C_p charging current
    assert abs(i - (-1j * h.omega * h.c_p * 4.0)) < 1e-12 * abs(i)
    _, _, i_oracle = phasor_nodal_oracle(h, 0.5, VoltageGenerator(4.0, 0.0))
    assert abs(i_oracle - i) < 1e-9 * abs(i)


def test_generator_reverse_flow_is_negative(h):
    p, _ = power_generator_load(h, 0.25, 4.0, 0.0)
    assert p < 0


def test_generator_quadrature_uses_expanded_form(h):
    p, _ = power_generator_load(h, 1.0, 3.0, math.pi / 2)
    scale = h.omega * h.c_p / h.rho
    assert p == pytest.approx(-0.5 * scale * 9.0, rel=1e-12)


@pytest.mark.parametrize("vn, phin, expected", [(1, 0, 1.0), (0.5, 0, 0.75), (2, 0, 0.0)])
def test_normalized_power_generator_points(vn, phin, expected):
    assert normalized_power_generator(vn, phin) == pytest.approx(expected, abs=1e-15)


def test_normalized_power_generator_quarter_turn():
    assert normalized_power_generator(1.0, math.pi / 2) == pytest.approx(-1.0, abs=1e-15)


@given(harvesters, st.floats(0.01, 5), st.floats(0, 2), st.floats(-1.5, 1.5))
def test_generator_normalized_identity(h, a, vn, phin):
    p, _ = power_generator_load(h, a, vn * h.delta * a / 2, phin)
    assert p / max_power(h, a) == pytest.approx(normalized_power_generator(vn, phin), rel=1e-9, abs=1e-12)


@given(st.floats(0, 2), st.floats(-1.5, 1.5))
def test_generator_normalized_at_most_one(vn, phin):
    assert normalized_power_generator(vn, phin) <= 1 + 1e-15


# -- lambda_waste -------------------------------------------------------------


@pytest.mark.parametrize("a0, a, expected", [(1, 2, 25.0), (1, 0.5, 100.0), (1, 1, 0.0)])
def test_lambda_waste_points(a0, a, expected):
    assert lambda_waste(a0, a) == pytest.approx(expected, abs=1e-12)


def test_lambda_waste_unclamped_below_half():
    assert lambda_waste(1, 0.25) > 100


@pytest.mark.parametrize("a0, a", [(1, 0), (0, 1)])
def test_lambda_waste_rejects_zero(a0, a):
    with pytest.raises(ValueError):
        lambda_waste(a0, a)


@given(st.floats(0.05, 20), st.floats(0.05, 20))
def test_lambda_waste_algebra(a0, a):
    z0, v0, _ = fixed_load_powers(HarvesterParams(8, 0.9, 137.6, 405e-9), a0, a)
    assert 1 - v0 / z0 == pytest.approx(lambda_waste(a0, a) / 100, rel=1e-12, abs=1e-12)


def test_fixed_load_powers(h):
    z, v, p0 = fixed_load_powers(h, 1.0, 1.0)
    assert z == pytest.approx(p0, rel=1e-15) and v == pytest.approx(p0, rel=1e-15)
    z, v, _ = fixed_load_powers(h, 1.0, 2.0)
    assert z == max_power(h, 2.0)
    assert v == pytest.approx(0.75 * z, rel=1e-15)
    _, v, _ = fixed_load_powers(h, 1.0, 0.5)
    assert v == 0.0


def test_fixed_generator_matches_closed_form(h):
    z, v, _ = fixed_load_powers(h, 1.0, 2.0)
    assert power_generator_load(h, 2.0, 4.0, 0.0)[0] == pytest.approx(v, rel=1e-12)


# -- oracle -------------------------------------------------------------------


def test_oracle_open_circuit(h):
    p, v, _ = phasor_nodal_oracle(h, 1.0, ParallelImpedance(OPEN_CIRCUIT_OHMS, OPEN_CIRCUIT_OHMS))
    assert p < 1e-8 * max_power(h, 1.0)
    assert abs(v - open_circuit_voltage(h, 1.0)) < 1e-6


def test_oracle_generator_optimum(h):
    p, v, i = phasor_nodal_oracle(h, 1.0, VoltageGenerator(4.0, 0.0))
    assert p == pytest.approx(max_power(h, 1.0), rel=1e-9)
    assert v == 4.0


@settings(max_examples=200)
@given(harvesters, st.floats(0.01, 5), ratios, ratios, st.booleans())
def test_closed_forms_match_oracle(h, a, rn, xn, inductive):
    z = optimal_impedance(h)
    x = xn * z.x_opt * (1 if inductive else -1)
    load = ParallelImpedance(rn * z.r_opt, x)
    assert phasor_nodal_oracle(h, a, load)[0] == pytest.approx(power_impedance_load(h, a, load.r_load, x), rel=1e-9)


@settings(max_examples=200)
@given(harvesters, st.floats(0.01, 5), st.floats(0, 2.5), st.floats(-math.pi, math.pi))
def test_generator_matches_oracle(h, a, vn, phi):
    v = vn * h.delta * a / 2
    p, i = power_generator_load(h, a, v, phi)
    po, _, io = phasor_nodal_oracle(h, a, VoltageGenerator(v, phi))
    scale = max_power(h, a)
    assert abs(po - p) <= 1e-9 * scale
    assert abs(io - i) <= 1e-9 * abs(open_circuit_voltage(h, a) / (h.rho / (h.omega * h.c_p)))


def test_singular_network_reported():
    with pytest.raises(SingularNetworkError):
        solve_mna(np.array([[1.0, 1.0], [1.0, 1.0]], dtype=complex), np.zeros(2, dtype=complex))


def test_load_validation():
    with pytest.raises(ValueError):
        ParallelImpedance(0.0, 1.0)
    with pytest.raises(ValueError):
        ParallelImpedance(1.0, 0.0)
    with pytest.raises(ValueError):
        VoltageGenerator(-1.0)


# -- grids --------------------------------------------------------------------


@pytest.mark.parametrize("rho", [0.4, 0.9, 2.5])
def test_impedance_grid_peak(rho):
    ds = grid_sweep(GridSpec.impedance(rho))
    rn, xn, value = ds.argmax()
    assert (rn, xn) == (pytest.approx(1.0, rel=1e-12), pytest.approx(1.0, rel=1e-12))
    assert value == pytest.approx(1.0, abs=1e-6)
    assert np.sum(ds.values >= value - 1e-12) == 1
    assert ds.meta == {"kind": "impedance", "rho": rho}


def test_generator_grid_peak():
    ds = grid_sweep(GridSpec.generator())
    vn, phin, value = ds.argmax()
    assert vn == pytest.approx(1.0) and phin == pytest.approx(0.0, abs=1e-12)
    assert value == pytest.approx(1.0, abs=1e-6)
    assert np.sum(ds.values >= value - 1e-12) == 1


def test_grid_rows_row_major():
    ds = grid_sweep(GridSpec("generator", Axis("v_n", 0, 1, 2), Axis("phi_n", 0, 1, 3)))
    rows = list(ds.rows())
    assert [r[:2] for r in rows[:3]] == [(0.0, 0.0), (0.0, 0.5), (0.0, 1.0)]
    assert len(rows) == 6


@pytest.mark.parametrize(
    "args",
    [("a", 0, 1, 1), ("a", 1, 1, 5), ("a", 2, 1, 5), ("a", 0, 1, 5, "log"), ("a", 0, 1, 5, "cubic")],
)
def test_axis_rejects_degenerate(args):
    with pytest.raises(ValueError):
        Axis(*args)


def test_ratio_sweep():
    s = ratio_sweep(0.5, 3.0, 251)
    assert s.ratio[0] == 0.5 and s.ratio[-1] == 3.0
    k2 = int(np.argmin(abs(s.ratio - 2.0)))
    assert s.lambda_waste[k2] == pytest.approx(25.0, abs=1e-9)
    assert s.p_load_v0[k2] == pytest.approx(0.75 * s.p_max[k2], rel=1e-12)
    assert s.lambda_waste[0] == pytest.approx(100.0, abs=1e-12)
    assert np.allclose(s.p_load_z0, s.p_max)
    assert len(list(s.rows())[0]) == 5
