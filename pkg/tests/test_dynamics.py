import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from etcoord.dynamics import ParameterError, incremental_envelope, monotone_agent, saturated_linear_agent


def test_saturated_flow_clamps_the_input():
    m = saturated_linear_agent(1.0)
    v = np.array([[0.0], [0.5], [-0.2]])
    u = np.array([[3.0], [0.25], [-7.0]])
    assert m.flow(v, u).ravel().tolist() == [1.0, -0.25, -0.8]


def test_saturated_certificates():
    m = saturated_linear_agent()
    v = np.array([[2.0], [-1.0]])
    assert m.passivity.storage(v).tolist() == [2.0, 0.5]
    assert m.passivity.rho(v).tolist() == [4.0, 1.0]
    assert m.passivity.output_gain == 1.0
    assert m.incremental.rate == 1.0
    assert m.input_limit == 1.0


def test_monotone_agent_flow():
    m = monotone_agent(c=2.0)
    assert m.flow(np.array([[1.0]]), np.array([[0.5]]))[0, 0] == -2.0 - 1.0 + 0.5
    assert m.passivity.output_gain == 0.5
    lin = monotone_agent(c=2.0, nonlinearity="linear")
    assert lin.flow(np.array([[1.0]]), np.array([[0.0]]))[0, 0] == -2.0


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_invalid_parameters(bad):
    with pytest.raises(ParameterError):
        saturated_linear_agent(bad)
    with pytest.raises(ParameterError):
        monotone_agent(bad)
    with pytest.raises(ParameterError):
        monotone_agent(1.0, "quartic")


def test_envelope_at_zero_is_the_initial_gap():
    cert = saturated_linear_agent().incremental
    assert incremental_envelope(cert, 0.7, 0.0, 2.0) == pytest.approx(0.7, rel=1e-15)


def test_envelope_closed_form():
    cert = saturated_linear_agent().incremental
    t, dv0, B = 0.3, 0.2, 2.0
    expected = math.sqrt(math.exp(-t) * dv0 ** 2 + (1 - math.exp(-t)) * B ** 2)
    assert incremental_envelope(cert, dv0, t, B) == pytest.approx(expected, rel=1e-14)


def test_envelope_bounds_worst_case_velocity_gap():
    # two saturated agents driven apart by the largest admissible input gap
    cert = saturated_linear_agent().incremental
    B, dv0 = 2.0, 0.4
    ts = np.linspace(0, 3, 61)
    sol = solve_ivp(lambda t, e: [-e[0] + B], (0, 3), [dv0], t_eval=ts, rtol=1e-11, atol=1e-13)
    assert np.all(sol.y[0] <= incremental_envelope(cert, dv0, ts, B) + 1e-9)
