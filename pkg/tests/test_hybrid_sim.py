import math

import numpy as np
import pytest

import oracles
from etcoord.coupling import arctan_law, quadratic_law
from etcoord.dynamics import monotone_agent, saturated_linear_agent
from etcoord.graph import build_line_graph
from etcoord.hybrid_sim import (
    CertificateViolation,
    FlowPreconditionError,
    HybridState,
    JumpPreconditionError,
    Network,
    SimConfig,
    flow_step,
    initialize_rendezvous,
    jump,
    make_rng,
    simulate,
)
from etcoord.triggering import EdgeClockParams, UnsupportedSchemeError, ttc_mate


def rendezvous(scheme="etc", b=10.0, sat=1.0, topo=None, mode="periodic", eps=None):
    return Network(topo or build_line_graph(5), saturated_linear_agent(sat), arctan_law(),
                   EdgeClockParams(0.0, b, 1 / 16, eps), scheme, mode)


def run(net, seed=0, horizon=3.0, **kw):
    rng = make_rng(seed, 0)
    st = initialize_rendezvous(net, rng)
    return simulate(SimConfig(horizon=horizon, flow_step=1e-2, **kw), st, net, rng)


def test_rk4_flow_matches_closed_form_without_input():
    # zhat = 0 gives zero input; a self-triggered timer far away keeps it flowing
    net = rendezvous("stc")
    p0 = np.array([0.0, 1.0, -2.0, 0.5, 3.0])
    v0 = np.array([1.0, -0.5, 0.25, 0.0, 2.0])
    st = HybridState(0.0, p0.copy(), v0.copy(), np.zeros(4), "stc",
                     last_event=np.zeros(4), deadline=np.full(4, 10.0))
    for _ in range(100):
        st, hit = flow_step(st, 1e-2, net)
        assert hit is None
    p_ref, v_ref = oracles.saturated_agents_free_flow(p0, v0, 1.0)
    assert st.t == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(st.p, p_ref, atol=1e-11)
    assert np.allclose(st.v, v_ref, atol=1e-11)


def test_etc_flow_stops_on_the_clock_threshold():
    net = rendezvous("etc", b=1.0)
    p = np.zeros(5)
    st = HybridState(0.0, p, np.zeros(5), np.zeros(4), "etc", clock=np.array([1.0, 0.5, 1.0, 1.0]))
    hit = None
    while hit is None:
        st, hit = flow_step(st, 1e-3, net, 1e-12)
    # z stays at zero, so the clock follows the worst-case Riccati solution
    expected = ttc_mate(EdgeClockParams(0.0, 0.5, 1 / 16), 1 / math.pi)
    assert hit.tolist() == [1]
    assert st.t == pytest.approx(expected, abs=1e-10)
    assert st.clock[1] == 0.0


def test_jump_resets_the_lowest_index_edge_only():
    net = rendezvous("etc")
    p = np.array([0.0, 1.0, 3.0, 6.0, 10.0])
    st = HybridState(2.0, p, np.zeros(5), np.zeros(4), "etc", clock=np.array([5.0, 0.0, 3.0, 0.0]))
    new, ell = jump(st, net)
    assert ell == 1
    assert new.zhat.tolist() == [0.0, 2.0, 0.0, 0.0]
    assert new.clock.tolist() == [5.0, 10.0, 3.0, 0.0]
    assert new.t == st.t and np.array_equal(new.p, st.p)
    new, ell = jump(new, net)
    assert ell == 3 and new.zhat[3] == 4.0
    with pytest.raises(JumpPreconditionError):
        jump(new, net)


def test_flow_outside_the_flow_set_is_rejected():
    net = rendezvous("etc")
    st = HybridState(0.0, np.zeros(5), np.zeros(5), np.zeros(4), "etc", clock=np.full(4, 11.0))
    with pytest.raises(FlowPreconditionError):
        flow_step(st, 0.01, net)


def test_scheme_requirements():
    topo = build_line_graph(3)
    clocks = EdgeClockParams(0.0, 1.0, 0.1)
    with pytest.raises(UnsupportedSchemeError):
        Network(topo, saturated_linear_agent(), quadratic_law(), clocks, "stc")
    mixed = [saturated_linear_agent(), monotone_agent(), saturated_linear_agent()]
    with pytest.raises(UnsupportedSchemeError):
        Network(topo, mixed, arctan_law(), clocks, "stc")
    Network(topo, mixed, arctan_law(), clocks, "etc")
    with pytest.raises(ValueError):
        Network(topo, saturated_linear_agent(), arctan_law(), clocks, "xtc")


@pytest.mark.parametrize("b", [1.0, 10.0, 100.0])
def test_periodic_ttc_counts_follow_the_floor_formula(b):
    net = rendezvous("ttc", b=b)
    H = 4.0
    rng = make_rng(11, 0)
    st = initialize_rendezvous(net, rng)
    tau0 = -st.last_event
    tr = simulate(SimConfig(horizon=H, flow_step=1e-2), st, net, rng)
    expected = np.floor((H + tau0) / net.periods).astype(int)
    assert tr.events_per_edge().tolist() == expected.tolist()


def test_aperiodic_ttc_intervals_stay_in_the_window():
    net = rendezvous("ttc", b=10.0, mode="aperiodic", eps=0.1)
    tr = run(net, horizon=5.0)
    for ell in range(1, 5):
        gaps = np.diff(tr.event_t[tr.event_edge == ell])
        assert gaps.size > 0
        assert np.all(gaps >= 0.1 - 1e-12)
        assert np.all(gaps <= net.periods[0] + 1e-12)


@pytest.mark.parametrize("scheme", ["etc", "stc"])
def test_event_driven_gaps_exceed_the_mate(scheme):
    net = rendezvous(scheme, b=10.0)
    tr = run(net, horizon=5.0)
    T = ttc_mate(net.clocks[0], 1 / math.pi)
    for ell in range(1, 5):
        gaps = np.diff(tr.event_t[tr.event_edge == ell])
        assert np.all(gaps >= T - 1e-9)


def test_flipping_edge_orientation_leaves_the_motion_unchanged():
    topo = build_line_graph(5)
    a = run(rendezvous("etc", topo=topo), seed=4)
    b = run(rendezvous("etc", topo=topo.flipped()), seed=4)
    assert np.array_equal(a.event_edge, b.event_edge)
    assert np.allclose(a.event_t, b.event_t, atol=1e-9)
    assert np.allclose(a.p, b.p, atol=1e-9)
    assert np.allclose(a.zhat, -b.zhat, atol=1e-9)


def test_same_seed_gives_identical_trajectories():
    for scheme in ("etc", "ttc", "stc"):
        a, b = run(rendezvous(scheme), seed=9), run(rendezvous(scheme), seed=9)
        for name in ("t", "k", "p", "v", "zhat", "trigger", "event_t", "event_edge"):
            assert getattr(a, name).tobytes() == getattr(b, name).tobytes()


def test_rng_streams_differ_by_run_index():
    a = make_rng(5, 0).uniform(size=3)
    b = make_rng(5, 1).uniform(size=3)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, make_rng(5, 0).uniform(size=3))


def test_saturation_breach_is_a_certificate_violation():
    net = rendezvous("etc", sat=0.3)
    with pytest.raises(CertificateViolation):
        run(net)
    tr = run(net, strict=False)
    assert tr.sat_breaches > 0


def test_rendezvous_inputs_stay_inside_the_saturation():
    for scheme in ("etc", "ttc", "stc"):
        tr = run(rendezvous(scheme), horizon=2.0)
        assert tr.max_abs_input <= 1.0
        assert tr.sat_breaches == 0


def test_hybrid_time_domain_is_well_formed():
    tr = run(rendezvous("etc", b=1.0), horizon=2.0)
    dt, dk = np.diff(tr.t), np.diff(tr.k)
    assert np.all(dt >= 0) and np.all(dk >= 0)
    # jumps happen at a fixed time and count one at a time
    assert np.all(dt[dk > 0] == 0)
    assert np.all(dk <= 1)
    assert tr.event_k.tolist() == list(range(1, tr.event_count + 1))
    assert np.all(tr.trigger >= 0) and np.all(tr.trigger <= 1.0)
    # output samples fall on the 10 ms grid
    assert np.all(np.isin(np.round(np.arange(0, 2.0001, 0.01), 10), np.round(tr.t, 10)))
    assert tr.t[-1] == pytest.approx(2.0)


def test_initial_state_recipe():
    net = rendezvous("ttc", b=10.0)
    st = initialize_rendezvous(net, make_rng(3, 0))
    assert np.all((st.p >= 0) & (st.p <= 5)) and np.all(st.v == 0)
    assert np.array_equal(st.zhat, np.diff(st.p))
    assert np.all((st.trigger >= 0) & (st.trigger <= net.periods))
    st = initialize_rendezvous(rendezvous("etc", b=10.0), make_rng(3, 0))
    assert st.clock.tolist() == [10.0] * 4
