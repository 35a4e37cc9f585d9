"""Acceptance checks on the five-agent rendez-vous experiment.

Each test prints one line ``ACCEPTANCE <n> PASS|FAIL: ...`` and then asserts
at the stated tolerance. The Monte Carlo campaigns run once per module.
"""
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import oracles
from etcoord.analysis import lyapunov_monitor, min_interevent_times, t5_percent
from etcoord.cli import execute, resolve_config
from etcoord.triggering import EdgeClockParams, replay_etc_interval, stc_interval, ttc_mate

RUNS = 100
BS = (1.0, 10.0, 100.0)
K = 1 / math.pi
EVENTS = {
    "etc": (1313.8, 291.29, 219.84),
    "stc": (1313.7, 292.58, 224.35),
    "ttc": (1322.1, 321.49, 264.60),
}
T5 = {
    "etc": (11.782, 13.1884, 15.4087),
    "stc": (11.924, 12.8762, 13.6525),
    "ttc": (13.0180, 11.7173, 12.3144),
}
REPLAY_TRACES = 50


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def _campaign(schemes, keep_traces=False):
    base = resolve_config("rendezvous")
    cells, traces = {}, []
    start = time.perf_counter()
    for scheme in schemes:
        for b in BS:
            sc = base.with_overrides(scheme=scheme, b=b)
            rows = []
            for r in range(RUNS):
                tr = execute(sc, r)
                row = {
                    "events": tr.event_count,
                    "t5": t5_percent(tr),
                    "max_u": tr.max_abs_input,
                    "breaches": tr.sat_breaches,
                }
                if scheme == "etc":
                    rep = lyapunov_monitor(tr, kappa=sc.kappa)
                    row.update(jump_up=rep.jump_increases, flow_up=rep.flow_violations,
                               max_flow=rep.max_flow_increase, min_gap=min_interevent_times(tr).min())
                    if keep_traces and b == 10.0 and r < REPLAY_TRACES:
                        traces.append(tr)
                rows.append(row)
            cells[(scheme, b)] = rows
    return cells, traces, time.perf_counter() - start


@pytest.fixture(scope="module")
def ttc_campaign():
    return _campaign(["ttc"])


@pytest.fixture(scope="module")
def event_campaign():
    return _campaign(["etc", "stc"], keep_traces=True)


def _mean_events(rows):
    return float(np.mean([r["events"] for r in rows]))


def test_1_ttc_event_counts(capsys, ttc_campaign):
    cells, _, elapsed = ttc_campaign
    parts, ok = [], elapsed < 60
    for b, ref in zip(BS, EVENTS["ttc"]):
        got = _mean_events(cells[("ttc", b)])
        dev = got / ref - 1
        ok &= abs(dev) <= 0.01
        parts.append(f"b={b:g} {got:.2f} vs {ref} ({dev:+.2%})")
    report(capsys, 1, ok, "TTC mean events " + "; ".join(parts) + f"; runtime {elapsed:.1f} s (< 60 s)")


def test_2_etc_stc_event_counts(capsys, event_campaign):
    cells, _, elapsed = event_campaign
    parts, ok = [], elapsed < 300
    for scheme in ("etc", "stc"):
        for b, ref in zip(BS, EVENTS[scheme]):
            got = _mean_events(cells[(scheme, b)])
            dev = got / ref - 1
            ok &= abs(dev) <= 0.10
            parts.append(f"{scheme.upper()} b={b:g} {got:.2f} vs {ref} ({dev:+.1%})")
    report(capsys, 2, ok, "; ".join(parts) + f"; runtime {elapsed:.1f} s (< 300 s)")


def test_3_t5_means(capsys, ttc_campaign, event_campaign):
    cells = {**ttc_campaign[0], **event_campaign[0]}
    parts, ok = [], True
    for scheme in ("etc", "stc", "ttc"):
        for b, ref in zip(BS, T5[scheme]):
            t5 = [r["t5"] for r in cells[(scheme, b)] if r["t5"] is not None]
            got = float(np.mean(t5))
            dev = got / ref - 1
            ok &= abs(dev) <= 0.15
            parts.append(f"{scheme.upper()} b={b:g} {got:.3f} vs {ref} ({dev:+.1%}, reached {len(t5)}/{RUNS})")
    report(capsys, 3, ok, "mean t_5% " + "; ".join(parts))


def test_4_mate_oracle(capsys):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        sigma, k, a = rng.uniform(0.01, 1.0), rng.uniform(0.05, 3.0), rng.uniform(0.0, 5.0)
        b = a + rng.uniform(0.1, 100.0)
        worst = max(worst, abs(ttc_mate(EdgeClockParams(a, b, sigma), k) - oracles.mate(sigma, k, a, b)))
    elapsed = time.perf_counter() - start
    report(capsys, 4, worst <= 1e-8 and elapsed < 1.0,
           f"max |closed form - ODE| = {worst:.2e} (<= 1e-8) over 100 grid points in {elapsed:.2f} s (< 1 s)")


def test_5_lyapunov(capsys, event_campaign):
    rows = [r for b in BS for r in event_campaign[0][("etc", b)]]
    jumps = sum(r["jump_up"] for r in rows)
    flows = sum(r["flow_up"] for r in rows)
    worst = max(r["max_flow"] for r in rows)
    report(capsys, 5, jumps == 0 and flows == 0,
           f"{len(rows)} ETC runs: {jumps} jump increases, {flows} flow increases beyond 1e-6(1+U); "
           f"largest flow change of U {worst:.2e}")


def test_6_dwell_time(capsys, event_campaign):
    margins = []
    for b in BS:
        T = ttc_mate(EdgeClockParams(0.0, b, 1 / 16), K)
        margins += [r["min_gap"] - T for r in event_campaign[0][("etc", b)]]
    worst = min(margins)
    report(capsys, 6, worst >= -1e-9,
           f"min over ETC runs and edges of (inter-event time - MATE) = {worst:.3e} (>= -1e-9)")


def _replay_case(tr, r):
    net = tr.network
    ell = r % net.edge_count
    clock = net.clocks[ell]
    times = tr.event_t[tr.event_edge == ell + 1]
    t0 = times[2]
    i0 = int(np.flatnonzero((tr.t == t0) & (tr.k == tr.event_k[(tr.event_edge == ell + 1)][2]))[0])
    st = tr.state_at(i0)
    z_edge = tr.z[i0, ell:ell + 1]
    dv = net.edge_velocity(st.v, ell)
    stc = stc_interval(z_edge, dv, clock, net.models[0].incremental, net.law,
                       (int(net.degrees[net.tails[ell]]), int(net.degrees[net.heads[ell]])))
    window = (tr.t >= t0) & (tr.t <= t0 + clock.linear_clock_time + 0.05)
    t_win, idx = np.unique(tr.t[window], return_index=True)
    z_win = tr.z[window][idx, ell]
    etc = replay_etc_interval(t_win, z_win, clock, net.law)
    return etc, stc, ttc_mate(clock, K)


def test_7_trigger_ordering(capsys, event_campaign):
    traces = event_campaign[1]
    worst_etc_stc, worst_stc_ttc = math.inf, math.inf
    for r, tr in enumerate(traces):
        etc, stc, ttc = _replay_case(tr, r)
        worst_etc_stc = min(worst_etc_stc, etc - stc)
        worst_stc_ttc = min(worst_stc_ttc, stc - ttc)
    ok = len(traces) == REPLAY_TRACES and worst_etc_stc >= -1e-9 and worst_stc_ttc >= -1e-9
    report(capsys, 7, ok, f"{len(traces)} traces: min(ETC replay - STC) = {worst_etc_stc:.3e}, "
                          f"min(STC - MATE) = {worst_stc_ttc:.3e} (both >= -1e-9)")


def test_8_saturation(capsys, ttc_campaign, event_campaign):
    rows = [r for cells in (ttc_campaign[0], event_campaign[0]) for v in cells.values() for r in v]
    worst = max(r["max_u"] for r in rows)
    breaches = sum(r["breaches"] for r in rows)
    report(capsys, 8, worst <= 1.0 and breaches == 0,
           f"{len(rows)} runs: max |u_hat_i| = {worst:.4f} (<= 1), {breaches} breaches")


def test_9_property_suites(capsys):
    here = Path(__file__).parent
    suites = ["test_properties.py", "test_coupling.py", "test_dynamics.py", "test_hybrid_sim.py"]
    start = time.perf_counter()
    res = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                          *[str(here / s) for s in suites]], capture_output=True, text=True, cwd=here.parent)
    elapsed = time.perf_counter() - start
    tail = res.stdout.strip().splitlines()[-1] if res.stdout.strip() else res.stderr[-200:]
    report(capsys, 9, res.returncode == 0 and elapsed < 120,
           f"property suites: {tail}; runtime {elapsed:.1f} s (< 120 s)")
