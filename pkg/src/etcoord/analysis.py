"""Lyapunov monitoring, convergence and dwell-time metrics, campaign aggregation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .hybrid_sim import HybridState, HybridTrajectory, Network


class MetricError(ValueError):
    """A metric is undefined for the given input."""


@dataclass(frozen=True)
class LyapunovSample:
    t: float
    k: int
    u_phys: float
    u_cyber: float

    @property
    def u_total(self) -> float:
        return self.u_phys + self.u_cyber


@dataclass
class LyapunovReport:
    samples: list[LyapunovSample]
    # "certified" for ETC clocks, "surrogate" when phi = b stands in for timers
    mode: str
    jump_increases: int
    flow_violations: int
    max_jump_increase: float
    max_flow_increase: float
    # max over flow intervals of dU/dt + (1 - kappa) * mean sum rho; nan without kappa
    max_rate_excess: float = float("nan")

    @property
    def ok(self) -> bool:
        return self.jump_increases == 0 and self.flow_violations == 0

    def totals(self) -> np.ndarray:
        return np.array([s.u_total for s in self.samples])


@dataclass
class RunMetrics:
    scheme: str
    b: float
    seed: int
    events_total: int
    events_per_edge: np.ndarray
    t_5pct: Optional[float]  # None when the threshold was never reached
    min_interevent: np.ndarray  # per edge, inf with fewer than two events
    max_state_norm: float
    lyap_max_increase: float
    sat_breaches: int

    @property
    def reached(self) -> bool:
        return self.t_5pct is not None


@dataclass
class CampaignSummary:
    scheme: str
    b: float
    runs: int
    mean_events: float
    std_events: float
    mean_t5: Optional[float]
    std_t5: Optional[float]
    fraction_reached: float
    per_run: list[RunMetrics] = field(default_factory=list, repr=False)


# -- Lyapunov pieces -------------------------------------------------------

def _storage(net: Network, V: np.ndarray) -> np.ndarray:
    """Sum of agent storages for a batch of stacked velocity vectors (S, v_size)."""
    total = np.zeros(V.shape[0])
    for m, nodes, idx in net.groups:
        total += np.sum(m.passivity.storage(V[:, idx].reshape(V.shape[0], len(nodes), m.state_dim)),
                        axis=-1)
    return total


def _dissipation(net: Network, V: np.ndarray) -> np.ndarray:
    total = np.zeros(V.shape[0])
    for m, nodes, idx in net.groups:
        total += np.sum(m.passivity.rho(V[:, idx].reshape(V.shape[0], len(nodes), m.state_dim)),
                        axis=-1)
    return total


def _edges(net: Network, P: np.ndarray) -> np.ndarray:
    S, n_p = P.shape[0], net.n_p
    P = P.reshape(S, net.node_count, n_p)
    return P[:, net.heads] - P[:, net.tails]


def _phys_series(net: Network, P, V) -> np.ndarray:
    Z = _edges(net, P)
    return _storage(net, V) + np.sum(net.law.potential(Z), axis=-1)


def _cyber_series(net: Network, P, Zhat, clocks) -> np.ndarray:
    Z = _edges(net, P)
    err = net.law.psi(Zhat.reshape(Z.shape)) - net.law.psi(Z)
    return 0.5 * np.sum(clocks * np.sum(err * err, axis=-1), axis=-1)


def u_phys(state: HybridState, net: Network) -> float:
    """Agent storages plus edge potentials, with z recomputed from p."""
    return float(_phys_series(net, state.p[None, :], state.v[None, :])[0])


def u_cyber(state: HybridState, net: Network) -> float:
    """Sum of phi_l |psi(zhat_l) - psi(z_l)|^2 / 2.

    Timer schemes carry no clock, so phi_l = b_l is used in their place.
    """
    clocks = state.clock if state.clock is not None else net.b
    return float(_cyber_series(net, state.p[None, :], state.zhat[None, :],
                               np.asarray(clocks, dtype=float)[None, :])[0])


def lyapunov_monitor(traj: HybridTrajectory, kappa: Optional[float] = None,
                     rel_tol: float = 1e-6) -> LyapunovReport:
    """Evaluate U on every sample and check it along flows and across jumps.

    Jumps (consecutive samples whose jump counter increases) must not raise U
    at all. Flow intervals may raise it by at most ``rel_tol * (1 + U)``. With
    ``kappa`` the worst excess of the difference quotient over the dissipation
    bound -(1 - kappa) * sum rho is reported as well.
    """
    net = traj.network
    certified = net.scheme == "etc"
    S = len(traj.t)
    clocks = traj.trigger if certified else np.broadcast_to(net.b, (S, net.edge_count))
    phys = _phys_series(net, traj.p, traj.v)
    cyber = _cyber_series(net, traj.p, traj.zhat, clocks)
    U = phys + cyber
    samples = [LyapunovSample(float(t), int(k), float(a), float(c))
               for t, k, a, c in zip(traj.t, traj.k, phys, cyber)]
    report = LyapunovReport(samples, "certified" if certified else "surrogate", 0, 0, 0.0, 0.0)
    if S < 2:
        return report

    dU = np.diff(U)
    jumps = traj.k[1:] > traj.k[:-1]
    flows = ~jumps & (np.diff(traj.t) > 0)
    if jumps.any():
        report.jump_increases = int(np.count_nonzero(dU[jumps] > 0))
        report.max_jump_increase = float(dU[jumps].max())
    if flows.any():
        excess = dU[flows] - rel_tol * (1.0 + U[:-1][flows])
        report.flow_violations = int(np.count_nonzero(excess > 0))
        report.max_flow_increase = float(dU[flows].max())
        if kappa is not None:
            rho = _dissipation(net, traj.v)
            mean_rho = 0.5 * (rho[:-1] + rho[1:])[flows]
            rate = dU[flows] / np.diff(traj.t)[flows]
            report.max_rate_excess = float(np.max(rate + (1.0 - kappa) * mean_rho))
    return report


# -- run-level metrics ------------------------------------------------------

def t5_from_series(t, znorm, fraction: float = 0.05) -> Optional[float]:
    """First time the norm series falls to ``fraction`` of its initial value.

    Linear interpolation between samples; None when never reached.
    """
    t = np.asarray(t, dtype=float)
    znorm = np.asarray(znorm, dtype=float)
    if znorm.size == 0 or not znorm[0] > 0:
        raise MetricError("t_5% is undefined for a zero initial norm")
    level = fraction * znorm[0]
    below = np.flatnonzero(znorm <= level)
    if below.size == 0:
        return None
    i = int(below[0])
    if i == 0:
        return float(t[0])
    z0, z1 = znorm[i - 1], znorm[i]
    w = (z0 - level) / (z0 - z1)
    return float(t[i - 1] + w * (t[i] - t[i - 1]))


def t5_percent(traj: HybridTrajectory) -> Optional[float]:
    return t5_from_series(traj.t, np.linalg.norm(traj.z, axis=1))


def min_interevent_times(traj: HybridTrajectory) -> np.ndarray:
    out = np.full(traj.network.edge_count, np.inf)
    for ell in range(traj.network.edge_count):
        times = traj.event_t[traj.event_edge == ell + 1]
        if times.size > 1:
            out[ell] = float(np.min(np.diff(times)))
    return out


def run_metrics(traj: HybridTrajectory, seed: int = 0,
                lyapunov: Optional[LyapunovReport] = None) -> RunMetrics:
    net = traj.network
    if lyapunov is None:
        lyapunov = lyapunov_monitor(traj)
    U = lyapunov.totals()
    state_norm = np.sqrt(np.sum(traj.z ** 2, axis=1) + np.sum(traj.v ** 2, axis=1))
    return RunMetrics(
        scheme=net.scheme,
        b=float(net.b.max()),
        seed=int(seed),
        events_total=traj.event_count,
        events_per_edge=traj.events_per_edge(),
        t_5pct=t5_percent(traj),
        min_interevent=min_interevent_times(traj),
        max_state_norm=float(state_norm.max()) if state_norm.size else 0.0,
        lyap_max_increase=float(np.max(np.diff(U))) if U.size > 1 else 0.0,
        sat_breaches=traj.sat_breaches,
    )


def campaign_aggregate(runs: Sequence[RunMetrics]) -> CampaignSummary:
    runs = list(runs)
    if not runs:
        raise MetricError("cannot aggregate an empty campaign")
    events = np.array([r.events_total for r in runs], dtype=float)
    t5 = np.array([r.t_5pct for r in runs if r.reached], dtype=float)
    return CampaignSummary(
        scheme=runs[0].scheme,
        b=runs[0].b,
        runs=len(runs),
        mean_events=float(events.mean()),
        std_events=float(events.std()),
        mean_t5=float(t5.mean()) if t5.size else None,
        std_t5=float(t5.std()) if t5.size else None,
        fraction_reached=t5.size / len(runs),
        per_run=runs,
    )
