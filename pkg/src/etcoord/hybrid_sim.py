"""Hybrid execution engine: RK4 flows with event localization, lowest-index
jump resolution, and hybrid-time trajectory recording."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .coupling import CouplingLaw
from .dynamics import AgentModel
from .graph import Topology, incidence
from .triggering import (
    SCHEMES,
    EdgeClockParams,
    UnsupportedSchemeError,
    stc_interval,
    ttc_mate,
)


class FlowPreconditionError(RuntimeError):
    pass


class JumpPreconditionError(RuntimeError):
    pass


class CertificateViolation(RuntimeError):
    """A runtime check backing a passivity certificate failed (e.g. saturation)."""


def make_rng(seed: int, run_index: Optional[int] = None) -> np.random.Generator:
    """Counter-based Philox stream; ``run_index`` selects an independent substream."""
    spawn_key = () if run_index is None else (int(run_index),)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=spawn_key)))


@dataclass(frozen=True)
class SimConfig:
    horizon: float = 20.0
    flow_step: float = 1e-3
    event_tolerance: float = 1e-10
    output_step: float = 1e-2
    seed: int = 0
    strict: bool = True  # abort on a saturation breach instead of counting it

    def __post_init__(self):
        for name in ("horizon", "flow_step", "event_tolerance", "output_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


class Network:
    """Agents, coupling and per-edge trigger parameters on a fixed topology.

    Validates the scheme requirements eagerly: TTC needs a global gradient
    bound; STC needs identical agents with identity output, an incremental
    certificate and a bound on |psi|.
    """

    def __init__(self, topology: Topology, models, law: CouplingLaw,
                 clocks, scheme: str = "etc", ttc_mode: str = "periodic"):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
        if ttc_mode not in ("periodic", "aperiodic"):
            raise ValueError(f"unknown TTC mode {ttc_mode!r}")
        N, M = topology.node_count, topology.edge_count
        if isinstance(models, AgentModel):
            models = [models] * N
        models = tuple(models)
        if len(models) != N:
            raise ValueError(f"{len(models)} agent models for {N} nodes")
        if isinstance(clocks, EdgeClockParams):
            clocks = [clocks] * M
        clocks = tuple(clocks)
        if len(clocks) != M:
            raise ValueError(f"{len(clocks)} clock parameter sets for {M} edges")
        if any(m.n_p != law.n_p for m in models):
            raise ValueError("agent output dimension differs from the coupling dimension")

        self.topology = topology
        self.models = models
        self.law = law
        self.clocks = clocks
        self.scheme = scheme
        self.ttc_mode = ttc_mode
        self.n_p = law.n_p
        self.D = incidence(topology)
        self.DT = np.ascontiguousarray(self.D.T)
        self.tails = topology.tails
        self.heads = topology.heads
        self.a = np.array([c.a for c in clocks])
        self.b = np.array([c.b for c in clocks])
        self.sigma = np.array([c.sigma for c in clocks])
        self.degrees = np.array(topology.degrees)

        # group nodes sharing a model so each model is evaluated once per stage
        offsets = np.concatenate([[0], np.cumsum([m.state_dim for m in models])])
        self.v_size = int(offsets[-1])
        self.v_offsets = offsets
        groups = {}
        for i, m in enumerate(models):
            groups.setdefault(id(m), (m, []))[1].append(i)
        self.groups = []
        for m, nodes in groups.values():
            idx = np.concatenate([np.arange(offsets[i], offsets[i + 1]) for i in nodes])
            self.groups.append((m, np.array(nodes), idx))
        # common case: one model covering every node in order
        self.single = len(self.groups) == 1 and self.groups[0][0].state_dim * N == self.v_size
        limits = [m.input_limit for m in models]
        self.input_limits = np.array([np.inf if l is None else l for l in limits])

        self.periods = None
        if scheme == "ttc":
            K = law.global_grad_bound
            if K is None:
                raise UnsupportedSchemeError(
                    f"TTC needs a global bound on grad psi; the {law.name!r} law has none")
            self.periods = np.array([ttc_mate(c, K) for c in clocks])
            eps = [c.epsilon if c.epsilon is not None else T for c, T in zip(clocks, self.periods)]
            if any(e > T for e, T in zip(eps, self.periods)):
                raise ValueError("epsilon must not exceed the MATE")
            self.windows = np.array(eps)
        if scheme == "stc":
            if len({id(m) for m in models}) != 1:
                raise UnsupportedSchemeError("STC requires identical agent models")
            m = models[0]
            if not m.identity_output:
                raise UnsupportedSchemeError("STC requires identity output maps (y_i = v_i)")
            if m.incremental is None:
                raise UnsupportedSchemeError(f"agent model {m.name!r} has no incremental certificate")
            if law.value_bound is None:
                raise UnsupportedSchemeError(
                    f"STC needs a bound on |psi|; the {law.name!r} law has none")

    @property
    def node_count(self) -> int:
        return self.topology.node_count

    @property
    def edge_count(self) -> int:
        return self.topology.edge_count

    # -- vector fields ---------------------------------------------------
    def edge_values(self, p: np.ndarray) -> np.ndarray:
        """z as an (M, n_p) array from p as (N, n_p)."""
        return self.DT @ p

    def node_inputs(self, zhat: np.ndarray) -> np.ndarray:
        """Sampled control u_hat as (N, n_p) from zhat as (M, n_p)."""
        psi = self.law.psi(zhat)
        return -(self.D @ psi)

    def outputs(self, v: np.ndarray) -> np.ndarray:
        if self.single:
            m = self.groups[0][0]
            return m.output(v.reshape(self.node_count, m.state_dim))
        y = np.empty((self.node_count, self.n_p))
        for m, nodes, idx in self.groups:
            y[nodes] = m.output(v[idx].reshape(len(nodes), m.state_dim))
        return y

    def v_rates(self, v: np.ndarray, u: np.ndarray) -> np.ndarray:
        if self.single:
            m = self.groups[0][0]
            return m.flow(v.reshape(self.node_count, m.state_dim), u).ravel()
        dv = np.empty_like(v)
        for m, nodes, idx in self.groups:
            dv[idx] = m.flow(v[idx].reshape(len(nodes), m.state_dim), u[nodes]).ravel()
        return dv

    def clock_rates(self, phi: np.ndarray, z: np.ndarray) -> np.ndarray:
        return -(1.0 + phi * phi * self.law.grad_norm_sq(z)) / self.sigma

    def edge_velocity(self, v: np.ndarray, edge: int) -> np.ndarray:
        """Delta v for an edge (identity-output agents): v_head - v_tail."""
        m = self.models[0]
        vi = v[self.v_offsets[self.tails[edge]]:self.v_offsets[self.tails[edge]] + m.state_dim]
        vj = v[self.v_offsets[self.heads[edge]]:self.v_offsets[self.heads[edge]] + m.state_dim]
        return vj - vi

    def stc_time(self, z_edge: np.ndarray, dv: np.ndarray, edge: int) -> float:
        i, j = self.tails[edge], self.heads[edge]
        return stc_interval(z_edge, dv, self.clocks[edge], self.models[0].incremental,
                            self.law, (int(self.degrees[i]), int(self.degrees[j])))


@dataclass
class HybridState:
    """Network state at one hybrid time instant.

    ``clock`` holds the ETC clocks; ``last_event`` and ``deadline`` hold the
    absolute event times used by the timer-based schemes.
    """

    t: float
    p: np.ndarray
    v: np.ndarray
    zhat: np.ndarray
    scheme: str
    clock: Optional[np.ndarray] = None
    last_event: Optional[np.ndarray] = None
    deadline: Optional[np.ndarray] = None

    @property
    def trigger(self) -> np.ndarray:
        """phi (ETC), tau = time since last event (TTC) or theta = time to go (STC)."""
        if self.scheme == "etc":
            return self.clock
        if self.scheme == "ttc":
            return self.t - self.last_event
        return self.deadline - self.t

    def copy(self) -> "HybridState":
        def c(x):
            return None if x is None else x.copy()
        return HybridState(self.t, self.p.copy(), self.v.copy(), self.zhat.copy(), self.scheme,
                           c(self.clock), c(self.last_event), c(self.deadline))


def threshold_edges(state: HybridState, net: Network) -> np.ndarray:
    """Zero-based indices of the edges whose trigger sits at its threshold."""
    if state.scheme == "etc":
        return np.flatnonzero(state.clock <= net.a)
    return np.flatnonzero(state.deadline <= state.t)


def in_flow_set(state: HybridState, net: Network, tol: float = 1e-9) -> bool:
    if state.scheme == "etc":
        return bool(np.all((state.clock >= net.a - tol) & (state.clock <= net.b + tol)))
    if state.scheme == "ttc":
        tau = state.trigger
        return bool(np.all((tau >= -tol) & (tau <= net.periods + tol)))
    return bool(np.all(state.trigger >= -tol))


def _rk4(net: Network, p, v, phi, u, h):
    """One classical RK4 step of (p, v, phi) with the sampled input u held fixed."""
    etc = phi is not None

    def f(p_, v_, phi_):
        dp = net.outputs(v_)
        dv = net.v_rates(v_, u)
        dphi = net.clock_rates(phi_, net.edge_values(p_)) if etc else None
        return dp, dv, dphi

    k1 = f(p, v, phi)
    k2 = f(p + 0.5 * h * k1[0], v + 0.5 * h * k1[1], phi + 0.5 * h * k1[2] if etc else None)
    k3 = f(p + 0.5 * h * k2[0], v + 0.5 * h * k2[1], phi + 0.5 * h * k2[2] if etc else None)
    k4 = f(p + h * k3[0], v + h * k3[1], phi + h * k3[2] if etc else None)
    w = h / 6.0
    p1 = p + w * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    v1 = v + w * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    phi1 = phi + w * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]) if etc else None
    return p1, v1, phi1


def clock_step_cap(state: HybridState, net: Network) -> float:
    """Largest step over which no ETC clock can move more than (b - a)/8.

    Clocks decrease on flows, so the current value bounds the clock over the
    step and the rate bound uses it with the law's global gradient bound.
    """
    K = net.law.global_grad_bound
    if K is None:
        z = net.edge_values(state.p.reshape(-1, net.n_p))
        k2 = 2.0 * net.law.grad_norm_sq(z)
    else:
        k2 = K * K
    rate = (1.0 + state.clock ** 2 * k2) / net.sigma
    return float(np.min((net.b - net.a) / 8.0 / rate))


def flow_step(state: HybridState, h: float, net: Network, event_tolerance: float = 1e-10,
              u: Optional[np.ndarray] = None, check: bool = True):
    """Advance the flow by at most ``h`` with the sampled input held constant.

    Returns ``(new_state, hit)`` where ``hit`` is ``None`` or an array of the
    edges that reached their threshold at ``new_state.t``. ETC crossings are
    localized by a bracketed root search on the RK4 step length; timer schemes
    stop exactly on the earliest deadline. ``u`` may pass in the sampled input
    when the caller already holds it; ``check=False`` skips the flow-set
    precondition for callers that maintain it themselves.
    """
    if check and not in_flow_set(state, net, tol=max(event_tolerance, 1e-9)):
        raise FlowPreconditionError(f"state at t={state.t} is outside the flow set")
    N, n_p = net.node_count, net.n_p
    p = state.p.reshape(N, n_p)
    if u is None:
        u = net.node_inputs(state.zhat.reshape(-1, n_p))

    if state.scheme != "etc":
        t_next = float(np.min(state.deadline))
        hit = None
        if state.t + h >= t_next:
            h = t_next - state.t
            hit = np.flatnonzero(state.deadline <= t_next)
        p1, v1, _ = _rk4(net, p, state.v, None, u, h)
        new = replace(state, t=t_next if hit is not None else state.t + h,
                      p=p1.ravel(), v=v1)
        return new, hit

    p1, v1, phi1 = _rk4(net, p, state.v, state.clock, u, h)
    g1 = phi1 - net.a
    if np.all(g1 > 0):
        return replace(state, t=state.t + h, p=p1.ravel(), v=v1, clock=phi1), None

    # safeguarded Newton on g(s) = min_l phi_l(s) - a_l, bracketed by [lo, hi]
    lo, hi = 0.0, h
    g_lo, g_hi = float(np.min(state.clock - net.a)), float(np.min(g1))
    best = (p1, v1, phi1)
    sigma_max = float(np.max(net.sigma))
    s = hi - g_hi * (hi - lo) / (g_hi - g_lo)
    for _ in range(60):
        if hi - lo <= event_tolerance or -g_hi * sigma_max <= event_tolerance:
            break
        if not (lo < s < hi):
            s = 0.5 * (lo + hi)
        cand = _rk4(net, p, state.v, state.clock, u, s)
        gap = cand[2] - net.a
        l = int(np.argmin(gap))
        g = float(gap[l])
        if g > 0:
            lo, g_lo = s, g
        else:
            hi, g_hi, best = s, g, cand
        # the clock rate approximates d phi / d s of the step map
        z = net.edge_values(cand[0])
        rate = float(net.clock_rates(cand[2], z)[l])
        s = s - g / rate
        if g > 0:
            # aim slightly past the root so the next iterate lands on the hi side
            s += 0.5 * event_tolerance
    p1, v1, phi1 = best
    phi1 = phi1.copy()
    hit = np.flatnonzero(phi1 <= net.a)
    phi1[hit] = net.a[hit]
    return replace(state, t=state.t + hi, p=p1.ravel(), v=v1, clock=phi1), hit


def jump(state: HybridState, net: Network, rng: Optional[np.random.Generator] = None):
    """Apply G_l for the lowest-index edge at threshold; returns (new_state, edge)."""
    edges = threshold_edges(state, net)
    if edges.size == 0:
        raise JumpPreconditionError(f"no edge at its threshold at t={state.t}")
    ell = int(edges[0])
    n_p = net.n_p
    new = state.copy()
    p = state.p.reshape(-1, n_p)
    z_ell = p[net.heads[ell]] - p[net.tails[ell]]
    new.zhat[ell * n_p:(ell + 1) * n_p] = z_ell
    if state.scheme == "etc":
        new.clock[ell] = net.b[ell]
    elif state.scheme == "ttc":
        new.last_event[ell] = state.t
        if net.ttc_mode == "periodic":
            new.deadline[ell] = state.deadline[ell] + net.periods[ell]
        else:
            if rng is None:
                raise ValueError("aperiodic TTC needs a random generator")
            new.deadline[ell] = state.t + rng.uniform(net.windows[ell], net.periods[ell])
    else:
        dv = net.edge_velocity(state.v, ell)
        new.deadline[ell] = state.t + net.stc_time(z_ell, dv, ell)
    return new, ell


@dataclass
class HybridTrajectory:
    """Samples on a hybrid time domain plus the edge-event log.

    Samples are taken on the output grid, at the end of every flow that hits
    a threshold, and after every jump. Event ``k`` is the jump counter after
    the jump; edges are reported 1-based.
    """

    t: np.ndarray
    k: np.ndarray
    p: np.ndarray
    v: np.ndarray
    zhat: np.ndarray
    trigger: np.ndarray
    event_t: np.ndarray
    event_k: np.ndarray
    event_edge: np.ndarray
    network: Network = field(repr=False)
    horizon: float = 0.0
    max_abs_input: float = 0.0
    sat_breaches: int = 0
    max_cascade: int = 0

    @property
    def z(self) -> np.ndarray:
        """Relative distances recomputed from p at every sample, shape (S, M*n_p)."""
        n_p = self.network.n_p
        P = self.p.reshape(len(self.t), -1, n_p)
        return (P[:, self.network.heads] - P[:, self.network.tails]).reshape(len(self.t), -1)

    @property
    def event_count(self) -> int:
        return len(self.event_t)

    def events_per_edge(self) -> np.ndarray:
        return np.bincount(self.event_edge - 1, minlength=self.network.edge_count)

    def state_at(self, idx: int) -> HybridState:
        """Sample ``idx`` as a state (trigger stored in the clock slot for ETC only)."""
        scheme = self.network.scheme
        st = HybridState(float(self.t[idx]), self.p[idx].copy(), self.v[idx].copy(),
                         self.zhat[idx].copy(), scheme)
        if scheme == "etc":
            st.clock = self.trigger[idx].copy()
        return st


class _Recorder:
    def __init__(self):
        self.rows = []
        self.events = []

    def sample(self, state: HybridState, k: int):
        self.rows.append((state.t, k, state.p.copy(), state.v.copy(), state.zhat.copy(),
                          np.array(state.trigger, dtype=float)))

    def finish(self, net: Network, **extra) -> HybridTrajectory:
        t, k, p, v, zh, tr = zip(*self.rows) if self.rows else ((),) * 6
        ev = np.array(self.events, dtype=float).reshape(-1, 3)
        return HybridTrajectory(
            t=np.array(t, dtype=float), k=np.array(k, dtype=int),
            p=np.array(p).reshape(len(t), -1), v=np.array(v).reshape(len(t), -1),
            zhat=np.array(zh).reshape(len(t), -1), trigger=np.array(tr).reshape(len(t), -1),
            event_t=ev[:, 1], event_k=ev[:, 2].astype(int), event_edge=ev[:, 0].astype(int),
            network=net, **extra)


def simulate(config: SimConfig, initial: HybridState, net: Network,
             rng: Optional[np.random.Generator] = None) -> HybridTrajectory:
    """Alternate flows and jumps from ``initial`` until ``config.horizon``.

    Jumps pending at the horizon are applied before stopping.
    """
    if initial.scheme != net.scheme:
        raise ValueError(f"state scheme {initial.scheme!r} differs from network {net.scheme!r}")
    if rng is None:
        rng = make_rng(config.seed)
    n_p = net.n_p
    state = initial.copy()
    k = 0
    rec = _Recorder()
    max_u = 0.0
    breaches = 0
    max_cascade = 0
    out_idx = 1
    u_k = -1
    rec.sample(state, k)
    H = config.horizon
    while True:
        cascade = 0
        while threshold_edges(state, net).size:
            state, ell = jump(state, net, rng)
            k += 1
            cascade += 1
            rec.events.append((ell + 1, state.t, k))
            rec.sample(state, k)
            if cascade > net.edge_count:
                raise RuntimeError(f"jump cascade longer than M at t={state.t}")
        max_cascade = max(max_cascade, cascade)
        if state.t >= H:
            break

        # zhat only changes on jumps, so the input is reused between them
        if k != u_k:
            u_k = k
            u = net.node_inputs(state.zhat.reshape(-1, n_p))
            unorm = np.abs(u).max(axis=1)
            max_u = max(max_u, float(unorm.max()))
            breached = bool(np.any(unorm > net.input_limits))
        if breached:
            breaches += 1
            if config.strict:
                i = int(np.argmax(unorm - net.input_limits))
                raise CertificateViolation(
                    f"input of agent {i + 1} reached {unorm[i]:.6g} > saturation "
                    f"{net.input_limits[i]:.6g} at t={state.t:.6g}")

        t_out = min(out_idx * config.output_step, H)
        h = min(config.flow_step, t_out - state.t)
        if net.scheme == "etc":
            h = min(h, clock_step_cap(state, net))
        state, hit = flow_step(state, h, net, config.event_tolerance, u, check=False)
        if hit is None and abs(state.t - t_out) <= 1e-12 * max(1.0, t_out):
            state.t = t_out
        if hit is not None:
            rec.sample(state, k)
        elif state.t >= t_out:
            rec.sample(state, k)
            out_idx += 1
        if state.t >= H and threshold_edges(state, net).size == 0:
            break

    return rec.finish(net, horizon=H, max_abs_input=max_u, sat_breaches=breaches,
                      max_cascade=max_cascade)


def initialize_rendezvous(net: Network, rng: np.random.Generator, spread: float = 5.0) -> HybridState:
    """Random initial state of the five-agent rendez-vous experiment.

    p uniform in [0, spread], v = 0, zhat = z, clocks at b, TTC timers with a
    uniform phase in [0, T_l], STC timers set to the self-triggered interval.
    """
    N, M, n_p = net.node_count, net.edge_count, net.n_p
    p = rng.uniform(0.0, spread, N * n_p)
    v = np.zeros(net.v_size)
    zhat = net.edge_values(p.reshape(N, n_p)).ravel()
    st = HybridState(0.0, p, v, zhat.copy(), net.scheme)
    if net.scheme == "etc":
        st.clock = net.b.astype(float).copy()
    elif net.scheme == "ttc":
        tau0 = rng.uniform(0.0, net.periods)
        st.last_event = -tau0
        st.deadline = st.last_event + net.periods
    else:
        z = zhat.reshape(M, n_p)
        st.last_event = np.zeros(M)
        st.deadline = np.array([net.stc_time(z[l], net.edge_velocity(v, l), l) for l in range(M)])
    return st
