"""Edge-event schedulers: event-triggered clocks, time-triggered MATEs and
self-triggered intervals, plus the sigma selection rule and dwell-time bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .coupling import CouplingLaw, lambda_estimate
from .dynamics import IncrementalCertificate, incremental_envelope


class UnsupportedSchemeError(ValueError):
    """The chosen scheme needs data (a bound, a certificate) the model lacks."""


SCHEMES = ("etc", "ttc", "stc")


@dataclass(frozen=True)
class EdgeClockParams:
    a: float
    b: float
    sigma: float
    epsilon: Optional[float] = None

    def __post_init__(self):
        if not (0.0 <= self.a < self.b):
            raise ValueError(f"clock bounds must satisfy 0 <= a < b, got a={self.a}, b={self.b}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def linear_clock_time(self) -> float:
        """Time for a clock decreasing at rate 1/sigma to go from b to a."""
        return self.sigma * (self.b - self.a)


def etc_clock_rate(phi, z, params: EdgeClockParams, law: CouplingLaw):
    """Right-hand side of the event-triggered clock ODE."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        z = z[None]
    return -(1.0 + phi * phi * law.grad_norm_sq(z)) / params.sigma


def _riccati_time(a: float, b: float, sigma: float, k: float) -> float:
    """Time for dtheta/dt = -(1 + k^2 theta^2)/sigma to go from b down to a."""
    if k == 0.0:
        return sigma * (b - a)
    return sigma / k * (math.atan(k * b) - math.atan(k * a))


def ttc_mate(params: EdgeClockParams, K: Optional[float]) -> float:
    """Maximum allowable time between two events of an edge, from the worst-case clock."""
    if K is None:
        raise UnsupportedSchemeError("time-triggered sampling needs a global bound on grad psi")
    if not K > 0:
        raise UnsupportedSchemeError(f"gradient bound must be positive, got {K}")
    return _riccati_time(params.a, params.b, params.sigma, float(K))


def dwell_lower_bound(params: EdgeClockParams, grad_bound: float) -> float:
    """Lower bound on ETC inter-event times while ||grad psi|| stays below ``grad_bound``."""
    if not grad_bound > 0:
        raise ValueError(f"gradient bound must be positive, got {grad_bound}")
    return _riccati_time(params.a, params.b, params.sigma, float(grad_bound))


def grad_bound_on_ball(law: CouplingLaw, radius: float) -> float:
    """Upper bound on max ||grad psi(xi)|| over ||xi|| <= radius (via the enclosing box)."""
    r = np.full(law.n_p, float(radius))
    return math.sqrt(lambda_estimate(law, -r, r))


def _lambda_profile(law: CouplingLaw, z: np.ndarray, widths: np.ndarray) -> np.ndarray:
    lower = z[None, :] - widths[:, None]
    upper = z[None, :] + widths[:, None]
    if law.box_max_grad_norm_sq is not None:
        lam = np.asarray(law.box_max_grad_norm_sq(lower, upper), dtype=float)
        if law.global_grad_bound is not None:
            lam = np.minimum(lam, law.global_grad_bound ** 2)
        return lam
    return np.array([lambda_estimate(law, lo, hi) for lo, hi in zip(lower, upper)])


def stc_interval(z, dv, params: EdgeClockParams, cert: Optional[IncrementalCertificate],
                 law: CouplingLaw, degrees: tuple[int, int], substeps: int = 1024) -> float:
    """Self-triggered time to the next event of an edge.

    Integrates the clock from b to a with ||grad psi||^2 replaced by its maximum
    over a box around ``z`` whose half-width grows with the integrated velocity
    envelope. The box and the bound are frozen at their end-of-substep values on
    each substep, where the clock ODE is then solved in closed form.
    """
    if cert is None:
        raise UnsupportedSchemeError("self-triggered sampling needs an incremental certificate")
    if law.value_bound is None:
        raise UnsupportedSchemeError("self-triggered sampling needs a bound on |psi|")
    z = np.atleast_1d(np.asarray(z, dtype=float))
    dv0 = float(np.linalg.norm(dv))
    input_bound = 2.0 * (degrees[0] + degrees[1]) * law.value_bound

    horizon = params.linear_clock_time
    h = horizon / substeps
    grid = h * np.arange(substeps + 1)
    env = incremental_envelope(cert, dv0, grid, input_bound)
    # the envelope is monotone in time, so the larger endpoint bounds each substep
    widths = np.cumsum(np.maximum(env[:-1], env[1:]) * h)
    lam = _lambda_profile(law, z, widths)

    return _first_crossing(lam, h, params, horizon)


def _first_crossing(lam: np.ndarray, h: float, params: EdgeClockParams, horizon: float) -> float:
    """Time for the clock to fall from b to a with ||grad psi||^2 = lam[k] on substep k.

    With lam constant the clock ODE is a Riccati equation whose flow over a
    substep is the Moebius map phi -> (phi - c) / (1 + s^2 c phi) with
    c = tan(s h / sigma) / s and s = sqrt(lam). Starting from phi >= a >= 0 the
    map is exact while the substep angle s h / sigma stays below pi/2; longer
    substeps fall back to the angle form. The crossing substep is solved in
    closed form.
    """
    sigma, a, b = params.sigma, params.a, params.b
    s = np.sqrt(lam)
    theta = s * (h / sigma)
    c = np.full_like(s, h / sigma)  # limit of tan(theta) / s as s -> 0
    pos = s > 0
    with np.errstate(all="ignore"):
        c[pos] = np.tan(theta[pos]) / s[pos]
    d = s * s * c
    phi = b
    for k, (ck, dk, tk, sk) in enumerate(zip(c.tolist(), d.tolist(), theta.tolist(), s.tolist())):
        if tk < 1.0:
            nxt = (phi - ck) / (1.0 + dk * phi)
        else:
            u = math.atan(sk * phi) - tk
            nxt = a if u <= math.atan(sk * a) else math.tan(u) / sk
        if nxt <= a:
            if sk == 0.0:
                dt = sigma * (phi - a)
            else:
                dt = sigma / sk * (math.atan(sk * phi) - math.atan(sk * a))
            return min(k * h + min(max(dt, 0.0), h), horizon)
        phi = nxt
    return horizon


def select_sigma(kappas, topology, output_gains, default: float = 1.0) -> list[float]:
    """Per-edge sigma = min over the two end nodes of kappa_i / (2 deg_i C_i).

    Nodes with a zero output gain impose no constraint; an edge left
    unconstrained gets ``default``.
    """
    n = topology.node_count
    kappas = np.broadcast_to(np.asarray(kappas, dtype=float), (n,))
    gains = np.broadcast_to(np.asarray(output_gains, dtype=float), (n,))
    if np.any((kappas <= 0) | (kappas >= 1)):
        raise ValueError("every kappa must lie in (0, 1)")
    if np.any(gains < 0):
        raise ValueError("output gains must be nonnegative")
    sigmas = []
    for tail, head in topology.edges:
        caps = [kappas[i - 1] / (2.0 * topology.degrees[i - 1] * gains[i - 1])
                for i in (tail, head) if gains[i - 1] > 0]
        sigmas.append(float(min(caps)) if caps else float(default))
    return sigmas


def replay_etc_interval(times, z_trace, params: EdgeClockParams, law: CouplingLaw) -> float:
    """Integrate the ETC clock from b along a recorded z trace until it reaches a.

    ``z_trace`` is linearly interpolated between ``times``; returns ``inf`` when
    the trace ends before the clock reaches a.
    """
    times = np.asarray(times, dtype=float)
    z_trace = np.asarray(z_trace, dtype=float).reshape(len(times), -1)
    t0 = times[0]

    def z_at(t):
        return np.array([np.interp(t, times, z_trace[:, j]) for j in range(z_trace.shape[1])])

    def rhs(t, y):
        return [float(etc_clock_rate(y[0], z_at(t), params, law))]

    def hit(t, y):
        return y[0] - params.a

    hit.terminal = True
    hit.direction = -1
    sol = solve_ivp(rhs, (t0, times[-1]), [params.b], method="DOP853", events=hit,
                    rtol=1e-12, atol=1e-14, max_step=params.linear_clock_time / 256)
    if sol.t_events[0].size:
        return float(sol.t_events[0][0] - t0)
    return math.inf
