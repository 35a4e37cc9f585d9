"""Agent models dv/dt = f(v, u), y = h(v) with passivity and incremental certificates.

Model callables are batched: ``v`` has shape (..., state_dim) and ``u`` has
shape (..., n_p).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class PassivityCertificate:
    storage: Callable
    rho: Callable
    output_gain: Optional[float] = None


@dataclass(frozen=True)
class IncrementalCertificate:
    """Quadratic-sandwich incremental ISS data.

    ``gamma`` is the input gain; ``alpha_lower_inv`` and ``alpha_upper`` are the
    inverse lower and the upper comparison functions of the incremental storage.
    """

    rate: float
    gamma: Callable
    alpha_lower: Callable
    alpha_lower_inv: Callable
    alpha_upper: Callable


def _half_square(s):
    return 0.5 * np.square(s)


def _half_square_inv(x):
    return np.sqrt(2.0 * np.maximum(x, 0.0))


@dataclass(frozen=True)
class AgentModel:
    name: str
    state_dim: int
    n_p: int
    flow: Callable
    output: Callable
    passivity: PassivityCertificate
    incremental: Optional[IncrementalCertificate] = None
    identity_output: bool = False
    # admissible input magnitude; None when the input is unconstrained
    input_limit: Optional[float] = None
    params: tuple = ()


def saturated_linear_agent(sat_level: float = 1.0) -> AgentModel:
    """dp/dt = v, dv/dt = -v + sat(u), clamped to [-sat_level, sat_level].

    The certificates are those of the unsaturated system and hold as long as
    the applied input never reaches the saturation level.
    """
    if not sat_level > 0:
        raise ParameterError(f"saturation level must be positive, got {sat_level}")
    ubar = float(sat_level)

    def flow(v, u):
        return np.minimum(np.maximum(u, -ubar), ubar) - v

    passivity = PassivityCertificate(
        storage=lambda v: 0.5 * np.sum(np.square(v), axis=-1),
        rho=lambda v: np.sum(np.square(v), axis=-1),
        output_gain=1.0,
    )
    incremental = IncrementalCertificate(
        rate=1.0,
        gamma=_half_square,
        alpha_lower=_half_square,
        alpha_lower_inv=_half_square_inv,
        alpha_upper=_half_square,
    )
    return AgentModel(
        name="saturated_linear",
        state_dim=1,
        n_p=1,
        flow=flow,
        output=lambda v: v,
        passivity=passivity,
        incremental=incremental,
        identity_output=True,
        input_limit=ubar,
        params=(("sat_level", ubar),),
    )


def monotone_agent(c: float = 1.0, nonlinearity: str = "cubic") -> AgentModel:
    """dv/dt = phi(v) + u with -phi strongly monotone with modulus ``c``.

    ``nonlinearity="cubic"`` gives phi(v) = -c v - v**3, ``"linear"`` gives
    phi(v) = -c v.
    """
    if not c > 0:
        raise ParameterError(f"monotonicity modulus must be positive, got {c}")
    c = float(c)
    if nonlinearity == "cubic":
        def phi(v):
            return -c * v - v ** 3
    elif nonlinearity == "linear":
        def phi(v):
            return -c * v
    else:
        raise ParameterError(f"unknown nonlinearity {nonlinearity!r}")

    passivity = PassivityCertificate(
        storage=lambda v: 0.5 * np.sum(np.square(v), axis=-1),
        rho=lambda v: c * np.sum(np.square(v), axis=-1),
        output_gain=1.0 / c,
    )
    incremental = IncrementalCertificate(
        rate=c,
        gamma=lambda s: np.square(s) / (2.0 * c),
        alpha_lower=_half_square,
        alpha_lower_inv=_half_square_inv,
        alpha_upper=_half_square,
    )
    return AgentModel(
        name="monotone",
        state_dim=1,
        n_p=1,
        flow=lambda v, u: phi(v) + u,
        output=lambda v: v,
        passivity=passivity,
        incremental=incremental,
        identity_output=True,
        params=(("c", c), ("nonlinearity", nonlinearity)),
    )


def incremental_envelope(cert: IncrementalCertificate, dv0, elapsed, input_bound):
    """Bound on |v_i(t) - v_j(t)| given its value ``dv0`` at the last edge event.

    ``input_bound`` bounds the input difference (2 (deg_i + deg_j) psi_bar for
    the networked agents). Vectorized over ``elapsed``.
    """
    decay = np.exp(-cert.rate * np.asarray(elapsed, dtype=float))
    inner = decay * cert.alpha_upper(dv0) + (1.0 - decay) / cert.rate * cert.gamma(input_bound)
    return cert.alpha_lower_inv(inner)
