"""Edge potentials, their gradients and the gradient-norm bounds used by the schedulers.

Every law acts on arrays whose last axis is the edge dimension ``n_p``; leading
axes are batch axes (typically the edge index).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


class IntervalError(ValueError):
    pass


@dataclass(frozen=True)
class TargetSet:
    """Singleton target for an edge variable; ``offset=None`` means the origin."""

    offset: Optional[tuple[float, ...]] = None

    def point(self, n_p: int) -> np.ndarray:
        if self.offset is None:
            return np.zeros(n_p)
        return np.asarray(self.offset, dtype=float)

    def distance(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.point(x.shape[-1]), axis=-1)


@dataclass(frozen=True)
class CouplingLaw:
    name: str
    n_p: int
    potential: Callable
    psi: Callable
    grad_psi: Callable
    grad_norm_sq: Callable
    global_grad_bound: Optional[float] = None
    value_bound: Optional[float] = None
    target_set: TargetSet = TargetSet()
    # exact max of ||grad psi||^2 over a box, when a closed form exists
    box_max_grad_norm_sq: Optional[Callable] = None
    params: tuple = ()


def _spectral_norm_sq(J: np.ndarray) -> np.ndarray:
    return np.linalg.norm(J, ord=2, axis=(-2, -1)) ** 2


def arctan_law(n_p: int = 1) -> CouplingLaw:
    """psi(z) = arctan(z)/pi entrywise, the potential whose gradient it is.

    The Jacobian is diagonal with entries 1/(pi (1 + z_k^2)), so its induced
    norm is attained at the entry closest to zero and is bounded by 1/pi.
    """

    def potential(z):
        z = np.asarray(z, dtype=float)
        return np.sum(z * np.arctan(z) - 0.5 * np.log1p(z * z), axis=-1) / np.pi

    def psi(z):
        return np.arctan(np.asarray(z, dtype=float)) / np.pi

    def deriv(z):
        return 1.0 / (np.pi * (1.0 + z * z))

    def grad_psi(z):
        z = np.asarray(z, dtype=float)
        d = deriv(z)
        return d[..., :, None] * np.eye(z.shape[-1])

    def grad_norm_sq(z):
        if n_p == 1:
            zz = z[..., 0]
            return 1.0 / (np.pi * (1.0 + zz * zz)) ** 2
        z = np.asarray(z, dtype=float)
        return np.max(deriv(z), axis=-1) ** 2

    def box_max(lower, upper):
        # the point of each interval nearest to zero maximizes that diagonal entry
        closest = np.minimum(np.maximum(0.0, lower), upper)
        return grad_norm_sq(closest)

    return CouplingLaw(
        name="arctan",
        n_p=n_p,
        potential=potential,
        psi=psi,
        grad_psi=grad_psi,
        grad_norm_sq=grad_norm_sq,
        global_grad_bound=1.0 / np.pi,
        value_bound=0.5 * np.sqrt(n_p),
        box_max_grad_norm_sq=box_max,
    )


def quadratic_law(offset=None, n_p: int = 1) -> CouplingLaw:
    """P(z) = |z - offset|^2 / 2 for formation offsets; psi is unbounded."""
    if offset is not None:
        offset = tuple(float(c) for c in np.atleast_1d(offset))
        n_p = len(offset)
    target = TargetSet(offset)
    c = target.point(n_p)

    def potential(z):
        d = np.asarray(z, dtype=float) - c
        return 0.5 * np.sum(d * d, axis=-1)

    def psi(z):
        return np.asarray(z, dtype=float) - c

    def grad_psi(z):
        z = np.asarray(z, dtype=float)
        return np.broadcast_to(np.eye(n_p), z.shape + (n_p,)).copy()

    def grad_norm_sq(z):
        return np.ones(np.asarray(z).shape[:-1])

    return CouplingLaw(
        name="quadratic",
        n_p=n_p,
        potential=potential,
        psi=psi,
        grad_psi=grad_psi,
        grad_norm_sq=grad_norm_sq,
        global_grad_bound=1.0,
        value_bound=None,
        target_set=target,
        box_max_grad_norm_sq=lambda lo, hi: np.ones(np.asarray(lo).shape[:-1]),
        params=(("offset", offset),),
    )


def grad_norm_sq(law: CouplingLaw, z) -> np.ndarray:
    """Squared induced 2-norm of the Jacobian of psi at ``z``."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        z = z[None]
    return law.grad_norm_sq(z)


def _grid_box_max(law: CouplingLaw, lower: np.ndarray, upper: np.ndarray,
                  points: int = 9, tol: float = 1e-9, max_levels: int = 60) -> float:
    lo, hi = lower.copy(), upper.copy()
    best = -np.inf
    for _ in range(max_levels):
        axes = [np.linspace(a, b, points) for a, b in zip(lo, hi)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lo.size)
        vals = law.grad_norm_sq(grid)
        k = int(np.argmax(vals))
        improvement = vals[k] - best
        best = max(best, float(vals[k]))
        if improvement < tol and np.isfinite(improvement):
            break
        # zoom onto the two cells around the incumbent
        half = (hi - lo) / (points - 1)
        lo = np.maximum(lower, grid[k] - half)
        hi = np.minimum(upper, grid[k] + half)
        if np.all(hi - lo <= 0):
            break
    return best


def lambda_estimate(law: CouplingLaw, lower, upper) -> float:
    """Upper bound on ||grad psi(x)||^2 over the box lower <= x <= upper."""
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    if lower.shape != upper.shape:
        raise ValueError("box corners have different shapes")
    if np.any(lower > upper):
        raise IntervalError(f"empty box: lower {lower} exceeds upper {upper}")
    if law.box_max_grad_norm_sq is not None:
        lam = float(law.box_max_grad_norm_sq(lower, upper))
    else:
        # the grid maximum can undershoot between nodes, hence the margin
        lam = _grid_box_max(law, lower, upper) * (1.0 + 1e-6)
    if law.global_grad_bound is not None:
        lam = min(lam, law.global_grad_bound ** 2)
    return lam
