"""Belt flux functions: exact discontinuous flux, its mollified version,
the Godunov two-point flux and the explicit time-step bound.

The mollifier is the triangular kernel ``phi(y) = max(0, 1 - |y|)`` scaled to
support ``[-delta/2, delta/2]``. Centering it at ``rho_max + delta/2`` gives a
regularized flux that is linear up to ``rho_max`` and reaches zero at
``rho_max + delta``; its integral is the piecewise quadratic triangular CDF,
so everything below is closed form.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit


class FluxDomainError(ValueError):
    """Density outside ``[0, rho_max + delta]`` reached the numerical flux."""


@dataclass(frozen=True)
class FluxParams:
    velocity: float
    capacity: float = 1.0
    smoothing: float = 1e-2

    def __post_init__(self):
        if not (self.velocity > 0 and self.capacity > 0 and self.smoothing > 0):
            raise ValueError("velocity, capacity and smoothing must be positive")
        if self.smoothing > self.capacity / 10:
            warnings.warn(f"smoothing {self.smoothing} is not small against capacity "
                          f"{self.capacity}", stacklevel=2)

    @property
    def peak_density(self) -> float:
        return peak_density(self.capacity, self.smoothing)

    @property
    def max_flux(self) -> float:
        """Capacity flux ``a * rho_max`` of the unregularized model."""
        return self.velocity * self.capacity


# ---- scalar kernels (also used inside the compiled solver loop) ----------

@njit(cache=True)
def _ramp(s):
    # integral of the unit triangular density on [0, 1] up to s
    if s <= 0.0:
        return 0.0
    if s < 0.5:
        return 2.0 * s * s
    if s < 1.0:
        return 1.0 - 2.0 * (1.0 - s) * (1.0 - s)
    return 1.0


@njit(cache=True)
def f_reg(rho, a, rmax, delta):
    s = (rho - rmax) / delta
    if s <= 0.0:
        return a * rho
    if s >= 1.0:
        return 0.0
    return a * rho * (1.0 - _ramp(s))


@njit(cache=True)
def df_reg(rho, a, rmax, delta):
    s = (rho - rmax) / delta
    if s <= 0.0:
        return a
    if s >= 1.0:
        return 0.0
    if s < 0.5:
        return a * (1.0 - 2.0 * s * s) - a * rho * 4.0 * s / delta
    w = 1.0 - s
    return 2.0 * a * w * w - a * rho * 4.0 * w / delta


@njit(cache=True)
def peak_density(rmax, delta):
    """Density where the regularized flux attains its maximum.

    Solves ``6 s^2 + 4 c s - 1 = 0`` for ``s = (rho - rmax) / delta`` with
    ``c = rmax / delta``, written in the cancellation-free form.
    """
    c = rmax / delta
    s = 2.0 / (4.0 * c + math.sqrt(16.0 * c * c + 24.0))
    return rmax + delta * s


@njit(cache=True)
def demand(rho, a, rmax, delta, rpeak):
    if rho < rpeak:
        return f_reg(rho, a, rmax, delta)
    return f_reg(rpeak, a, rmax, delta)


@njit(cache=True)
def supply(rho, a, rmax, delta, rpeak):
    if rho > rpeak:
        return f_reg(rho, a, rmax, delta)
    return f_reg(rpeak, a, rmax, delta)


@njit(cache=True)
def godunov(rho_l, rho_r, a, rmax, delta, rpeak):
    # unimodal flux: interval min/max reduces to min(demand, supply)
    d = demand(rho_l, a, rmax, delta, rpeak)
    s = supply(rho_r, a, rmax, delta, rpeak)
    return d if d < s else s


# ---- public API -----------------------------------------------------------

def _apply(kernel, rho, *args):
    if np.ndim(rho) == 0:
        return float(kernel(float(rho), *args))
    rho = np.asarray(rho, dtype=float)
    return np.array([kernel(r, *args) for r in rho.ravel()]).reshape(rho.shape)


def exact_flux(p: FluxParams, rho):
    """``a * rho * H(rho_max - rho)`` with the convention ``H(0) = 0``."""
    rho = np.asarray(rho, dtype=float)
    out = np.where(rho < p.capacity, p.velocity * rho, 0.0)
    return float(out) if out.ndim == 0 else out


def mollifier(delta: float, y):
    """Scaled triangular kernel ``(2/delta) * max(0, 1 - |2y/delta|)``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    y = np.asarray(y, dtype=float)
    out = (2.0 / delta) * np.maximum(0.0, 1.0 - np.abs(2.0 * y / delta))
    return float(out) if out.ndim == 0 else out


def regularized_flux(p: FluxParams, rho):
    return _apply(f_reg, rho, p.velocity, p.capacity, p.smoothing)


def regularized_flux_derivative(p: FluxParams, rho):
    return _apply(df_reg, rho, p.velocity, p.capacity, p.smoothing)


def max_derivative(p: FluxParams) -> float:
    """Exact sup of ``|f_delta'|``, attained at ``rho_max + delta/2``."""
    a, r, d = p.velocity, p.capacity, p.smoothing
    return max(a, 2.0 * a * r / d + 0.5 * a)


def godunov_flux(p: FluxParams, rho_left: float, rho_right: float, tol: float = 1e-12) -> float:
    """Godunov flux: min of ``f_delta`` over ``[rho_left, rho_right]`` when
    ``rho_left <= rho_right``, max over ``[rho_right, rho_left]`` otherwise."""
    top = p.capacity + p.smoothing
    for rho in (rho_left, rho_right):
        if not (-tol <= rho <= top + tol):
            raise FluxDomainError(f"density {rho!r} outside [0, {top}]")
    return float(godunov(float(rho_left), float(rho_right), p.velocity, p.capacity,
                         p.smoothing, p.peak_density))


def lipschitz_bound(velocity: float, capacity: float, delta: float) -> float:
    """Derivative bound used for the time-step restriction.

    This is the leading-order ``2 a rho_max / delta`` (never below the free
    speed ``a``); with ``a = rho_max = 1`` it is the familiar ``2/delta``.
    The exact supremum exceeds it by ``a/2``, see :func:`max_derivative`.
    """
    return max(velocity, 2.0 * velocity * capacity / delta)


def cfl_max_timestep(network, delta: float, dx) -> float:
    """Largest ``dt`` with ``dt * max_v |in(v)| * L <= dx`` on every arc.

    ``dx`` may be a scalar or a mapping ``arc_id -> dx``.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    m = max(1, network.max_in_degree)
    best = math.inf
    for arc_id, arc in network.arcs.items():
        h = dx[arc_id] if hasattr(dx, "__getitem__") and not np.isscalar(dx) else dx
        if h <= 0:
            raise ValueError("dx must be positive")
        best = min(best, h / (m * lipschitz_bound(arc.velocity, arc.capacity, delta)))
    return best
