"""Two-mode effective dynamics of the beating equation.

The reduced Hamiltonian ``G = J1 + 2 K1 J1`` with ``J1 = |u1|^2 + |u-1|^2`` and
``K1 = 2 Re(u1 conj(u-1))`` generates

    du1/dt  = -i (1 + 2 K1) u1  - 2 i J1 u-1
    du-1/dt = -i (1 + 2 K1) u-1 - 2 i J1 u1

``J1`` and ``K1`` are conserved, so the flow is a constant-coefficient linear system
and has the closed form implemented in :func:`closed_form_state`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .implicit_curve import rate_J


@dataclass(frozen=True)
class InitialData:
    """Initial condition ``eps (alpha e^{ix} + beta e^{-ix})``."""

    alpha: complex
    beta: complex
    eps: float

    def __post_init__(self):
        if not (self.eps > 0 and math.isfinite(self.eps)):
            raise ValueError("eps must be positive and finite")
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "beta", complex(self.beta))

    @property
    def J1(self) -> float:
        return self.eps**2 * (abs(self.alpha) ** 2 + abs(self.beta) ** 2)

    @property
    def K1(self) -> float:
        return 2.0 * self.eps**2 * (self.alpha * self.beta.conjugate()).real


@dataclass(frozen=True)
class ReducedState:
    u1: complex
    u_minus1: complex
    t: float = 0.0


@dataclass(frozen=True)
class ConservedSet:
    J1: float
    K1: float
    G: float
    M: float


@dataclass(frozen=True)
class Trajectory:
    """States sampled on the uniform grid ``t = n * dt``."""

    t: np.ndarray
    u1: np.ndarray
    u_minus1: np.ndarray

    def state(self, n: int) -> ReducedState:
        return ReducedState(complex(self.u1[n]), complex(self.u_minus1[n]), float(self.t[n]))

    def conserved(self) -> dict[str, np.ndarray]:
        return conserved_arrays(self.u1, self.u_minus1)


def beating_angle(data: InitialData, t):
    """``Theta = 2 eps^2 t (|alpha|^2 + |beta|^2)``."""
    return 2.0 * data.J1 * np.asarray(t, dtype=float)


def closed_form_arrays(data: InitialData, t) -> tuple[np.ndarray, np.ndarray]:
    """Exact reduced flow evaluated at an array of times."""
    t = np.asarray(t, dtype=float)
    theta = beating_angle(data, t)
    phase = np.exp(-1j * (1.0 + 2.0 * data.K1) * t) * data.eps
    c, s = np.cos(theta), np.sin(theta)
    u1 = phase * (data.alpha * c - 1j * data.beta * s)
    um1 = phase * (data.beta * c - 1j * data.alpha * s)
    return u1, um1


def closed_form_state(data: InitialData, t: float) -> ReducedState:
    u1, um1 = closed_form_arrays(data, t)
    return ReducedState(complex(u1), complex(um1), float(t))


def sup_norm_effective(data: InitialData, t, mode: Literal["profile", "exact"] = "profile"):
    """Supremum in ``x`` of the two-mode field.

    ``exact`` is ``|u1| + |u-1|`` from the closed form.  ``profile`` drops the mixed
    ``sin(2 Theta) Im(alpha conj(beta))`` term from both moduli; the two agree when
    ``alpha conj(beta)`` is real.
    """
    if mode == "exact":
        u1, um1 = closed_form_arrays(data, t)
        return np.abs(u1) + np.abs(um1)
    if mode != "profile":
        raise ValueError("mode must be 'profile' or 'exact'")
    theta = beating_angle(data, t)
    return data.eps * sup_profile(abs(data.alpha), abs(data.beta), theta)


def sup_profile(a, b, theta):
    """``sqrt(a^2 cos^2 + b^2 sin^2) + sqrt(b^2 cos^2 + a^2 sin^2)`` at angle ``theta``."""
    c2 = np.cos(theta) ** 2
    s2 = np.sin(theta) ** 2
    a2 = np.square(a)
    b2 = np.square(b)
    return np.sqrt(a2 * c2 + b2 * s2) + np.sqrt(b2 * c2 + a2 * s2)


def conserved_arrays(u1, um1) -> dict[str, np.ndarray]:
    u1 = np.asarray(u1)
    um1 = np.asarray(um1)
    J1 = np.abs(u1) ** 2 + np.abs(um1) ** 2
    K1 = 2.0 * (u1 * np.conj(um1)).real
    return {"J1": J1, "K1": K1, "G": J1 + 2.0 * K1 * J1}


def conserved_quantities(state: ReducedState) -> ConservedSet:
    q = conserved_arrays(state.u1, state.u_minus1)
    J1, K1, G = float(q["J1"]), float(q["K1"]), float(q["G"])
    # mass of the two-mode field on the torus, int |u|^2 dx
    return ConservedSet(J1, K1, G, 2.0 * math.pi * J1)


def reduced_hamiltonian_G(state: ReducedState) -> float:
    return conserved_quantities(state).G


def reduced_rhs(u1: complex, um1: complex) -> tuple[complex, complex]:
    J1 = u1.real * u1.real + u1.imag * u1.imag + um1.real * um1.real + um1.imag * um1.imag
    K1 = 2.0 * (u1.real * um1.real + u1.imag * um1.imag)
    diag = -1j * (1.0 + 2.0 * K1)
    off = -2j * J1
    return diag * u1 + off * um1, diag * um1 + off * u1


def integrate_reduced(data: InitialData, t_end: float, dt: float) -> Trajectory:
    """Classical fourth-order Runge-Kutta with fixed step ``dt``.

    ``t_end`` is rounded to a whole number of steps; every step is recorded.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if dt * (1.0 + data.J1) > 0.1:
        raise ValueError("dt too large: need dt * (1 + eps^2 (|alpha|^2 + |beta|^2)) <= 0.1")
    n = int(round(t_end / dt))
    if n < 1:
        raise ValueError("t_end must cover at least one step")
    out1 = np.empty(n + 1, dtype=complex)
    outm = np.empty(n + 1, dtype=complex)
    u, v = data.eps * data.alpha, data.eps * data.beta
    out1[0], outm[0] = u, v
    h, h2, h6 = dt, 0.5 * dt, dt / 6.0
    f = reduced_rhs
    for i in range(1, n + 1):
        k1u, k1v = f(u, v)
        k2u, k2v = f(u + h2 * k1u, v + h2 * k1v)
        k3u, k3v = f(u + h2 * k2u, v + h2 * k2v)
        k4u, k4v = f(u + h * k3u, v + h * k3v)
        u = u + h6 * (k1u + 2.0 * (k2u + k3u) + k4u)
        v = v + h6 * (k1v + 2.0 * (k2v + k3v) + k4v)
        out1[i], outm[i] = u, v
    if not (np.all(np.isfinite(out1)) and np.all(np.isfinite(outm))):
        raise FloatingPointError("non-finite state in reduced integration")
    return Trajectory(np.arange(n + 1) * dt, out1, outm)


def transient_rate_bounds(z0: float, tau: float, sigma_a2: float) -> tuple[float, float]:
    """``(upper, lower) = (-z0^2 / (2 sigma_a2), -J(z0, tau)^2 / sigma_a2)``."""
    for name, val in (("z0", z0), ("tau", tau), ("sigma_a2", sigma_a2)):
        if not val > 0:
            raise ValueError(f"{name} must be positive")
    upper = -z0 * z0 / (2.0 * sigma_a2)
    lower = -rate_J(z0, tau) ** 2 / sigma_a2
    return upper, lower
