"""Closed-form solutions of the equivariant wave-map equation.

The static degree-one harmonic map ``u_S(r) = 2 arctan(r)``, its dilation
zero mode, the potential of the linearized operator around it, the singular
self-similar family and the degree-zero pulse used as initial data. All
derivatives are differentiated by hand so that these functions can serve as
exact oracles for the discrete scheme.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FOUR_PI = 4.0 * np.pi


def _check_scale(lam):
    if not np.all(np.asarray(lam) > 0):
        raise ValueError(f"scale factor must be positive, got {lam!r}")


def _check_sign(sign):
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign!r}")


def static_solution(r, lam=1.0, sign=1):
    """Dilated static solution ``sign * 2 arctan(r / lam)``."""
    _check_scale(lam)
    _check_sign(sign)
    return sign * 2.0 * np.arctan(np.asarray(r, dtype=float) / lam)


def static_solution_dr(r, lam=1.0, sign=1):
    """First radial derivative of :func:`static_solution`."""
    _check_scale(lam)
    _check_sign(sign)
    r = np.asarray(r, dtype=float)
    return sign * 2.0 * lam / (lam * lam + r * r)


def static_solution_drr(r, lam=1.0, sign=1):
    """Second radial derivative of :func:`static_solution`."""
    _check_scale(lam)
    _check_sign(sign)
    r = np.asarray(r, dtype=float)
    return -sign * 4.0 * lam * r / (lam * lam + r * r) ** 2


def static_residual(r, lam=1.0, sign=1):
    """Residual ``u'' + u'/r - sin(2u)/(2r^2)`` of the static equation at ``u_S``.

    Uses the analytic derivatives, so the result is zero up to roundoff.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("static residual is only defined for r > 0")
    u = static_solution(r, lam, sign)
    return (static_solution_drr(r, lam, sign) + static_solution_dr(r, lam, sign) / r
            - np.sin(2.0 * u) / (2.0 * r * r))


def zero_mode(r):
    """Dilation zero mode ``r u_S'(r) = 2r / (1 + r^2)``."""
    r = np.asarray(r, dtype=float)
    return 2.0 * r / (1.0 + r * r)


def linearization_potential(r):
    """Potential ``V(r) = cos(2 u_S(r)) / r^2`` of the operator linearized at ``u_S``.

    Raises
    ------
    ValueError
        For ``r <= 0``, where ``V`` diverges like ``1/r^2``.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("linearization potential diverges at r = 0")
    r2 = r * r
    return (1.0 - 6.0 * r2 + r2 * r2) / ((1.0 + r2) ** 2 * r2)


def self_similar(alpha, rho):
    """Singular self-similar profile ``f_alpha(rho)`` on the past light cone.

    ``f_alpha(rho) = 2 arctan(alpha rho / (1 + sqrt(1 - rho^2)))``, defined for
    ``0 <= rho <= 1``. These profiles are not differentiable at ``rho = 1``.
    """
    rho = np.asarray(rho, dtype=float)
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    if np.any(rho < 0) or np.any(rho > 1):
        raise ValueError("similarity coordinate must lie in [0, 1]")
    return 2.0 * np.arctan(alpha * rho / (1.0 + np.sqrt(1.0 - rho * rho)))


def self_similar_residual(alpha, rho, scale=1.0):
    """Residual of the self-similar ODE evaluated on ``f_alpha``.

    The ODE is ``f'' + (1/rho - rho/(1-rho^2)) f' - sin(2f)/(2 rho^2 (1-rho^2))``.
    With ``g = alpha rho / (1 + s)``, ``s = sqrt(1 - rho^2)``, one has
    ``g' = alpha / (s (1+s))`` and ``g'' = alpha rho (1 + 2s) / (s^3 (1+s)^2)``.

    ``scale`` multiplies the angle ``f`` itself. Any value other than 1 gives
    a non-solution, which is useful as a control case. (Rescaling the arctan
    argument instead would only change ``alpha`` and stay in the family.)
    """
    rho = np.asarray(rho, dtype=float)
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    if np.any(rho <= 0) or np.any(rho >= 1):
        raise ValueError("residual is only defined for 0 < rho < 1")
    s = np.sqrt(1.0 - rho * rho)
    g = alpha * rho / (1.0 + s)
    dg = alpha / (s * (1.0 + s))
    d2g = alpha * rho * (1.0 + 2.0 * s) / (s ** 3 * (1.0 + s) ** 2)
    q = 1.0 + g * g
    f = scale * 2.0 * np.arctan(g)
    df = scale * 2.0 * dg / q
    d2f = scale * (2.0 * d2g / q - 4.0 * g * dg * dg / (q * q))
    one_m = 1.0 - rho * rho
    return d2f + (1.0 / rho - rho / one_m) * df - np.sin(2.0 * f) / (2.0 * rho * rho * one_m)


@dataclass(frozen=True)
class InitialDataFamily:
    """Degree-zero pulse ``A (r/R)^3 exp(-((r - R)/delta)^4)`` with zero momentum."""

    amplitude: float
    radius: float = 2.0
    delta: float = 0.4

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius!r}")
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta!r}")

    def profile(self, r):
        return initial_profile(self, r)

    def profile_dr(self, r):
        """Analytic radial derivative of the pulse."""
        r = np.asarray(r, dtype=float)
        x = r / self.radius
        y = (r - self.radius) / self.delta
        envelope = np.exp(-y ** 4)
        return self.amplitude * envelope * (
            3.0 * x * x / self.radius - 4.0 * x ** 3 * y ** 3 / self.delta)

    def momentum(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))


def initial_profile(family, r):
    """Evaluate the pulse of ``family`` at radius ``r``."""
    r = np.asarray(r, dtype=float)
    return (family.amplitude * (r / family.radius) ** 3
            * np.exp(-((r - family.radius) / family.delta) ** 4))


def static_energy_in_ball(lam, r_max):
    """Energy of ``u_S(r/lam)`` inside ``r < r_max``: ``4 pi r_max^2 / (lam^2 + r_max^2)``.

    The static solution carries no kinetic energy, so this is all potential.
    ``r_max = np.inf`` returns the full harmonic-map energy ``4 pi``.
    """
    _check_scale(lam)
    if r_max <= 0:
        raise ValueError(f"r_max must be positive, got {r_max!r}")
    if np.isinf(r_max):
        return FOUR_PI
    return FOUR_PI * r_max * r_max / (lam * lam + r_max * r_max)
