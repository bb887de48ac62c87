"""Round 2-sphere of radius r in colatitude/longitude coordinates.

Points are (theta, phi) with theta in (0, pi) measured from the north
puncture and phi the longitude.  The Mercator chart x = log tan(theta/2)
is conformal, with metric lambda * (dx^2 + dphi^2) and lambda = r^2 sin^2.

Everything here accepts numpy arrays and is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

EPS_POLE = 1e-9
FD_STEP = 1e-5
# second differences need a coarser step to stay above round-off
CURVATURE_STEP = 1e-2


class DomainError(ValueError):
    """A point lies outside the domain where a quantity is defined."""


class ConvergenceError(RuntimeError):
    """A numerical procedure failed to reach its tolerance."""


def check_interior(theta, eps: float = EPS_POLE) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if np.any(~np.isfinite(theta)) or np.any(theta < eps) or np.any(theta > np.pi - eps):
        raise DomainError(
            f"colatitude must lie in [{eps:g}, pi - {eps:g}]; got range "
            f"[{np.min(theta):.6g}, {np.max(theta):.6g}]"
        )
    return theta


def check_radius(r: float) -> float:
    if not r > 0:
        raise DomainError(f"radius must be positive, got {r!r}")
    return float(r)


@dataclass(frozen=True)
class SphereChart:
    """The punctured sphere with its coordinate domain (0, pi) x [0, 2 pi)."""

    radius: float = 1.0

    def __post_init__(self):
        check_radius(self.radius)

    def metric(self, theta):
        """Diagonal metric entries (g_theta_theta, g_phi_phi)."""
        theta = check_interior(theta)
        r2 = self.radius**2
        return np.full_like(theta, r2), r2 * np.sin(theta) ** 2

    def inner(self, theta, u, v):
        """Metric pairing of coordinate vectors u = (u_theta, u_phi), v likewise."""
        g_tt, g_pp = self.metric(theta)
        return g_tt * u[0] * v[0] + g_pp * u[1] * v[1]

    def conformal_factor(self, theta):
        return conformal_factor(theta, self.radius)

    def area_element(self, theta):
        """Density of the volume form against dtheta dphi."""
        theta = check_interior(theta)
        return self.radius**2 * np.sin(theta)


def conformal_factor(theta, r: float = 1.0):
    """lambda = r^2 sin^2(theta) of the Mercator chart."""
    theta = check_interior(theta)
    return check_radius(r) ** 2 * np.sin(theta) ** 2


def mercator_x(theta):
    """Mercator abscissa, normalised so the equator sits at x = 0."""
    theta = check_interior(theta)
    return np.log(np.tan(theta / 2.0))


def theta_of_x(x):
    """Inverse of :func:`mercator_x`."""
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)):
        raise DomainError("Mercator abscissa must be finite")
    return 2.0 * np.arctan(np.exp(x))


@dataclass(frozen=True)
class ConformalCoordinate:
    """A point z = x + i phi of the Mercator chart."""

    x: float
    phi: float

    @classmethod
    def from_polar(cls, theta: float, phi: float) -> "ConformalCoordinate":
        return cls(float(mercator_x(theta)), float(phi))

    @property
    def z(self) -> complex:
        return complex(self.x, self.phi)

    @property
    def theta(self) -> float:
        return float(theta_of_x(self.x))

    def conformal_factor(self, r: float = 1.0) -> float:
        return float(conformal_factor(self.theta, r))


@dataclass(frozen=True)
class ChristoffelTable:
    """Nonzero Levi-Civita data of the round metric at one colatitude.

    ``mixed`` is the coefficient of d_phi in nabla_theta d_phi = nabla_phi d_theta,
    ``phiphi`` the coefficient of d_theta in nabla_phi d_phi.  nabla_theta d_theta
    vanishes identically.
    """

    theta: np.ndarray
    mixed: np.ndarray
    phiphi: np.ndarray

    @property
    def thetatheta(self) -> np.ndarray:
        return np.zeros_like(self.mixed)

    def as_array(self) -> np.ndarray:
        """Gamma[k, i, j] with index 0 = theta, 1 = phi (scalar theta only)."""
        g = np.zeros((2, 2, 2))
        g[0, 1, 1] = self.phiphi
        g[1, 0, 1] = g[1, 1, 0] = self.mixed
        return g


def christoffel(theta) -> ChristoffelTable:
    theta = check_interior(theta)
    # the symbols do not depend on the radius
    return ChristoffelTable(theta, np.cos(theta) / np.sin(theta), -np.cos(theta) * np.sin(theta))


def central_difference(f: Callable, x, h: float = FD_STEP, richardson: bool = False):
    """First derivative of ``f`` at ``x`` by central differences.

    With ``richardson`` the step-h and step-2h estimates are combined to
    cancel the h^2 error term.
    """
    d_h = (f(x + h) - f(x - h)) / (2 * h)
    if not richardson:
        return d_h
    d_2h = (f(x + 2 * h) - f(x - 2 * h)) / (4 * h)
    return (4 * d_h - d_2h) / 3


def second_difference(f: Callable, x, h: float, richardson: bool = True):
    f0 = f(x)
    d_h = (f(x + h) - 2 * f0 + f(x - h)) / h**2
    if not richardson:
        return d_h
    d_2h = (f(x + 2 * h) - 2 * f0 + f(x - 2 * h)) / (4 * h**2)
    return (4 * d_h - d_2h) / 3


def gauss_curvature(theta, r: float = 1.0, h: float = CURVATURE_STEP, phi=0.0):
    """Gauss curvature K = -(2/lambda) d^2 log(lambda) / dz dzbar, by finite differences.

    The Wirtinger Laplacian is evaluated as (1/4)(d_xx + d_phiphi) in the
    Mercator chart with Richardson-extrapolated second differences.
    """
    theta = check_interior(theta)
    r = check_radius(r)
    if not h > 1e-7:
        raise ConvergenceError(f"curvature step {h!r} is below the round-off floor")
    x0 = mercator_x(theta)
    # the step must keep every stencil point off the poles
    if np.any(theta_of_x(x0 - 2 * h) < EPS_POLE) or np.any(theta_of_x(x0 + 2 * h) > np.pi - EPS_POLE):
        raise DomainError("curvature stencil reaches a pole")

    def log_lambda(x, p):
        return np.log(conformal_factor(theta_of_x(x), r)) * np.ones_like(p)

    d_xx = second_difference(lambda x: log_lambda(x, phi), x0, h)
    d_pp = second_difference(lambda p: log_lambda(x0, p), np.asarray(phi, dtype=float), h)
    laplacian = 0.25 * (d_xx + d_pp)
    return -2.0 / conformal_factor(theta, r) * laplacian


def covariant_derivative(field, direction, theta, phi, r: float = 1.0, h: float = FD_STEP):
    """nabla_direction X in coordinate components (theta, phi).

    ``direction`` is a coordinate vector (v_theta, v_phi).  Derivatives of the
    components X^theta = a/r, X^phi = b/(r sin theta) are central differences
    with step ``h``; the connection terms come from :func:`christoffel`.
    """
    theta = check_interior(np.asarray(theta, dtype=float))
    phi = np.asarray(phi, dtype=float)
    check_interior(theta - h)
    check_interior(theta + h)

    def components(t, p):
        a, b = field.coefficients(t, p)
        return a / r, b / (r * np.sin(t))

    xt, xp = components(theta, phi)
    tp, tm = components(theta + h, phi), components(theta - h, phi)
    pp, pm = components(theta, phi + h), components(theta, phi - h)
    d_theta = [(tp[i] - tm[i]) / (2 * h) for i in range(2)]
    d_phi = [(pp[i] - pm[i]) / (2 * h) for i in range(2)]

    vt, vp = direction
    gam = christoffel(theta)
    out_t = vt * d_theta[0] + vp * d_phi[0] + gam.phiphi * vp * xp
    out_p = vt * d_theta[1] + vp * d_phi[1] + gam.mixed * (vt * xp + vp * xt)
    return out_t, out_p
