"""The A-function of a unit field and its first-order minimality residuals.

For a unit field X with direct orthonormal partner Y,

    A0 = <nabla_X X, Y>,    A1 = <nabla_Y X, Y>,    A = A1 + i A0,

and the normalised value M = A / sqrt(1 + |A|^2) enters three residuals:

* Cauchy-Riemann:  d M / d zbar in the Mercator chart,
* Euler-Lagrange:  X(A0 / s) + Y(A1 / s),
* real part:       X(A1 / s) - Y(A0 / s),

with s = sqrt(1 + |A|^2).  The last two are the imaginary and real parts of
dM(X + iY).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .fields import (
    AngleField,
    LatitudeField,
    LatitudeSpec,
    MeridianField,
    SyntheticField,
    ZetaSpec,
)
from .geometry import FD_STEP, DomainError, check_interior, check_radius, covariant_derivative, mercator_x, theta_of_x

GRID_EPS = 0.05
GRID_SIZE = 101


@dataclass(frozen=True)
class AComponents:
    A0: np.ndarray
    A1: np.ndarray

    @property
    def value(self):
        """A = A1 + i A0."""
        return self.A1 + 1j * self.A0

    @property
    def modulus_sq(self):
        return self.A0**2 + self.A1**2


def _frame(field: AngleField, theta, phi, r):
    a, b = field.coefficients(theta, phi)
    s = r * np.sin(theta)
    x_vec = (a / r, b / s)
    y_vec = (-b / r, a / s)
    return a, b, x_vec, y_vec


def a_components_meridian(spec: ZetaSpec, theta, phi, r: float = 1.0) -> AComponents:
    """Closed form for fields parallel along meridians, alpha = zeta(phi)."""
    theta = check_interior(theta)
    zeta = spec.zeta(phi)
    common = (spec.dzeta(phi) + np.cos(theta)) / (r * np.sin(theta))
    return AComponents(np.sin(zeta) * common, np.cos(zeta) * common)


def a_components_latitude(spec: LatitudeSpec, theta, phi, r: float = 1.0) -> AComponents:
    a, b = LatitudeField(spec).coefficients(theta, phi)
    rate = np.asarray(phi) * np.sin(theta) / r
    return AComponents(a * rate, -b * rate)


def a_components_from_gradient(field: AngleField, theta, phi, r: float = 1.0) -> AComponents:
    """A-components from the gradient of the frame angle.

    nabla_V X = (d alpha(V) + cos(theta) d phi(V)) Y on the round sphere.
    """
    theta = check_interior(theta)
    a, b = field.coefficients(theta, phi)
    d_t, d_p = field.angle_gradient(theta, phi)
    s = r * np.sin(theta)
    twist = d_p + np.cos(theta)
    a0 = a * d_t / r + b * twist / s
    a1 = -b * d_t / r + a * twist / s
    return AComponents(a0, a1)


def a_components_generic(field: AngleField, theta, phi, r: float = 1.0, h: float = FD_STEP) -> AComponents:
    """A-components through finite-difference covariant derivatives of X."""
    theta = check_interior(theta)
    phi = np.asarray(phi, dtype=float)
    a, b, x_vec, y_vec = _frame(field, theta, phi, r)
    nxx = covariant_derivative(field, x_vec, theta, phi, r, h)
    nyx = covariant_derivative(field, y_vec, theta, phi, r, h)
    g_tt, g_pp = r * r, (r * np.sin(theta)) ** 2

    def pair(u):
        return g_tt * u[0] * y_vec[0] + g_pp * u[1] * y_vec[1]

    return AComponents(pair(nxx), pair(nyx))


def a_components(field: AngleField, theta, phi, r: float = 1.0) -> AComponents:
    """Best available A-components: closed form where known, else generic."""
    if isinstance(field, SyntheticField):
        check_interior(theta)
        a0, a1 = field.a_func(theta, phi)
        shape = np.broadcast_shapes(np.shape(theta), np.shape(phi))
        return AComponents(np.broadcast_to(a0, shape) * 1.0, np.broadcast_to(a1, shape) * 1.0)
    if isinstance(field, MeridianField):
        return a_components_meridian(field.spec, theta, phi, r)
    if isinstance(field, LatitudeField):
        return a_components_latitude(field.spec, theta, phi, r)
    try:
        return a_components_from_gradient(field, theta, phi, r)
    except NotImplementedError:
        return a_components_generic(field, theta, phi, r)


def magnus(A: AComponents):
    """(A1 + i A0) / sqrt(1 + |A|^2); always of modulus below one."""
    return A.value / np.sqrt(1.0 + A.modulus_sq)


def _normalised_parts(field, theta, phi, r):
    A = a_components(field, theta, phi, r)
    s = np.sqrt(1.0 + A.modulus_sq)
    return A.A0 / s, A.A1 / s


def _directional(func, theta, phi, vec, h):
    """Central difference of func along the coordinate vector vec."""
    tp, pp = theta + h * vec[0], phi + h * vec[1]
    tm, pm = theta - h * vec[0], phi - h * vec[1]
    fp, fm = func(tp, pp), func(tm, pm)
    return [(p - m) / (2 * h) for p, m in zip(fp, fm)]


def _x_y_derivatives(field, theta, phi, r, h):
    theta = check_interior(theta)
    phi = np.asarray(phi, dtype=float)
    _, _, x_vec, y_vec = _frame(field, theta, phi, r)

    def parts(t, p):
        return _normalised_parts(field, t, p, r)

    dx = _directional(parts, theta, phi, x_vec, h)
    dy = _directional(parts, theta, phi, y_vec, h)
    return dx, dy


def el_residual(field: AngleField, theta, phi, r: float = 1.0, h: float = FD_STEP):
    """X(A0/s) + Y(A1/s)."""
    dx, dy = _x_y_derivatives(field, theta, phi, r, h)
    return dx[0] + dy[1]


def realpart_residual(field: AngleField, theta, phi, r: float = 1.0, h: float = FD_STEP):
    """X(A1/s) - Y(A0/s)."""
    dx, dy = _x_y_derivatives(field, theta, phi, r, h)
    return dx[1] - dy[0]


def cr_residual(field: AngleField, theta, phi, r: float = 1.0, h: float = FD_STEP):
    """d M / d zbar = (1/2)(d_x + i d_phi) M in the Mercator chart."""
    theta = check_interior(theta)
    phi = np.asarray(phi, dtype=float)
    x = mercator_x(theta)

    def m(t, p):
        return magnus(a_components(field, t, p, r))

    d_x = (m(theta_of_x(x + h), phi) - m(theta_of_x(x - h), phi)) / (2 * h)
    d_phi = (m(theta, phi + h) - m(theta, phi - h)) / (2 * h)
    return 0.5 * (d_x + 1j * d_phi)


def meridian_directional_identity(spec: ZetaSpec, theta, r: float = 1.0):
    """dM(X + iY) for a linear zeta = k phi + phi0, in closed form.

    Equals f'(theta)/r - k f/(r sin theta) with
    f = (k + cos theta) / sqrt(r^2 sin^2 theta + (k + cos theta)^2); it is real.
    """
    if spec.fourier:
        raise ValueError("the closed form holds for linear zeta only")
    theta = check_interior(theta)
    k = spec.k
    s, c = np.sin(theta), np.cos(theta)
    u = k + c
    d = r * r * s * s + u * u
    f = u / np.sqrt(d)
    f_prime = -r * r * s * (s * s + u * c) / d**1.5
    return (f_prime / r - k * f / (r * s)) + 0j


@dataclass(frozen=True)
class ResidualGrid:
    """Tensor grid of colatitudes [eps, pi - eps] and longitudes.

    ``phi_offset`` shifts longitudes off the phi = 0 meridian (in units of
    the spacing), which slit fields require.
    """

    n_theta: int = GRID_SIZE
    n_phi: int = GRID_SIZE
    eps: float = GRID_EPS
    phi_offset: float = 0.0

    def axes(self):
        theta = np.linspace(self.eps, math.pi - self.eps, self.n_theta)
        phi = 2 * math.pi * (np.arange(self.n_phi) + self.phi_offset) / self.n_phi
        return theta, phi

    def describe(self) -> dict:
        return {
            "n_theta": self.n_theta,
            "n_phi": self.n_phi,
            "theta_range": [self.eps, math.pi - self.eps],
            "phi_offset": self.phi_offset,
        }


def default_grid(field: AngleField, n_theta: int = GRID_SIZE, n_phi: int = GRID_SIZE) -> ResidualGrid:
    return ResidualGrid(n_theta, n_phi, GRID_EPS, 0.0 if field.full_circle else 0.5)


@dataclass
class ResidualReport:
    grid: ResidualGrid
    theta: np.ndarray
    phi: np.ndarray
    cr: np.ndarray
    el: np.ndarray
    realpart: np.ndarray

    @staticmethod
    def _sup(values):
        mag = np.abs(values)
        # argmax returns the first maximum in (theta, phi) lexicographic order
        idx = np.unravel_index(int(np.argmax(mag)), mag.shape)
        return float(mag[idx]), idx

    def sup(self, name: str) -> float:
        return self._sup(getattr(self, name))[0]

    def argsup(self, name: str):
        _, (i, j) = self._sup(getattr(self, name))
        return float(self.theta[i]), float(self.phi[j])

    @property
    def sup_cr(self):
        return self.sup("cr")

    @property
    def sup_el(self):
        return self.sup("el")

    @property
    def sup_realpart(self):
        return self.sup("realpart")

    def summary(self) -> dict:
        out = {"grid": self.grid.describe()}
        for name in ("cr", "el", "realpart"):
            out[f"sup_{name}"] = self.sup(name)
            out[f"argsup_{name}"] = list(self.argsup(name))
        return out

    def rows(self):
        for i, t in enumerate(self.theta):
            for j, p in enumerate(self.phi):
                c = self.cr[i, j]
                yield (float(t), float(p), float(c.real), float(c.imag),
                       float(self.el[i, j]), float(self.realpart[i, j]))

    def to_csv(self, digits: int = 12) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theta", "phi", "cr_re", "cr_im", "el", "realpart"])
        for row in self.rows():
            w.writerow([f"{v:.{digits}g}" for v in row])
        return buf.getvalue()


def residual_report(field: AngleField, r: float = 1.0, grid: ResidualGrid | None = None,
                    h: float = FD_STEP) -> ResidualReport:
    check_radius(r)
    grid = grid or default_grid(field)
    theta, phi = grid.axes()
    if not field.full_circle and (phi.min() - h <= 0.0 or phi.max() + h >= 2 * math.pi):
        raise DomainError(f"{field.family} field is slit along phi = 0; shift the grid off the slit")
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    dx, dy = _x_y_derivatives(field, tt, pp, r, h)
    return ResidualReport(
        grid, theta, phi,
        cr_residual(field, tt, pp, r, h),
        dx[0] + dy[1],
        dx[1] - dy[0],
    )
