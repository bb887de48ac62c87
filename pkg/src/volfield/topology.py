"""Winding of a unit field against parallel transport, and indices at the punctures.

Along the parallel theta = const a reference vector is carried by the
connection ODE  dV/dphi + Gamma(d_phi, V) = 0.  The relative winding is the
total turning of X measured against that reference, divided by 2 pi.

Orientation convention.  With colatitude read from theta = 0 and phi
increasing, X_{m,k} has relative winding k + cos(theta), which puts the
indices (1 + k, 1 - k) at (theta -> 0, theta -> pi).  The ``"antipodal"``
convention (the default) reads colatitude from the opposite pole, i.e.
reports the winding of the circle at pi - theta traversed backwards; it gives
cos(theta) - k and the indices (1 - k, 1 + k).  ``"geometric"`` is the plain
reading.  The two conventions swap the pole indices; their multiset and
their sum are the same.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import solve_ivp

from .fields import AngleField
from .geometry import DomainError, check_interior, christoffel

CONVENTIONS = ("antipodal", "geometric")
DEFAULT_SAMPLES = 720
MAX_DOUBLINGS = 3
LIMIT_RADII = (0.02, 0.01, 0.005)
ROUNDING_TOL = 0.05


class UnwrapError(RuntimeError):
    """The relative angle jumps too much between samples to be unwrapped."""


class PoleIndexError(ValueError):
    """A winding limit is not an integer: the field does not close up around a puncture."""


def parallel_frame_angles(theta: float, phi, rtol: float = 1e-12, atol: float = 1e-13):
    """Frame angle of a vector parallel-transported along the parallel theta.

    Starts from e_theta at phi[0]; components are integrated in coordinates
    with the Christoffel symbols, then converted to an angle against
    (e_theta, e_phi).
    """
    theta = float(check_interior(theta))
    gam = christoffel(theta)
    mixed, phiphi = float(gam.mixed), float(gam.phiphi)

    def rhs(_, v):
        # dV^theta = -Gamma^theta_{phi phi} V^phi,  dV^phi = -Gamma^phi_{phi theta} V^theta
        return [-phiphi * v[1], -mixed * v[0]]

    phi = np.asarray(phi, dtype=float)
    sol = solve_ivp(rhs, (phi[0], phi[-1]), [1.0, 0.0], t_eval=phi, method="DOP853",
                    rtol=rtol, atol=atol)
    v_t, v_p = sol.y
    # frame components: e_theta part r v^theta, e_phi part r sin(theta) v^phi
    return np.arctan2(math.sin(theta) * v_p, v_t)


def _wrap(x):
    return (x + math.pi) % (2 * math.pi) - math.pi


def _relative_winding_geometric(field: AngleField, theta: float, samples: int) -> float:
    if not field.full_circle:
        raise DomainError(f"{field.family} field is not defined on a whole parallel")
    n = samples
    for _ in range(MAX_DOUBLINGS + 1):
        phi = np.linspace(0.0, 2 * math.pi, n + 1)
        a, b = field.coefficients(np.full_like(phi, theta), phi)
        rel = np.arctan2(b, a) - parallel_frame_angles(theta, phi)
        steps = _wrap(np.diff(rel))
        if np.max(np.abs(steps)) <= 0.5 * math.pi:
            return float(np.sum(steps)) / (2 * math.pi)
        n *= 2
    raise UnwrapError(f"relative angle still jumps by more than pi/2 with {n // 2} samples")


def winding_relative_parallel(field: AngleField, theta: float, samples: int = DEFAULT_SAMPLES,
                              convention: str = "antipodal") -> float:
    """Turning of X relative to parallel transport around the parallel at theta, over 2 pi."""
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown orientation convention {convention!r}")
    if convention == "geometric":
        return _relative_winding_geometric(field, theta, samples)
    return -_relative_winding_geometric(field, math.pi - theta, samples)


@dataclass(frozen=True)
class IndexReport:
    index_N: int
    index_S: int
    winding_samples: tuple = dc_field(default=())
    convention: str = "antipodal"

    @property
    def euler_sum(self) -> int:
        return self.index_N + self.index_S

    def to_dict(self) -> dict:
        return {
            "index_N": self.index_N,
            "index_S": self.index_S,
            "euler_sum": self.euler_sum,
            "convention": self.convention,
            "winding_samples": [list(s) for s in self.winding_samples],
        }


def _limit(values, where):
    nearest = [round(v) for v in values]
    if len(set(nearest)) != 1 or any(abs(v - n) > ROUNDING_TOL for v, n in zip(values, nearest)):
        raise PoleIndexError(f"winding near the {where} puncture does not settle on an integer: {values}")
    return int(nearest[0])


def index_at_poles(field: AngleField, convention: str = "antipodal", radii=LIMIT_RADII,
                   samples: int = DEFAULT_SAMPLES) -> IndexReport:
    """Indices at the punctures from the winding on small parallels around them.

    The south index carries a minus sign: the parallel near theta = pi is
    traversed against the boundary orientation of the disk around that pole.
    """
    north = [(t, winding_relative_parallel(field, t, samples, convention)) for t in radii]
    south = [(math.pi - t, winding_relative_parallel(field, math.pi - t, samples, convention)) for t in radii]
    index_n = _limit([w for _, w in north], "north")
    index_s = -_limit([w for _, w in south], "south")
    return IndexReport(index_n, index_s, tuple(north + south), convention)


def poincare_hopf_check(report: IndexReport) -> bool:
    """The indices of a unit field on the twice-punctured sphere add up to chi(S^2) = 2."""
    return report.euler_sum == 2
