"""Volume of unit vector fields and the comparison inequalities around it.

The volume of a unit field X on a region of the sphere is

    vol(X) = integral of sqrt(1 + A0^2 + A1^2) r^2 sin(theta) dtheta dphi,

since nabla X takes values along Y and its frame components are A0, A1.
Rectangles are integrated with tensor Gauss-Legendre rules; regions given
by an inequality go through an adaptive quadtree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.optimize import newton

from .fields import AngleField, LatitudeField, LatitudeSpec, MeridianField, ZetaSpec
from .first_order import a_components
from .geometry import ConvergenceError, DomainError

TWO_PI = 2.0 * math.pi
VOLUME_RTOL = 1e-8


@dataclass(frozen=True)
class QuadratureSpec:
    """How to integrate: tensor Gauss-Legendre panels, or adaptive subdivision.

    ``pole_limit`` lets rectangle rules run over the closed colatitude range;
    Gauss nodes never touch the poles, so only the continuous extension of
    the integrand is used.
    """

    rule: str = "gauss-legendre"
    panels: tuple = (256, 256)
    tol: float = VOLUME_RTOL
    pole_limit: bool = True
    max_depth: int = 16
    min_cell_area: float = 1e-8

    def __post_init__(self):
        if self.rule not in ("gauss-legendre", "adaptive"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if not self.tol > 0:
            raise ValueError("quadrature tolerance must be positive")
        if min(self.panels) < 4:
            raise ValueError("at least 4 panels per direction are required")


@dataclass(frozen=True)
class DomainRegion:
    """A subset of D = (0, pi) x (0, 2 pi) in (theta, phi).

    ``predicate(theta, phi) -> bool array`` describes non-rectangular regions
    inside the bounding box ``theta_range`` x ``phi_range``.
    """

    kind: str = "full-D"
    theta_range: tuple = (0.0, math.pi)
    phi_range: tuple = (0.0, TWO_PI)
    predicate: Optional[Callable] = dc_field(default=None, compare=False)
    label: str = ""

    def __post_init__(self):
        t0, t1 = self.theta_range
        p0, p1 = self.phi_range
        if not (0.0 <= t0 < t1 <= math.pi and 0.0 <= p0 < p1 <= TWO_PI):
            raise DomainError(f"region {self.theta_range} x {self.phi_range} is not a nonempty subset of D")
        if self.kind == "predicate" and self.predicate is None:
            raise ValueError("predicate regions need a membership test")

    @classmethod
    def full(cls) -> "DomainRegion":
        return cls()

    @classmethod
    def rectangle(cls, theta_range, phi_range) -> "DomainRegion":
        return cls("rectangle", tuple(map(float, theta_range)), tuple(map(float, phi_range)))

    @property
    def box_area(self) -> float:
        return (self.theta_range[1] - self.theta_range[0]) * (self.phi_range[1] - self.phi_range[0])

    @property
    def euclidean_area(self) -> float:
        """Coordinate area of the region, integral of dtheta dphi."""
        if self.kind != "predicate":
            return self.box_area
        return _predicate_area(self)

    def contains(self, theta, phi):
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        inside = ((theta > self.theta_range[0]) & (theta < self.theta_range[1])
                  & (phi > self.phi_range[0]) & (phi < self.phi_range[1]))
        if self.predicate is not None:
            inside &= self.predicate(theta, phi)
        return inside

    def describe(self) -> dict:
        out = {"kind": self.kind, "theta_range": list(self.theta_range), "phi_range": list(self.phi_range)}
        if self.label:
            out["label"] = self.label
        return out


@lru_cache(maxsize=32)
def _predicate_area(region: DomainRegion) -> float:
    value, _ = adaptive_integrate(lambda t, p: np.ones_like(t), region)
    return value


@dataclass(frozen=True)
class VolumeResult:
    value: float
    error: float
    region: DomainRegion
    spec: QuadratureSpec

    def to_dict(self) -> dict:
        return {"region": self.region.describe(), "value": self.value, "error": self.error,
                "rule": self.spec.rule}


@lru_cache(maxsize=64)
def gauss_legendre(n: int):
    """Nodes and weights on [-1, 1], symmetrised to be exactly mirror images."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return x, w


def _mapped(n, lo, hi):
    x, w = gauss_legendre(n)
    half = 0.5 * (hi - lo)
    return 0.5 * (lo + hi) + half * x, half * w


def _accurate_sum(values) -> float:
    return math.fsum(np.ravel(values).tolist())


def tensor_gauss(func: Callable, theta_range, phi_range, n_theta: int, n_phi: int) -> float:
    t, wt = _mapped(n_theta, *theta_range)
    p, wp = _mapped(n_phi, *phi_range)
    tt, pp = np.meshgrid(t, p, indexing="ij")
    return _accurate_sum(func(tt, pp) * np.outer(wt, wp))


def gauss_1d(func: Callable, lo: float, hi: float, n: int) -> float:
    t, w = _mapped(n, lo, hi)
    return _accurate_sum(func(t) * w)


def volume_integrand(field: AngleField, theta, phi, r: float = 1.0):
    """sqrt(1 + |A|^2) r^2 sin(theta), the volume density against dtheta dphi."""
    A = a_components(field, theta, phi, r)
    return np.sqrt(1.0 + A.modulus_sq) * r * r * np.sin(theta)


def meridian_integrand(k, theta, r: float = 1.0):
    """r sqrt(r^2 sin^2 + (k + cos)^2): the phi-independent density of X_{m,k}."""
    return r * np.sqrt((r * np.sin(theta)) ** 2 + (k + np.cos(theta)) ** 2)


def _check_converged(value, error, tol, what):
    if error > tol * max(1.0, abs(value)):
        raise ConvergenceError(f"{what}: refinements disagree by {error:.3g} (tolerance {tol:.3g})")


def volume(field: AngleField, region: DomainRegion | None = None, spec: QuadratureSpec | None = None,
           r: float = 1.0) -> VolumeResult:
    region = region or DomainRegion.full()
    spec = spec or QuadratureSpec()

    def density(t, p):
        return volume_integrand(field, t, p, r)

    if region.kind == "predicate" or spec.rule == "adaptive":
        value, error = adaptive_integrate(density, region, spec.max_depth, spec.min_cell_area)
        return VolumeResult(value, error, region, spec)

    n_t, n_p = spec.panels
    fine = tensor_gauss(density, region.theta_range, region.phi_range, n_t, n_p)
    coarse = tensor_gauss(density, region.theta_range, region.phi_range, n_t // 2, n_p // 2)
    error = abs(fine - coarse)
    _check_converged(fine, error, spec.tol, "volume")
    return VolumeResult(fine, error, region, spec)


def volume_meridian_closed(k: int, theta_range=(0.0, math.pi), r: float = 1.0,
                           phi_extent: float = TWO_PI, n: int = 512) -> float:
    """Volume of X_{m,k} over theta_range x (phi interval of length phi_extent).

    The density does not depend on phi, so a 1-D Gauss rule suffices.
    """
    lo, hi = theta_range
    fine = gauss_1d(lambda t: meridian_integrand(k, t, r), lo, hi, n)
    coarse = gauss_1d(lambda t: meridian_integrand(k, t, r), lo, hi, n // 2)
    _check_converged(fine, abs(fine - coarse), 1e-12, "meridian volume")
    return phi_extent * fine


@dataclass(frozen=True)
class BoundsCheck:
    k: int
    lower: float
    volume: float
    upper: float

    @property
    def holds(self) -> bool:
        return self.lower < self.volume < self.upper

    @property
    def margins(self):
        return self.volume - self.lower, self.upper - self.volume

    def to_dict(self) -> dict:
        lo, hi = self.margins
        return {"k": self.k, "lower": self.lower, "volume": self.volume, "upper": self.upper,
                "holds": self.holds, "margin_lower": lo, "margin_upper": hi}


def bounds_check(k: int, region: DomainRegion | None = None, spec: QuadratureSpec | None = None) -> BoundsCheck:
    """(k - 1) area < vol(X_{m,k} on region) < (k + 1) area on the unit sphere."""
    if k < 1:
        raise ValueError("the sandwich bound is stated for k >= 1")
    region = region or DomainRegion.full()
    area = region.euclidean_area
    if region.kind == "predicate":
        vol = volume(MeridianField(ZetaSpec(k)), region, spec).value
    else:
        vol = volume_meridian_closed(k, region.theta_range, 1.0, region.phi_range[1] - region.phi_range[0])
    return BoundsCheck(k, (k - 1) * area, vol, (k + 1) * area)


def bcj_lower_bound(index_s: int, index_n: int) -> float:
    """(pi + |I_S| + |I_N| - 2) 2 pi, a lower bound for any unit field on the unit sphere."""
    return (math.pi + abs(index_s) + abs(index_n) - 2) * TWO_PI


# -- adaptive quadrature over predicate regions ---------------------------------

_CELL_RULE = 4
_SUBSAMPLE = 4


def _classify(region, t0, t1, p0, p1):
    """+1 inside, -1 outside, 0 straddling; sampled on a 3x3 lattice per cell."""
    frac = np.array([0.0, 0.5, 1.0])
    tt = t0[:, None, None] + (t1 - t0)[:, None, None] * frac[None, :, None]
    pp = p0[:, None, None] + (p1 - p0)[:, None, None] * frac[None, None, :]
    tt, pp = np.broadcast_arrays(tt, pp)
    with np.errstate(all="ignore"):
        inside = np.asarray(region.predicate(tt, pp), dtype=bool)
    n_in = inside.reshape(len(t0), -1).sum(axis=1)
    return np.where(n_in == 9, 1, np.where(n_in == 0, -1, 0))


def _gauss_cells(func, t0, t1, p0, p1, n=_CELL_RULE):
    x, w = gauss_legendre(n)
    u = 0.5 * (x + 1.0)
    tt = t0[:, None, None] + (t1 - t0)[:, None, None] * u[None, :, None]
    pp = p0[:, None, None] + (p1 - p0)[:, None, None] * u[None, None, :]
    tt, pp = np.broadcast_arrays(tt, pp)
    ww = 0.25 * np.outer(w, w)[None] * ((t1 - t0) * (p1 - p0))[:, None, None]
    return func(tt, pp) * ww


def _straddle_estimate(func, region, t0, t1, p0, p1, m=_SUBSAMPLE):
    """Midpoint sub-sampling of the region indicator times the integrand."""
    u = (np.arange(m) + 0.5) / m
    tt = t0[:, None, None] + (t1 - t0)[:, None, None] * u[None, :, None]
    pp = p0[:, None, None] + (p1 - p0)[:, None, None] * u[None, None, :]
    tt, pp = np.broadcast_arrays(tt, pp)
    inside = np.asarray(region.predicate(tt, pp), dtype=bool)
    vals = np.zeros(tt.shape)
    if inside.any():
        vals[inside] = func(tt[inside], pp[inside])
    cell = ((t1 - t0) * (p1 - p0))[:, None, None] / (m * m)
    return vals * cell


def adaptive_integrate(func: Callable, region: DomainRegion, max_depth: int = 16,
                       min_cell_area: float = 1e-8, tol: float = 1e-10):
    """Integrate func over a predicate region by quadtree cell classification.

    Cells entirely inside are accepted once their 4x4 and 8x8 Gauss values
    agree to within their area share of ``tol``, and split otherwise.  Cells
    outside are dropped.  Straddling cells are split until their area is
    below ``min_cell_area`` and the survivors are sub-sampled.  The error
    estimate adds the accepted Gauss discrepancies to the larger of the last
    two level-to-level changes (the indicator sub-sampling converges
    erratically, so a single change can understate the error).
    """
    if region.predicate is None:
        region = DomainRegion("predicate", region.theta_range, region.phi_range,
                              lambda t, p: np.ones(np.shape(t), dtype=bool))
    t0 = np.array([region.theta_range[0]])
    t1 = np.array([region.theta_range[1]])
    p0 = np.array([region.phi_range[0]])
    p1 = np.array([region.phi_range[1]])
    box = region.box_area
    inside_parts, inside_errors = [], []
    history = []
    depth = 0
    while True:
        cls = _classify(region, t0, t1, p0, p1)
        full = cls == 1
        split_inside = np.zeros(t0.shape, dtype=bool)
        if full.any():
            idx = np.flatnonzero(full)
            fine = _gauss_cells(func, t0[idx], t1[idx], p0[idx], p1[idx], 2 * _CELL_RULE)
            coarse = _gauss_cells(func, t0[idx], t1[idx], p0[idx], p1[idx], _CELL_RULE)
            fine_sum = fine.sum(axis=(1, 2))
            diff = np.abs(fine_sum - coarse.sum(axis=(1, 2)))
            share = tol * (t1[idx] - t0[idx]) * (p1[idx] - p0[idx]) / box
            ok = (diff <= share) | (depth >= max_depth)
            inside_parts.append(fine[ok].ravel())
            inside_errors.append(diff[ok])
            split_inside[idx[~ok]] = True
        keep = (cls == 0) | split_inside
        straddling = cls[keep] == 0
        t0, t1, p0, p1 = t0[keep], t1[keep], p0[keep], p1[keep]
        inside_total = math.fsum(np.concatenate(inside_parts).tolist()) if inside_parts else 0.0
        inside_error = math.fsum(np.concatenate(inside_errors).tolist()) if inside_errors else 0.0
        st = [a[straddling] for a in (t0, t1, p0, p1)]
        straddle = _accurate_sum(_straddle_estimate(func, region, *st)) if st[0].size else 0.0
        area = (st[1] - st[0]) * (st[3] - st[2])
        pending_inside = bool((~straddling).any())
        if t0.size == 0 or depth >= max_depth or (not pending_inside and area.max() < min_cell_area):
            estimate = inside_total + straddle
            history.append(estimate)
            changes = np.abs(np.diff(history[-3:]))
            change = float(changes.max()) if changes.size else abs(straddle)
            return estimate, change + inside_error
        if not pending_inside:
            history.append(inside_total + straddle)
        tm, pm = 0.5 * (t0 + t1), 0.5 * (p0 + p1)
        t0, t1, p0, p1 = (
            np.concatenate([t0, tm, t0, tm]),
            np.concatenate([tm, t1, tm, t1]),
            np.concatenate([p0, p0, pm, pm]),
            np.concatenate([pm, pm, p1, p1]),
        )
        depth += 1


# -- the region where a latitude field beats every meridian field ---------------

def omega_predicate(theta, phi):
    """phi sin^2(theta) < |cos(theta)|."""
    theta = np.asarray(theta, dtype=float)
    return np.asarray(phi) * np.sin(theta) ** 2 < np.abs(np.cos(theta))


def omega_region() -> DomainRegion:
    """{phi != 0, phi sin^2 theta < |cos theta|} inside D, for the unit sphere.

    The excluded meridian phi = 0 is a null set and sits on the box boundary.
    """
    return DomainRegion("predicate", (0.0, math.pi), (0.0, TWO_PI), omega_predicate, label="omega")


def omega_pointwise(theta, phi):
    """(1 + phi^2 sin^2 theta) sin^2 theta, which stays below one on Omega."""
    s2 = np.sin(theta) ** 2
    return (1.0 + np.asarray(phi) ** 2 * s2) * s2


@dataclass(frozen=True)
class OmegaComparison:
    volume_latitude: float
    volume_euclid: float
    error_latitude: float
    error_euclid: float
    pointwise_samples: int
    pointwise_max: float

    @property
    def margin(self) -> float:
        return self.volume_euclid - self.volume_latitude

    @property
    def verdict(self) -> bool:
        return self.margin > self.error_latitude + self.error_euclid

    @property
    def pointwise_ok(self) -> bool:
        return self.pointwise_max < 1.0

    def to_dict(self) -> dict:
        return {
            "region": omega_region().describe(),
            "volume_latitude": self.volume_latitude,
            "volume_euclid": self.volume_euclid,
            "error_latitude": self.error_latitude,
            "error_euclid": self.error_euclid,
            "margin": self.margin,
            "verdict": self.verdict,
            "pointwise_samples": self.pointwise_samples,
            "pointwise_max": self.pointwise_max,
            "pointwise_ok": self.pointwise_ok,
            "theta0": theta0_solve(),
        }


def sample_region(region: DomainRegion, n: int, seed: int = 0):
    """n points drawn uniformly (in dtheta dphi) from the region, by rejection."""
    rng = np.random.default_rng(seed)
    got_t, got_p, count = [], [], 0
    while count < n:
        t = rng.uniform(*region.theta_range, size=4 * n)
        p = rng.uniform(*region.phi_range, size=4 * n)
        keep = region.contains(t, p)
        got_t.append(t[keep])
        got_p.append(p[keep])
        count += int(keep.sum())
    return np.concatenate(got_t)[:n], np.concatenate(got_p)[:n]


def omega_compare(spec: LatitudeSpec = LatitudeSpec(), n_pointwise: int = 10_000, seed: int = 0,
                  quad: QuadratureSpec | None = None) -> OmegaComparison:
    quad = quad or QuadratureSpec(rule="adaptive")
    region = omega_region()
    field = LatitudeField(spec)
    vol_l, err_l = adaptive_integrate(lambda t, p: volume_integrand(field, t, p, 1.0), region,
                                      quad.max_depth, quad.min_cell_area)
    vol_e, err_e = adaptive_integrate(lambda t, p: np.ones_like(t), region, quad.max_depth, quad.min_cell_area)
    t, p = sample_region(region, n_pointwise, seed)
    return OmegaComparison(vol_l, vol_e, err_l, err_e, n_pointwise, float(np.max(omega_pointwise(t, p))))


def _theta0_equation(theta):
    return math.cos(theta) / math.sin(theta) ** 2 - TWO_PI


def theta0_bisect(tol: float = 1e-15) -> float:
    """Root of cos/sin^2 = 2 pi on (0, pi/2) by bisection; the left side decreases."""
    lo, hi = 1e-3, 0.5 * math.pi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _theta0_equation(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def theta0_solve() -> float:
    """Colatitude below which Omega contains whole punctured parallels."""
    def slope(theta):
        s, c = math.sin(theta), math.cos(theta)
        return -1.0 / s - 2.0 * c * c / s**3

    return float(newton(_theta0_equation, theta0_bisect(1e-6), fprime=slope, tol=1e-15, maxiter=50))


def sweep_rows(k_values, spec: QuadratureSpec | None = None):
    """k, volume, the sandwich bounds (k -+ 1) 2 pi^2 and the BCJ bound over full D, r = 1."""
    area = 2 * math.pi**2
    for k in k_values:
        vol = volume_meridian_closed(k)
        yield {
            "k": k,
            "volume": vol,
            "lower_bound_sandwich": (abs(k) - 1) * area,
            "upper_bound_sandwich": (abs(k) + 1) * area,
            "bcj_bound": bcj_lower_bound(1 + abs(k), abs(1 - abs(k))),
        }
