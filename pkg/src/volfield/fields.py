"""Unit vector field families on the twice-punctured sphere.

A unit field is X = (a/r) d_theta + (b/(r sin theta)) d_phi with a^2 + b^2 = 1,
stored through its frame angle alpha, a = cos(alpha), b = sin(alpha).  The
frame coefficients (a, b) do not depend on the radius.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .geometry import EPS_POLE, DomainError, check_interior

SCHEMA = "volfield-spec/1"
TWO_PI = 2.0 * math.pi


class FlowEscapeError(DomainError):
    """A loxodrome left the guarded domain before reaching the transversal."""


@dataclass(frozen=True)
class ZetaSpec:
    """zeta(phi) = k phi + phi0 + sum_n (c_n cos n phi + s_n sin n phi)."""

    k: int = 0
    phi0: float = 0.0
    fourier: tuple = ()

    def __post_init__(self):
        if int(self.k) != self.k:
            raise ValueError(f"winding must be an integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(
            self, "fourier", tuple((float(c), float(s)) for c, s in self.fourier)
        )

    @property
    def perturbation_norm(self) -> float:
        return math.sqrt(sum(c * c + s * s for c, s in self.fourier))

    def _modes(self, phi):
        phi = np.asarray(phi, dtype=float)
        n = np.arange(1, len(self.fourier) + 1)
        coef = np.asarray(self.fourier, dtype=float).reshape(-1, 2)
        return phi[..., None] * n, n, coef

    def zeta(self, phi):
        phi = np.asarray(phi, dtype=float)
        out = self.k * phi + self.phi0
        if self.fourier:
            arg, _, coef = self._modes(phi)
            out = out + np.cos(arg) @ coef[:, 0] + np.sin(arg) @ coef[:, 1]
        return out

    def dzeta(self, phi):
        phi = np.asarray(phi, dtype=float)
        out = np.full_like(phi, float(self.k))
        if self.fourier:
            arg, n, coef = self._modes(phi)
            out = out + np.cos(arg) @ (n * coef[:, 1]) - np.sin(arg) @ (n * coef[:, 0])
        return out

    def d2zeta(self, phi):
        phi = np.asarray(phi, dtype=float)
        out = np.zeros_like(phi)
        if self.fourier:
            arg, n, coef = self._modes(phi)
            out = -(np.cos(arg) @ (n**2 * coef[:, 0]) + np.sin(arg) @ (n**2 * coef[:, 1]))
        return out


@dataclass(frozen=True)
class LatitudeSpec:
    """Parameters of the circles-of-latitude field, eta = phi cos(theta) + phi0."""

    phi0: float = 0.0

    def eta(self, theta, phi):
        return np.asarray(phi, dtype=float) * np.cos(theta) + self.phi0


@dataclass(frozen=True)
class TTypeSpec:
    """Field parallel along the loxodromes of T = a_T e_theta + b_T e_phi.

    ``initial`` prescribes the frame angle on the transversal curve as a
    function of the transversal parameter: longitude phi on the equator,
    colatitude theta on the meridian phi = ``transversal_at``.
    """

    direction: tuple = (1.0, 0.0)
    initial: ZetaSpec = field(default_factory=ZetaSpec)
    transversal: str = "equator"
    transversal_at: float = math.pi

    def __post_init__(self):
        a_t, b_t = (float(v) for v in self.direction)
        if abs(a_t * a_t + b_t * b_t - 1.0) > 1e-12:
            raise ValueError(f"loxodrome direction must be a unit vector, got {self.direction}")
        object.__setattr__(self, "direction", (a_t, b_t))
        if self.transversal not in ("equator", "meridian"):
            raise ValueError(f"unknown transversal {self.transversal!r}")
        if self.transversal == "equator" and a_t == 0.0:
            raise ValueError("a loxodrome along the parallels never crosses the equator")
        if self.transversal == "meridian" and b_t == 0.0:
            raise ValueError("a meridian loxodrome never crosses another meridian")


class AngleField:
    """Common surface of the field families.

    Subclasses provide ``angle`` (the unwrapped frame angle) and, when known in
    closed form, ``angle_gradient``.  ``winding`` is None for fields that are
    not defined on a whole circle of latitude.
    """

    family: str = "field"
    winding: Optional[int] = None

    def check_domain(self, theta, phi):
        check_interior(theta)

    def angle(self, theta, phi):
        raise NotImplementedError

    def angle_gradient(self, theta, phi):
        raise NotImplementedError(f"{self.family} fields have no closed-form gradient")

    def coefficients(self, theta, phi):
        alpha = self.angle(theta, phi)
        return np.cos(alpha), np.sin(alpha)

    @property
    def full_circle(self) -> bool:
        return self.winding is not None

    def to_dict(self) -> dict:
        raise NotImplementedError(f"{self.family} fields are not serialisable")


class MeridianField(AngleField):
    """Field parallel along every meridian, alpha = zeta(phi)."""

    def __init__(self, spec: ZetaSpec):
        self.spec = spec
        self.family = "zeta-family" if spec.fourier else "meridian"
        self.winding = spec.k

    def __repr__(self):
        return f"MeridianField({self.spec!r})"

    def angle(self, theta, phi):
        theta = check_interior(theta)
        return np.broadcast_to(self.spec.zeta(phi), np.broadcast_shapes(theta.shape, np.shape(phi))).copy()

    def angle_gradient(self, theta, phi):
        theta = check_interior(theta)
        shape = np.broadcast_shapes(theta.shape, np.shape(phi))
        return np.zeros(shape), np.broadcast_to(self.spec.dzeta(phi), shape).copy()

    def to_dict(self):
        return {
            "schema": SCHEMA,
            "family": self.family,
            "k": self.spec.k,
            "phi0": self.spec.phi0,
            "fourier": [list(cs) for cs in self.spec.fourier],
        }


def meridian(k: int, phi0: float = 0.0, fourier: Sequence = ()) -> MeridianField:
    return MeridianField(ZetaSpec(k, phi0, tuple(fourier)))


class LatitudeField(AngleField):
    """Field parallel along the parallels; a = sin(eta), b = cos(eta).

    Holonomy 2 pi cos(theta) forces a slit along the meridian phi = 0, so the
    field lives on phi in (0, 2 pi).
    """

    family = "latitude"
    winding = None

    def __init__(self, spec: LatitudeSpec = LatitudeSpec()):
        self.spec = spec

    def __repr__(self):
        return f"LatitudeField({self.spec!r})"

    def check_domain(self, theta, phi):
        check_interior(theta)
        phi = np.asarray(phi, dtype=float)
        if np.any(phi <= 0.0) or np.any(phi >= TWO_PI):
            raise DomainError("latitude field is undefined on the meridian phi = 0")

    def angle(self, theta, phi):
        self.check_domain(theta, phi)
        return 0.5 * math.pi - self.spec.eta(theta, phi)

    def angle_gradient(self, theta, phi):
        self.check_domain(theta, phi)
        phi = np.asarray(phi, dtype=float)
        return phi * np.sin(theta), -np.cos(theta) + 0.0 * phi

    def coefficients(self, theta, phi):
        self.check_domain(theta, phi)
        eta = self.spec.eta(theta, phi)
        return np.sin(eta), np.cos(eta)

    def to_dict(self):
        return {"schema": SCHEMA, "family": "latitude", "phi0": self.spec.phi0}


def latitude(phi0: float = 0.0) -> LatitudeField:
    return LatitudeField(LatitudeSpec(phi0))


def orthonormal_complement(a, b, tol: float = 1e-9):
    """Coefficients of Y making (X, Y) a direct orthonormal frame."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(np.abs(a * a + b * b - 1.0) > tol):
        raise ValueError("orthonormal_complement needs unit frame coefficients")
    return -b, a


def eval_meridian(spec: ZetaSpec, theta, phi):
    return MeridianField(spec).coefficients(theta, phi)


def eval_latitude(spec: LatitudeSpec, theta, phi):
    return LatitudeField(spec).coefficients(theta, phi)


class TTypeField(AngleField):
    """Field with nabla_T X = 0 along the loxodromes of a constant-angle field T.

    Each evaluation follows the loxodrome through the query point back to the
    transversal and parallel-transports a reference frame along it.
    """

    family = "t-type"

    def __init__(self, spec: TTypeSpec, rtol: float = 1e-10, atol: float = 1e-12,
                 eps_pole: float = 1e-6):
        self.spec = spec
        self.rtol = rtol
        self.atol = atol
        self.eps_pole = eps_pole
        a_t, b_t = spec.direction
        # meridian loxodromes with equator data close up around every parallel
        self.winding = spec.initial.k if (b_t == 0.0 and spec.transversal == "equator") else None

    def __repr__(self):
        return f"TTypeField({self.spec!r})"

    def check_domain(self, theta, phi):
        check_interior(theta)
        if self.winding is None and self.spec.transversal == "meridian":
            phi = np.asarray(phi, dtype=float)
            if np.any(phi <= 0.0) or np.any(phi >= TWO_PI):
                raise DomainError("t-type field is undefined on the meridian phi = 0")

    def _rhs(self, s, y, sign):
        theta, phi, a, b = y
        a_t, b_t = self.spec.direction
        sin_t = math.sin(theta)
        dphi = b_t / sin_t
        # nabla_T (a e_theta + b e_phi) = 0 with nabla e_theta = cos(theta) dphi e_phi
        rot = math.cos(theta) * dphi
        return [sign * a_t, sign * dphi, sign * b * rot, -sign * a * rot]

    def _transport_one(self, theta: float, phi: float):
        spec = self.spec
        a_t, b_t = spec.direction
        if spec.transversal == "equator":
            gap = 0.5 * math.pi - theta
            sign = math.copysign(1.0, gap / a_t) if gap != 0.0 else 1.0
            length = abs(gap / a_t)

            def hit(s, y, sign=sign):
                return y[0] - 0.5 * math.pi
        else:
            gap = spec.transversal_at - phi
            sign = math.copysign(1.0, gap / b_t) if gap != 0.0 else 1.0
            # along a loxodrome |dphi/ds| >= |b_T|, so this bounds the arc length
            length = abs(gap / b_t)

            def hit(s, y, sign=sign):
                return y[1] - spec.transversal_at

        def escape(s, y, sign=sign):
            return min(y[0] - self.eps_pole, math.pi - self.eps_pole - y[0])

        hit.terminal = True
        escape.terminal = True
        escape.direction = -1
        y0 = [theta, phi, 1.0, 0.0]
        if gap == 0.0:
            return y0, 0.0
        sol = solve_ivp(
            self._rhs, (0.0, 1.5 * length + 1e-12), y0, args=(sign,), method="DOP853",
            rtol=self.rtol, atol=self.atol, events=(hit, escape),
        )
        if sol.t_events[1].size:
            raise FlowEscapeError(
                f"loxodrome through ({theta:.6g}, {phi:.6g}) reaches a pole before the transversal"
            )
        if not sol.t_events[0].size:
            raise FlowEscapeError(
                f"loxodrome through ({theta:.6g}, {phi:.6g}) never meets the transversal"
            )
        return sol.y_events[0][0], sol.t_events[0][0]

    def _angle_one(self, theta: float, phi: float) -> float:
        y_end, _ = self._transport_one(theta, phi)
        t_end, p_end, a_end, b_end = y_end
        norm = math.hypot(a_end, b_end)
        # a frame that starts at angle 0 arrives at angle gamma; the field at the
        # query point is the initial angle rotated back by gamma
        gamma = math.atan2(b_end / norm, a_end / norm)
        param = p_end if self.spec.transversal == "equator" else t_end
        return float(self.spec.initial.zeta(param)) - gamma

    def transport_drift(self, theta: float, phi: float) -> float:
        """|1 - norm| of the transported reference frame before renormalisation."""
        y_end, _ = self._transport_one(float(theta), float(phi))
        return abs(1.0 - math.hypot(y_end[2], y_end[3]))

    def angle(self, theta, phi):
        self.check_domain(theta, phi)
        theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
        out = np.empty(theta.shape)
        for idx in np.ndindex(theta.shape):
            out[idx] = self._angle_one(float(theta[idx]), float(phi[idx]))
        return out

    def to_dict(self):
        ini = self.spec.initial
        return {
            "schema": SCHEMA,
            "family": "t-type",
            "T": list(self.spec.direction),
            "k": ini.k,
            "phi0": ini.phi0,
            "fourier": [list(cs) for cs in ini.fourier],
            "transversal": self.spec.transversal,
            "transversal_at": self.spec.transversal_at,
        }


def eval_ttype(spec: TTypeSpec, theta, phi):
    return TTypeField(spec).coefficients(theta, phi)


class SyntheticField(AngleField):
    """Diagnostic field whose A-function is prescribed instead of derived.

    The frame angle still orients the differentiation directions X and Y;
    ``a_func(theta, phi) -> (A0, A1)`` replaces the geometric A-components.
    Used to probe the residual operators on controlled inputs.
    """

    family = "synthetic"

    def __init__(self, a_func: Callable, angle_func: Optional[Callable] = None, winding=None):
        self.a_func = a_func
        self.angle_func = angle_func or (lambda t, p: np.zeros(np.broadcast_shapes(np.shape(t), np.shape(p))))
        self.winding = winding

    def angle(self, theta, phi):
        check_interior(theta)
        return np.asarray(self.angle_func(theta, phi), dtype=float)


FAMILIES = ("meridian", "zeta-family", "latitude", "t-type", "grid")


def field_from_dict(doc: dict) -> AngleField:
    schema = doc.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ValueError(f"unsupported field schema {schema!r}")
    family = doc.get("family")
    fourier = tuple(tuple(cs) for cs in doc.get("fourier", ()))
    if family in ("meridian", "zeta-family"):
        return MeridianField(ZetaSpec(int(doc.get("k", 0)), float(doc.get("phi0", 0.0)), fourier))
    if family == "latitude":
        return LatitudeField(LatitudeSpec(float(doc.get("phi0", 0.0))))
    if family in ("t-type", "ttype"):
        initial = ZetaSpec(int(doc.get("k", 0)), float(doc.get("phi0", 0.0)), fourier)
        return TTypeField(TTypeSpec(
            tuple(doc.get("T", (1.0, 0.0))), initial,
            doc.get("transversal", "equator"), float(doc.get("transversal_at", math.pi)),
        ))
    raise ValueError(f"unknown or non-serialisable field family {family!r}")


def load_field(path) -> AngleField:
    with open(path) as fh:
        return field_from_dict(json.load(fh))


def dump_field(f: AngleField, path) -> None:
    with open(path, "w") as fh:
        json.dump(f.to_dict(), fh, indent=2)
        fh.write("\n")


__all__ = [
    "EPS_POLE", "SCHEMA", "FlowEscapeError", "ZetaSpec", "LatitudeSpec", "TTypeSpec",
    "AngleField", "MeridianField", "LatitudeField", "TTypeField", "SyntheticField",
    "meridian", "latitude", "orthonormal_complement", "eval_meridian", "eval_latitude",
    "eval_ttype", "field_from_dict", "load_field", "dump_field",
]
