"""Searches for small-volume unit fields at a fixed winding number k.

Two search spaces:

* the meridian-parallel family alpha = zeta(phi), with zeta a winding-k line
  plus a finite Fourier perturbation, explored by Nelder-Mead;
* unwrapped frame angles on a (theta, phi) grid with the winding built into
  the periodic closure, explored by gradient descent with finite-difference
  gradients and a backtracking line search.
"""

from __future__ import annotations

import csv
import io
import math
import struct
import time
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .fields import AngleField, ZetaSpec
from .first_order import GRID_EPS
from .geometry import DomainError
from .quadrature import bcj_lower_bound, gauss_legendre, volume_meridian_closed

TWO_PI = 2.0 * math.pi
GRID_MAGIC = b"VFGRID01"


class BudgetExhausted(RuntimeError):
    """An optimizer ran out of iterations before meeting its tolerance."""

    def __init__(self, message, best=None, trace=None):
        super().__init__(message)
        self.best = best
        self.trace = trace


@dataclass
class OptimizationTrace:
    objective: list = dc_field(default_factory=list)
    terminal_measure: float = float("nan")
    wall_clock: float = 0.0
    restarts: int = 0

    @property
    def iterations(self) -> int:
        return max(len(self.objective) - 1, 0)

    def record(self, value: float) -> None:
        self.objective.append(float(value))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "objective"])
        for i, v in enumerate(self.objective):
            w.writerow([i, f"{v:.12g}"])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "iterations": self.iterations,
            "initial": self.objective[0] if self.objective else None,
            "final": self.objective[-1] if self.objective else None,
            "terminal_measure": self.terminal_measure,
            "wall_clock": self.wall_clock,
            "restarts": self.restarts,
        }


# -- the meridian-parallel family ------------------------------------------------

@dataclass(frozen=True)
class FamilyObjective:
    """Volume of alpha = zeta(phi) on the whole punctured sphere.

    Gauss-Legendre in theta, trapezoid in phi (exact for the trigonometric
    content of zeta').
    """

    k: int
    n_modes: int = 6
    n_theta: int = 64
    n_phi: int = 64
    r: float = 1.0

    def _nodes(self):
        x, w = gauss_legendre(self.n_theta)
        theta = 0.5 * math.pi * (x + 1.0)
        return theta, 0.5 * math.pi * w, TWO_PI * np.arange(self.n_phi) / self.n_phi

    def __call__(self, zeta: ZetaSpec) -> float:
        theta, w_theta, phi = self._nodes()
        dz = zeta.dzeta(phi)
        r = self.r
        dens = r * np.sqrt((r * np.sin(theta))[:, None] ** 2 + (dz[None, :] + np.cos(theta)[:, None]) ** 2)
        per_theta = dens.sum(axis=1) * (TWO_PI / self.n_phi)
        return math.fsum((per_theta * w_theta).tolist())

    def spec_from_vector(self, x) -> ZetaSpec:
        x = np.asarray(x, dtype=float)
        pairs = tuple(zip(x[1:1 + self.n_modes], x[1 + self.n_modes:1 + 2 * self.n_modes]))
        return ZetaSpec(self.k, float(x[0]), pairs)

    def vector_from_spec(self, zeta: ZetaSpec):
        coef = np.zeros((self.n_modes, 2))
        for n, (c, s) in enumerate(zeta.fourier[: self.n_modes]):
            coef[n] = c, s
        return np.concatenate([[zeta.phi0], coef[:, 0], coef[:, 1]])


def family_volume(zeta: ZetaSpec, n_theta: int = 64, n_phi: int = 64, r: float = 1.0) -> float:
    """r * integral over D of sqrt(r^2 sin^2 theta + (zeta' + cos theta)^2)."""
    n_phi = max(n_phi, 4 * len(zeta.fourier) + 4)
    return FamilyObjective(zeta.k, len(zeta.fourier), n_theta, n_phi, r)(zeta)


@dataclass
class FamilyConfig:
    n_modes: int = 6
    max_evals: int = 40_000
    max_restarts: int = 6
    xatol: float = 1e-7
    fatol: float = 1e-13
    initial_step: float = 0.1
    seed: int = 0
    start: Optional[ZetaSpec] = None
    start_scale: float = 0.3


def minimize_in_family(k: int, config: FamilyConfig | None = None):
    """Nelder-Mead over (phi0, c_1..c_N, s_1..s_N), restarted from the best vertex."""
    config = config or FamilyConfig()
    if config.n_modes < 1:
        raise ValueError("at least one Fourier mode is required")
    objective = FamilyObjective(k, config.n_modes)
    if config.start is not None:
        x = objective.vector_from_spec(config.start)
    else:
        rng = np.random.default_rng(config.seed)
        x = np.concatenate([[rng.uniform(0, TWO_PI)], rng.normal(0.0, config.start_scale, 2 * config.n_modes)])
        x[1:] /= np.arange(1, 2 * config.n_modes + 1) % config.n_modes + 1

    def f(v):
        return objective(objective.spec_from_vector(v))

    trace = OptimizationTrace()
    trace.record(f(x))
    start = time.perf_counter()
    evals = 0
    best_val = trace.objective[0]
    for restart in range(config.max_restarts + 1):
        simplex = np.vstack([x, x + config.initial_step * np.eye(len(x))])

        def callback(intermediate_result):
            trace.record(min(float(intermediate_result.fun), trace.objective[-1]))

        res = minimize(f, x, method="Nelder-Mead", callback=callback, options={
            "initial_simplex": simplex, "xatol": config.xatol, "fatol": config.fatol,
            "maxfev": config.max_evals - evals, "adaptive": True,
        })
        evals += res.nfev
        improved = best_val - res.fun
        if res.fun <= best_val:
            x, best_val = res.x, float(res.fun)
        trace.restarts = restart
        sizes = res.final_simplex[0] - res.final_simplex[0][0]
        trace.terminal_measure = float(np.max(np.abs(sizes)))
        if evals >= config.max_evals:
            trace.wall_clock = time.perf_counter() - start
            raise BudgetExhausted(f"family search used {evals} evaluations", objective.spec_from_vector(x), trace)
        if restart > 0 and improved < config.fatol * 10:
            break
    trace.wall_clock = time.perf_counter() - start
    return objective.spec_from_vector(x), trace


# -- grid-discretised angle fields -----------------------------------------------

@dataclass
class GridField:
    """Unwrapped frame angles alpha[i, j] at theta_i, phi_j = 2 pi j / n_phi.

    Columns close up with alpha(theta, 2 pi) = alpha(theta, 0) + 2 pi k.
    Rows span [eps, pi - eps]; beyond them the angle is continued constantly
    in theta to the punctures.
    """

    alpha: np.ndarray
    k: int
    eps: float = GRID_EPS

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        if self.alpha.ndim != 2 or min(self.alpha.shape) < 3:
            raise ValueError("grid angles must be a 2-D array with at least 3 rows and columns")
        if not np.all(np.isfinite(self.alpha)):
            raise ValueError("grid angles must be finite")

    @property
    def shape(self):
        return self.alpha.shape

    @property
    def theta(self):
        return np.linspace(self.eps, math.pi - self.eps, self.shape[0])

    @property
    def phi(self):
        return TWO_PI * np.arange(self.shape[1]) / self.shape[1]

    def closed(self) -> np.ndarray:
        """alpha with the closing column phi = 2 pi appended."""
        return np.hstack([self.alpha, self.alpha[:, :1] + TWO_PI * self.k])

    def winding_violation(self) -> float:
        c = self.closed()
        return float(np.max(np.abs(c[:, -1] - c[:, 0] - TWO_PI * self.k)))

    @classmethod
    def from_field(cls, f: AngleField, n_theta: int, n_phi: int, k: int, eps: float = GRID_EPS):
        theta = np.linspace(eps, math.pi - eps, n_theta)
        phi = TWO_PI * np.arange(n_phi) / n_phi
        tt, pp = np.meshgrid(theta, phi, indexing="ij")
        return cls(f.angle(tt, pp), k, eps)

    # binary layout: b"VFGRID01", n_theta, n_phi (uint32 LE), then float64 LE
    # k, eps and the n_theta * n_phi angles in row-major (theta-major) order
    def to_bytes(self) -> bytes:
        n_t, n_p = self.shape
        head = GRID_MAGIC + struct.pack("<II", n_t, n_p)
        body = np.concatenate([[float(self.k), self.eps], self.alpha.ravel()]).astype("<f8")
        return head + body.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "GridField":
        if data[:8] != GRID_MAGIC:
            raise ValueError("not a VFGRID01 file")
        n_t, n_p = struct.unpack("<II", data[8:16])
        body = np.frombuffer(data[16:], dtype="<f8")
        if body.size != 2 + n_t * n_p:
            raise ValueError(f"VFGRID01 payload holds {body.size} values, expected {2 + n_t * n_p}")
        return cls(body[2:].reshape(n_t, n_p).copy(), int(body[0]), float(body[1]))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "GridField":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


class GridAngleField(AngleField):
    """Continuous field interpolating a :class:`GridField` (periodic cubic in phi)."""

    family = "grid"

    def __init__(self, grid: GridField):
        from scipy.interpolate import RectBivariateSpline

        self.grid = grid
        self.winding = grid.k
        n_p = grid.shape[1]
        base = grid.alpha - grid.k * grid.phi[None, :]
        # three periods of the periodic part keep the spline periodic in the middle one
        phi3 = np.concatenate([grid.phi - TWO_PI, grid.phi, grid.phi + TWO_PI])
        self._spline = RectBivariateSpline(grid.theta, phi3, np.tile(base, 3), kx=3, ky=3)
        self._n_phi = n_p

    def _clamped(self, theta, phi):
        theta = np.clip(np.asarray(theta, dtype=float), self.grid.theta[0], self.grid.theta[-1])
        phi = np.mod(np.asarray(phi, dtype=float), TWO_PI)
        return np.broadcast_arrays(theta, phi)

    def angle(self, theta, phi):
        self.check_domain(theta, phi)
        t, p = self._clamped(theta, phi)
        base = self._spline.ev(t.ravel(), p.ravel()).reshape(t.shape)
        return base + self.grid.k * np.asarray(phi, dtype=float)

    def angle_gradient(self, theta, phi):
        self.check_domain(theta, phi)
        t, p = self._clamped(theta, phi)
        inside = (np.asarray(theta) >= self.grid.theta[0]) & (np.asarray(theta) <= self.grid.theta[-1])
        d_t = self._spline.ev(t.ravel(), p.ravel(), dx=1).reshape(t.shape) * inside
        d_p = self._spline.ev(t.ravel(), p.ravel(), dy=1).reshape(t.shape) + self.grid.k
        return d_t, d_p


_CAP_NODES = 8


class GridObjective:
    """Discretised volume of a grid field over the whole punctured sphere.

    On the band [eps, pi - eps]: central differences in phi (winding-aware),
    central differences in theta with one-sided rows at the edges, trapezoid
    weights in theta.  The two polar caps continue the edge rows constantly
    in theta and are integrated with a Gauss rule per column.
    """

    def __init__(self, n_theta: int, n_phi: int, k: int, eps: float = GRID_EPS, r: float = 1.0):
        if n_theta < 3 or n_phi < 3:
            raise ValueError("grid objective needs at least 3 x 3 nodes")
        self.shape = (n_theta, n_phi)
        self.k = k
        self.eps = eps
        self.r = r
        self.theta = np.linspace(eps, math.pi - eps, n_theta)
        self.d_theta = self.theta[1] - self.theta[0]
        self.d_phi = TWO_PI / n_phi
        w = np.full(n_theta, self.d_theta)
        w[[0, -1]] *= 0.5
        self.weights = (w * self.d_phi)[:, None]
        self.sin = np.sin(self.theta)[:, None]
        self.cos = np.cos(self.theta)[:, None]
        x, wc = gauss_legendre(_CAP_NODES)
        self.cap_north = 0.5 * eps * (x + 1.0)
        self.cap_south = math.pi - self.cap_north
        self.cap_w = 0.5 * eps * wc * self.d_phi

    def phi_derivative(self, alpha):
        wrap = TWO_PI * self.k
        right = np.roll(alpha, -1, axis=1)
        right[:, -1] += wrap
        left = np.roll(alpha, 1, axis=1)
        left[:, 0] -= wrap
        return (right - left) / (2 * self.d_phi)

    def theta_derivative(self, alpha):
        d = np.empty_like(alpha)
        d[1:-1] = (alpha[2:] - alpha[:-2]) / (2 * self.d_theta)
        d[0] = (alpha[1] - alpha[0]) / self.d_theta
        d[-1] = (alpha[-1] - alpha[-2]) / self.d_theta
        return d

    def _cap(self, nodes, dz):
        r = self.r
        dens = r * np.sqrt((r * np.sin(nodes))[:, None] ** 2 + (dz[None, :] + np.cos(nodes)[:, None]) ** 2)
        return self.cap_w @ dens

    def local(self, alpha) -> np.ndarray:
        """Per-node contributions; each depends on the node and its 4 neighbours."""
        r = self.r
        a, b = np.cos(alpha), np.sin(alpha)
        d_t = self.theta_derivative(alpha)
        d_p = self.phi_derivative(alpha)
        s = r * self.sin
        twist = d_p + self.cos
        a0 = a * d_t / r + b * twist / s
        a1 = -b * d_t / r + a * twist / s
        out = np.sqrt(1.0 + a0 * a0 + a1 * a1) * r * r * self.sin * self.weights
        out[0] += self._cap(self.cap_north, d_p[0])
        out[-1] += self._cap(self.cap_south, d_p[-1])
        return out

    def __call__(self, alpha) -> float:
        return math.fsum(self.local(alpha).ravel().tolist())


def distance_two_coloring(n_theta: int, n_phi: int) -> np.ndarray:
    """Greedy coloring where nodes within grid distance 2 differ (phi periodic).

    Perturbing one color class at a time changes disjoint sets of local terms,
    so a single pair of objective sweeps yields all its partial derivatives.
    """
    colors = -np.ones((n_theta, n_phi), dtype=int)
    offsets = [(di, dj) for di in range(-2, 3) for dj in range(-2, 3) if 0 < abs(di) + abs(dj) <= 2]
    for i in range(n_theta):
        for j in range(n_phi):
            used = set()
            for di, dj in offsets:
                ii = i + di
                if 0 <= ii < n_theta:
                    c = colors[ii, (j + dj) % n_phi]
                    if c >= 0:
                        used.add(c)
            c = 0
            while c in used:
                c += 1
            colors[i, j] = c
    return colors


def _neighbourhood_sum(values):
    out = values.copy()
    out[1:] += values[:-1]
    out[:-1] += values[1:]
    out += np.roll(values, 1, axis=1) + np.roll(values, -1, axis=1)
    return out


def fd_gradient(objective: GridObjective, alpha, colors, h: float = 1e-6):
    """Central finite-difference gradient, one color class per sweep pair."""
    grad = np.zeros_like(alpha)
    for c in range(int(colors.max()) + 1):
        mask = colors == c
        plus = alpha + h * mask
        minus = alpha - h * mask
        delta = (objective.local(plus) - objective.local(minus)) / (2 * h)
        grad[mask] = _neighbourhood_sum(delta)[mask]
    return grad


def fd_hessian_diagonal(objective: GridObjective, alpha, colors, h: float = 1e-4):
    """Second differences for the diagonal of the Hessian, same coloring trick."""
    diag = np.zeros_like(alpha)
    base = objective.local(alpha)
    for c in range(int(colors.max()) + 1):
        mask = colors == c
        second = (objective.local(alpha + h * mask) + objective.local(alpha - h * mask) - 2 * base) / (h * h)
        diag[mask] = _neighbourhood_sum(second)[mask]
    return diag


@dataclass
class GridConfig:
    n_theta: int = 64
    n_phi: int = 64
    max_iter: int = 5000
    gtol: float = 1e-7
    # stop once the last ``window`` accepted steps gained less than ftol (relative)
    ftol: float = 1e-9
    window: int = 50
    fd_step: float = 1e-6
    hessian_step: float = 1e-4
    # lower clamp on the diagonal preconditioner, relative to the quadrature weights
    hessian_floor: float = 1e-3
    seed: int = 0
    perturbation: float = 0.3
    phi0: float = 0.0
    r: float = 1.0


def _initial_grid(k, config: GridConfig) -> np.ndarray:
    rng = np.random.default_rng(config.seed)
    theta = np.linspace(GRID_EPS, math.pi - GRID_EPS, config.n_theta)
    phi = TWO_PI * np.arange(config.n_phi) / config.n_phi
    alpha = k * phi[None, :] + config.phi0 + np.zeros((config.n_theta, 1))
    # smooth seeded perturbation: a few low modes in theta and phi
    for m in range(1, 4):
        for n in range(0, 4):
            c, s = rng.normal(0.0, config.perturbation / (m * (n + 1)), 2)
            alpha += np.sin(m * theta)[:, None] * (c * np.cos(n * phi) + s * np.sin(n * phi))[None, :]
    return alpha


def minimize_grid(k: int, config: GridConfig | None = None, start: GridField | None = None):
    """Preconditioned gradient descent with Armijo backtracking on the discretised volume.

    Stops when the weighted gradient falls below gtol or the objective gained
    less than ftol (relative) over the last ``window`` accepted steps.
    """
    config = config or GridConfig()
    if min(config.n_theta, config.n_phi) < 32:
        raise ValueError("grid search needs at least 32 x 32 nodes")
    objective = GridObjective(config.n_theta, config.n_phi, k, GRID_EPS, config.r)
    colors = distance_two_coloring(config.n_theta, config.n_phi)
    alpha = start.alpha.copy() if start is not None else _initial_grid(k, config)
    if alpha.shape != objective.shape:
        raise ValueError(f"start grid has shape {alpha.shape}, expected {objective.shape}")

    trace = OptimizationTrace()
    value = objective(alpha)
    trace.record(value)
    t0 = time.perf_counter()
    step = 1.0
    gnorm = float("inf")
    prev = None
    for _ in range(config.max_iter):
        grad = fd_gradient(objective, alpha, colors, config.fd_step)
        gnorm = float(np.max(np.abs(grad / objective.weights)))
        if gnorm < config.gtol:
            break
        # Jacobi preconditioning: the k = 1 south cap is far stiffer than the rest
        diag = np.maximum(fd_hessian_diagonal(objective, alpha, colors, config.hessian_step),
                          config.hessian_floor * objective.weights)
        direction = -grad / diag
        if prev is not None:
            # Barzilai-Borwein guess for the first trial step, in the preconditioned metric
            ds, dg = alpha - prev[0], grad - prev[1]
            curvature = float(np.sum(ds * dg))
            step = float(np.sum(ds * ds * diag)) / curvature if curvature > 0 else 1.0
        prev = (alpha, grad)
        slope = float(np.sum(grad * direction))
        accepted = False
        while step > 1e-14:
            trial = alpha + step * direction
            trial_value = objective(trial)
            if trial_value <= value + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        alpha, value = trial, trial_value
        trace.record(value)
        hist = trace.objective
        if len(hist) > config.window and hist[-config.window - 1] - value < config.ftol * abs(value):
            break
    else:
        trace.terminal_measure = gnorm
        trace.wall_clock = time.perf_counter() - t0
        raise BudgetExhausted(f"grid descent used {config.max_iter} iterations", GridField(alpha, k), trace)
    trace.terminal_measure = gnorm
    trace.wall_clock = time.perf_counter() - t0
    result = GridField(alpha, k)
    if result.winding_violation() > 1e-12:
        raise DomainError("winding constraint violated (internal error)")
    return result, trace


@dataclass(frozen=True)
class GridReport:
    k: int
    volume: float
    meridian_volume: float
    bcj_bound: float
    meridian_discrete: float

    @property
    def margin_to_meridian(self) -> float:
        return self.volume - self.meridian_volume

    @property
    def tolerance(self) -> float:
        """Quadrature tolerance of the grid objective: twice its error on the meridian field."""
        return 2.0 * abs(self.meridian_discrete - self.meridian_volume) + 1e-9 * self.meridian_volume

    @property
    def respects_meridian(self) -> bool:
        return self.volume >= self.meridian_volume - self.tolerance

    @property
    def respects_bcj(self) -> bool:
        return self.volume >= self.bcj_bound - self.tolerance

    def to_dict(self) -> dict:
        return {
            "k": self.k, "volume": self.volume, "meridian_volume": self.meridian_volume,
            "meridian_volume_discrete": self.meridian_discrete,
            "margin_to_meridian": self.margin_to_meridian, "bcj_bound": self.bcj_bound,
            "tolerance": self.tolerance, "respects_meridian": self.respects_meridian,
            "respects_bcj": self.respects_bcj,
        }


def grid_report(result: GridField, r: float = 1.0) -> GridReport:
    n_t, n_p = result.shape
    objective = GridObjective(n_t, n_p, result.k, result.eps, r)
    meridian_alpha = result.k * result.phi[None, :] + np.zeros((n_t, 1))
    return GridReport(
        result.k,
        objective(result.alpha),
        volume_meridian_closed(result.k, r=r),
        bcj_lower_bound(1 + abs(result.k), abs(1 - abs(result.k))),
        objective(meridian_alpha),
    )
