"""Harvester identification from a measured generator-load power surface.

The surface is the average power extracted by a voltage generator swept over
amplitude and phase. Its peak gives V_opt and P_max, from which Delta and rho
follow; the current at the peak gives the optimal impedance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .harvester import HarvesterParams
from .loads import power_generator_load


class UnbracketedOptimum(ValueError):
    """The surface maximum sits on the grid edge; the sweep must be extended."""


class InvalidMeasurement(ValueError):
    pass


@dataclass(frozen=True)
class PowerSurface:
    v_load: np.ndarray  # V, axis 1
    phi_load: np.ndarray  # rad, axis 2
    power: np.ndarray  # W, shape (len(v_load), len(phi_load))
    a_max: float  # g
    f: float  # Hz
    current: np.ndarray | None = None  # A, load-current amplitude at each point, optional

    def __post_init__(self):
        v = np.asarray(self.v_load, dtype=float)
        phi = np.asarray(self.phi_load, dtype=float)
        p = np.asarray(self.power, dtype=float)
        object.__setattr__(self, "v_load", v)
        object.__setattr__(self, "phi_load", phi)
        object.__setattr__(self, "power", p)
        if p.shape != (len(v), len(phi)):
            raise ValueError(f"power grid shape {p.shape} does not match axes ({len(v)}, {len(phi)})")
        if len(v) < 3 or len(phi) < 3:
            raise ValueError("surface needs at least 3 points per axis")
        if not (np.all(np.diff(v) > 0) and np.all(np.diff(phi) > 0)):
            raise ValueError("surface axes must be strictly increasing")
        if not np.all(np.isfinite(p)):
            raise ValueError("surface contains non-finite values")
        if not np.any(p > 0):
            raise ValueError("surface has no strictly positive entry")
        if self.current is not None:
            cur = np.asarray(self.current, dtype=float)
            if cur.shape != p.shape or not np.all(np.isfinite(cur)):
                raise ValueError("current grid must be finite and match the power grid")
            object.__setattr__(self, "current", cur)


def synthetic_surface(
    h: HarvesterParams,
    a_max: float,
    v_axis: np.ndarray | None = None,
    phi_axis: np.ndarray | None = None,
    noise: float = 0.0,
    seed: int | None = None,
) -> PowerSurface:
    """Surface computed from the closed-form generator-load power.

    ``noise`` adds relative uniform noise in ``[-noise, noise]`` to every
    point (off by default).
    """
    if v_axis is None:
        v_axis = np.linspace(0.0, h.delta * a_max, 41)
    if phi_axis is None:
        phi_axis = np.linspace(-math.pi / 3, math.pi / 3, 41)
    pts = [[power_generator_load(h, a_max, v, phi) for phi in phi_axis] for v in v_axis]
    p = np.array([[pt[0] for pt in row] for row in pts])
    cur = np.array([[abs(pt[1]) for pt in row] for row in pts])
    if noise:
        rng = np.random.default_rng(seed)
        p = p * (1 + rng.uniform(-noise, noise, p.shape))
    return PowerSurface(np.asarray(v_axis, float), np.asarray(phi_axis, float), p, a_max, h.f_res, cur)


def _biquadratic(vs: np.ndarray, ps: np.ndarray, block: np.ndarray):
    """Tensor-product quadratic through nine samples, in coordinates local to the center."""
    cu = np.linalg.inv(np.vander([vs[0] - vs[1], 0.0, vs[2] - vs[1]], 3, increasing=True))
    cw = np.linalg.inv(np.vander([ps[0] - ps[1], 0.0, ps[2] - ps[1]], 3, increasing=True))
    coef = cu @ block @ cw.T  # coef[a, b] multiplies u**a * w**b

    def value(u: float, w: float) -> float:
        return float(np.array([1, u, u * u]) @ coef @ np.array([1, w, w * w]))

    return coef, value


def _refine(s: PowerSurface) -> tuple[int, int, float, float]:
    i, j = np.unravel_index(int(np.argmax(s.power)), s.power.shape)
    ni, nj = s.power.shape
    if i in (0, ni - 1) or j in (0, nj - 1):
        raise UnbracketedOptimum(
            f"surface peak at grid edge (V={s.v_load[i]:.4g} V, phi={s.phi_load[j]:.4g} rad)"
        )
    vs = s.v_load[i - 1 : i + 2]
    ps = s.phi_load[j - 1 : j + 2]
    coef, _ = _biquadratic(vs, ps, s.power[i - 1 : i + 2, j - 1 : j + 2])
    lo_u, hi_u = vs[0] - vs[1], vs[2] - vs[1]
    lo_w, hi_w = ps[0] - ps[1], ps[2] - ps[1]
    d2 = np.array([0, 0, 2.0])
    u = w = 0.0
    for _ in range(50):
        pu, pw = np.array([1, u, u * u]), np.array([1, w, w * w])
        du, dw = np.array([0, 1, 2 * u]), np.array([0, 1, 2 * w])
        grad = np.array([du @ coef @ pw, pu @ coef @ dw])
        hess = np.array([[d2 @ coef @ pw, du @ coef @ dw], [du @ coef @ dw, pu @ coef @ d2]])
        if np.linalg.det(hess) <= 0 or hess[0, 0] >= 0:
            break  # not locally concave: stay where we are
        step = np.linalg.solve(hess, -grad)
        u_new = float(np.clip(u + step[0], lo_u, hi_u))
        w_new = float(np.clip(w + step[1], lo_w, hi_w))
        done = abs(u_new - u) <= 1e-14 * (hi_u - lo_u) and abs(w_new - w) <= 1e-14 * (hi_w - lo_w)
        u, w = u_new, w_new
        if done:
            break
    return int(i), int(j), u, w


def _sample(s: PowerSurface, grid: np.ndarray, i: int, j: int, u: float, w: float) -> float:
    _, value = _biquadratic(s.v_load[i - 1 : i + 2], s.phi_load[j - 1 : j + 2], grid[i - 1 : i + 2, j - 1 : j + 2])
    return value(u, w)


def locate_optimum(s: PowerSurface) -> tuple[float, float, float]:
    """Grid argmax refined by a biquadratic through its 3x3 neighborhood.

    Returns ``(v_opt, phi_opt, p_max)``. The refined vertex is clipped to the
    neighborhood so it never leaves the grid hull.
    """
    i, j, u, w = _refine(s)
    return float(s.v_load[i] + u), float(s.phi_load[j] + w), _sample(s, s.power, i, j, u, w)


def identify_parameters(v_opt: float, p_max: float, a_max: float, f_res: float, c_p: float) -> tuple[float, float]:
    """``(Delta, rho)`` from the peak of a generator-load surface."""
    for name, value in (("v_opt", v_opt), ("p_max", p_max), ("a_max", a_max), ("f_res", f_res), ("c_p", c_p)):
        if not value > 0:
            raise ValueError(f"{name} must be > 0")
    delta = 2 * v_opt / a_max
    rho = (delta * a_max) ** 2 * 2 * math.pi * f_res * c_p / (8 * p_max)
    return delta, rho


def impedance_from_operating_point(v_opt: float, i_opt: float, p_max: float) -> complex:
    """Optimal series impedance from voltage and current amplitudes and the peak power."""
    if not (v_opt > 0 and i_opt > 0 and p_max > 0):
        raise InvalidMeasurement("v_opt, i_opt and p_max must be > 0")
    cos_theta = 2 * p_max / (v_opt * i_opt)
    if cos_theta > 1:
        raise InvalidMeasurement(f"2*p_max exceeds v_opt*i_opt (cos theta = {cos_theta:.6g})")
    theta = math.acos(cos_theta)
    mag = v_opt / i_opt
    return complex(mag * math.cos(theta), mag * math.sin(theta))


def parallel_equivalents(z: complex) -> tuple[float, float]:
    """``(R, X)`` whose parallel connection equals the series impedance ``z``.

    A zero real (imaginary) part means the resistive (reactive) branch is
    absent and is reported as ``inf``.
    """
    mag2 = z.real**2 + z.imag**2
    if mag2 == 0:
        raise ValueError("zero impedance has no parallel equivalent")
    r = mag2 / z.real if z.real != 0 else math.inf
    x = mag2 / z.imag if z.imag != 0 else math.inf
    return r, x


@dataclass(frozen=True)
class IdentificationReport:
    a_max: float
    v_opt: float
    phi_opt: float
    p_max: float
    i_opt: float
    delta: float
    rho: float
    z_opt: complex
    r_opt: float
    x_opt: float


def identify_surface(s: PowerSurface, c_p: float, i_opt: float | None = None) -> IdentificationReport:
    """Full pipeline for one surface.

    The current at the optimum is, in order of preference: the ``i_opt``
    argument, the surface's current grid sampled at the refined peak, or the
    identified model evaluated at the peak.
    """
    i, j, u, w = _refine(s)
    v_opt, phi_opt = float(s.v_load[i] + u), float(s.phi_load[j] + w)
    p_max = _sample(s, s.power, i, j, u, w)
    delta, rho = identify_parameters(v_opt, p_max, s.a_max, s.f, c_p)
    if i_opt is None and s.current is not None:
        i_opt = _sample(s, s.current, i, j, u, w)
    if i_opt is None:
        h = HarvesterParams(delta, rho, s.f, c_p)
        i_opt = abs(power_generator_load(h, s.a_max, v_opt, phi_opt)[1])
    z = impedance_from_operating_point(v_opt, i_opt, p_max)
    r, x = parallel_equivalents(z)
    return IdentificationReport(s.a_max, v_opt, phi_opt, p_max, i_opt, delta, rho, z, r, x)
