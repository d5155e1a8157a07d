"""Extracted power for impedance and voltage-generator loads.

Closed forms are evaluated directly; :func:`phasor_nodal_oracle` solves the
full equivalent circuit (series R_D, L_M, C_K branch driven by ``Delta*A``,
shunt C_p, load) by modified nodal analysis and is kept free of any closed
form so it can check them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .harvester import HarvesterParams, max_power, open_circuit_voltage, source_impedance

OPEN_CIRCUIT_OHMS = 1e12
_COND_LIMIT = 1e13


class SingularNetworkError(ArithmeticError):
    """The nodal system is singular or too ill-conditioned to trust."""


@dataclass(frozen=True)
class ParallelImpedance:
    r_load: float
    x_load: float

    def __post_init__(self):
        if not self.r_load > 0:
            raise ValueError("r_load must be > 0")
        if self.x_load == 0:
            raise ValueError("x_load must be nonzero")

    def admittance(self, omega: float | None = None) -> complex:
        return 1.0 / self.r_load + 1.0 / (1j * self.x_load)


@dataclass(frozen=True)
class VoltageGenerator:
    v_load: float
    phi_load: float = 0.0

    def __post_init__(self):
        if self.v_load < 0:
            raise ValueError("v_load must be >= 0")

    @property
    def phasor(self) -> complex:
        return self.v_load * complex(math.cos(self.phi_load), math.sin(self.phi_load))


LoadSpec = ParallelImpedance | VoltageGenerator


# -- impedance load -----------------------------------------------------------


def psi_z(h: HarvesterParams, r_load: float, x_load: float) -> float:
    """Load resistance (series-equivalent) over the source resistance."""
    return (
        h.omega * h.c_p * (1 + h.rho**2) / h.rho
        * r_load * x_load**2 / (r_load**2 + x_load**2)
    )


def power_impedance_load(h: HarvesterParams, a_max: float, r_load: float, x_load: float) -> float:
    """Average power into a parallel ``R || jX`` load."""
    if not r_load > 0:
        raise ValueError("r_load must be > 0 for a passive load")
    if x_load == 0:
        raise ValueError("x_load must be nonzero")
    psi = psi_z(h, r_load, x_load)
    scale = (h.delta * a_max) ** 2 * h.omega * h.c_p / (2 * h.rho)
    return scale * psi / ((1 + psi) ** 2 + (psi * r_load / x_load - h.rho) ** 2)


def psi_n(rho, r_n, x_n):
    return (1 + rho**2) * r_n * x_n / (r_n**2 * rho**2 + x_n**2)


def normalized_power_impedance(rho, r_n, x_n):
    """``P_Z-load / P_max`` for loads normalized to the optimal parallel pair.

    Vectorizes over numpy arrays.
    """
    r_n = np.asarray(r_n, dtype=float)
    x_n = np.asarray(x_n, dtype=float)
    if np.any(r_n <= 0) or np.any(x_n <= 0):
        raise ValueError("r_n and x_n must be > 0")
    pn = psi_n(rho, r_n, x_n)
    out = 4 * pn * x_n / ((1 + pn * x_n) ** 2 + rho**2 * (pn * r_n - 1) ** 2)
    return out if out.ndim else float(out)


# -- generator load -----------------------------------------------------------


def psi_v(h: HarvesterParams, a_max: float, v_load: float, phi_load: float) -> float:
    return v_load / (h.delta * a_max) * math.cos(phi_load)


def power_generator_load(
    h: HarvesterParams, a_max: float, v_load: float, phi_load: float
) -> tuple[float, complex]:
    """Average power into a voltage generator and the current phasor through it.

    The power is negative when the generator pushes energy back into the
    harvester.
    """
    v_bar = v_load * complex(math.cos(phi_load), math.sin(phi_load))
    i_load = (open_circuit_voltage(h, a_max) - v_bar) / source_impedance(h)
    scale = h.omega * h.c_p / h.rho
    cos_phi = math.cos(phi_load)
    if a_max == 0 or cos_phi * cos_phi < 1e-12:
        # expanded form, no division by delta*A or cos^2
        p = 0.5 * scale * (h.delta * a_max * v_load * cos_phi - v_load**2)
    else:
        psi = psi_v(h, a_max, v_load, phi_load)
        p = (h.delta * a_max) ** 2 / 2 * scale * psi * (1 - psi / cos_phi**2)
    return p, i_load


def normalized_power_generator(v_n, phi_n):
    """``P_V-load / P_max``; independent of the harvester."""
    v_n = np.asarray(v_n, dtype=float)
    c = np.cos(np.asarray(phi_n, dtype=float))
    out = 2 * v_n * c - v_n**2
    return out if out.ndim else float(out)


# -- fixed loads under changing amplitude -------------------------------------


def lambda_waste(a_max_0: float, a_max: float) -> float:
    """Percent power lost by a fixed optimal generator vs a fixed optimal impedance.

    Not clamped: below ``a_max_0/2`` power flows back and the value exceeds 100.
    """
    if not (a_max > 0 and a_max_0 > 0):
        raise ValueError("amplitudes must be > 0")
    r = a_max_0 / a_max
    return (1 - 2 * r * (1 - r / 2)) * 100.0


def fixed_load_powers(h: HarvesterParams, a_max_0: float, a_max: float) -> tuple[float, float, float]:
    """``(P_load-z0, P_load-v0, P_max-0)`` after the amplitude moves from a_max_0 to a_max."""
    if not (a_max > 0 and a_max_0 > 0):
        raise ValueError("amplitudes must be > 0")
    p_z0 = max_power(h, a_max)
    r = a_max_0 / a_max
    p_v0 = p_z0 * 2 * r * (1 - r / 2)
    return p_z0, p_v0, max_power(h, a_max_0)


# -- independent nodal solve --------------------------------------------------


def solve_mna(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    cond = np.linalg.cond(matrix)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise SingularNetworkError(f"nodal matrix ill-conditioned (cond={cond:.3g})")
    return np.linalg.solve(matrix, rhs)


def phasor_nodal_oracle(
    h: HarvesterParams, a_max: float, load: LoadSpec, omega: float | None = None
) -> tuple[float, complex, complex]:
    """Solve the full equivalent circuit at ``omega`` (default: resonance).

    Unknowns are the two node voltages, the source current and, for a
    generator load, the generator current. Returns (power, v_load, i_load).
    """
    w = h.omega if omega is None else omega
    mech = h.mechanical()
    z_series = mech.r_d + 1j * w * mech.l_m + 1 / (1j * w * mech.c_k)
    y_s = 1 / z_series
    y_cp = 1j * w * h.c_p
    e = h.delta * a_max  # source amplitude in volts, phase of the acceleration

    if isinstance(load, VoltageGenerator):
        # x = [v1, v2, i_e, i_v]
        a = np.array(
            [
                [y_s, -y_s, 1, 0],
                [-y_s, y_s + y_cp, 0, 1],
                [1, 0, 0, 0],
                [0, 1, 0, 0],
            ],
            dtype=complex,
        )
        b = np.array([0, 0, e, load.phasor], dtype=complex)
        x = solve_mna(a, b)
        v_load, i_load = x[1], x[3]
    else:
        y_l = 1 / load.r_load + 1 / (1j * load.x_load)
        a = np.array(
            [
                [y_s, -y_s, 1],
                [-y_s, y_s + y_cp + y_l, 0],
                [1, 0, 0],
            ],
            dtype=complex,
        )
        b = np.array([0, 0, e], dtype=complex)
        x = solve_mna(a, b)
        v_load = x[1]
        i_load = v_load * y_l
    p = 0.5 * (v_load * i_load.conjugate()).real
    return float(p), complex(v_load), complex(i_load)


# -- grids --------------------------------------------------------------------


@dataclass(frozen=True)
class Axis:
    name: str
    start: float
    stop: float
    num: int
    scale: str = "linear"

    def __post_init__(self):
        if self.num < 2:
            raise ValueError(f"axis {self.name}: need at least 2 points")
        if not self.stop > self.start:
            raise ValueError(f"axis {self.name}: range must be increasing")
        if self.scale not in ("linear", "log"):
            raise ValueError(f"axis {self.name}: unknown scale {self.scale!r}")
        if self.scale == "log" and self.start <= 0:
            raise ValueError(f"axis {self.name}: log axis needs start > 0")

    def values(self) -> np.ndarray:
        if self.scale == "log":
            return np.logspace(math.log10(self.start), math.log10(self.stop), self.num)
        return np.linspace(self.start, self.stop, self.num)


@dataclass(frozen=True)
class GridSpec:
    kind: str  # "impedance" or "generator"
    axis1: Axis
    axis2: Axis
    rho: float = 0.9

    @classmethod
    def impedance(cls, rho: float, lo=0.1, hi=10.0, num=201) -> "GridSpec":
        return cls("impedance", Axis("r_n", lo, hi, num, "log"), Axis("x_n", lo, hi, num, "log"), rho)

    @classmethod
    def generator(cls, v_max=2.0, num=201) -> "GridSpec":
        return cls(
            "generator",
            Axis("v_n", 0.0, v_max, num),
            Axis("phi_n", -math.pi / 2, math.pi / 2, num),
        )


@dataclass
class GridDataset:
    axis1_name: str
    axis2_name: str
    axis1: np.ndarray
    axis2: np.ndarray
    values: np.ndarray  # shape (len(axis1), len(axis2))
    meta: dict = field(default_factory=dict)

    def argmax(self) -> tuple[float, float, float]:
        i, j = np.unravel_index(np.argmax(self.values), self.values.shape)
        return float(self.axis1[i]), float(self.axis2[j]), float(self.values[i, j])

    def rows(self):
        for i, a in enumerate(self.axis1):
            for j, b in enumerate(self.axis2):
                yield float(a), float(b), float(self.values[i, j])


def grid_sweep(spec: GridSpec) -> GridDataset:
    a1, a2 = spec.axis1.values(), spec.axis2.values()
    g1, g2 = np.meshgrid(a1, a2, indexing="ij")
    if spec.kind == "impedance":
        values = normalized_power_impedance(spec.rho, g1, g2)
        meta = {"kind": "impedance", "rho": spec.rho}
    elif spec.kind == "generator":
        values = normalized_power_generator(g1, g2)
        meta = {"kind": "generator"}
    else:
        raise ValueError(f"unknown grid kind {spec.kind!r}")
    return GridDataset(spec.axis1.name, spec.axis2.name, a1, a2, np.asarray(values), meta)


@dataclass
class RatioSweep:
    ratio: np.ndarray  # A_max / A_max-0
    p_max: np.ndarray  # all normalized to P_max-0
    p_load_z0: np.ndarray
    p_load_v0: np.ndarray
    lambda_waste: np.ndarray  # percent

    columns = ("ratio", "p_max", "p_load_z0", "p_load_v0", "lambda_waste")

    def rows(self):
        for k in range(len(self.ratio)):
            yield tuple(float(getattr(self, c)[k]) for c in self.columns)


def ratio_sweep(lo: float = 0.5, hi: float = 3.0, num: int = 251) -> RatioSweep:
    """Normalized powers and waste percentage versus ``A_max/A_max-0``."""
    ratio = Axis("ratio", lo, hi, num).values()
    r = 1.0 / ratio
    p_max = ratio**2
    p_v0 = p_max * 2 * r * (1 - r / 2)
    lam = (1 - 2 * r * (1 - r / 2)) * 100.0
    return RatioSweep(ratio, p_max, p_max.copy(), p_v0, lam)
