"""Lumped model of a resonant piezoelectric vibration harvester.

The harvester is described from its electrical port: the voltage-per-g
factor ``delta``, the coupling coefficient ``rho``, the resonance frequency,
the piezo capacitance and the mechanical quality factor. The mechanical set
(K, M, D, alpha) is derived on demand.

Accelerations are in g everywhere in the public API; ``G_ACCEL`` is only used
when converting to SI mechanical quantities. Phasors are complex numbers
referenced to the acceleration ``A*sin(w*t)`` (phase zero).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

G_ACCEL = 9.81  # m/s^2 per g

# Calibrated so that the matched-load 0 -> 1 g step settles (5 % band on
# period-averaged power) in about 100 ms. See transient.calibrate_q_factor.
DEFAULT_Q_FACTOR = 23.5


@dataclass(frozen=True)
class MechanicalSet:
    k: float  # N/m
    m: float  # kg
    d: float  # N s/m
    alpha: float  # N/V

    @property
    def c_k(self) -> float:
        return self.alpha**2 / self.k

    @property
    def l_m(self) -> float:
        return self.m / self.alpha**2

    @property
    def r_d(self) -> float:
        return self.d / self.alpha**2


@dataclass(frozen=True)
class HarvesterParams:
    delta: float  # V/g
    rho: float
    f_res: float  # Hz
    c_p: float  # F
    q_factor: float = DEFAULT_Q_FACTOR

    def __post_init__(self):
        for name in ("delta", "rho", "f_res", "c_p", "q_factor"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.f_res

    @property
    def delta_si(self) -> float:
        """Voltage factor in V per m/s^2 (equals M/alpha)."""
        return self.delta / G_ACCEL

    def mechanical(self) -> MechanicalSet:
        """Spring, mass, damping and force factor consistent with the electrical tuple.

        With ``Delta = M/alpha``, ``w^2 = K/M``, ``Q = K/(w D)`` and
        ``rho = w D C_p / alpha^2`` the four unknowns are fixed:
        ``alpha = w^2 Delta C_p / (Q rho)``.
        """
        w = self.omega
        alpha = w**2 * self.delta_si * self.c_p / (self.q_factor * self.rho)
        m = self.delta_si * alpha
        k = m * w**2
        d = k / (w * self.q_factor)
        return MechanicalSet(k=k, m=m, d=d, alpha=alpha)

    def with_q(self, q_factor: float) -> "HarvesterParams":
        return HarvesterParams(self.delta, self.rho, self.f_res, self.c_p, q_factor)


# The measured PPA-4011 rig: Delta and rho identified from the generator-load
# power surface at 1 g, f_res from the short-circuit current peak, C_p from an
# LCR meter.
PPA4011 = HarvesterParams(delta=8.0, rho=0.9, f_res=137.6, c_p=405e-9)


def source_impedance(h: HarvesterParams) -> complex:
    """Series output impedance ``R_p + jX_p`` seen at the harvester terminals."""
    base = 1.0 / (h.omega * h.c_p * (1.0 + h.rho**2))
    return complex(h.rho * base, -(h.rho**2) * base)


def open_circuit_voltage(h: HarvesterParams, a_max: float) -> complex:
    if a_max < 0:
        raise ValueError("a_max must be >= 0")
    return h.delta * a_max / complex(1.0, h.rho)


@dataclass(frozen=True)
class OptimalImpedance:
    series: complex
    r_opt: float  # parallel resistance
    x_opt: float  # parallel reactance (positive, inductive)
    parallel: tuple[float, float] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "parallel", (self.r_opt, self.x_opt))


def optimal_impedance(h: HarvesterParams) -> OptimalImpedance:
    """Conjugate match, in series and parallel form.

    Takes no acceleration: the optimal load impedance is a property of the
    harvester alone.
    """
    xc = 1.0 / (h.omega * h.c_p)
    return OptimalImpedance(
        series=source_impedance(h).conjugate(), r_opt=h.rho * xc, x_opt=xc
    )


def optimal_inductance(h: HarvesterParams) -> float:
    """Inductor realizing the optimal reactance; unlike the negative capacitance it depends on f_res."""
    return 1.0 / (h.omega**2 * h.c_p)


def max_power(h: HarvesterParams, a_max: float) -> float:
    """Maximum average power extractable at amplitude ``a_max`` (g)."""
    if a_max < 0:
        raise ValueError("a_max must be >= 0")
    return (h.delta * a_max) ** 2 * h.omega * h.c_p / (8.0 * h.rho)


def max_power_mechanical(h: HarvesterParams, a_max: float) -> float:
    """Same quantity written with the mechanical set: ``(Delta A)^2 alpha^2 / 8D``."""
    mech = h.mechanical()
    return (h.delta * a_max) ** 2 * mech.alpha**2 / (8.0 * mech.d)


def optimal_generator(h: HarvesterParams, a_max: float) -> tuple[float, float]:
    """Amplitude and phase of the load voltage generator extracting maximum power."""
    if a_max < 0:
        raise ValueError("a_max must be >= 0")
    return h.delta * a_max / 2.0, 0.0
