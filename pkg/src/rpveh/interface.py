"""Analog controller of the impedance-emulating AC/DC interface.

The conditioning stage is an inverting/non-inverting op-amp summer: the
current-sense voltage ``v_m = R_m*i_load`` enters through R_y, the load voltage
through the R_x-C_x branch ``Z_x`` and, on the non-inverting input, through the
R_a/R_b divider. A hysteretic comparator (R_p, R_q) keeps its output ``v_e``
inside ``[V_TL, V_TH]``; with ``v_e ~ 0`` the converter input behaves as a
resistance R_e in parallel with a negative capacitance C_n.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, fields, replace

from .harvester import HarvesterParams


class SizingError(ValueError):
    def __init__(self, relation: str, message: str):
        super().__init__(f"{relation}: {message}")
        self.relation = relation


@dataclass(frozen=True)
class AuxParts:
    """Parts kept for fidelity to the prototype's bill of materials; not simulated."""

    c_b: float = 100e-9
    r_tp: float = 30e3
    r_tn: float = 100e3
    c_dt: float = 100e-12


@dataclass(frozen=True)
class ControllerParams:
    r_m: float = 20.0
    r_x: float = 330e3
    r_y: float = 8e3
    r_f: float = 100e3
    r_a: float = 275e3
    r_b: float = 2e3
    r_p: float = 150e3
    r_q: float = 10e6
    c_x: float = 1e-9
    v_supply: float = 5.0
    l_b: float = 100e-3
    v_dc: float = 5.0
    v_n: float = 5.0
    dead_time: float = 1e-6
    diode_drop: float = 0.0
    aux: AuxParts = field(default_factory=AuxParts)

    def __post_init__(self):
        for f in fields(self):
            if f.name in ("aux", "dead_time", "diode_drop", "r_p"):
                continue
            value = getattr(self, f.name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{f.name} must be finite and > 0, got {value!r}")
        if self.r_p < 0:
            raise ValueError("r_p must be >= 0")
        if self.dead_time < 0:
            raise ValueError("dead_time must be >= 0")
        if self.diode_drop < 0:
            raise ValueError("diode_drop must be >= 0")

    @property
    def divider(self) -> float:
        return self.r_b / (self.r_a + self.r_b)

    @property
    def sense_gain(self) -> float:
        """Ohms from load current to ``v_e`` (magnitude of the current term)."""
        return self.r_f * self.r_m / self.r_y

    def as_dict(self) -> dict:
        return asdict(self)


TABLE1 = ControllerParams()


def hysteresis_thresholds(cp: ControllerParams) -> tuple[float, float, float]:
    """``(V_TH, V_TL, Delta V_T)`` of the comparator with V- = -V+."""
    v_th = cp.r_p / cp.r_q * cp.v_supply
    return v_th, -v_th, 2 * v_th


def corner_frequencies(cp: ControllerParams) -> tuple[float, float]:
    """``(f_x, f_y)`` in Hz: ``1/(2 pi R_x C_x)`` and ``1/(2 pi R_y C_x)``."""
    return 1 / (2 * math.pi * cp.r_x * cp.c_x), 1 / (2 * math.pi * cp.r_y * cp.c_x)


def validity(cp: ControllerParams, omega: float, warn_ratio: float = 3.0, ok_ratio: float = 10.0) -> dict:
    """How far the corner frequencies sit above ``omega``.

    ``level`` is "ok" when both ratios reach ``ok_ratio``, "warn" when both
    reach ``warn_ratio`` and "invalid" otherwise.
    """
    f_x, f_y = corner_frequencies(cp)
    rx = 2 * math.pi * f_x / omega
    ry = 2 * math.pi * f_y / omega
    worst = min(rx, ry)
    level = "ok" if worst >= ok_ratio else "warn" if worst >= warn_ratio else "invalid"
    return {"ratio_x": rx, "ratio_y": ry, "level": level}


def conditioning_transfer(
    cp: ControllerParams, omega: float, i_load: complex, v_load: complex, mode: str = "exact"
) -> complex:
    """Phasor of the conditioning-stage output ``v_e``.

    ``exact`` uses the full R_x-C_x branch impedance. The printed closed form
    carries ``R_y C_x`` without ``j*omega`` in one numerator; the form used here
    is the one obtained from the superposition with
    ``1 + R_f/(R_y || Z_x)`` and reduces to the ``approximate`` form for
    ``omega << 1/(R_x C_x), 1/(R_y C_x)``.
    """
    if not omega > 0:
        raise ValueError("omega must be > 0")
    k = cp.divider
    if mode == "exact":
        z_x = cp.r_x + 1 / (1j * omega * cp.c_x)
        return (
            -cp.sense_gain * i_load
            - cp.r_f / z_x * v_load
            + k * (1 + cp.r_f / cp.r_y + cp.r_f / z_x) * v_load
        )
    if mode == "approximate":
        return (
            -cp.sense_gain * i_load
            - 1j * omega * cp.r_f * cp.c_x * v_load
            + k * (1 + cp.r_f / cp.r_y) * v_load
        )
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class EmulatedLoad:
    """Parallel ``R_e || C_n`` (C_n < 0) with the reactance at ``omega``."""

    r_e: float
    c_n: float
    omega: float

    def __post_init__(self):
        if not self.r_e > 0:
            raise ValueError("r_e must be > 0")
        if not self.c_n < 0:
            raise ValueError("c_n must be negative")

    @property
    def x_e(self) -> float:
        return -1 / (self.omega * self.c_n)

    def admittance(self, omega: float | None = None) -> complex:
        w = self.omega if omega is None else omega
        return 1 / self.r_e + 1j * w * self.c_n


def emulated_admittance(cp: ControllerParams, omega: float) -> EmulatedLoad:
    """Input impedance the controller imposes when ``v_e`` is held at zero."""
    if not omega > 0:
        raise ValueError("omega must be > 0")
    r_e = (cp.r_a + cp.r_b) / cp.r_b * cp.r_f * cp.r_m / (cp.r_f + cp.r_y)
    c_n = -cp.c_x * cp.r_y / cp.r_m
    return EmulatedLoad(r_e=r_e, c_n=c_n, omega=omega)


def exact_emulated_admittance(cp: ControllerParams, omega: float) -> complex:
    """``I/V`` with ``v_e = 0`` using the full conditioning network."""
    # v_e is linear: v_e = -g*I + b(omega)*V  ->  I/V = b/g
    b = conditioning_transfer(cp, omega, 0j, 1 + 0j, "exact")
    return b / cp.sense_gain


def hysteresis_diagnostic(cp: ControllerParams, i_load_amplitude: float) -> float:
    """Band width relative to the current-sense swing; small values justify ``v_e ~ 0``."""
    if i_load_amplitude <= 0:
        return math.inf
    return hysteresis_thresholds(cp)[2] / (cp.sense_gain * i_load_amplitude)


# -- sizing --------------------------------------------------------------------

_CAP_RELATION = "R_y*C_x/R_m = C_p"
_RES_RELATION = "(R_a+R_b)/R_b * R_f*R_m/(R_f+R_y) = rho/(w_res*C_p)"


def _rel_err(value: float, target: float) -> float:
    return abs(value - target) / abs(target)


def size_controller(
    h: HarvesterParams, fixed: dict | None = None, tolerance: float = 0.02
) -> ControllerParams:
    """Choose the free components so the emulated load is the optimal one.

    ``fixed`` maps field names to pinned values. Within each relation at most
    one component may be left free; it is solved for. When more are free the
    unpinned ones default to the prototype values in a fixed order
    (r_m, c_x for the capacitance relation; r_b, r_f for the resistance
    relation) until one unknown remains. A fully pinned relation is checked
    against ``tolerance`` (relative) and raises :class:`SizingError` if violated.
    """
    fixed = dict(fixed or {})
    unknown = set(fixed) - {f.name for f in fields(ControllerParams)}
    if unknown:
        raise SizingError("fixed set", f"unknown components {sorted(unknown)}")
    r_target = h.rho / (h.omega * h.c_p)
    c_target = h.c_p
    values = dict(fixed)

    # capacitance relation: r_y, c_x, r_m
    cap_parts = ("r_y", "c_x", "r_m")
    for name in ("r_m", "c_x"):
        if sum(p not in values for p in cap_parts) > 1:
            values[name] = getattr(TABLE1, name)
    free = [p for p in cap_parts if p not in values]
    if free == ["r_y"]:
        values["r_y"] = c_target * values["r_m"] / values["c_x"]
    elif free == ["c_x"]:
        values["c_x"] = c_target * values["r_m"] / values["r_y"]
    elif free == ["r_m"]:
        values["r_m"] = values["r_y"] * values["c_x"] / c_target
    else:
        got = values["r_y"] * values["c_x"] / values["r_m"]
        err = _rel_err(got, c_target)
        if err > tolerance:
            raise SizingError(_CAP_RELATION, f"{got:.4g} F vs target {c_target:.4g} F ({err:.2%} > {tolerance:.2%})")

    # resistance relation: r_a, r_b, r_f (r_m, r_y now known)
    res_parts = ("r_a", "r_b", "r_f")
    for name in ("r_b", "r_f"):
        if sum(p not in values for p in res_parts) > 1:
            values[name] = getattr(TABLE1, name)
    free = [p for p in res_parts if p not in values]
    r_m, r_y = values["r_m"], values["r_y"]
    if free == ["r_a"]:
        gain = r_target * (values["r_f"] + r_y) / (values["r_f"] * r_m)
        values["r_a"] = (gain - 1) * values["r_b"]
        if values["r_a"] <= 0:
            raise SizingError(_RES_RELATION, "would need R_a <= 0; raise R_m or lower R_f")
    elif free == ["r_b"]:
        gain = r_target * (values["r_f"] + r_y) / (values["r_f"] * r_m)
        if gain <= 1:
            raise SizingError(_RES_RELATION, "would need R_b < 0")
        values["r_b"] = values["r_a"] / (gain - 1)
    elif free == ["r_f"]:
        g = (values["r_a"] + values["r_b"]) / values["r_b"]
        denom = g * r_m - r_target
        if denom <= 0:
            raise SizingError(_RES_RELATION, "no positive R_f reaches the target")
        values["r_f"] = r_target * r_y / denom
    else:
        got = (values["r_a"] + values["r_b"]) / values["r_b"] * values["r_f"] * r_m / (values["r_f"] + r_y)
        err = _rel_err(got, r_target)
        if err > tolerance:
            raise SizingError(_RES_RELATION, f"{got:.4g} ohm vs target {r_target:.4g} ohm ({err:.2%} > {tolerance:.2%})")

    cp = replace(TABLE1, **values)
    check = validity(cp, h.omega)
    if check["level"] != "ok":
        warnings.warn(
            f"conditioning corners only {min(check['ratio_x'], check['ratio_y']):.2f}x above w_res",
            stacklevel=2,
        )
    return cp


def sizing_report(h: HarvesterParams, cp: ControllerParams) -> list[tuple[str, str]]:
    """Rows of a component/derived-value table in engineering units."""
    v_th, _, dvt = hysteresis_thresholds(cp)
    f_x, f_y = corner_frequencies(cp)
    load = emulated_admittance(cp, h.omega)
    rows = [
        ("L_B", f"{cp.l_b * 1e3:.6g} mH"),
        ("R_m", f"{cp.r_m:.6g} ohm"),
        ("C_x", f"{cp.c_x * 1e9:.6g} nF"),
        ("R_x", f"{cp.r_x / 1e3:.6g} kohm"),
        ("R_y", f"{cp.r_y / 1e3:.6g} kohm"),
        ("R_f", f"{cp.r_f / 1e3:.6g} kohm"),
        ("R_a", f"{cp.r_a / 1e3:.6g} kohm"),
        ("R_b", f"{cp.r_b / 1e3:.6g} kohm"),
        ("R_p", f"{cp.r_p / 1e3:.6g} kohm"),
        ("R_q", f"{cp.r_q / 1e6:.6g} Mohm"),
        ("V+", f"{cp.v_supply:.6g} V"),
        ("V_DC = V_n", f"{cp.v_dc:.6g} V"),
        ("R_a/R_b", f"{cp.r_a / cp.r_b:.6g}"),
        ("V_TH", f"{v_th * 1e3:.6g} mV"),
        ("Delta V_T", f"{dvt * 1e3:.6g} mV"),
        ("f_x", f"{f_x:.6g} Hz"),
        ("f_y", f"{f_y / 1e3:.6g} kHz"),
        ("R_e", f"{load.r_e:.6g} ohm"),
        ("C_n", f"{load.c_n * 1e9:.6g} nF"),
        ("X_e", f"{load.x_e:.6g} ohm"),
    ]
    return rows
