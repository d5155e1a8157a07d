"""Time-domain simulation of the harvester with an attached load.

Two fidelity levels share one result type:

* behavioral: the load is an ideal linear element (parallel R with an
  inductor, capacitor or negative capacitor) or a sinusoidal voltage
  generator;
* switched: the hysteretic current-mode converter of :mod:`rpveh.interface`
  with an inductor, a synchronous leg to the +/-V_DC rails and dead time.

The step ``dt`` is snapped so that an integer number of steps spans one drive
period; every average is taken over whole periods.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .harvester import G_ACCEL, HarvesterParams, optimal_impedance
from .interface import ControllerParams, EmulatedLoad, hysteresis_thresholds
from .loads import ParallelImpedance, VoltageGenerator, phasor_nodal_oracle, power_generator_load

AVG_WINDOW_PERIODS = 10


class IntegrationError(RuntimeError):
    def __init__(self, message: str, t: float | None = None):
        super().__init__(message if t is None else f"{message} (t={t:.6g} s)")
        self.t = t


class SimConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AccelProfile:
    """Piecewise-constant acceleration amplitude (g) at a fixed drive frequency."""

    drive_freq: float
    segments: tuple[tuple[float, float], ...]  # (duration s, amplitude g)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple((float(d), float(a)) for d, a in self.segments))
        if not self.drive_freq > 0:
            raise SimConfigError("drive_freq must be > 0")
        if not self.segments:
            raise SimConfigError("profile needs at least one segment")
        for duration, amplitude in self.segments:
            if not duration > 0:
                raise SimConfigError(f"segment duration must be > 0, got {duration}")
            if amplitude < 0:
                raise SimConfigError(f"segment amplitude must be >= 0, got {amplitude}")

    @classmethod
    def constant(cls, amplitude: float, duration: float, drive_freq: float) -> "AccelProfile":
        return cls(drive_freq, ((duration, amplitude),))

    @classmethod
    def step(cls, a0: float, a1: float, t_step: float, duration: float, drive_freq: float) -> "AccelProfile":
        if not 0 < t_step < duration:
            raise SimConfigError("step time must lie inside the run")
        return cls(drive_freq, ((t_step, a0), (duration - t_step, a1)))

    @classmethod
    def periodic_square(
        cls, a_lo: float, a_hi: float, period: float, duration: float, drive_freq: float
    ) -> "AccelProfile":
        """Alternate ``a_lo`` and ``a_hi`` every half ``period`` starting low."""
        half = period / 2
        segs, t, k = [], 0.0, 0
        while t < duration - 1e-12:
            d = min(half, duration - t)
            segs.append((d, a_lo if k % 2 == 0 else a_hi))
            t += d
            k += 1
        return cls(drive_freq, tuple(segs))

    @property
    def duration(self) -> float:
        return sum(d for d, _ in self.segments)

    def boundaries(self) -> np.ndarray:
        return np.cumsum([d for d, _ in self.segments])

    def amplitudes(self) -> np.ndarray:
        return np.array([a for _, a in self.segments], dtype=float)

    def amplitude_at(self, t: float) -> float:
        idx = int(np.searchsorted(self.boundaries(), t, side="right"))
        return self.segments[min(idx, len(self.segments) - 1)][1]

    def steps(self) -> list[tuple[float, float, float]]:
        """``(time, a_before, a_after)`` for every segment boundary."""
        out, t = [], 0.0
        for (d0, a0), (_, a1) in zip(self.segments, self.segments[1:]):
            t += d0
            out.append((t, a0, a1))
        return out


@dataclass(frozen=True)
class SimConfig:
    dt: float = 2e-6
    t_end: float | None = None  # defaults to the profile duration
    fidelity: str = "behavioral"
    record_decimation: int = 50
    q_factor_override: float | None = None
    conditioning: str = "approximate"
    conditioning_corner_hz: float = 2e3

    def __post_init__(self):
        if not self.dt > 0:
            raise SimConfigError("dt must be > 0")
        if self.t_end is not None and not self.t_end > 0:
            raise SimConfigError("t_end must be > 0")
        if self.fidelity not in ("behavioral", "switched"):
            raise SimConfigError(f"unknown fidelity {self.fidelity!r}")
        if self.record_decimation < 1:
            raise SimConfigError("record_decimation must be >= 1")
        if self.conditioning not in ("exact", "approximate"):
            raise SimConfigError(f"unknown conditioning mode {self.conditioning!r}")
        if not self.conditioning_corner_hz > 0:
            raise SimConfigError("conditioning_corner_hz must be > 0")


@dataclass
class SimState:
    """Final integration state; fields not used by a fidelity stay at zero."""

    t: float = 0.0
    x: float = 0.0
    x_dot: float = 0.0
    v_p: float = 0.0
    i_lb: float = 0.0  # boost inductor current (switched) or load inductor current
    v_neg_cap: float = 0.0  # conditioning/derivative state (switched)
    switch_state: str = "high"

    def vector(self, n: int) -> np.ndarray:
        if n == 4:
            return np.array([self.x, self.x_dot, self.v_p, self.i_lb])
        return np.array([self.x, self.x_dot, self.v_p, self.i_lb, self.v_neg_cap])


@dataclass
class SimResult:
    fidelity: str
    drive_freq: float
    dt: float
    traces: dict[str, np.ndarray]
    period_end: np.ndarray  # end time of every whole drive period
    period: dict[str, np.ndarray]  # per-period averages and phasor sums
    profile: AccelProfile
    final_state: SimState
    stats: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def power_key(self) -> str:
        return "p_dc" if self.fidelity == "switched" else "p_load"

    @property
    def period_power(self) -> np.ndarray:
        return self.period[self.power_key]

    def _window(self, window_periods: int, end: float | None) -> slice:
        ends = self.period_end
        stop = len(ends) if end is None else int(np.searchsorted(ends, end + 1e-12, side="right"))
        start = stop - window_periods
        if start < 0 or window_periods < 1:
            raise ValueError("not enough whole periods for the requested window")
        return slice(start, stop)

    def avg_power(self, window_periods: int = AVG_WINDOW_PERIODS, end: float | None = None, kind: str | None = None) -> float:
        """Mean power over the ``window_periods`` whole periods ending at ``end``."""
        sel = self._window(window_periods, end)
        return float(np.mean(self.period[kind or self.power_key][sel]))

    def phasors(self, window_periods: int = AVG_WINDOW_PERIODS, end: float | None = None) -> tuple[complex, complex]:
        """Fundamental phasors of (v_load, i_load) referenced to ``sin(w t)``."""
        sel = self._window(window_periods, end)
        p = self.period
        v = 2 * complex(np.mean(p["v_s"][sel]), np.mean(p["v_c"][sel]))
        i = 2 * complex(np.mean(p["i_s"][sel]), np.mean(p["i_c"][sel]))
        return v, i

    def phase_lag(self, window_periods: int = AVG_WINDOW_PERIODS, end: float | None = None) -> float:
        """Angle by which i_load lags v_load (radians, positive = lagging)."""
        v, i = self.phasors(window_periods, end)
        return float(np.angle(v / i))

    def emulated_load(self, window_periods: int = AVG_WINDOW_PERIODS, end: float | None = None) -> tuple[float, float]:
        """Parallel (R, C) seen at the load port from demodulated phasors."""
        v, i = self.phasors(window_periods, end)
        y = i / v
        omega = 2 * math.pi * self.drive_freq
        return 1 / y.real, y.imag / omega

    def settle_time(self, fraction: float = 0.05, step_index: int = 0):
        return settle_time(self, fraction, step_index)


def settle_time(result: SimResult, fraction: float = 0.05, step_index: int = 0) -> float | None:
    """Time after a profile step until period-averaged power stays near its final value.

    The final value is the mean of the last ``AVG_WINDOW_PERIODS`` periods
    before the next step (or the run end). Returns ``None`` when the profile
    has no step.
    """
    steps = result.profile.steps()
    if step_index >= len(steps):
        return None
    t_step = steps[step_index][0]
    t_next = steps[step_index + 1][0] if step_index + 1 < len(steps) else math.inf
    period = 1.0 / result.drive_freq
    ends = result.period_end
    power = result.period_power
    mask = (ends > t_step) & (ends <= t_next + 1e-12)
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        return None
    final = float(np.mean(power[idx[-min(AVG_WINDOW_PERIODS, len(idx)):]]))
    tol = fraction * abs(final) if final != 0 else fraction * max(np.max(np.abs(power[idx])), 1e-300)
    outside = np.abs(power[idx] - final) > tol
    if not outside.any():
        first = idx[0]
    else:
        last_bad = int(np.flatnonzero(outside)[-1])
        if last_bad + 1 >= len(idx):
            return None
        first = idx[last_bad + 1]
    start = ends[first] - period
    return max(0.0, float(start - t_step))


def _grid(h: HarvesterParams, profile: AccelProfile, cfg: SimConfig) -> tuple[float, int, int]:
    period = 1.0 / profile.drive_freq
    spp = max(1, round(period / cfg.dt))
    dt = period / spp
    t_end = cfg.t_end if cfg.t_end is not None else profile.duration
    n_steps = max(1, round(t_end / dt))
    return dt, spp, n_steps


def _harvester_for(h: HarvesterParams, cfg: SimConfig) -> HarvesterParams:
    return h.with_q(cfg.q_factor_override) if cfg.q_factor_override else h


def _period_dict(acc: np.ndarray) -> dict[str, np.ndarray]:
    return {name: acc[:, j].copy() for j, name in enumerate(K.ACC_COLUMNS)}


def _traces(trace: np.ndarray, switched: bool) -> dict[str, np.ndarray]:
    cols = K.TRACE_COLUMNS if switched else K.TRACE_COLUMNS[:7]
    return {name: trace[:, j].copy() for j, name in enumerate(cols)}


def _behavioral_params(h: HarvesterParams, load, omega: float) -> tuple[np.ndarray, bool]:
    mech = h.mechanical()
    base = [mech.m, mech.d, mech.k, mech.alpha, h.c_p]
    if isinstance(load, VoltageGenerator):
        p = base + [1.0, 0.0, 0.0, omega, G_ACCEL, K.GENERATOR, load.v_load, load.phi_load]
        return np.array(p, dtype=float), False
    if isinstance(load, EmulatedLoad):
        g, c_extra, inv_l = 1.0 / load.r_e, load.c_n, 0.0
    elif isinstance(load, ParallelImpedance):
        g = 1.0 / load.r_load
        if load.x_load > 0:
            # inductive reactance realized by an inductor at the drive frequency
            c_extra, inv_l = 0.0, omega / load.x_load
        else:
            c_extra, inv_l = -1.0 / (omega * load.x_load), 0.0
    else:
        raise TypeError(f"unsupported behavioral load {type(load).__name__}")
    c_tot = h.c_p + c_extra
    if c_tot < -1e-9 * h.c_p:
        raise SimConfigError(
            f"total node capacitance {c_tot:.4g} F is negative; the emulated load is unstable"
        )
    mode = K.SHUNT_ALGEBRAIC if abs(c_tot) <= 1e-9 * h.c_p else K.SHUNT_ODE
    p = base + [g, c_extra, inv_l, omega, G_ACCEL, mode, 0.0, 0.0]
    return np.array(p, dtype=float), True


def simulate_behavioral(
    h: HarvesterParams,
    load,
    profile: AccelProfile,
    cfg: SimConfig = SimConfig(),
    state: SimState | None = None,
    t0: float = 0.0,
) -> SimResult:
    """Integrate the harvester with an ideal load (RK4, fixed step).

    ``load`` is a :class:`ParallelImpedance`, :class:`EmulatedLoad` or
    :class:`VoltageGenerator`. ``state``/``t0`` continue a previous run; the
    profile is always indexed by absolute time.
    """
    h = _harvester_for(h, cfg)
    omega = 2 * math.pi * profile.drive_freq
    dt, spp, n_steps = _grid(h, profile, cfg)
    p, _ = _behavioral_params(h, load, omega)
    y0 = (state or SimState()).vector(4)
    try:
        y, acc, trace = K.run_behavioral(
            y0, t0, n_steps, dt, spp, cfg.record_decimation, p, profile.boundaries(), profile.amplitudes()
        )
    except FloatingPointError as exc:
        raise IntegrationError(str(exc)) from exc
    n_periods = acc.shape[0]
    period_end = t0 + (np.arange(n_periods) + 1) * spp * dt
    final = SimState(t=t0 + n_steps * dt, x=y[0], x_dot=y[1], v_p=y[2], i_lb=y[3])
    return SimResult(
        fidelity="behavioral",
        drive_freq=profile.drive_freq,
        dt=dt,
        traces=_traces(trace, False),
        period_end=period_end,
        period=_period_dict(acc),
        profile=profile,
        final_state=final,
    )


def _switched_params(h: HarvesterParams, cp: ControllerParams, omega: float, cfg: SimConfig) -> np.ndarray:
    mech = h.mechanical()
    v_th, v_tl, _ = hysteresis_thresholds(cp)
    q = [
        mech.m, mech.d, mech.k, mech.alpha, h.c_p, omega, G_ACCEL,
        cp.l_b, cp.r_m, cp.v_dc, cp.v_n, cp.diode_drop,
        cp.r_x, cp.r_y, cp.r_f, cp.c_x, cp.divider,
        2 * math.pi * cfg.conditioning_corner_hz,
        1.0 if cfg.conditioning == "exact" else 0.0,
        v_th, v_tl, cp.dead_time,
    ]
    return np.array(q, dtype=float)


_SW_NAMES = {K.HIGH: "high", K.LOW: "low", K.DEAD: "dead"}


def simulate_switched(
    h: HarvesterParams,
    cp: ControllerParams,
    profile: AccelProfile,
    cfg: SimConfig = SimConfig(dt=0.25e-6, fidelity="switched", record_decimation=200),
) -> SimResult:
    """Integrate harvester plus the hysteretic converter.

    ``cfg.conditioning`` selects how ``v_e`` is formed: ``exact`` integrates
    the R_x-C_x branch of the conditioning op-amp; ``approximate`` uses the
    low-frequency form with the ``dv/dt`` term taken from a first-order
    differentiator rolled off at ``cfg.conditioning_corner_hz``.
    """
    h = _harvester_for(h, cfg)
    omega = 2 * math.pi * profile.drive_freq
    dt, spp, n_steps = _grid(h, profile, cfg)
    if cp.dead_time > 0 and cp.dead_time < dt:
        raise SimConfigError(f"dead time {cp.dead_time:.3g} s is shorter than dt {dt:.3g} s")
    q = _switched_params(h, cp, omega, cfg)
    y0 = np.zeros(5)
    try:
        y, acc, trace, stats = K.run_switched(
            y0, 0.0, n_steps, dt, spp, cfg.record_decimation, q, profile.boundaries(), profile.amplitudes()
        )
    except FloatingPointError as exc:
        raise IntegrationError(str(exc)) from exc
    n_switch, min_interval, exc_hi, exc_lo = stats
    notes = []
    if n_switch > 1 and min_interval / dt < 20:
        msg = f"shortest switching interval {min_interval:.3g} s holds only {min_interval / dt:.1f} steps (< 20)"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
    n_periods = acc.shape[0]
    final = SimState(
        t=n_steps * dt, x=y[0], x_dot=y[1], v_p=y[2], i_lb=y[3], v_neg_cap=y[4],
        switch_state=_SW_NAMES.get(int(trace[-1, 8]), "high"),
    )
    return SimResult(
        fidelity="switched",
        drive_freq=profile.drive_freq,
        dt=dt,
        traces=_traces(trace, True),
        period_end=(np.arange(n_periods) + 1) * spp * dt,
        period=_period_dict(acc),
        profile=profile,
        final_state=final,
        stats={
            "n_switch": int(n_switch),
            "min_switch_interval": float(min_interval),
            "ve_excess_high": float(exc_hi),
            "ve_excess_low": float(exc_lo),
        },
        warnings=notes,
    )


def run_fixed_generator(
    h: HarvesterParams, v_fixed: float, phi_fixed: float, profile: AccelProfile, cfg: SimConfig = SimConfig()
) -> SimResult:
    """Behavioral run against a voltage generator that never adapts."""
    return simulate_behavioral(h, VoltageGenerator(v_fixed, phi_fixed), profile, cfg)


def matched_load(h: HarvesterParams) -> EmulatedLoad:
    """Optimal resistance in parallel with ``-C_p``."""
    return EmulatedLoad(r_e=optimal_impedance(h).r_opt, c_n=-h.c_p, omega=h.omega)


def mechanical_time_constant(h: HarvesterParams) -> float:
    """Amplitude decay time of the unloaded resonator, ``2Q/w``."""
    return 2 * h.q_factor / h.omega


def calibrate_q_factor(
    h: HarvesterParams,
    target: float = 0.100,
    a_final: float = 1.0,
    t_step: float = 0.020,
    fraction: float = 0.05,
    q_lo: float = 2.0,
    q_hi: float = 200.0,
    tol: float = 1e-3,
    dt: float = 5e-6,
) -> float:
    """Bisect Q so the matched-load 0 -> ``a_final`` step settles in ``target`` seconds."""

    def settle(q: float) -> float:
        hq = h.with_q(q)
        tau = mechanical_time_constant(hq)
        duration = t_step + max(20 * tau, 10 * target)
        profile = AccelProfile.step(0.0, a_final, t_step, duration, h.f_res)
        res = simulate_behavioral(hq, matched_load(hq), profile, SimConfig(dt=dt, record_decimation=10_000))
        return res.settle_time(fraction)

    lo, hi = q_lo, q_hi
    if not settle(lo) < target < settle(hi):
        raise ValueError("target settle time not bracketed by [q_lo, q_hi]")
    while (hi - lo) / lo > tol:
        mid = 0.5 * (lo + hi)
        if settle(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def expected_power(h: HarvesterParams, load, a_max: float) -> float:
    """Steady-state phasor prediction for a behavioral load."""
    if isinstance(load, VoltageGenerator):
        return power_generator_load(h, a_max, load.v_load, load.phi_load)[0]
    if isinstance(load, EmulatedLoad):
        load = ParallelImpedance(load.r_e, load.x_e)
    return phasor_nodal_oracle(h, a_max, load)[0]
