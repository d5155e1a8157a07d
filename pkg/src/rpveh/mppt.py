"""Two-variable perturb-and-observe baseline.

The load is a sinusoidal voltage generator whose amplitude and phase are
hill-climbed one axis at a time. Each operating point is held for a dwell of
whole drive periods; the decision uses the power averaged over the last few
periods of the dwell, after the mechanical transient has (mostly) decayed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .harvester import HarvesterParams
from .loads import VoltageGenerator
from .transient import (
    AccelProfile,
    SimConfig,
    SimConfigError,
    SimResult,
    SimState,
    mechanical_time_constant,
    simulate_behavioral,
)

MIN_DWELL_TIME_CONSTANTS = 3.0


@dataclass(frozen=True)
class PnOConfig:
    v_step: float = 0.25  # V
    phi_step: float = 0.05  # rad
    dwell_periods: int = 40
    measure_periods: int = 5
    v_min: float = 0.0

    def __post_init__(self):
        if self.v_step < 0 or self.phi_step < 0:
            raise SimConfigError("perturbation sizes must be >= 0")
        if self.dwell_periods < 1:
            raise SimConfigError("dwell_periods must be >= 1")
        if not 1 <= self.measure_periods <= self.dwell_periods:
            raise SimConfigError("measure_periods must lie in [1, dwell_periods]")


@dataclass
class PnOStep:
    t: float  # end of the dwell
    v_load: float
    phi_load: float
    power: float  # measured at the end of the dwell


@dataclass
class PnOResult:
    result: SimResult
    trajectory: list[PnOStep]
    dwell: float  # s
    reliable: bool
    degenerate: bool
    notes: list[str] = field(default_factory=list)

    def operating_point(self) -> tuple[float, float]:
        last = self.trajectory[-1]
        return last.v_load, last.phi_load

    def tail(self, n: int) -> list[PnOStep]:
        return self.trajectory[-n:]

    def tracking_time(self, t_step: float, v_target: float, v_tol: float, phi_tol: float) -> float | None:
        """Time from ``t_step`` until the operating point enters the target box for good.

        The box is ``|V - v_target| <= v_tol`` and ``|phi| <= phi_tol``. Each
        trajectory entry is the point held during the dwell ending at its
        ``t``. Returns ``None`` if the run ends outside the box.
        """
        traj = [s for s in self.trajectory if s.t > t_step]
        inside = [abs(s.v_load - v_target) <= v_tol + 1e-12 and abs(s.phi_load) <= phi_tol + 1e-12 for s in traj]
        if not inside or not inside[-1]:
            return None
        k = len(inside) - 1
        while k > 0 and inside[k - 1]:
            k -= 1
        return max(0.0, traj[k].t - self.dwell - t_step)


def _concat(parts: list[SimResult], profile: AccelProfile) -> SimResult:
    first, last = parts[0], parts[-1]
    traces = {k: np.concatenate([p.traces[k] for p in parts]) for k in first.traces}
    period = {k: np.concatenate([p.period[k] for p in parts]) for k in first.period}
    return SimResult(
        fidelity="behavioral",
        drive_freq=first.drive_freq,
        dt=first.dt,
        traces=traces,
        period_end=np.concatenate([p.period_end for p in parts]),
        period=period,
        profile=profile,
        final_state=last.final_state,
    )


def run_pno_2d(
    h: HarvesterParams,
    profile: AccelProfile,
    mppt_cfg: PnOConfig = PnOConfig(),
    cfg: SimConfig = SimConfig(),
    start: tuple[float, float] = (2.0, 0.3),
) -> PnOResult:
    """Hill-climb the generator amplitude and phase over the whole profile.

    Axes alternate every dwell. A perturbation that lowered the measured
    power reverses that axis' direction for its next move.
    """
    h_eff = h.with_q(cfg.q_factor_override) if cfg.q_factor_override else h
    period = 1.0 / profile.drive_freq
    dwell = mppt_cfg.dwell_periods * period
    notes = []
    tau = mechanical_time_constant(h_eff)
    reliable = dwell >= MIN_DWELL_TIME_CONSTANTS * tau
    if not reliable:
        msg = (
            f"dwell {dwell * 1e3:.1f} ms is shorter than {MIN_DWELL_TIME_CONSTANTS:g} mechanical "
            f"time constants ({tau * 1e3:.1f} ms each); decisions are taken before the transient decays"
        )
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
    degenerate = mppt_cfg.v_step == 0 and mppt_cfg.phi_step == 0
    if degenerate:
        notes.append("zero perturbation size: the operating point never moves")

    t_total = cfg.t_end if cfg.t_end is not None else profile.duration
    n_dwell = max(1, int(math.floor(t_total / dwell + 1e-9)))
    chunk_cfg = SimConfig(
        dt=cfg.dt, t_end=dwell, record_decimation=cfg.record_decimation, q_factor_override=cfg.q_factor_override
    )

    v, phi = float(start[0]), float(start[1])
    steps = {0: mppt_cfg.v_step, 1: mppt_cfg.phi_step}
    direction = {0: 1.0, 1: 1.0}
    axis = 0
    last_power = None
    state, t0 = SimState(), 0.0
    parts, trajectory = [], []
    for _ in range(n_dwell):
        res = simulate_behavioral(h, VoltageGenerator(v, phi), profile, chunk_cfg, state=state, t0=t0)
        parts.append(res)
        state, t0 = res.final_state, res.final_state.t
        p = res.avg_power(mppt_cfg.measure_periods)
        trajectory.append(PnOStep(t0, v, phi, p))
        if last_power is not None and p < last_power:
            # the move just made on the previous axis hurt: go the other way next time
            direction[1 - axis] *= -1.0
        last_power = p
        delta = direction[axis] * steps[axis]
        if axis == 0:
            v = max(mppt_cfg.v_min, v + delta)
        else:
            phi = phi + delta
        axis = 1 - axis
    return PnOResult(_concat(parts, profile), trajectory, dwell, reliable, degenerate, notes)
