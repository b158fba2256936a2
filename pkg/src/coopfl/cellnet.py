"""Simplified cell network simulator for the sleep-control MDP.

One always-active macro cell (MBS) at the origin provides coverage; N small
cells (SBSs) sit on a ring around it, each serving its own cluster of UEs with
a 24-hour traffic pattern. An SBS that sleeps offloads its UEs to the MBS for
that step, which has finite capacity, so aggressive sleeping shows up as
dropped traffic. Radio is path loss + noise only; no fading, no interference,
no handover. Constants are config defaults, not calibrated values.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

OBS_DIM = 8

# PL(d) = 30.5 + 36.7 log10(d), d in meters, clamped at 1 m.
_PL_OFFSET_DB = 30.5
_PL_SLOPE_DB = 36.7


class SleepMode(enum.IntEnum):
    ACTIVE = 0
    SLEEP = 1
    DEEP_SLEEP = 2


@dataclass(frozen=True)
class TrafficProfile:
    """Hour-by-hour load shape (normalized to max 1.0) plus per-SBS scaling."""

    hourly_load: tuple[float, ...]
    peak_rate_per_ue_bps: float
    scale: float = 1.0
    jitter_sigma: float = 0.2

    def __post_init__(self):
        load = np.asarray(self.hourly_load, dtype=np.float64)
        if load.size != 24:
            raise ValueError(f"hourly_load needs 24 entries, got {load.size}")
        if np.any(load < 0) or load.max() <= 0:
            raise ValueError("hourly_load entries must be >= 0 with a positive max")
        object.__setattr__(self, "hourly_load", tuple(load / load.max()))
        if self.peak_rate_per_ue_bps <= 0 or self.scale <= 0:
            raise ValueError("peak rate and scale must be positive")

    def load_at(self, hour: float) -> float:
        """Linear interpolation of the hourly table, wrapping 23h -> 0h."""
        if not 0.0 <= hour < 24.0:
            raise ValueError(f"hour must be in [0, 24), got {hour}")
        i0 = int(hour)
        frac = hour - i0
        i1 = (i0 + 1) % 24
        return (1.0 - frac) * self.hourly_load[i0] + frac * self.hourly_load[i1]


def traffic_demand(
    profile: TrafficProfile, hour: float, rng: np.random.Generator | None = None
) -> float:
    """Per-UE demand in bits/s at the given hour, with unit-mean lognormal jitter."""
    demand = profile.peak_rate_per_ue_bps * profile.scale * profile.load_at(hour)
    sigma = profile.jitter_sigma
    if rng is not None and sigma > 0.0:
        demand *= rng.lognormal(mean=-0.5 * sigma * sigma, sigma=sigma)
    return demand


def path_loss_db(distance_m: float) -> float:
    return _PL_OFFSET_DB + _PL_SLOPE_DB * math.log10(max(distance_m, 1.0))


def link_snr(tx_power_w: float, distance_m: float, noise_power_w: float) -> float:
    return tx_power_w / (10.0 ** (path_loss_db(distance_m) / 10.0)) / noise_power_w


def link_rate(bandwidth_hz: float, snr: float, n_sharing: int) -> float:
    """Shannon capacity share for one of n UEs splitting a cell's bandwidth."""
    if n_sharing <= 0:
        raise ValueError("n_sharing must be >= 1")
    return (bandwidth_hz / n_sharing) * math.log2(1.0 + snr)


@dataclass(frozen=True)
class EnvParams:
    """Scenario constants for the network simulator (config defaults)."""

    n_sbs: int = 6
    ues_per_sbs: tuple[int, ...] = (4, 6, 8, 10, 12, 14)
    traffic_scales: tuple[float, ...] = (0.6, 0.8, 1.0, 1.2, 1.4, 1.6)
    hourly_load: tuple[float, ...] = (
        0.35, 0.25, 0.18, 0.13, 0.11, 0.10, 0.12, 0.18,
        0.26, 0.32, 0.36, 0.40, 0.44, 0.46, 0.48, 0.52,
        0.58, 0.66, 0.76, 0.86, 0.94, 1.00, 0.80, 0.55,
    )
    peak_rate_per_ue_bps: float = 2.0e6
    jitter_sigma: float = 0.2
    bandwidth_hz: float = 1.0e7
    mbs_bandwidth_hz: float = 1.0e7
    noise_power_w: float = 3.2e-13
    sbs_tx_power_w: float = 1.0
    mbs_tx_power_w: float = 1.0
    p_on_w: float = 10.0
    p_load_w: float = 5.0
    sleep_power_factor: float = 0.3
    deep_sleep_power_factor: float = 0.05
    step_minutes: float = 15.0
    sbs_ring_radius_m: float = 250.0
    ue_radius_m: float = 40.0
    w_throughput: float = 0.6
    w_energy: float = 0.3
    w_drop: float = 0.1

    def __post_init__(self):
        if self.n_sbs < 1:
            raise ValueError("need at least one SBS")
        if len(self.ues_per_sbs) != self.n_sbs or len(self.traffic_scales) != self.n_sbs:
            raise ValueError("ues_per_sbs and traffic_scales must have one entry per SBS")

    @property
    def step_hours(self) -> float:
        return self.step_minutes / 60.0

    @property
    def step_seconds(self) -> float:
        return self.step_minutes * 60.0


@dataclass
class StepOutcome:
    """Per-step results; energy efficiency * total energy == throughput * dt."""

    rewards: np.ndarray
    sbs_throughput_bps: np.ndarray
    sbs_energy_j: np.ndarray
    system_throughput_bps: float
    system_energy_efficiency: float
    observations: np.ndarray = field(repr=False)


class CellNetwork:
    """MBS + SBS + UE topology with a simulation clock; source of MDP transitions.

    Geometry is drawn once at construction from ``rng`` and then frozen; the
    traffic jitter uses the rng passed to :meth:`step`, so replaying a seed
    replays the whole outcome stream.
    """

    def __init__(self, params: EnvParams, rng: np.random.Generator):
        self.params = params
        p = params
        self.n_sbs = p.n_sbs
        angles = 2.0 * np.pi * np.arange(p.n_sbs) / p.n_sbs
        self.sbs_pos = np.stack(
            [p.sbs_ring_radius_m * np.cos(angles), p.sbs_ring_radius_m * np.sin(angles)], axis=1
        )
        self.mbs_pos = np.zeros(2)
        home, positions = [], []
        for s in range(p.n_sbs):
            for _ in range(p.ues_per_sbs[s]):
                radius = p.ue_radius_m * math.sqrt(rng.random())
                theta = 2.0 * np.pi * rng.random()
                positions.append(
                    self.sbs_pos[s] + radius * np.array([math.cos(theta), math.sin(theta)])
                )
                home.append(s)
        self.ue_home = np.asarray(home, dtype=np.int64)
        self.ue_pos = np.asarray(positions) if positions else np.zeros((0, 2))
        self.n_ues = len(home)

        d_sbs = np.array(
            [np.linalg.norm(self.ue_pos[u] - self.sbs_pos[self.ue_home[u]]) for u in range(self.n_ues)]
        )
        d_mbs = np.array([np.linalg.norm(self.ue_pos[u]) for u in range(self.n_ues)])
        self.snr_sbs = np.array(
            [link_snr(p.sbs_tx_power_w, d, p.noise_power_w) for d in d_sbs]
        )
        self.snr_mbs = np.array(
            [link_snr(p.mbs_tx_power_w, d, p.noise_power_w) for d in d_mbs]
        )
        self.profiles = [
            TrafficProfile(
                p.hourly_load, p.peak_rate_per_ue_bps, p.traffic_scales[s], p.jitter_sigma
            )
            for s in range(p.n_sbs)
        ]
        self.clock_hours = 0.0
        self.modes = np.full(p.n_sbs, SleepMode.ACTIVE, dtype=np.int64)
        self._max_scale = max(p.traffic_scales)
        self._max_ues = max(max(p.ues_per_sbs), 1)

    # -- power model -------------------------------------------------------

    def _power_w(self, sbs: int, mode: int, utilization: float) -> float:
        p = self.params
        if mode == SleepMode.ACTIVE:
            return p.p_on_w + p.p_load_w * utilization
        if mode == SleepMode.SLEEP:
            return p.sleep_power_factor * p.p_on_w
        return p.deep_sleep_power_factor * p.p_on_w

    def _energy_saving(self, power_w: float) -> float:
        p = self.params
        p_max = p.p_on_w + p.p_load_w
        p_min = p.deep_sleep_power_factor * p.p_on_w
        return min(1.0, max(0.0, (p_max - power_w) / (p_max - p_min)))

    # -- observation -------------------------------------------------------

    def observe(self, sbs_id: int) -> np.ndarray:
        """Fixed 8-dim observation, every entry in [-1, 1].

        [sin hour, cos hour, expected demand (fraction of peak), UE-count
        fraction, mode one-hot x3, fraction of UEs currently on the MBS].
        The demand feature uses the expected (jitter-free) load so it is a
        forecastable signal.
        """
        if not 0 <= sbs_id < self.n_sbs:
            raise ValueError(f"unknown sbs id {sbs_id}")
        p = self.params
        angle = 2.0 * np.pi * self.clock_hours / 24.0
        n_ues = p.ues_per_sbs[sbs_id]
        if n_ues > 0:
            demand_feat = self.profiles[sbs_id].load_at(self.clock_hours) * (
                p.traffic_scales[sbs_id] / self._max_scale
            )
            ue_feat = n_ues / self._max_ues
        else:
            demand_feat, ue_feat = 0.0, 0.0
        one_hot = np.zeros(3)
        one_hot[self.modes[sbs_id]] = 1.0
        offloaded = int(np.sum(self.modes[self.ue_home] != SleepMode.ACTIVE)) if self.n_ues else 0
        mbs_load = offloaded / self.n_ues if self.n_ues else 0.0
        return np.concatenate(
            [[math.sin(angle), math.cos(angle), demand_feat, ue_feat], one_hot, [mbs_load]]
        )

    def observe_all(self) -> np.ndarray:
        return np.stack([self.observe(s) for s in range(self.n_sbs)])

    # -- dynamics ----------------------------------------------------------

    def step(self, actions, rng: np.random.Generator) -> StepOutcome:
        """Apply one sleep decision per SBS, serve traffic, advance the clock."""
        p = self.params
        actions = np.asarray(actions, dtype=np.int64)
        if actions.shape != (self.n_sbs,):
            raise ValueError(f"expected {self.n_sbs} actions, got shape {actions.shape}")
        self.modes = actions.copy()

        base = np.array(
            [traffic_demand(self.profiles[s], self.clock_hours) for s in range(self.n_sbs)]
        )
        demand = base[self.ue_home] if self.n_ues else np.zeros(0)
        if p.jitter_sigma > 0.0 and self.n_ues:
            sigma = p.jitter_sigma
            demand = demand * rng.lognormal(-0.5 * sigma * sigma, sigma, size=self.n_ues)

        active = self.modes == SleepMode.ACTIVE
        ue_on_sbs = active[self.ue_home] if self.n_ues else np.zeros(0, dtype=bool)
        n_on_mbs = int(np.sum(~ue_on_sbs))
        ue_counts = np.bincount(self.ue_home, minlength=self.n_sbs)

        share = np.zeros(self.n_ues)
        for u in range(self.n_ues):
            if ue_on_sbs[u]:
                share[u] = link_rate(p.bandwidth_hz, self.snr_sbs[u], int(ue_counts[self.ue_home[u]]))
            else:
                share[u] = link_rate(p.mbs_bandwidth_hz, self.snr_mbs[u], n_on_mbs)
        delivered = np.minimum(share, demand)

        sbs_tp = np.zeros(self.n_sbs)
        sbs_energy = np.zeros(self.n_sbs)
        rewards = np.zeros(self.n_sbs)
        for s in range(self.n_sbs):
            mine = self.ue_home == s
            dem_s = float(demand[mine].sum())
            del_s = float(delivered[mine].sum())
            sbs_tp[s] = del_s
            ratio = del_s / dem_s if dem_s > 0 else 0.0
            if active[s]:
                cap_s = float(share[mine].sum())
                utilization = min(1.0, del_s / cap_s) if cap_s > 0 else 0.0
                drop = 0.0
            else:
                utilization = 0.0
                drop = 1.0 - ratio if dem_s > 0 else 0.0
            power = self._power_w(s, int(self.modes[s]), utilization)
            sbs_energy[s] = power * p.step_seconds
            rewards[s] = (
                p.w_throughput * ratio
                + p.w_energy * self._energy_saving(power)
                - p.w_drop * drop
            )

        system_tp = float(delivered.sum())
        total_energy = float(sbs_energy.sum())
        efficiency = system_tp * p.step_seconds / total_energy if total_energy > 0 else 0.0

        self.clock_hours = (self.clock_hours + p.step_hours) % 24.0
        return StepOutcome(
            rewards=rewards,
            sbs_throughput_bps=sbs_tp,
            sbs_energy_j=sbs_energy,
            system_throughput_bps=system_tp,
            system_energy_efficiency=efficiency,
            observations=self.observe_all(),
        )
