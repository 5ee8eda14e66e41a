"""Load-dependent gNB power model and network energy efficiency.

The default hardware profile is representative only (a full-load gNB
draws roughly 300 W). Absolute EE figures depend on it; orderings
between sleep strategies are what the simulator is meant to compare.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PowerConfig:
    p_bbu_w: float = 150.0
    rho_cooling: float = 0.10
    rho_dc: float = 0.07
    n_rf: int = 4
    n_cc: int = 1
    p_mix_w: float = 0.5
    p_adc_w: float = 0.8
    p_dac_w: float = 0.8
    p_ps_w: float = 0.03
    p_ms_w: float = 5.0
    p_pa_w: float = 0.5
    pa_efficiency: float = 0.25
    p_tx_max_w: float = 10.0
    n_antennas: int = 64
    p_sleep_w: float = 0.0

    def __post_init__(self):
        powers = ("p_bbu_w", "p_mix_w", "p_adc_w", "p_dac_w", "p_ps_w", "p_ms_w", "p_pa_w", "p_tx_max_w", "p_sleep_w")
        for name in powers:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 < self.pa_efficiency <= 1:
            raise ValueError("pa_efficiency must lie in (0, 1]")
        for name in ("rho_cooling", "rho_dc"):
            if not 0 <= getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in [0, 1)")
        if min(self.n_rf, self.n_cc, self.n_antennas) < 1:
            raise ValueError("n_rf, n_cc and n_antennas must be >= 1")

    @property
    def aau_static_w(self) -> float:
        return (
            self.n_rf * self.n_cc * (self.p_mix_w + self.p_adc_w + self.p_dac_w)
            + self.n_antennas * self.n_rf * self.p_ps_w
            + self.p_ms_w * self.n_rf / 2
            + self.n_antennas * self.p_pa_w
        )


def aau_power(cfg: PowerConfig, used_prbs, n_prb_total) -> np.ndarray:
    if n_prb_total <= 0:
        raise ValueError("n_prb_total must be positive")
    load = np.asarray(used_prbs, dtype=float) / n_prb_total
    return cfg.aau_static_w + cfg.p_tx_max_w * load / cfg.pa_efficiency


def gnb_power(cfg: PowerConfig, aau_w, active) -> np.ndarray:
    on = (cfg.p_bbu_w + np.asarray(aau_w, dtype=float)) / ((1 - cfg.rho_cooling) * (1 - cfg.rho_dc))
    return np.where(np.asarray(active, dtype=bool), on, cfg.p_sleep_w)


def network_power(cfg: PowerConfig, used_prbs, n_prb_total, active_mask) -> np.ndarray:
    """Per-BS consumption in watts."""
    return gnb_power(cfg, aau_power(cfg, used_prbs, n_prb_total), active_mask)


def energy_efficiency(total_rate_bps: float, total_power_w: float) -> float:
    """Delivered bits per joule; zero when nothing draws power."""
    if total_power_w <= 0:
        return 0.0
    return float(total_rate_bps / total_power_w)
