"""Throughput QoS relative to the All-On counterfactual."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class QosConfig:
    alpha: float = 0.7
    beta: float = 0.7

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("qos.alpha must lie in (0, 1]")
        if not 0 < self.beta < 1:
            raise ValueError("qos.beta must lie in (0, 1)")


def qos_ratio(actual_rates, baseline_rates, alpha: float) -> float:
    """Fraction of UEs whose rate strictly exceeds ``alpha`` times the All-On rate."""
    actual = np.asarray(actual_rates, dtype=float)
    baseline = np.asarray(baseline_rates, dtype=float)
    if actual.shape != baseline.shape:
        raise ValueError("rate vectors differ in length")
    if actual.size == 0:
        raise ValueError("qos_ratio needs at least one UE")
    return float(np.count_nonzero(actual > alpha * baseline)) / actual.size


def qos_met(psi: float, beta: float) -> bool:
    # boundary counts as satisfied
    return psi >= beta
