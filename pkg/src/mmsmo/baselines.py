"""Reference sleep policies: All-On and iterative QoS-aware load-based (IT-QoS-LB)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .radio import AssociationResult


@dataclass
class LoadVector:
    ue: np.ndarray  # share each UE contributes to its serving BS
    bs: np.ndarray


def compute_loads(assoc: AssociationResult) -> LoadVector:
    """UE-centric share load: 1 / (#BSs able to serve the UE), summed on the serving BS."""
    reach = (assoc.serving + assoc.in_sa).sum(axis=1)
    ue = np.zeros(len(reach))
    ue[reach > 0] = 1.0 / reach[reach > 0]
    bs = (assoc.serving * ue[:, None]).sum(axis=0)
    return LoadVector(ue, bs)


def all_on(n_bs: int) -> np.ndarray:
    return np.ones(n_bs, dtype=np.int8)


def rank_by_load(loads) -> np.ndarray:
    """BS indices, lightest first; ties keep the lower index first."""
    return np.argsort(np.asarray(loads, dtype=float), kind="stable")


def it_qos_lb(evaluate: Callable, n_bs: int, beta: float) -> np.ndarray:
    """Sleep BSs in ascending load order until QoS breaks, then undo the last one.

    ``evaluate(mask)`` must return ``(psi, bs_loads)``. Loads are measured
    once, on the all-active network.
    """
    mask = all_on(n_bs)
    _, loads = evaluate(mask.copy())
    for j in rank_by_load(loads):
        mask[j] = 0
        psi, _ = evaluate(mask.copy())
        if psi < beta:
            mask[j] = 1
            break
    return mask
