"""One-realisation network evaluation and the episodic environment around it."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mobility as mob
from .baselines import LoadVector, all_on, compute_loads, it_qos_lb
from .geometry import UrbanMap
from .metrics import StepRecord
from .power import PowerConfig, energy_efficiency, network_power
from .qos import QosConfig, qos_ratio
from .radio import AssociationResult, BeamCodebook, LinkTable, RadioConfig, allocate_prbs, associate, boresights, rsrp_table, throughput


@dataclass
class NetworkSnapshot:
    association: AssociationResult
    prb_per_ue: np.ndarray
    used_prbs_per_bs: np.ndarray
    rates: np.ndarray
    total_rate: float
    power_per_bs: np.ndarray
    total_power: float
    ee: float
    active_mask: np.ndarray
    loads: LoadVector
    qos_ratio: float = float("nan")


def evaluate_snapshot(links: LinkTable, active_mask, radio: RadioConfig, power: PowerConfig) -> NetworkSnapshot:
    mask = np.asarray(active_mask, dtype=np.int8)
    U, N = links.rsrp_dbm.shape
    assoc = associate(links.rsrp_dbm, mask, radio.coverage_threshold_dbm)
    prb, used = allocate_prbs(assoc, radio.n_prb, U, N)
    rates = throughput(assoc, prb, radio)
    p_bs = network_power(power, used, radio.n_prb, mask)
    total_rate = float(rates.sum())
    total_power = float(p_bs.sum())
    return NetworkSnapshot(
        association=assoc,
        prb_per_ue=prb,
        used_prbs_per_bs=used,
        rates=rates,
        total_rate=total_rate,
        power_per_bs=p_bs,
        total_power=total_power,
        ee=energy_efficiency(total_rate, total_power),
        active_mask=mask,
        loads=compute_loads(assoc),
    )


@dataclass
class StepOutcome:
    snapshot: NetworkSnapshot  # under the applied mask
    baseline: NetworkSnapshot  # All-On shadow at the same UE positions
    psi: float


class SmoEnv:
    """Map + BS sites + mobile UEs; evaluates any sleep mask at each realisation."""

    def __init__(
        self,
        umap: UrbanMap,
        bs_pos,
        n_ue: int,
        radio: RadioConfig,
        power: PowerConfig,
        mobility: mob.MobilityConfig,
        qos: QosConfig,
        t_step_s: float = 360.0,
        rng: np.random.Generator | None = None,
    ):
        self.umap = umap
        self.bs_pos = np.atleast_2d(np.asarray(bs_pos, dtype=float))
        self.n_ue = n_ue
        self.radio = radio
        self.power = power
        self.mobility = mobility
        self.qos = qos
        self.t_step_s = t_step_s
        self.rng = rng if rng is not None else np.random.default_rng(mobility.seed)
        self.beams = BeamCodebook(radio)
        self.boresight = boresights(self.bs_pos, umap.sa_centroid)
        self.state: mob.MobilityState | None = None
        self._links: LinkTable | None = None

    @property
    def n_bs(self) -> int:
        return len(self.bs_pos)

    @property
    def steps_per_episode(self) -> int:
        return int(round(self.mobility.t_episode_s / self.t_step_s))

    def reset(self) -> None:
        """New episode: fresh communities, UE placement and epoch schedules."""
        self.state = mob.init_episode(self.umap, self.mobility, self.n_ue, self.rng)
        self._links = None

    def advance(self) -> None:
        mob.step(self.state, self.umap, self.mobility, self.t_step_s, self.rng)
        self._links = None

    @property
    def ue_positions(self) -> np.ndarray:
        return self.state.positions3d

    def links(self) -> LinkTable:
        if self._links is None:
            self._links = rsrp_table(self.umap, self.bs_pos, self.ue_positions, self.radio, self.beams, self.boresight)
        return self._links

    def evaluate(self, mask) -> NetworkSnapshot:
        return evaluate_snapshot(self.links(), mask, self.radio, self.power)

    def baseline(self) -> NetworkSnapshot:
        return self.evaluate(np.ones(self.n_bs, dtype=np.int8))

    def outcome(self, mask, baseline: NetworkSnapshot | None = None) -> StepOutcome:
        base = baseline or self.baseline()
        snap = self.evaluate(mask)
        snap.qos_ratio = qos_ratio(snap.rates, base.rates, self.qos.alpha)
        base.qos_ratio = 1.0 if base is snap else qos_ratio(base.rates, base.rates, self.qos.alpha)
        return StepOutcome(snap, base, snap.qos_ratio)

    def qos_oracle(self, baseline: NetworkSnapshot | None = None):
        """``evaluate(mask) -> (psi, bs_loads)`` closure for IT-QoS-LB at this realisation."""
        base = baseline or self.baseline()

        def evaluate(mask):
            snap = self.evaluate(mask)
            return qos_ratio(snap.rates, base.rates, self.qos.alpha), snap.loads.bs

        return evaluate


def run_baseline(env: SmoEnv, strategy: str, episodes: int, metric_log, reward_fn=None, keep_ue_rates: bool = True):
    """Drive ``allon`` or ``itqoslb`` through the same episode loop the agents use.

    ``reward_fn(ee_mbit, psi, mask)`` is logged for comparison; zero if omitted.
    """
    if strategy not in ("allon", "itqoslb"):
        raise ValueError(f"unknown baseline strategy {strategy!r}")
    for ep in range(1, episodes + 1):
        env.reset()
        for t in range(1, env.steps_per_episode + 1):
            env.advance()
            base = env.baseline()
            if strategy == "allon":
                mask = all_on(env.n_bs)
            else:
                mask = it_qos_lb(env.qos_oracle(base), env.n_bs, env.qos.beta)
            out = env.outcome(mask, base)
            r = 0.0 if reward_fn is None else reward_fn(out.snapshot.ee / 1e6, out.psi, mask)
            metric_log.append(StepRecord.from_outcome(ep, t, out, r, keep_ue_rates))
    return metric_log
