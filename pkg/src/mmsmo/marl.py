"""Per-BS double-DQN agents trained on a shared, centrally computed reward."""
from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .metrics import StepRecord
from .nn import DEFAULT_HIDDEN, Adam, DenseNet, NonFiniteLossError, sync_target, train_step

log = logging.getLogger(__name__)


class TrainingAborted(RuntimeError):
    def __init__(self, msg, dump_path=None):
        super().__init__(msg)
        self.dump_path = dump_path


@dataclass
class TrainingConfig:
    n_clusters: int = 10
    lookback: int = 4
    discount: float = 0.9
    lambda_qos: float = 5.0
    lambda_qos_prime: float = 5.0
    lambda_fail: float = 20.0
    batch_size: int = 256
    update_every: int = 4
    target_sync_every: int = 200
    eps_start: float = 0.7
    eps_decay: float = 0.9
    eps_floor: float = 0.01
    replay_capacity: int = 10_000
    learning_rate: float = 1e-3
    l2: float = 1e-4
    hidden: tuple = DEFAULT_HIDDEN
    t_step_s: float = 360.0
    kmeans_max_iter: int = 50
    kmeans_tol: float = 1e-6

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not 0 < self.discount < 1:
            raise ValueError("training.discount must lie in (0, 1)")
        if not 0 < self.eps_decay < 1:
            raise ValueError("training.eps_decay must lie in (0, 1)")
        if not 0 <= self.eps_floor <= self.eps_start <= 1:
            raise ValueError("need 0 <= eps_floor <= eps_start <= 1")
        for name in ("n_clusters", "lookback", "batch_size", "update_every", "target_sync_every", "replay_capacity"):
            if getattr(self, name) < 1:
                raise ValueError(f"training.{name} must be >= 1")
        if self.batch_size > self.replay_capacity:
            raise ValueError("training.batch_size exceeds replay_capacity")
        if self.t_step_s <= 0 or self.learning_rate < 0 or self.l2 < 0:
            raise ValueError("t_step_s must be positive; learning_rate and l2 non-negative")

    @property
    def state_dim(self) -> int:
        return self.lookback * (3 * self.n_clusters + 3)


# ---------------------------------------------------------------------------
# UE clustering


@dataclass
class ClusterSummary:
    centers: np.ndarray  # (K, 2) normalised to [0, 1]
    occupancy: np.ndarray  # mu, (K,)
    labels: np.ndarray  # (U,) cluster per UE

    @property
    def assignment(self) -> np.ndarray:
        """delta, shape (U, K)."""
        out = np.zeros((len(self.labels), len(self.occupancy)), dtype=np.int8)
        out[np.arange(len(self.labels)), self.labels] = 1
        return out

    def vector(self) -> np.ndarray:
        return np.concatenate([self.centers.ravel(), self.occupancy])


def kmeans(points, k: int, rng: np.random.Generator, max_iter: int = 50, tol: float = 1e-6):
    """Lloyd's algorithm with k-means++ seeding; empty clusters restart on the farthest point."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    centers = np.empty((k, pts.shape[1]))
    centers[0] = pts[rng.integers(n)]
    d2 = ((pts - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        i = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers[c] = pts[i]
        d2 = np.minimum(d2, ((pts - centers[c]) ** 2).sum(axis=1))
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        dist = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = dist.argmin(axis=1)
        new = centers.copy()
        for c in range(k):
            members = labels == c
            if members.any():
                new[c] = pts[members].mean(axis=0)
            else:
                far = dist[np.arange(n), labels].argmax()
                new[c] = pts[far]
                labels[far] = c
        shift = np.sqrt(((new - centers) ** 2).sum(axis=1)).max()
        centers = new
        if shift <= tol:
            break
    dist = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = dist.argmin(axis=1)
    return centers, labels


def cluster_ues(positions, k: int, rng: np.random.Generator, width: float = 1.0, depth: float = 1.0,
                max_iter: int = 50, tol: float = 1e-6) -> ClusterSummary:
    """K-means summary of UE positions.

    Clusters are ordered by normalised centre (x, then y) so the layout of
    the state vector is stable between steps. With fewer distinct
    positions than ``k`` the spare clusters are padded with centre (0, 0)
    and zero occupancy.
    """
    pos = np.asarray(positions, dtype=float)[:, :2] / np.array([width, depth])
    if len(pos) == 0:
        raise ValueError("cluster_ues needs at least one UE")
    k_eff = min(k, len(np.unique(pos, axis=0)))
    centers, labels = kmeans(pos, k_eff, rng, max_iter, tol)
    order = np.lexsort((centers[:, 1], centers[:, 0]))
    rank = np.empty(k_eff, dtype=np.int64)
    rank[order] = np.arange(k_eff)
    labels = rank[labels]
    full = np.zeros((k, 2))
    full[:k_eff] = centers[order]
    mu = np.zeros(k)
    mu[:k_eff] = np.bincount(labels, minlength=k_eff) / len(pos)
    return ClusterSummary(full, mu, labels)


# ---------------------------------------------------------------------------
# state


class StateHistory:
    """Rolling lookback of cluster summaries, per-BS loads, QoS ratio and actions."""

    def __init__(self, n_agents: int, n_clusters: int, lookback: int):
        self.n_agents = n_agents
        self.n_clusters = n_clusters
        self.lookback = lookback
        self.reset()

    def reset(self) -> None:
        self.clusters = deque(maxlen=self.lookback)
        self.loads = deque(maxlen=self.lookback)
        self.qos = deque(maxlen=self.lookback)
        self.actions = deque(maxlen=self.lookback)

    def push(self, cluster_vec, loads, psi, actions) -> None:
        self.clusters.append(np.asarray(cluster_vec, dtype=float))
        self.loads.append(np.asarray(loads, dtype=float))
        self.qos.append(float(psi))
        self.actions.append(np.asarray(actions, dtype=float))

    def __len__(self) -> int:
        return len(self.qos)


def build_state(history: StateHistory, agent: int) -> np.ndarray:
    """Oldest-first blocks [c..., L_j..., psi..., a_j...]; missing slots are zero."""
    tl, K = history.lookback, history.n_clusters
    pad = tl - len(history)
    c = np.zeros((tl, 3 * K))
    load = np.zeros(tl)
    psi = np.zeros(tl)
    act = np.zeros(tl)
    for i in range(len(history)):
        c[pad + i] = history.clusters[i]
        load[pad + i] = history.loads[i][agent]
        psi[pad + i] = history.qos[i]
        act[pad + i] = history.actions[i][agent]
    return np.concatenate([c.ravel(), load, psi, act])


# ---------------------------------------------------------------------------
# replay + agent


class ReplayBuffer:
    def __init__(self, capacity: int, state_dim: int, rng: np.random.Generator):
        self.capacity = capacity
        self.rng = rng
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, state_dim))
        self.size = 0
        self._next = 0

    def __len__(self) -> int:
        return self.size

    def push(self, s, a, r, s2) -> None:
        i = self._next
        self.s[i], self.a[i], self.r[i], self.s2[i] = s, a, r, s2
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch: int):
        idx = self.rng.choice(self.size, size=min(batch, self.size), replace=False)
        return self.s[idx], self.a[idx], self.r[idx], self.s2[idx]


@dataclass
class Agent:
    online: DenseNet
    target: DenseNet
    opt: Adam
    buffer: ReplayBuffer
    rng: np.random.Generator
    epsilon: float
    eps_decay: float
    eps_floor: float
    steps_since_sync: int = 0
    losses: list = field(default_factory=list)

    @classmethod
    def create(cls, state_dim: int, cfg: TrainingConfig, rng: np.random.Generator, n_actions: int = 2) -> "Agent":
        online = DenseNet.for_agent(state_dim, n_actions, cfg.hidden, rng)
        return cls(
            online=online,
            target=sync_target(online),
            opt=Adam(lr=cfg.learning_rate, l2=cfg.l2),
            buffer=ReplayBuffer(cfg.replay_capacity, state_dim, rng),
            rng=rng,
            epsilon=cfg.eps_start,
            eps_decay=cfg.eps_decay,
            eps_floor=cfg.eps_floor,
        )

    def decay_epsilon(self) -> None:
        self.epsilon = max(self.epsilon * self.eps_decay, self.eps_floor)

    def sync(self) -> None:
        self.target = sync_target(self.online)
        self.steps_since_sync = 0


def greedy_action(q) -> int:
    # ties resolve to 1 (stay active)
    q = np.asarray(q)
    if not np.all(np.isfinite(q)):
        raise NonFiniteLossError(f"non-finite Q-values {q}")
    return int(np.flatnonzero(q == q.max())[-1])


def select_action(agent: Agent, state, rng: np.random.Generator | None = None) -> int:
    rng = agent.rng if rng is None else rng
    if rng.random() < agent.epsilon:
        return int(rng.integers(agent.online.sizes[-1]))
    return greedy_action(agent.online(state))


def ddqn_target(rewards, next_states, online: DenseNet, target: DenseNet, discount: float) -> np.ndarray:
    """r + discount * Q_target(s', argmax_a Q_online(s', a)); no terminal masking."""
    q_online = online(np.atleast_2d(next_states))
    best = q_online.argmax(axis=1)
    q_target = target(np.atleast_2d(next_states))
    return np.asarray(rewards, dtype=float) + discount * q_target[np.arange(len(best)), best]


def q_learning_target(rewards, next_states, net: DenseNet, discount: float) -> np.ndarray:
    return np.asarray(rewards, dtype=float) + discount * net(np.atleast_2d(next_states)).max(axis=1)


def ddqn_update(agent: Agent, discount: float, batch_size: int) -> float:
    s, a, r, s2 = agent.buffer.sample(batch_size)
    y = ddqn_target(r, s2, agent.online, agent.target, discount)
    loss = train_step(agent.online, agent.opt, s, a, y)
    agent.losses.append(loss)
    return loss


def reward(ee, psi: float, actions, beta: float, cfg: TrainingConfig) -> float:
    """Centralised piecewise reward; ``ee`` is expected in Mbit/J."""
    n = len(actions)
    on = int(np.sum(actions))
    off = n - on
    if psi >= beta:
        if on == n:
            return float(ee)
        return float(cfg.lambda_qos * ee * off - cfg.lambda_qos_prime * (1.0 - psi))
    if on > 0:
        return float(-cfg.lambda_qos_prime * ((1.0 - psi) + ee * off))
    return float(-cfg.lambda_fail)


def joint_action_space(n_bs: int) -> int:
    return sum(math.comb(n_bs, x) for x in range(n_bs + 1))


# ---------------------------------------------------------------------------
# training loop


def make_agents(n_agents: int, cfg: TrainingConfig, seed_seq: np.random.SeedSequence) -> list:
    return [Agent.create(cfg.state_dim, cfg, np.random.default_rng(ss)) for ss in seed_seq.spawn(n_agents)]


def _dump(out_dir, payload) -> str | None:
    if out_dir is None:
        return None
    path = Path(out_dir) / "abort_dump.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, default=float))
    return str(path)


def _train_step(env, agents, cfg, history, cluster_rng, global_step, beta, ep, t, metric_log, keep_ue_rates):
    n = env.n_bs
    env.advance()
    states = [build_state(history, j) for j in range(n)]
    actions = np.array([select_action(ag, s) for ag, s in zip(agents, states)], dtype=np.int8)
    base = env.baseline()
    out = env.outcome(actions, base)
    r = reward(out.snapshot.ee / 1e6, out.psi, actions, beta, cfg)
    if not math.isfinite(r):
        raise NonFiniteLossError(f"non-finite reward {r} (ee={out.snapshot.ee}, psi={out.psi})")

    summary = cluster_ues(env.ue_positions, cfg.n_clusters, cluster_rng, env.umap.width_m, env.umap.depth_m,
                          cfg.kmeans_max_iter, cfg.kmeans_tol)
    history.push(summary.vector(), base.loads.bs / env.n_ue, out.psi, actions)
    for j, ag in enumerate(agents):
        ag.buffer.push(states[j], actions[j], r, build_state(history, j))

    global_step += 1
    if global_step % cfg.update_every == 0:
        for ag in agents:
            if len(ag.buffer) >= cfg.batch_size:
                ddqn_update(ag, cfg.discount, cfg.batch_size)
    for ag in agents:
        ag.steps_since_sync += 1
        if ag.steps_since_sync >= cfg.target_sync_every:
            ag.sync()
    metric_log.append(StepRecord.from_outcome(ep, t, out, r, keep_ue_rates))
    return global_step


def run_training(env, agents: list, cfg: TrainingConfig, episodes: int, metric_log, cluster_rng: np.random.Generator,
                 out_dir=None, keep_ue_rates: bool = True):
    """Episodic CTDE training; every realisation is decided, evaluated and learned from."""
    n = env.n_bs
    if len(agents) != n:
        raise ValueError("one agent per BS required")
    beta = env.qos.beta
    history = StateHistory(n, cfg.n_clusters, cfg.lookback)
    global_step = 0
    for ep in range(1, episodes + 1):
        env.reset()
        history.reset()
        for t in range(1, env.steps_per_episode + 1):
            try:
                global_step = _train_step(env, agents, cfg, history, cluster_rng, global_step, beta, ep, t,
                                          metric_log, keep_ue_rates)
            except NonFiniteLossError as exc:
                path = _dump(out_dir, {"episode": ep, "step": t, "global_step": global_step, "error": str(exc),
                                       "epsilon": [ag.epsilon for ag in agents]})
                raise TrainingAborted(f"episode {ep} step {t}: {exc}", path) from exc
        for ag in agents:
            ag.decay_epsilon()
        log.debug("episode %d: eps=%.4f", ep, agents[0].epsilon)
    return metric_log


def training_manifest(cfg: TrainingConfig) -> dict:
    d = asdict(cfg)
    d["hidden"] = list(cfg.hidden)
    return d
