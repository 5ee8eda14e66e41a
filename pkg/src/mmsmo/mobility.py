"""Time-varying community mobility: NMP/CMP periods, local/roaming epochs.

Each UE belongs to one circular community. Within a period it runs
``n_epochs`` epochs whose exponential durations are rescaled to fill the
period exactly; at every epoch end it flips between the local mode
(confined to its community disc) and the roaming mode (whole service
area) through a two-state Markov chain. Motion is straight-line with
specular reflection off the map edge, building faces and, for local UEs,
the community circle.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ._accel import maybe_njit
from .geometry import UE_HEIGHT_M, UrbanMap

log = logging.getLogger(__name__)

NMP, CMP = 0, 1
_NUDGE = 1e-7
_MAX_BOUNCES = 100_000


class MobilityError(ValueError):
    pass


@dataclass
class MobilityConfig:
    n_communities: int = 7
    area_nmp_m2: float = 500.0
    area_cmp_m2: float = 250.0
    t_nmp_s: float = 3600.0
    t_cmp_s: float = 1800.0
    t_episode_s: float | None = None  # defaults to t_nmp_s + t_cmp_s
    n_epochs: int = 10
    mean_epoch_s: float = 340.0
    p_local_nmp: float = 0.8
    p_local_cmp: float = 0.9
    p_stay_local_nmp: float | None = None  # defaults to p_local_nmp
    p_stay_local_cmp: float | None = None
    v_min: float = 5.0
    v_max: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.n_communities < 1:
            raise MobilityError("n_communities must be >= 1")
        if not 0 < self.area_cmp_m2 < self.area_nmp_m2:
            raise MobilityError("community areas must satisfy 0 < area_cmp_m2 < area_nmp_m2")
        if min(self.t_nmp_s, self.t_cmp_s, self.mean_epoch_s) <= 0:
            raise MobilityError("period and epoch durations must be positive")
        if self.n_epochs < 1:
            raise MobilityError("n_epochs must be >= 1")
        if self.p_stay_local_nmp is None:
            self.p_stay_local_nmp = self.p_local_nmp
        if self.p_stay_local_cmp is None:
            self.p_stay_local_cmp = self.p_local_cmp
        for name in ("p_local_nmp", "p_local_cmp", "p_stay_local_nmp", "p_stay_local_cmp"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise MobilityError(f"{name} must lie in [0, 1]")
        if not 0 <= self.v_min <= self.v_max:
            raise MobilityError("speeds must satisfy 0 <= v_min <= v_max")
        total = self.t_nmp_s + self.t_cmp_s
        if self.t_episode_s is None:
            self.t_episode_s = total
        elif abs(self.t_episode_s - total) > 1e-9:
            log.warning("t_episode_s=%s differs from t_nmp_s + t_cmp_s=%s; using the sum", self.t_episode_s, total)
            self.t_episode_s = total

    @property
    def radius_nmp(self) -> float:
        return math.sqrt(self.area_nmp_m2 / math.pi)

    @property
    def radius_cmp(self) -> float:
        return math.sqrt(self.area_cmp_m2 / math.pi)

    def period_length(self, period: int) -> float:
        return self.t_nmp_s if period == NMP else self.t_cmp_s

    def p_to_local(self, period: int) -> float:
        return self.p_local_nmp if period == NMP else self.p_local_cmp

    def p_stay_local(self, period: int) -> float:
        return self.p_stay_local_nmp if period == NMP else self.p_stay_local_cmp


@dataclass
class MobilityState:
    pos: np.ndarray  # (U, 2)
    community: np.ndarray  # (U,)
    local: np.ndarray  # (U,) bool
    heading: np.ndarray  # (U,) rad
    speed: np.ndarray  # (U,) m/s
    epoch_end: np.ndarray  # (U,) absolute time of the current epoch's end
    epoch_idx: np.ndarray  # (U,)
    centers: np.ndarray  # (C, 2)
    radius: float
    period: int
    period_start: float
    time: float = 0.0
    epoch_ends: np.ndarray | None = None  # (U, n_epochs) absolute ends for the current period

    @property
    def n_ue(self) -> int:
        return len(self.pos)

    @property
    def positions3d(self) -> np.ndarray:
        out = np.empty((self.n_ue, 3))
        out[:, :2] = self.pos
        out[:, 2] = UE_HEIGHT_M
        return out

    @property
    def epoch_remaining(self) -> np.ndarray:
        return self.epoch_end - self.time


def sample_epoch_schedule(n_epochs: int, mean_epoch: float, period_len: float, rng: np.random.Generator) -> np.ndarray:
    """Exponential epoch durations rescaled to sum to ``period_len``."""
    if n_epochs < 1:
        raise MobilityError("n_epochs must be >= 1")
    draws = rng.exponential(mean_epoch, size=n_epochs)
    while draws.sum() <= 0.0:  # pragma: no cover - probability zero
        draws = rng.exponential(mean_epoch, size=n_epochs)
    return draws * (period_len / draws.sum())


def community_sizes(n_ue: int, n_communities: int) -> np.ndarray:
    sizes = np.full(n_communities, n_ue // n_communities)
    sizes[: n_ue % n_communities] += 1
    return sizes


def _sample_in_disc(umap: UrbanMap, center, radius, rng, tries=2000):
    for _ in range(tries):
        r = radius * math.sqrt(rng.random())
        a = 2.0 * math.pi * rng.random()
        x, y = center[0] + r * math.cos(a), center[1] + r * math.sin(a)
        if umap.in_sa(x, y):
            return x, y
    return float(center[0]), float(center[1])


def _epoch_ends(start: float, schedule: np.ndarray, period_end: float) -> np.ndarray:
    ends = start + np.cumsum(schedule)
    ends[-1] = period_end
    return ends


def init_episode(umap: UrbanMap, cfg: MobilityConfig, n_ue: int, rng: np.random.Generator | None = None) -> MobilityState:
    if n_ue < 1:
        raise MobilityError("need at least one UE")
    if len(umap.sa_cells) < cfg.n_communities:
        raise MobilityError("fewer service-area cells than communities")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    picks = rng.choice(len(umap.sa_cells), size=cfg.n_communities, replace=False)
    centers = umap.sa_cells[picks] + 0.5

    sizes = community_sizes(n_ue, cfg.n_communities)
    community = rng.permutation(np.repeat(np.arange(cfg.n_communities), sizes))

    radius = cfg.radius_nmp
    pos = np.array([_sample_in_disc(umap, centers[c], radius, rng) for c in community]).reshape(n_ue, 2)
    state = MobilityState(
        pos=pos,
        community=community,
        local=np.ones(n_ue, dtype=bool),
        heading=np.zeros(n_ue),
        speed=np.zeros(n_ue),
        epoch_end=np.zeros(n_ue),
        epoch_idx=np.zeros(n_ue, dtype=np.int64),
        centers=centers,
        radius=radius,
        period=NMP,
        period_start=0.0,
    )
    state.epoch_ends = _new_schedules(state, cfg, rng)
    state.epoch_end = state.epoch_ends[:, 0].copy()
    _draw_motion(state, np.arange(n_ue), cfg, rng)
    return state


def _new_schedules(state: MobilityState, cfg: MobilityConfig, rng) -> np.ndarray:
    length = cfg.period_length(state.period)
    end = state.period_start + length
    return np.array(
        [_epoch_ends(state.period_start, sample_epoch_schedule(cfg.n_epochs, cfg.mean_epoch_s, length, rng), end) for _ in range(state.n_ue)]
    )


def _draw_motion(state: MobilityState, ues, cfg: MobilityConfig, rng) -> None:
    n = len(ues)
    state.speed[ues] = rng.uniform(cfg.v_min, cfg.v_max, size=n)
    state.heading[ues] = rng.uniform(0.0, 2.0 * math.pi, size=n)


def _transition(state: MobilityState, ues, umap: UrbanMap, cfg: MobilityConfig, rng) -> None:
    """Markov mode switch at an epoch end, then fresh speed and heading."""
    if len(ues) == 0:
        return
    u = rng.random(len(ues))
    was_local = state.local[ues]
    p_local = np.where(was_local, cfg.p_stay_local(state.period), cfg.p_to_local(state.period))
    state.local[ues] = u < p_local
    _confine(state, ues, umap, rng)
    _draw_motion(state, ues, cfg, rng)


def _confine(state: MobilityState, ues, umap: UrbanMap, rng) -> None:
    # a UE entering (or staying in) local mode outside its disc is re-placed inside it
    for i in ues:
        if not state.local[i]:
            continue
        c = state.centers[state.community[i]]
        if math.hypot(state.pos[i, 0] - c[0], state.pos[i, 1] - c[1]) > state.radius:
            state.pos[i] = _sample_in_disc(umap, c, state.radius, rng)


def _switch_period(state: MobilityState, umap: UrbanMap, cfg: MobilityConfig, rng) -> None:
    state.period_start += cfg.period_length(state.period)
    state.period = CMP if state.period == NMP else NMP
    state.radius = cfg.radius_cmp if state.period == CMP else cfg.radius_nmp
    state.epoch_ends = _new_schedules(state, cfg, rng)
    state.epoch_idx[:] = 0
    state.epoch_end = state.epoch_ends[:, 0].copy()
    _transition(state, np.arange(state.n_ue), umap, cfg, rng)


def step(state: MobilityState, umap: UrbanMap, cfg: MobilityConfig, dt: float, rng: np.random.Generator) -> MobilityState:
    """Advance every UE by ``dt`` seconds, handling epoch and period boundaries."""
    if dt <= 0:
        raise MobilityError("dt must be positive")
    target = state.time + dt
    while True:
        period_end = state.period_start + cfg.period_length(state.period)
        t_next = min(target, period_end, float(state.epoch_end.min()))
        if t_next > state.time:
            _advance(state, umap, t_next - state.time)
            state.time = t_next
        if state.time >= period_end - 1e-9:
            state.time = max(state.time, period_end)
            _switch_period(state, umap, cfg, rng)
            continue
        due = np.flatnonzero(state.epoch_end <= state.time + 1e-9)
        if len(due):
            state.epoch_idx[due] += 1
            state.epoch_end[due] = state.epoch_ends[due, state.epoch_idx[due]]
            _transition(state, due, umap, cfg, rng)
            continue
        if state.time >= target - 1e-12:
            return state


def _advance(state: MobilityState, umap: UrbanMap, duration: float) -> None:
    c = state.centers[state.community]
    pos, heading = advance_kernel(
        state.pos, state.heading, state.speed * duration, state.local, c, state.radius, umap.height
    )
    state.pos = pos
    state.heading = heading


def position_valid(umap: UrbanMap, state: MobilityState, tol: float = 1e-6) -> np.ndarray:
    """Per-UE containment check: inside an SA cell and, if local, inside its disc."""
    ix = np.floor(state.pos[:, 0]).astype(int)
    iy = np.floor(state.pos[:, 1]).astype(int)
    inb = (ix >= 0) & (ix < umap.width_m) & (iy >= 0) & (iy < umap.depth_m)
    ok = inb.copy()
    ok[inb] = umap.sa_mask[ix[inb], iy[inb]]
    c = state.centers[state.community]
    d = np.hypot(state.pos[:, 0] - c[:, 0], state.pos[:, 1] - c[:, 1])
    return ok & (~state.local | (d <= state.radius + tol))


# ---------------------------------------------------------------------------
# kinematics kernel


@maybe_njit
def _cell_free(height, x, y):
    W, D = height.shape
    ix = int(math.floor(x))
    iy = int(math.floor(y))
    if ix < 0 or iy < 0 or ix >= W or iy >= D:
        return False
    return height[ix, iy] == 0


@maybe_njit
def _move_one(x, y, hx, hy, dist, use_disc, cx, cy, r, height):
    W, D = height.shape
    x_start, y_start = x, y
    for _ in range(_MAX_BOUNCES):
        if dist <= 0.0:
            break
        t_best = dist
        nx = 0.0
        ny = 0.0
        hit = 0  # 0 none, 1 face, 2 corner

        if hx > 0.0:
            t = (W - x) / hx
            if t < t_best:
                t_best, nx, ny, hit = t, -1.0, 0.0, 1
        elif hx < 0.0:
            t = -x / hx
            if t < t_best:
                t_best, nx, ny, hit = t, 1.0, 0.0, 1
        if hy > 0.0:
            t = (D - y) / hy
            if t < t_best:
                t_best, nx, ny, hit = t, 0.0, -1.0, 1
        elif hy < 0.0:
            t = -y / hy
            if t < t_best:
                t_best, nx, ny, hit = t, 0.0, 1.0, 1

        if use_disc:
            px = x - cx
            py = y - cy
            b = px * hx + py * hy
            cc = px * px + py * py - r * r
            disc = b * b - cc
            if disc > 0.0:
                t = -b + math.sqrt(disc)
                if 0.0 <= t < t_best:
                    qx = x + hx * t - cx
                    qy = y + hy * t - cy
                    qn = math.sqrt(qx * qx + qy * qy)
                    t_best, nx, ny, hit = t, -qx / qn, -qy / qn, 1

        # walk the grid to the first building column along the path
        ix = int(math.floor(x))
        iy = int(math.floor(y))
        if hx > 0.0:
            sx = 1
            tmx = (ix + 1 - x) / hx
            tdx = 1.0 / hx
        elif hx < 0.0:
            sx = -1
            tmx = (ix - x) / hx
            tdx = -1.0 / hx
        else:
            sx = 0
            tmx = math.inf
            tdx = math.inf
        if hy > 0.0:
            sy = 1
            tmy = (iy + 1 - y) / hy
            tdy = 1.0 / hy
        elif hy < 0.0:
            sy = -1
            tmy = (iy - y) / hy
            tdy = -1.0 / hy
        else:
            sy = 0
            tmy = math.inf
            tdy = math.inf
        while True:
            t_enter = min(tmx, tmy)
            if t_enter >= t_best:
                break
            if tmx == tmy:
                ix += sx
                iy += sy
                tmx += tdx
                tmy += tdy
                kind = 2
            elif tmx < tmy:
                ix += sx
                tmx += tdx
                kind = 0
            else:
                iy += sy
                tmy += tdy
                kind = 1
            if ix < 0 or iy < 0 or ix >= W or iy >= D:
                break
            if height[ix, iy] > 0:
                t_best = t_enter
                hit = 1
                if kind == 0:
                    nx, ny = -float(sx), 0.0
                elif kind == 1:
                    nx, ny = 0.0, -float(sy)
                else:
                    hit = 2
                break

        x += hx * t_best
        y += hy * t_best
        dist -= t_best
        if hit == 0:
            break
        if hit == 2:
            hx = -hx
            hy = -hy
            x += hx * _NUDGE
            y += hy * _NUDGE
        else:
            d = hx * nx + hy * ny
            hx -= 2.0 * d * nx
            hy -= 2.0 * d * ny
            x += nx * _NUDGE
            y += ny * _NUDGE

    ok = _cell_free(height, x, y)
    if ok and use_disc:
        ok = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= (r + 1e-6) * (r + 1e-6)
    if not ok:
        return x_start, y_start, -hx, -hy
    return x, y, hx, hy


@maybe_njit
def advance_kernel(pos, heading, dist, local, centers, radius, height):
    n = pos.shape[0]
    out = np.empty_like(pos)
    new_heading = np.empty_like(heading)
    for i in range(n):
        hx = math.cos(heading[i])
        hy = math.sin(heading[i])
        x, y, hx, hy = _move_one(
            pos[i, 0], pos[i, 1], hx, hy, dist[i], local[i], centers[i, 0], centers[i, 1], radius, height
        )
        out[i, 0] = x
        out[i, 1] = y
        a = math.atan2(hy, hx)
        if a < 0.0:
            a += 2.0 * math.pi
        new_heading[i] = a
    return out, new_heading
