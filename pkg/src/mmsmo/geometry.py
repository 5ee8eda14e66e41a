"""Urban voxel map, line-of-sight and viewshed-driven BS site reduction.

The map is a 1 m x 1 m height field indexed ``height[x, y]``. A building
column of integer height ``h`` is the voxel stack ``z in [0, h)``; the
segment test therefore only needs, per traversed column, the segment's
minimum height over the part of the segment that lies strictly inside
the column.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _accel
from ._accel import maybe_njit, py_func

log = logging.getLogger(__name__)

UE_HEIGHT_M = 1.5
_LEN_EPS = 1e-9
_Z_EPS = 1e-9


class MapError(ValueError):
    pass


@dataclass
class MapGenConfig:
    width_m: int = 129
    depth_m: int = 206
    max_height_m: int = 45
    height_range: tuple = (8, 25)
    width_range: tuple = (20, 45)
    n_buildings: int = 14
    min_street_m: int = 6
    border_margin_m: int = 3
    site_spacing_m: int = 9
    mast_offset_m: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.height_range = tuple(int(v) for v in self.height_range)
        self.width_range = tuple(int(v) for v in self.width_range)
        if min(self.width_m, self.depth_m, self.max_height_m) <= 0:
            raise MapError("map dimensions must be positive")
        lo, hi = self.height_range
        if not 0 < lo <= hi <= self.max_height_m:
            raise MapError(f"height_range {self.height_range} must be non-empty and within (0, max_height_m]")
        lo, hi = self.width_range
        if not 0 < lo <= hi:
            raise MapError(f"width_range {self.width_range} must be non-empty and positive")
        if self.n_buildings < 0 or self.min_street_m < 0 or self.border_margin_m < 0:
            raise MapError("n_buildings, min_street_m and border_margin_m must be non-negative")
        if self.site_spacing_m < 1:
            raise MapError("site_spacing_m must be >= 1")


@dataclass
class UrbanMap:
    height: np.ndarray  # int32 [width, depth]
    candidate_sites: np.ndarray = field(default=None)  # float [Nc, 3]
    candidate_cells: np.ndarray = field(default=None)  # int [Nc, 2]
    buildings: list = field(default_factory=list)  # (x0, y0, wx, wy, h) boxes when procedural

    def __post_init__(self):
        self.height = np.ascontiguousarray(self.height, dtype=np.int32)
        if self.height.ndim != 2 or (self.height < 0).any():
            raise MapError("height must be a 2-D grid of non-negative integers")
        self.sa_mask = self.height == 0
        self.sa_cells = np.argwhere(self.sa_mask).astype(np.int64)
        if len(self.sa_cells) == 0:
            raise MapError("map has no service-area cells")
        if self.candidate_sites is None:
            self.candidate_sites = np.zeros((0, 3))
            self.candidate_cells = np.zeros((0, 2), dtype=np.int64)

    @property
    def width_m(self) -> int:
        return self.height.shape[0]

    @property
    def depth_m(self) -> int:
        return self.height.shape[1]

    @property
    def max_height_m(self) -> int:
        return int(self.height.max())

    @property
    def sa_points(self) -> np.ndarray:
        """Service-area cell centres at UE height, shape (M, 3)."""
        pts = np.empty((len(self.sa_cells), 3))
        pts[:, :2] = self.sa_cells + 0.5
        pts[:, 2] = UE_HEIGHT_M
        return pts

    @property
    def sa_centroid(self) -> np.ndarray:
        return self.sa_cells.mean(axis=0) + 0.5

    def in_sa(self, x: float, y: float) -> bool:
        ix, iy = int(math.floor(x)), int(math.floor(y))
        if not (0 <= ix < self.width_m and 0 <= iy < self.depth_m):
            return False
        return bool(self.sa_mask[ix, iy])


# ---------------------------------------------------------------------------
# construction


def _place_buildings(cfg: MapGenConfig, rng: np.random.Generator) -> list:
    W, D, m, gap = cfg.width_m, cfg.depth_m, cfg.border_margin_m, cfg.min_street_m
    boxes = []
    attempts = 0
    max_attempts = 500 * max(cfg.n_buildings, 1)
    while len(boxes) < cfg.n_buildings and attempts < max_attempts:
        attempts += 1
        wx, wy = rng.integers(cfg.width_range[0], cfg.width_range[1] + 1, size=2)
        if wx > W - 2 * m or wy > D - 2 * m:
            continue
        x0 = int(rng.integers(m, W - m - wx + 1))
        y0 = int(rng.integers(m, D - m - wy + 1))
        clash = any(
            x0 < bx + bwx + gap and bx < x0 + wx + gap and y0 < by + bwy + gap and by < y0 + wy + gap
            for bx, by, bwx, bwy, _ in boxes
        )
        if clash:
            continue
        h = int(rng.integers(cfg.height_range[0], cfg.height_range[1] + 1))
        boxes.append((x0, y0, int(wx), int(wy), h))
    if len(boxes) < cfg.n_buildings:
        log.info("placed %d of %d buildings after %d attempts", len(boxes), cfg.n_buildings, attempts)
    return boxes


def generate_urban_map(cfg: MapGenConfig) -> UrbanMap:
    """Seeded procedural city: axis-aligned box buildings separated by streets."""
    rng = np.random.default_rng(cfg.seed)
    boxes = _place_buildings(cfg, rng)
    height = np.zeros((cfg.width_m, cfg.depth_m), dtype=np.int32)
    for x0, y0, wx, wy, h in boxes:
        height[x0:x0 + wx, y0:y0 + wy] = h
    if not (height == 0).any():
        raise MapError("building layout leaves no service-area cells")
    return map_from_heights(
        height,
        site_spacing_m=cfg.site_spacing_m,
        border_margin_m=cfg.border_margin_m,
        mast_offset_m=cfg.mast_offset_m,
        buildings=boxes,
    )


def map_from_heights(height, site_spacing_m=9, border_margin_m=3, mast_offset_m=0.0, buildings=None) -> UrbanMap:
    height = np.asarray(height, dtype=np.int32)
    umap = UrbanMap(height=height, buildings=list(buildings or []))
    sites, cells = candidate_sites(height, site_spacing_m, border_margin_m, mast_offset_m)
    umap.candidate_sites = sites
    umap.candidate_cells = cells
    return umap


def candidate_sites(height: np.ndarray, spacing: int = 9, margin: int = 3, mast: float = 0.0):
    """Rooftop edge sites on building cells that face the service area.

    Convex corners are taken first, then face cells, each kept only if it is
    at least ``spacing`` cells (Chebyshev) from every site already kept.
    The site sits on the roof edge shared with the adjacent street column(s).
    """
    W, D = height.shape
    bld = height > 0
    free = ~bld
    pad = np.pad(free, 1, constant_values=False)
    west = pad[:-2, 1:-1]
    east = pad[2:, 1:-1]
    south = pad[1:-1, :-2]
    north = pad[1:-1, 2:]
    edge = bld & (west | east | south | north)
    xs = np.arange(W)[:, None]
    ys = np.arange(D)[None, :]
    inner = (xs >= margin) & (xs < W - margin) & (ys >= margin) & (ys < D - margin)
    edge &= inner
    corner = edge & (west | east) & (south | north)

    kept = []
    for pool in (np.argwhere(corner), np.argwhere(edge & ~corner)):
        for cx, cy in pool:
            if all(max(abs(cx - kx), abs(cy - ky)) >= spacing for kx, ky in kept):
                kept.append((int(cx), int(cy)))
    cells = np.array(kept, dtype=np.int64).reshape(-1, 2)
    sites = np.empty((len(cells), 3))
    for k, (cx, cy) in enumerate(cells):
        px = cx + 0.5 - 0.5 * west[cx, cy] + 0.5 * east[cx, cy]
        py = cy + 0.5 - 0.5 * south[cx, cy] + 0.5 * north[cx, cy]
        sites[k] = (px, py, height[cx, cy] + mast)
    return sites, cells


def load_heightmap(path, **kwargs) -> UrbanMap:
    """Read an ASCII height grid: first line ``rows cols``, then ``rows`` lines.

    Row ``r`` holds the heights at ``y = r``; column ``c`` is ``x = c``.
    """
    text = Path(path).read_text().split()
    if len(text) < 2:
        raise MapError(f"{path}: missing 'rows cols' header")
    rows, cols = int(text[0]), int(text[1])
    vals = np.array([int(v) for v in text[2:]], dtype=np.int64)
    if vals.size != rows * cols:
        raise MapError(f"{path}: expected {rows * cols} heights, found {vals.size}")
    if (vals < 0).any():
        raise MapError(f"{path}: heights must be non-negative")
    return map_from_heights(vals.reshape(rows, cols).T, **kwargs)


def save_heightmap(umap: UrbanMap, path) -> None:
    grid = umap.height.T
    lines = [f"{grid.shape[0]} {grid.shape[1]}"]
    lines += [" ".join(str(int(v)) for v in row) for row in grid]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# line of sight


@maybe_njit
def _height_at(height, ix, iy):
    if ix < 0 or iy < 0 or ix >= height.shape[0] or iy >= height.shape[1]:
        return 0
    return height[ix, iy]


@maybe_njit
def _face_clear(height, line, a0, a1, z0, z1, axis):
    """Segment on the grid line ``x = line`` (axis 0) or ``y = line`` (axis 1)."""
    lo = min(a0, a1)
    hi = max(a0, a1)
    da = a1 - a0
    k = int(math.floor(lo))
    while k < hi:
        s_in = max(lo, float(k))
        s_out = min(hi, float(k + 1))
        if s_out - s_in > _LEN_EPS:
            if axis == 0:
                h = min(_height_at(height, line - 1, k), _height_at(height, line, k))
            else:
                h = min(_height_at(height, k, line - 1), _height_at(height, k, line))
            if h > 0:
                za = z0 + (z1 - z0) * (s_in - a0) / da
                zb = z0 + (z1 - z0) * (s_out - a0) / da
                if min(za, zb) < h - _Z_EPS:
                    return False
        k += 1
    return True


@maybe_njit
def _segment_clear(height, x0, y0, z0, x1, y1, z1):
    W, D = height.shape
    dx = x1 - x0
    dy = y1 - y0
    dz = z1 - z0
    lxy = math.sqrt(dx * dx + dy * dy)
    if lxy == 0.0:
        ix = int(math.floor(x0))
        iy = int(math.floor(y0))
        if x0 == ix or y0 == iy or ix < 0 or iy < 0 or ix >= W or iy >= D:
            return True
        return min(z0, z1) >= height[ix, iy] - _Z_EPS
    # a segment lying in a cell face is blocked only where both adjacent columns rise above it
    if dx == 0.0 and x0 == math.floor(x0):
        return _face_clear(height, int(x0), y0, y1, z0, z1, 0)
    if dy == 0.0 and y0 == math.floor(y0):
        return _face_clear(height, int(y0), x0, x1, z0, z1, 1)

    ix = int(math.floor(x0))
    if dx < 0.0 and x0 == ix:
        ix -= 1
    iy = int(math.floor(y0))
    if dy < 0.0 and y0 == iy:
        iy -= 1

    if dx > 0.0:
        sx = 1
        t_max_x = (ix + 1 - x0) / dx
        t_dx = 1.0 / dx
    elif dx < 0.0:
        sx = -1
        t_max_x = (ix - x0) / dx
        t_dx = -1.0 / dx
    else:
        sx = 0
        t_max_x = math.inf
        t_dx = math.inf
    if dy > 0.0:
        sy = 1
        t_max_y = (iy + 1 - y0) / dy
        t_dy = 1.0 / dy
    elif dy < 0.0:
        sy = -1
        t_max_y = (iy - y0) / dy
        t_dy = -1.0 / dy
    else:
        sy = 0
        t_max_y = math.inf
        t_dy = math.inf

    t_in = 0.0
    while True:
        t_out = min(t_max_x, t_max_y, 1.0)
        if 0 <= ix < W and 0 <= iy < D:
            h = height[ix, iy]
            if h > 0 and (t_out - t_in) * lxy > _LEN_EPS:
                zmin = min(z0 + dz * t_in, z0 + dz * t_out)
                if zmin < h - _Z_EPS:
                    return False
        if t_out >= 1.0:
            return True
        if t_max_x < t_max_y:
            ix += sx
            t_in = t_max_x
            t_max_x += t_dx
        elif t_max_y < t_max_x:
            iy += sy
            t_in = t_max_y
            t_max_y += t_dy
        else:
            ix += sx
            iy += sy
            t_in = t_max_x
            t_max_x += t_dx
            t_max_y += t_dy


@maybe_njit
def _los_many_kernel(height, src, dst):
    n = dst.shape[0]
    out = np.empty(n, dtype=np.bool_)
    for k in range(n):
        out[k] = _segment_clear(height, src[k, 0], src[k, 1], src[k, 2], dst[k, 0], dst[k, 1], dst[k, 2])
    return out


def _los_many_numpy(height, src, dst):
    """Vectorised fallback: split every segment at its grid-line crossings."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    n = len(dst)
    out = np.ones(n, dtype=bool)
    if n == 0:
        return out
    W, D = height.shape
    d = dst - src
    lxy = np.hypot(d[:, 0], d[:, 1])

    # degenerate cases handled by the scalar routine
    odd = (lxy == 0.0) | ((d[:, 0] == 0.0) & (src[:, 0] == np.floor(src[:, 0]))) | (
        (d[:, 1] == 0.0) & (src[:, 1] == np.floor(src[:, 1]))
    )
    for k in np.flatnonzero(odd):
        out[k] = py_func(_segment_clear)(height, *src[k], *dst[k])
    idx = np.flatnonzero(~odd)
    if len(idx) == 0:
        return out
    s, dd, lx = src[idx], d[idx], lxy[idx]

    def crossings(p0, dp):
        lo = np.minimum(p0, p0 + dp)
        hi = np.maximum(p0, p0 + dp)
        first = np.floor(lo) + 1
        count = np.maximum(np.ceil(hi) - first, 0).astype(int)
        m = int(count.max()) if len(count) else 0
        ks = first[:, None] + np.arange(m)[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (ks - p0[:, None]) / dp[:, None]
        t[np.arange(m)[None, :] >= count[:, None]] = np.nan
        return t

    tx = crossings(s[:, 0], dd[:, 0])
    ty = crossings(s[:, 1], dd[:, 1])
    ts = np.concatenate([np.zeros((len(idx), 1)), tx, ty, np.ones((len(idx), 1))], axis=1)
    ts = np.sort(ts, axis=1)  # nan sorts last
    t_in, t_out = ts[:, :-1], ts[:, 1:]
    valid = ~np.isnan(t_out) & ((t_out - t_in) * lx[:, None] > _LEN_EPS)
    tm = np.where(valid, 0.5 * (t_in + t_out), 0.0)
    cx = np.floor(s[:, 0:1] + dd[:, 0:1] * tm).astype(int)
    cy = np.floor(s[:, 1:2] + dd[:, 1:2] * tm).astype(int)
    inside = valid & (cx >= 0) & (cx < W) & (cy >= 0) & (cy < D)
    h = np.zeros(cx.shape)
    h[inside] = height[cx[inside], cy[inside]]
    z_in = s[:, 2:3] + dd[:, 2:3] * np.where(valid, t_in, 0.0)
    z_out = s[:, 2:3] + dd[:, 2:3] * np.where(valid, t_out, 0.0)
    blocked = inside & (h > 0) & (np.minimum(z_in, z_out) < h - _Z_EPS)
    out[idx] = ~blocked.any(axis=1)
    return out


def los_many(height, src, dst, use_numba=None) -> np.ndarray:
    """Line of sight for paired segments ``src[k] -> dst[k]`` (src may be one point)."""
    dst = np.ascontiguousarray(np.atleast_2d(dst), dtype=float)
    src = np.ascontiguousarray(np.broadcast_to(np.asarray(src, dtype=float), dst.shape), dtype=float)
    height = np.ascontiguousarray(height, dtype=np.int32)
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    if use_numba:
        return _los_many_kernel(height, src, dst)
    return _los_many_numpy(height, src, dst)


def line_of_sight(umap: UrbanMap, a, b) -> bool:
    """True iff segment ``a -> b`` never enters a building voxel (touching is allowed)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return bool(los_many(umap.height, a[None, :], b[None, :])[0])


# ---------------------------------------------------------------------------
# viewshed and greedy placement


def viewshed(umap: UrbanMap, site) -> np.ndarray:
    """Indices into ``umap.sa_cells`` visible from ``site``."""
    return np.flatnonzero(los_many(umap.height, site, umap.sa_points))


def visibility_matrix(umap: UrbanMap, sites=None) -> np.ndarray:
    sites = umap.candidate_sites if sites is None else np.atleast_2d(sites)
    pts = umap.sa_points
    vis = np.zeros((len(sites), len(pts)), dtype=bool)
    for k, site in enumerate(sites):
        vis[k] = los_many(umap.height, site, pts)
    return vis


@dataclass
class Placement:
    indices: np.ndarray  # into candidate_sites, in selection order
    sites: np.ndarray
    gains: np.ndarray  # marginal newly-covered cells per pick
    coverage_fraction: float
    coverage_curve: np.ndarray  # covered cells after each pick


def greedy_bs_placement(umap: UrbanMap, vis: np.ndarray | None = None) -> Placement:
    """Greedy max-coverage over candidate viewsheds; stops at zero marginal gain."""
    if len(umap.candidate_sites) == 0:
        raise MapError("no candidate sites")
    if vis is None:
        vis = visibility_matrix(umap)
    covered = np.zeros(vis.shape[1], dtype=bool)
    picks, gains, curve = [], [], []
    while True:
        gain = (vis & ~covered).sum(axis=1)
        best = int(np.argmax(gain))  # first max == lowest index
        if gain[best] == 0:
            break
        picks.append(best)
        gains.append(int(gain[best]))
        covered |= vis[best]
        curve.append(int(covered.sum()))
    idx = np.array(picks, dtype=np.int64)
    frac = covered.sum() / vis.shape[1]
    log.info("greedy placement: %d of %d candidates, coverage %.4f", len(idx), len(vis), frac)
    return Placement(idx, umap.candidate_sites[idx], np.array(gains), float(frac), np.array(curve))
