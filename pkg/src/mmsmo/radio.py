"""mmWave link budget: UPA codebook beamforming, UMa path loss, association,
PRB allocation and Shannon throughput."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import UrbanMap, los_many


@dataclass
class RadioConfig:
    carrier_ghz: float = 28.0
    p_tx_dbm: float = 20.0
    bandwidth_hz: float = 50e6
    scs_hz: float = 120e3
    array_rows: int = 8
    array_cols: int = 8
    n_az_beams: int = 13
    n_el_beams: int = 13
    az_span_deg: tuple = (-60.0, 60.0)
    el_span_deg: tuple = (-60.0, 60.0)
    boltzmann: float = 1.38e-23
    temperature_k: float = 298.0
    noise_figure_db: float = 9.0
    coverage_threshold_dbm: float = -90.0

    def __post_init__(self):
        self.az_span_deg = tuple(float(v) for v in self.az_span_deg)
        self.el_span_deg = tuple(float(v) for v in self.el_span_deg)
        if self.bandwidth_hz <= 0 or self.scs_hz <= 0 or self.carrier_ghz <= 0:
            raise ValueError("bandwidth_hz, scs_hz and carrier_ghz must be positive")
        if min(self.array_rows, self.array_cols, self.n_az_beams, self.n_el_beams) < 1:
            raise ValueError("array and codebook dimensions must be >= 1")
        if self.n_prb < 1:
            raise ValueError("bandwidth too small for a single PRB")

    @property
    def n_subcarriers(self) -> int:
        return int(math.floor(self.bandwidth_hz / self.scs_hz))

    @property
    def n_prb(self) -> int:
        return self.n_subcarriers // 12

    @property
    def prb_bandwidth_hz(self) -> float:
        return 12 * self.scs_hz

    @property
    def n_antennas(self) -> int:
        return self.array_rows * self.array_cols

    @property
    def noise_figure_linear(self) -> float:
        return 10.0 ** (self.noise_figure_db / 10.0)


def dbm_to_watt(p_dbm):
    return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(p_w):
    return 10.0 * np.log10(np.asarray(p_w, dtype=float)) + 30.0


# ---------------------------------------------------------------------------
# beamforming


def steering_vector(rows: int, cols: int, az, el) -> np.ndarray:
    """Half-wavelength UPA response, unit-modulus entries, shape (..., rows*cols).

    Columns run horizontally and rows vertically in the array plane, which
    faces the boresight; ``az`` is measured from boresight in the horizontal
    plane and ``el`` from the horizon.
    """
    az = np.asarray(az, dtype=float)[..., None]
    el = np.asarray(el, dtype=float)[..., None]
    n = np.arange(cols)
    m = np.arange(rows)
    ph = np.pi * (np.cos(el) * np.sin(az))
    pv = np.pi * np.sin(el)
    # element (m, n) flattened row-major
    phase = (m[:, None] * pv[..., None] + n[None, :] * ph[..., None]).reshape(*az.shape[:-1], rows * cols)
    return np.exp(1j * phase)


def codebook(cfg: RadioConfig) -> np.ndarray:
    """Steering matrix of unit-norm beams, shape (N_t, n_az * n_el)."""
    az = np.deg2rad(np.linspace(*cfg.az_span_deg, cfg.n_az_beams))
    el = np.deg2rad(np.linspace(*cfg.el_span_deg, cfg.n_el_beams))
    AZ, EL = np.meshgrid(az, el, indexing="ij")
    return steering_vector(cfg.array_rows, cfg.array_cols, AZ.ravel(), EL.ravel()).T / math.sqrt(cfg.n_antennas)


class BeamCodebook:
    """Cached steering matrix; :meth:`gain_db` picks the best beam per direction."""

    def __init__(self, cfg: RadioConfig):
        self.cfg = cfg
        self.W = codebook(cfg)

    def gain_db(self, az, el) -> np.ndarray:
        a = steering_vector(self.cfg.array_rows, self.cfg.array_cols, az, el)
        resp = np.abs(a.conj() @ self.W) ** 2
        return 10.0 * np.log10(resp.max(axis=-1))


def beam_gain(cfg: RadioConfig, az, el) -> np.ndarray:
    return BeamCodebook(cfg).gain_db(az, el)


# ---------------------------------------------------------------------------
# propagation


def path_loss(d3d, carrier_ghz: float, los) -> np.ndarray:
    """UMa LOS / NLOS path loss in dB (distance in metres, carrier in GHz)."""
    d = np.asarray(d3d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path_loss needs a positive 3D distance")
    f = 20.0 * math.log10(carrier_ghz)
    return np.where(los, 28.0 + f + 22.0 * np.log10(d), 32.4 + f + 30.0 * np.log10(d))


def boresights(bs_pos: np.ndarray, target_xy) -> np.ndarray:
    v = np.asarray(target_xy, dtype=float)[None, :] - bs_pos[:, :2]
    n = np.linalg.norm(v, axis=1, keepdims=True)
    out = np.where(n > 1e-9, v / np.where(n > 0, n, 1.0), np.array([[1.0, 0.0]]))
    return out


def local_angles(bs_pos, boresight, ue_pos):
    """Azimuth / elevation of each UE seen from each BS; arrays shaped (U, N)."""
    d = ue_pos[:, None, :] - bs_pos[None, :, :]
    bx, by = boresight[None, :, 0], boresight[None, :, 1]
    along = d[..., 0] * bx + d[..., 1] * by
    across = bx * d[..., 1] - by * d[..., 0]
    az = np.arctan2(across, along)
    el = np.arctan2(d[..., 2], np.hypot(d[..., 0], d[..., 1]))
    return az, el


@dataclass
class LinkTable:
    rsrp_dbm: np.ndarray  # (U, N)
    los: np.ndarray  # (U, N)
    gain_db: np.ndarray
    path_loss_db: np.ndarray


def rsrp_table(umap: UrbanMap, bs_pos, ue_pos, cfg: RadioConfig, beams: BeamCodebook | None = None, boresight=None) -> LinkTable:
    bs_pos = np.atleast_2d(np.asarray(bs_pos, dtype=float))
    ue_pos = np.atleast_2d(np.asarray(ue_pos, dtype=float))
    beams = beams or BeamCodebook(cfg)
    if boresight is None:
        boresight = boresights(bs_pos, umap.sa_centroid)
    U, N = len(ue_pos), len(bs_pos)
    los = np.empty((U, N), dtype=bool)
    for j in range(N):
        los[:, j] = los_many(umap.height, bs_pos[j], ue_pos)
    d3 = np.linalg.norm(ue_pos[:, None, :] - bs_pos[None, :, :], axis=-1)
    pl = path_loss(d3, cfg.carrier_ghz, los)
    az, el = local_angles(bs_pos, boresight, ue_pos)
    g = beams.gain_db(az, el)
    return LinkTable(cfg.p_tx_dbm + g - pl, los, g, pl)


def rsrp(umap: UrbanMap, bs, ue, cfg: RadioConfig, boresight=None) -> float:
    bs = np.asarray(bs, dtype=float)
    bsight = None if boresight is None else np.atleast_2d(boresight)
    return float(rsrp_table(umap, bs[None, :], np.asarray(ue, float)[None, :], cfg, boresight=bsight).rsrp_dbm[0, 0])


# ---------------------------------------------------------------------------
# association, PRBs, throughput


@dataclass
class AssociationResult:
    serving: np.ndarray  # u, (U, N) int8
    in_sa: np.ndarray  # s, (U, N) int8
    rsrp_dbm: np.ndarray

    @property
    def ue_counts(self) -> np.ndarray:
        return self.serving.sum(axis=0)

    @property
    def serving_bs(self) -> np.ndarray:
        """Serving BS index per UE, -1 when unserved."""
        idx = self.serving.argmax(axis=1)
        return np.where(self.serving.any(axis=1), idx, -1)


def associate(rsrp_dbm, active_mask, threshold_dbm: float = -90.0) -> AssociationResult:
    """Max-RSRP serving BS among active ones; other active BSs above threshold are interferers."""
    rsrp_dbm = np.atleast_2d(np.asarray(rsrp_dbm, dtype=float))
    active = np.asarray(active_mask, dtype=bool)
    U, N = rsrp_dbm.shape
    u = np.zeros((U, N), dtype=np.int8)
    s = np.zeros((U, N), dtype=np.int8)
    if active.any():
        masked = np.where(active[None, :], rsrp_dbm, -np.inf)
        best = masked.argmax(axis=1)  # first max == lowest index
        u[np.arange(U), best] = 1
        s[:] = (active[None, :] & (rsrp_dbm > threshold_dbm)).astype(np.int8)
        s[np.arange(U), best] = 0
    return AssociationResult(u, s, rsrp_dbm)


def allocate_prbs(assoc: AssociationResult, n_prb: int, n_ue: int, n_bs: int):
    """Per-UE PRB counts and per-BS used PRBs.

    The fairness cap is ``floor(n_prb * n_bs / n_ue)`` with ``n_bs`` the
    number of deployed BSs. A BS that cannot give every UE the cap splits
    its PRBs evenly and hands the remainder out one by one in ascending UE
    index.
    """
    cap = (n_prb * n_bs) // n_ue
    prb = np.zeros(n_ue, dtype=np.int64)
    used = np.zeros(assoc.serving.shape[1], dtype=np.int64)
    for j in range(assoc.serving.shape[1]):
        ues = np.flatnonzero(assoc.serving[:, j])
        k = len(ues)
        if k == 0:
            continue
        if cap * k <= n_prb:
            prb[ues] = cap
        else:
            base, rem = divmod(n_prb, k)
            prb[ues] = base
            prb[ues[:rem]] += 1
        used[j] = prb[ues].sum()
    return prb, used


def throughput(assoc: AssociationResult, prb_per_ue, cfg: RadioConfig):
    """Shannon rate per UE in bit/s; interference from in-SA active BSs only."""
    p_w = dbm_to_watt(assoc.rsrp_dbm)
    signal = (assoc.serving * p_w).sum(axis=1)
    interference = (assoc.in_sa * p_w).sum(axis=1)
    bw = np.asarray(prb_per_ue, dtype=float) * cfg.prb_bandwidth_hz
    noise = cfg.boltzmann * cfg.temperature_k * bw * cfg.noise_figure_linear
    rates = np.zeros(len(bw))
    ok = bw > 0
    rates[ok] = bw[ok] * np.log2(1.0 + signal[ok] / (interference[ok] + noise[ok]))
    return rates
