"""Per-step metric log, reporting statistics and CSV export."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CSV_HEADER = ["episode", "step", "ee_bit_per_joule", "qos_ratio", "total_rate_bps", "n_sleeping", "reward", "active_mask"]
METRICS = ("ee", "qos_ratio", "total_rate", "n_sleeping", "reward")


@dataclass
class StepRecord:
    episode: int
    step: int
    ee: float
    qos_ratio: float
    total_rate: float
    n_sleeping: int
    reward: float
    active_mask: str
    ue_rates: np.ndarray | None = None

    @classmethod
    def from_outcome(cls, episode: int, step: int, outcome, reward: float, keep_ue_rates: bool = True) -> "StepRecord":
        snap = outcome.snapshot
        mask = np.asarray(snap.active_mask, dtype=np.int8)
        return cls(
            episode=episode,
            step=step,
            ee=float(snap.ee),
            qos_ratio=float(outcome.psi),
            total_rate=float(snap.total_rate),
            n_sleeping=int(len(mask) - mask.sum()),
            reward=float(reward),
            active_mask="".join(str(int(b)) for b in mask),
            ue_rates=snap.rates.copy() if keep_ue_rates else None,
        )


class MetricLog:
    """Append-only records, contiguous in (episode, step)."""

    def __init__(self):
        self.records: list[StepRecord] = []

    def __len__(self) -> int:
        return len(self.records)

    def append(self, rec: StepRecord) -> None:
        if self.records:
            last = self.records[-1]
            ok = (rec.episode == last.episode and rec.step == last.step + 1) or (rec.episode == last.episode + 1 and rec.step == 1)
            if not ok:
                raise ValueError(f"non-contiguous record ({rec.episode}, {rec.step}) after ({last.episode}, {last.step})")
        elif rec.step != 1:
            raise ValueError("first record must be step 1")
        if rec.n_sleeping != len(rec.active_mask) - rec.active_mask.count("1"):
            raise ValueError("n_sleeping disagrees with active_mask")
        self.records.append(rec)

    @property
    def n_episodes(self) -> int:
        return len(self.episodes())

    def episodes(self) -> np.ndarray:
        return np.unique([r.episode for r in self.records])

    def column(self, metric: str) -> np.ndarray:
        return np.array([getattr(r, metric) for r in self.records], dtype=float)

    def episode_column(self) -> np.ndarray:
        return np.array([r.episode for r in self.records])

    def episode_means(self, metric: str) -> tuple[np.ndarray, np.ndarray]:
        """(episode ids, per-episode step mean)."""
        ep = self.episode_column()
        vals = self.column(metric)
        ids, inv = np.unique(ep, return_inverse=True)
        sums = np.bincount(inv, weights=vals)
        counts = np.bincount(inv)
        return ids, sums / counts

    def window(self, last_k: int) -> "MetricLog":
        ids = self.episodes()[-last_k:]
        out = MetricLog()
        out.records = [r for r in self.records if r.episode >= ids[0]] if len(ids) else []
        return out

    def ue_rates(self) -> np.ndarray:
        chunks = [r.ue_rates for r in self.records if r.ue_rates is not None]
        return np.concatenate(chunks) if chunks else np.zeros(0)


# ---------------------------------------------------------------------------
# statistics


def normalized_average(log: MetricLog, metric: str, episode: int, window: int = 100) -> float:
    """Sum of ``metric`` over episodes max(1, e-window+1)..e divided by episodes x steps."""
    if episode < 1:
        raise ValueError("episode must be >= 1")
    ep = log.episode_column()
    lo = max(1, episode - window + 1)
    sel = (ep >= lo) & (ep <= episode)
    if not sel.any():
        raise ValueError(f"no records for episodes {lo}..{episode}")
    n_ep = len(np.unique(ep[sel]))
    t_step = sel.sum() / n_ep
    return float(log.column(metric)[sel].sum() / (n_ep * t_step))


def xi(log: MetricLog, metric: str, last: int = 200) -> float:
    """Mean of per-episode averages over the last ``last`` episodes."""
    if len(log) == 0:
        raise ValueError("empty log")
    _, means = log.episode_means(metric)
    return float(means[-last:].mean())


def xi_200(log: MetricLog, metric: str) -> float:
    return xi(log, metric, 200)


def percentile(sample, p: float) -> float:
    x = np.asarray(sample, dtype=float)
    if x.size == 0:
        raise ValueError("percentile of an empty sample")
    return float(np.percentile(x, p, method="linear"))


def sleep_distribution(log: MetricLog, last_k_episodes: int | None = None) -> tuple[int, float]:
    """(mode, population std) of sleeping-BS counts; ties go to the smaller count."""
    sub = log if last_k_episodes is None else log.window(last_k_episodes)
    if len(sub) == 0:
        raise ValueError("empty window")
    n = sub.column("n_sleeping").astype(np.int64)
    counts = np.bincount(n)
    return int(counts.argmax()), float(n.std())


def qos_satisfaction(log: MetricLog, beta: float) -> np.ndarray:
    """Per-episode fraction of steps with psi >= beta."""
    _, frac = _episode_fraction(log, log.column("qos_ratio") >= beta)
    return frac


def _episode_fraction(log: MetricLog, flags):
    ids, inv = np.unique(log.episode_column(), return_inverse=True)
    return ids, np.bincount(inv, weights=flags.astype(float)) / np.bincount(inv)


def ecdf(sample) -> tuple[np.ndarray, np.ndarray]:
    x = np.sort(np.asarray(sample, dtype=float))
    return x, np.arange(1, len(x) + 1) / len(x)


def summarize(log: MetricLog, beta: float, last: int = 200) -> dict:
    win = log.window(last)
    final = int(log.episodes()[-1])
    out = {
        "episodes": log.n_episodes,
        "steps": len(log),
        "na_ee_final": normalized_average(log, "ee", final),
        "xi_ee": xi(log, "ee", last),
        "xi_qos_ratio": xi(log, "qos_ratio", last),
        "xi_total_rate": xi(log, "total_rate", last),
        "xi_reward": xi(log, "reward", last),
        "xi_n_sleeping": xi(log, "n_sleeping", last),
        "qos_step_satisfaction": float(qos_satisfaction(win, beta).mean()),
    }
    mode, std = sleep_distribution(log, last)
    out["sleep_mode"] = mode
    out["sleep_std"] = std
    rates = win.ue_rates()
    if rates.size:
        out["delta10_ue_rate"] = percentile(rates, 10)
        out["delta90_ue_rate"] = percentile(rates, 90)
    tot = win.column("total_rate")
    out["delta10_total_rate"] = percentile(tot, 10)
    out["delta90_total_rate"] = percentile(tot, 90)
    return out


# ---------------------------------------------------------------------------
# CSV


def write_csv(log: MetricLog, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in log.records:
            w.writerow([r.episode, r.step, repr(r.ee), repr(r.qos_ratio), repr(r.total_rate), r.n_sleeping, repr(r.reward), r.active_mask])


def read_csv(path) -> MetricLog:
    out = MetricLog()
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in rd:
            out.append(StepRecord(int(row[0]), int(row[1]), float(row[2]), float(row[3]), float(row[4]),
                                  int(row[5]), float(row[6]), row[7]))
    return out


def write_summary(summary: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["statistic", "value"])
        for k, v in summary.items():
            w.writerow([k, repr(v)])


def read_summary(path) -> dict:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        return {k: float(v) for k, v in rd}


def write_cdf(sample, path) -> None:
    x, p = ecdf(sample)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "cumulative_prob"])
        for a, b in zip(x, p):
            w.writerow([repr(float(a)), repr(float(b))])


def export_run(log: MetricLog, out_dir, beta: float, last: int = 200) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(log, out / "metrics.csv")
    summary = summarize(log, beta, last)
    write_summary(summary, out / "summary.csv")
    rates = log.window(last).ue_rates()
    write_cdf(rates if rates.size else log.column("total_rate"), out / "ue_rate_cdf.csv")
    return summary
