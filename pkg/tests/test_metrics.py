import numpy as np
import pytest

from mmsmo.metrics import (
    CSV_HEADER,
    MetricLog,
    StepRecord,
    export_run,
    normalized_average,
    percentile,
    qos_satisfaction,
    read_csv,
    read_summary,
    sleep_distribution,
    write_csv,
    xi,
    xi_200,
)


def _log(n_ep, t_step=3, ee=lambda e, t: 1.0, sleeping=lambda e, t: 0, psi=lambda e, t: 1.0, n_bs=4):
    log = MetricLog()
    for e in range(1, n_ep + 1):
        for t in range(1, t_step + 1):
            k = sleeping(e, t)
            mask = "0" * k + "1" * (n_bs - k)
            log.append(StepRecord(e, t, float(ee(e, t)), float(psi(e, t)), 1e6 * e, k, 0.1 * t, mask,
                                  np.array([1.0 * e, 2.0 * t])))
    return log


class TestLog:
    def test_contiguity_enforced(self):
        log = _log(1)
        with pytest.raises(ValueError):
            log.append(StepRecord(1, 5, 0, 0, 0, 0, 0, "1111"))
        with pytest.raises(ValueError):
            log.append(StepRecord(3, 1, 0, 0, 0, 0, 0, "1111"))

    def test_sleeping_matches_mask(self):
        with pytest.raises(ValueError):
            MetricLog().append(StepRecord(1, 1, 0, 0, 0, 2, 0, "1110"))


class TestNormalizedAverage:
    def test_constant(self):
        log = _log(120, ee=lambda e, t: 2.5)
        assert all(normalized_average(log, "ee", e) == 2.5 for e in (1, 50, 120))

    def test_arithmetic_series(self):
        log = _log(100, t_step=7, ee=lambda e, t: e)
        assert normalized_average(log, "ee", 100) == pytest.approx(50.5)

    def test_first_episode(self):
        log = _log(3, ee=lambda e, t: 10 * e + t)
        assert normalized_average(log, "ee", 1) == pytest.approx(12.0)

    def test_window_slides(self):
        log = _log(150, t_step=2, ee=lambda e, t: e)
        assert normalized_average(log, "ee", 150) == pytest.approx(np.mean(np.arange(51, 151)))

    def test_permutation_invariant(self):
        a = _log(5, ee=lambda e, t: e * t)
        b = _log(5, ee=lambda e, t: e * (4 - t))
        assert normalized_average(a, "ee", 5) == pytest.approx(normalized_average(b, "ee", 5))

    def test_bad_episode(self):
        with pytest.raises(ValueError):
            normalized_average(_log(2), "ee", 0)


class TestXi:
    def test_constant(self):
        assert xi_200(_log(10, ee=lambda e, t: 4.0), "ee") == 4.0

    def test_two_episodes(self):
        assert xi_200(_log(2, ee=lambda e, t: 2 * e - 1), "ee") == pytest.approx(2.0)

    def test_last_window(self):
        log = _log(300, t_step=1, ee=lambda e, t: e)
        assert xi_200(log, "ee") == pytest.approx(np.mean(np.arange(101, 301)))
        assert xi(log, "ee", 50) == pytest.approx(np.mean(np.arange(251, 301)))

    def test_equals_na_on_short_runs(self):
        log = _log(40, ee=lambda e, t: np.sin(e + t))
        assert xi_200(log, "ee") == pytest.approx(normalized_average(log, "ee", 40))


class TestPercentile:
    def test_bounds_and_middle(self):
        x = [5, 1, 4, 2, 3]
        assert percentile(x, 0) == 1 and percentile(x, 100) == 5 and percentile(x, 50) == 3

    def test_interpolates(self):
        assert percentile([0.0, 10.0], 25) == 2.5

    def test_empty(self):
        with pytest.raises(ValueError):
            percentile([], 10)


class TestSleepDistribution:
    def test_constant(self):
        assert sleep_distribution(_log(4, sleeping=lambda e, t: 3)) == (3, 0.0)

    def test_tie_takes_smaller(self):
        log = _log(2, t_step=2, sleeping=lambda e, t: 2 if t == 1 else 4)
        assert sleep_distribution(log) == (2, 1.0)

    def test_window(self):
        log = _log(4, sleeping=lambda e, t: 1 if e < 4 else 3)
        assert sleep_distribution(log, 1)[0] == 3

    def test_empty(self):
        with pytest.raises(ValueError):
            sleep_distribution(MetricLog())


class TestQosSatisfaction:
    def test_fraction_per_episode(self):
        log = _log(2, t_step=4, psi=lambda e, t: 0.7 if t <= e else 0.6)
        assert qos_satisfaction(log, 0.7).tolist() == [0.25, 0.5]


class TestExport:
    def test_header(self, tmp_path):
        write_csv(_log(2), tmp_path / "m.csv")
        assert (tmp_path / "m.csv").read_text().splitlines()[0] == ",".join(CSV_HEADER)

    def test_roundtrip_statistics(self, tmp_path):
        log = _log(30, ee=lambda e, t: np.exp(-e / 7) + t / 3, sleeping=lambda e, t: (e + t) % 4,
                   psi=lambda e, t: (e * t % 10) / 10)
        write_csv(log, tmp_path / "m.csv")
        back = read_csv(tmp_path / "m.csv")
        for metric in ("ee", "qos_ratio", "total_rate", "reward", "n_sleeping"):
            assert xi_200(back, metric) == xi_200(log, metric)
            assert normalized_average(back, metric, 30) == normalized_average(log, metric, 30)
        assert sleep_distribution(back) == sleep_distribution(log)

    def test_export_run(self, tmp_path):
        log = _log(5)
        summary = export_run(log, tmp_path, 0.7, last=3)
        assert read_summary(tmp_path / "summary.csv") == pytest.approx(summary)
        rows = (tmp_path / "ue_rate_cdf.csv").read_text().splitlines()
        assert rows[0] == "value,cumulative_prob"
        assert float(rows[-1].split(",")[1]) == 1.0
