import math

import numpy as np
import pytest

from mmsmo import mobility as mob
from mmsmo._accel import py_func
from mmsmo.geometry import map_from_heights
from mmsmo.mobility import MobilityConfig, MobilityError


def _open_map(w=20, d=10):
    return map_from_heights(np.zeros((w, d), dtype=int))


class TestConfig:
    def test_defaults(self):
        cfg = MobilityConfig()
        assert cfg.t_episode_s == 5400
        assert cfg.radius_nmp == pytest.approx(math.sqrt(500 / math.pi))
        assert cfg.p_stay_local(mob.NMP) == 0.8

    def test_community_area_order(self):
        with pytest.raises(MobilityError):
            MobilityConfig(area_nmp_m2=200, area_cmp_m2=250)

    def test_bad_speed(self):
        with pytest.raises(MobilityError):
            MobilityConfig(v_min=6, v_max=5)

    def test_episode_length_forced(self, caplog):
        cfg = MobilityConfig(t_episode_s=1000)
        assert cfg.t_episode_s == 5400
        assert "t_episode_s" in caplog.text


class TestEpochSchedule:
    def test_single_epoch(self):
        assert mob.sample_epoch_schedule(1, 340, 3600, np.random.default_rng(0)).tolist() == [3600]

    def test_positive_and_normalised(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            s = mob.sample_epoch_schedule(10, 340, 3600, rng)
            assert (s > 0).all()
            assert s.sum() == pytest.approx(3600, rel=1e-12)

    def test_slot_mean(self):
        rng = np.random.default_rng(2)
        draws = np.array([mob.sample_epoch_schedule(10, 340, 3600, rng) for _ in range(100_000)])
        assert np.allclose(draws.mean(axis=0), 360, rtol=0.01)


class TestInitEpisode:
    def test_one_per_community(self, default_map):
        s = mob.init_episode(default_map, MobilityConfig(), 7, np.random.default_rng(0))
        assert sorted(np.bincount(s.community, minlength=7).tolist()) == [1] * 7

    def test_uneven_sizes(self, default_map):
        assert mob.community_sizes(10, 7).tolist() == [2, 2, 2, 1, 1, 1, 1]
        s = mob.init_episode(default_map, MobilityConfig(), 10, np.random.default_rng(0))
        assert np.bincount(s.community, minlength=7).tolist() == [2, 2, 2, 1, 1, 1, 1]

    def test_determinism(self, default_map):
        a = mob.init_episode(default_map, MobilityConfig(), 20, np.random.default_rng(9))
        b = mob.init_episode(default_map, MobilityConfig(), 20, np.random.default_rng(9))
        assert np.array_equal(a.centers, b.centers)
        assert np.array_equal(a.community, b.community)
        assert np.array_equal(a.pos, b.pos)

    def test_starts_valid_and_local(self, default_map):
        s = mob.init_episode(default_map, MobilityConfig(), 70, np.random.default_rng(3))
        assert s.local.all()
        assert mob.position_valid(default_map, s).all()
        assert np.allclose(s.epoch_ends[:, -1], 3600)

    def test_needs_a_ue(self, default_map):
        with pytest.raises(MobilityError):
            mob.init_episode(default_map, MobilityConfig(), 0)


class TestKinematics:
    def _move(self, umap, x, y, heading, dist):
        pos, hd = mob.advance_kernel(np.array([[x, y]]), np.array([heading]), np.array([dist]),
                                     np.array([False]), np.zeros((1, 2)), 1.0, umap.height)
        return pos[0], hd[0]

    def test_reflect_off_map_edge(self):
        pos, hd = self._move(_open_map(), 17.0, 5.0, 0.0, 5.0)
        assert pos[0] == pytest.approx(18.0, abs=1e-6)
        assert pos[1] == pytest.approx(5.0)
        assert hd == pytest.approx(math.pi)

    def test_reflect_off_building_face(self):
        h = np.zeros((20, 10), dtype=int)
        h[15:, :] = 8
        pos, hd = self._move(map_from_heights(h), 12.0, 5.0, 0.0, 5.0)
        assert pos[0] == pytest.approx(13.0, abs=1e-6)
        assert hd == pytest.approx(math.pi)

    def test_oblique_reflection_mirrors_heading(self):
        pos, hd = self._move(_open_map(), 17.0, 5.0, math.pi / 4, 5.0)
        assert math.cos(hd) == pytest.approx(-math.sqrt(0.5))
        assert math.sin(hd) == pytest.approx(math.sqrt(0.5))
        assert pos[0] == pytest.approx(20 - (5 * math.sqrt(0.5) - 3), abs=1e-6)

    def test_corner_reverses(self):
        pos, hd = self._move(_open_map(10, 10), 8.0, 8.0, math.pi / 4, 2 * math.sqrt(2) + math.sqrt(2))
        assert pos == pytest.approx([9.0, 9.0], abs=1e-6)
        assert hd == pytest.approx(5 * math.pi / 4)

    def test_stays_in_disc(self):
        m = _open_map(100, 100)
        pos = np.array([[50.0, 50.0]])
        rng = np.random.default_rng(0)
        for _ in range(500):
            pos, _ = mob.advance_kernel(pos, rng.uniform(0, 2 * np.pi, 1), np.array([3.0]), np.array([True]),
                                        np.array([[50.0, 50.0]]), 10.0, m.height)
            assert np.hypot(*(pos[0] - 50.0)) <= 10.0 + 1e-6

    def test_numpy_path_matches_kernel(self, default_map):
        rng = np.random.default_rng(5)
        s = mob.init_episode(default_map, MobilityConfig(), 40, rng)
        c = s.centers[s.community]
        args = (s.pos, s.heading, rng.uniform(0, 400, 40), s.local, c, s.radius, default_map.height)
        p1, h1 = mob.advance_kernel(*args)
        p2, h2 = py_func(mob.advance_kernel)(*args)
        assert np.allclose(p1, p2, atol=1e-9)
        assert np.allclose(np.cos(h1 - h2), 1.0)


class TestStep:
    def test_containment_over_episode(self, default_map):
        cfg = MobilityConfig()
        rng = np.random.default_rng(7)
        s = mob.init_episode(default_map, cfg, 70, rng)
        for _ in range(15):
            mob.step(s, default_map, cfg, 360.0, rng)
            assert mob.position_valid(default_map, s).all()
        assert s.time == pytest.approx(5400)

    def test_small_dt_inside_disc(self, default_map):
        cfg = MobilityConfig()
        rng = np.random.default_rng(8)
        s = mob.init_episode(default_map, cfg, 20, rng)
        s.pos[:] = s.centers[s.community]
        mob.step(s, default_map, cfg, 0.1, rng)
        d = np.hypot(*(s.pos - s.centers[s.community]).T)
        assert (d <= s.radius).all()

    def test_period_switch_shrinks_radius(self, default_map):
        cfg = MobilityConfig()
        rng = np.random.default_rng(1)
        s = mob.init_episode(default_map, cfg, 20, rng)
        mob.step(s, default_map, cfg, 3600.0, rng)
        assert s.period == mob.CMP
        assert s.radius == pytest.approx(cfg.radius_cmp)
        assert mob.position_valid(default_map, s).all()
        assert np.allclose(s.epoch_ends[:, -1], 5400)

    def test_always_local_chain(self, default_map):
        cfg = MobilityConfig(p_local_nmp=1.0, p_local_cmp=1.0)
        rng = np.random.default_rng(2)
        s = mob.init_episode(default_map, cfg, 20, rng)
        s.local[:] = False
        mob._transition(s, np.arange(20), default_map, cfg, rng)
        assert s.local.all()
        assert mob.position_valid(default_map, s).all()

    def test_rejects_nonpositive_dt(self, default_map):
        cfg = MobilityConfig()
        s = mob.init_episode(default_map, cfg, 7)
        with pytest.raises(MobilityError):
            mob.step(s, default_map, cfg, 0.0, np.random.default_rng(0))
