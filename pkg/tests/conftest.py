import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mmsmo.geometry import MapGenConfig, generate_urban_map, greedy_bs_placement, map_from_heights, visibility_matrix
from mmsmo.mobility import MobilityConfig
from mmsmo.power import PowerConfig
from mmsmo.qos import QosConfig
from mmsmo.radio import RadioConfig
from mmsmo.simulator import SmoEnv


@pytest.fixture(scope="session")
def default_map():
    return generate_urban_map(MapGenConfig())


@pytest.fixture(scope="session")
def default_vis(default_map):
    return visibility_matrix(default_map)


@pytest.fixture(scope="session")
def default_placement(default_map, default_vis):
    return greedy_bs_placement(default_map, default_vis)


@pytest.fixture
def flat_map():
    h = np.zeros((40, 30), dtype=np.int32)
    h[18:22, 13:17] = 12
    return map_from_heights(h, site_spacing_m=4, border_margin_m=2)


def make_env(placement, umap, n_bs=5, n_ue=20, seed=0, beta=0.7):
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(len(placement.indices), size=n_bs, replace=False))
    return SmoEnv(umap, placement.sites[pick], n_ue, RadioConfig(), PowerConfig(), MobilityConfig(),
                  QosConfig(0.7, beta), rng=rng)


@pytest.fixture
def desk_env(default_map, default_placement):
    return make_env(default_placement, default_map)


ACCEPTANCE = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (ok, detail)
    print(f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
