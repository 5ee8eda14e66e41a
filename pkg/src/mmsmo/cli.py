"""Command line: ``mmsmo run`` and ``mmsmo validate``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import STRATEGIES, ConfigError, RunConfig, load_config
from .geometry import MapGenConfig, generate_urban_map, greedy_bs_placement, load_heightmap
from .marl import TrainingAborted, make_agents, reward, run_training, training_manifest
from .metrics import MetricLog, export_run
from .nn import save_checkpoint
from .simulator import SmoEnv, run_baseline

log = logging.getLogger("mmsmo")


def build_map(cfg: RunConfig):
    m = cfg.map
    if cfg.heightmap is not None:
        return load_heightmap(cfg.heightmap, site_spacing_m=m.site_spacing_m, border_margin_m=m.border_margin_m,
                              mast_offset_m=m.mast_offset_m)
    kw = {f: getattr(m, f) for f in m.__dataclass_fields__ if f != "seed"}
    return generate_urban_map(MapGenConfig(**kw, seed=cfg.stream_int("map")))


def select_sites(cfg: RunConfig, placement) -> np.ndarray:
    """Indices into the reduced site list, drawn without replacement and sorted."""
    n_r = len(placement.indices)
    if cfg.n_bs > n_r:
        raise ConfigError("n_bs", f"{cfg.n_bs} exceeds the {n_r} sites left after placement")
    return np.sort(cfg.rng("sites").choice(n_r, size=cfg.n_bs, replace=False))


def prepare(cfg: RunConfig):
    umap = build_map(cfg)
    placement = greedy_bs_placement(umap)
    chosen = select_sites(cfg, placement)
    return umap, placement, chosen


def execute(cfg: RunConfig) -> dict:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    umap, placement, chosen = prepare(cfg)
    bs_pos = placement.sites[chosen]
    tc = cfg.training
    env = SmoEnv(umap, bs_pos, cfg.n_ue, cfg.radio, cfg.power, cfg.mobility, cfg.qos, tc.t_step_s, rng=cfg.rng("mobility"))
    log.info("map %dx%d, %d candidates -> %d reduced sites, using %s", umap.width_m, umap.depth_m,
             len(umap.candidate_sites), len(placement.indices), chosen.tolist())

    metric_log = MetricLog()
    t0 = time.perf_counter()
    if cfg.strategy == "ddqn":
        agents = make_agents(env.n_bs, tc, cfg.seed_sequence("agents"))
        run_training(env, agents, tc, cfg.episodes, metric_log, cfg.rng("clustering"), out_dir=out)
        ckpt = out / "checkpoints"
        ckpt.mkdir(exist_ok=True)
        for j, ag in enumerate(agents):
            save_checkpoint(ag.online, ckpt / f"agent_{j}.bin")
    else:
        run_baseline(env, cfg.strategy, cfg.episodes, metric_log,
                     reward_fn=lambda ee, psi, mask: reward(ee, psi, mask, cfg.qos.beta, tc))
    elapsed = time.perf_counter() - t0

    summary = export_run(metric_log, out, cfg.qos.beta, cfg.report_last_episodes)
    manifest = {
        "version": __version__,
        "seed": cfg.seed,
        "config_sha256": cfg.digest(),
        "config": cfg.raw,
        "training": training_manifest(tc),
        "reduced_sites": placement.sites.tolist(),
        "selected_sites": chosen.tolist(),
        "coverage_fraction": placement.coverage_fraction,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    log.info("%s: %d episodes in %.1f s, xi_ee=%.4g bit/J", cfg.strategy, cfg.episodes, elapsed, summary["xi_ee"])
    return summary


def _overrides(args) -> dict:
    return {"seed": args.seed, "episodes": args.episodes, "strategy": args.strategy, "out_dir": args.out}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="mmsmo", description="mmWave base-station sleep-mode simulator and MARL trainer")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--episodes", type=int)
    run.add_argument("--strategy", choices=STRATEGIES)
    run.add_argument("--out")
    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("--config", required=True)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.cmd == "validate":
            cfg = load_config(args.config)
            prepare(cfg)
            print("ok")
            return 0
        cfg = load_config(args.config, _overrides(args))
        summary = execute(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TrainingAborted as exc:
        print(f"run aborted: {exc}; diagnostics in {exc.dump_path}", file=sys.stderr)
        return 1
    for k, v in summary.items():
        print(f"{k}: {v}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
