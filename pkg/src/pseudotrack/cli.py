"""Command-line entry point.

Three subcommands with file handoff between them, so the tracker can be
regression-tested on frozen logs independent of the simulator:

* ``simulate`` - write observation logs plus ground truth per seed;
* ``track``    - run one tracker over a log and score it;
* ``experiment`` - run a (scheme, metric, seed) matrix and emit reports.

Exit codes: 0 ok, 1 cell failures, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import evaluation
from .config import config_hash, config_to_dict, experiment_plan, load_config
from .evaluation import TRACKER_MODES, observed_universe, run_attack
from .mobility import simulate_traffic
from .obslog import (
    LogParseError,
    read_ground_truth,
    read_observation_log,
    write_ground_truth,
    write_observation_log,
)
from .radio import capture
from .schemes import apply_scheme_all
from .types import ConfigError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pseudotrack",
        description="Vehicular pseudonym privacy testbed: simulate radio captures and evaluate tracking attacks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="write observation logs and ground truth per seed")
    p_sim.add_argument("--config", help="run configuration (JSON); defaults apply when omitted")
    p_sim.add_argument("--out", help="output directory (default: config 'out' or ./out)")
    p_sim.add_argument("--seed", type=int, action="append", help="override the seed list (repeatable)")

    p_track = sub.add_parser("track", help="run one tracker over an observation log and score it")
    p_track.add_argument("--observations", required=True, help="observation log CSV")
    p_track.add_argument("--ground-truth", required=True, help="ground truth CSV")
    p_track.add_argument("--metric", choices=TRACKER_MODES, help="tracker to run (default: radar.metric)")
    p_track.add_argument("--config", help="run configuration (JSON)")
    p_track.add_argument("--out", help="output directory for the associations CSV")

    p_exp = sub.add_parser("experiment", help="run the configured (scheme, metric, seed) matrix")
    p_exp.add_argument("--config", help="experiment configuration (JSON)")
    p_exp.add_argument("--out", help="output directory (default: config 'out' or ./out)")
    p_exp.add_argument("--workers", type=int, help="parallel cell workers (default: eval.workers)")
    p_exp.add_argument("--dry-run", action="store_true", help="validate, print the resolved config, touch no files")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "track":
            return _cmd_track(args)
        return _cmd_experiment(args)
    except (ConfigError, LogParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _out_dir(args, cfg) -> Path:
    out = args.out or cfg.out or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    seeds = args.seed if args.seed else cfg.seeds
    out = _out_dir(args, cfg)
    road_map = cfg.map.build()
    files = []
    for seed in seeds:
        traces = simulate_traffic(
            road_map,
            cfg.traffic.n_vehicles,
            cfg.traffic.duration,
            cfg.traffic.dt,
            (cfg.traffic.v_min, cfg.traffic.v_max),
            seed,
            cfg.traffic.exit_probability,
            cfg.traffic.straight_bias,
            cfg.traffic.turn_speed,
            cfg.traffic.platoon_max_size,
            cfg.traffic.platoon_headway,
        )
        streams = apply_scheme_all(traces, cfg.scheme, seed, cfg.radio.bsm_period)
        observations, truth = capture(traces, streams, cfg.zones, road_map, cfg.radio, seed)
        obs_path = out / f"observations_s{seed}.csv"
        gt_path = out / f"ground_truth_s{seed}.csv"
        write_observation_log(observations, obs_path)
        write_ground_truth(truth, gt_path)
        files.extend([str(obs_path), str(gt_path)])
        print(f"seed {seed}: {len(observations)} observations -> {obs_path}")
    manifest = {
        "config": config_to_dict(cfg),
        "config_sha256": config_hash(cfg),
        "seeds": seeds,
        "files": files,
        "defaulted_sections": cfg.defaulted_sections,
    }
    with open(out / "simulate_manifest.json", "w") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return 0


def _cmd_track(args) -> int:
    cfg = load_config(args.config)
    metric = args.metric or cfg.match.metric
    observations = read_observation_log(args.observations)
    truth = read_ground_truth(args.ground_truth)
    out = _out_dir(args, cfg)

    if not observations:
        print("warning: empty observation log", file=sys.stderr)
        print("precision=0.000000 recall=0.000000 f=0.000000")
        _write_associations(out / "associations.csv", [])
        return 0

    result = run_attack(
        observations,
        metric,
        radio=cfg.radio,
        linker=cfg.linker,
        match=cfg.match,
        baseline=cfg.baseline,
    )
    universe = observed_universe(observations)
    precision, recall = evaluation.pairwise_score(result.grouping, truth, universe)
    f = evaluation.f_measure(precision, recall)
    print(f"precision={precision:.6f} recall={recall:.6f} f={f:.6f}")
    _write_associations(out / "associations.csv", result.associations)
    with open(out / "track_manifest.json", "w") as handle:
        json.dump(
            {
                "config_sha256": config_hash(cfg),
                "metric": metric,
                "observations": str(args.observations),
                "ground_truth": str(args.ground_truth),
                "precision": precision,
                "recall": recall,
                "f": f,
            },
            handle,
            indent=2,
            sort_keys=True,
        )
        handle.write("\n")
    return 0


def _write_associations(path, associations) -> None:
    chain_ids: dict[int, int] = {}
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["zone", "chain_id", "mac", "score"])
        for assoc in associations:
            zone = assoc.chain.zone
            chain_ids[zone] = chain_ids.get(zone, -1) + 1
            writer.writerow(
                [
                    zone,
                    chain_ids[zone],
                    assoc.wifi_id.mac if assoc.wifi_id else "",
                    "" if assoc.wifi_id is None else repr(assoc.score),
                ]
            )


def _cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    plan = experiment_plan(cfg)
    plan.validate()
    if args.dry_run:
        print(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True))
        print(f"config_sha256: {config_hash(cfg)}")
        return 0

    out = _out_dir(args, cfg)
    workers = args.workers or cfg.workers
    reports = evaluation.run_experiment(plan, workers=workers)
    evaluation.write_results_csv(reports, out / "results.csv")
    evaluation.write_manifest(
        out / "manifest.json",
        config_to_dict(cfg),
        config_hash(cfg),
        reports,
    )
    from .plots import render_experiment_figures

    figures = render_experiment_figures(reports, out)

    print(f"{'scheme':<20} {'metric':<12} {'median_f':>9} {'iqr_f':>8} {'seeds':>6}")
    for cell in evaluation.summarize(reports):
        median = "-" if cell["median_f"] is None else f"{cell['median_f']:.4f}"
        iqr = "-" if cell["iqr_f"] is None else f"{cell['iqr_f']:.4f}"
        print(f"{cell['scheme']:<20} {cell['metric']:<12} {median:>9} {iqr:>8} {cell['seeds']:>6}")
    failures = [r for r in reports if not r.ok]
    print(f"results: {out / 'results.csv'}  figures: {', '.join(str(f) for f in figures)}")
    if failures:
        print(f"{len(failures)} cell(s) failed; see manifest.json", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
