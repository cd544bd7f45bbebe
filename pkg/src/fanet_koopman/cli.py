"""Command-line entry point: ``fanet-koopman <command> [options]``.

Exit codes: 0 success, 1 validation error, 2 runtime or data error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .channel import DegenerateGeometryError
from .config import ConfigError, ExperimentConfig, load_config
from .dynamics import PlacementError
from .experiments import (CentralizedPredictor, DistributedPredictor, Predictor,
                          build_dataset, count_isolation, evaluate_all, train_centralized,
                          train_distributed)
from .gkae import GkaeModel
from .koopman import TrainingDivergence
from .storage import (DataError, Dataset, fmt, load_checkpoint, load_dataset, read_csv,
                      save_checkpoint, save_dataset, write_csv)

log = logging.getLogger("fanet_koopman")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="key = value config file")
    p.add_argument("--preset", default="table1", help="base preset (table1 or smoke)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key, e.g. --set training.epochs=50")
    p.add_argument("--seed", type=int, help="scenario and training seed")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fanet-koopman",
                                     description="FANET SINR simulation and Koopman prediction")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate trajectory, SINR and graph files")
    _add_common(p)
    p.add_argument("--steps", type=int)
    p.add_argument("--uavs", type=int)

    p = sub.add_parser("train", help="train distributed KAEs or a centralized GKAE")
    _add_common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--mode", choices=("centralized", "distributed"))
    p.add_argument("--horizon", type=int, help="training horizon (steps in the loss)")

    p = sub.add_parser("evaluate", help="score checkpoints on the held-out tail")
    _add_common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--checkpoints", type=Path, required=True)
    p.add_argument("--mode", choices=("centralized", "distributed"))
    p.add_argument("--horizon", type=int, action="append",
                   help="prediction horizon P (repeatable); defaults to evaluation.horizons")

    p = sub.add_parser("sweep-isolation", help="ground-truth isolation counts per threshold")
    _add_common(p)
    p.add_argument("--dataset", type=Path, help="use an existing dataset instead of simulating")
    p.add_argument("--steps", type=int)
    p.add_argument("--uavs", type=int)

    p = sub.add_parser("report", help="merge evaluation summaries into one table")
    p.add_argument("inputs", nargs="+", type=Path, help="evaluation output directories")
    p.add_argument("--out", type=Path, default=Path("."))
    return parser


def _config(args, extra: dict[str, str] | None = None) -> ExperimentConfig:
    overrides = {}
    for item in args.overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value
    if getattr(args, "seed", None) is not None:
        overrides["scenario.seed"] = str(args.seed)
        overrides["run.seed"] = str(args.seed)
    if getattr(args, "steps", None) is not None:
        overrides["scenario.steps"] = str(args.steps)
    if getattr(args, "uavs", None) is not None:
        overrides["scenario.uavs"] = str(args.uavs)
    if getattr(args, "mode", None):
        overrides["run.mode"] = args.mode
    overrides.update(extra or {})
    return load_config(args.config, args.preset, overrides)


def _adopt(dataset: Dataset, config: ExperimentConfig) -> ExperimentConfig:
    """Scenario and channel settings always come from the dataset that was simulated."""
    if dataset.config_hash != config.dataset_hash():
        log.info("using scenario/channel settings stored with the dataset (%s)",
                 dataset.config_hash)
    config.scenario = dataset.config.scenario
    config.channel = dataset.config.channel
    return config.validate()


def cmd_simulate(args) -> int:
    config = _config(args)
    dataset = build_dataset(config)
    save_dataset(dataset, args.out)
    log.info("wrote %d steps for %d UAVs to %s", dataset.steps, dataset.n_uavs, args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    extra = {"training.horizon": str(args.horizon)} if args.horizon else None
    config = _config(args, extra)
    dataset = load_dataset(args.dataset)
    config = _adopt(dataset, config)
    args.out.mkdir(parents=True, exist_ok=True)
    seed = config.run.seed
    rows = []
    if config.run.mode == "distributed":
        models = train_distributed(dataset, config.training, seed)
        for l, model in enumerate(models):
            name = f"kae_uav{l + 1}"
            save_checkpoint(args.out / f"{name}.ckpt", model, dataset.config_hash,
                            {"uav": str(l + 1), "seed": str(seed)})
            rows += [[name, e + 1, fmt(v)] for e, v in enumerate(model.loss_history)]
    else:
        model = train_centralized(dataset, config.training, seed)
        save_checkpoint(args.out / "gkae.ckpt", model, dataset.config_hash, {"seed": str(seed)})
        rows += [["gkae", e + 1, fmt(v)] for e, v in enumerate(model.loss_history)]
    write_csv(args.out / "train_log.csv", ["model", "epoch", "loss"], rows)
    return EXIT_OK


def load_predictor(path: Path, dataset: Dataset, mode: str | None = None) -> Predictor:
    """Build a predictor from a checkpoint directory (gkae.ckpt or kae_uav*.ckpt)."""
    central = path / "gkae.ckpt"
    kae_files = sorted(path.glob("kae_uav*.ckpt"), key=lambda p: int(p.stem[7:]))
    if mode is None:
        mode = "centralized" if central.exists() else "distributed"
    if mode == "centralized":
        ck = load_checkpoint(central)
        if ck.config_hash != dataset.config_hash:
            raise DataError(f"{central} was trained on dataset {ck.config_hash}, "
                            f"not {dataset.config_hash}")
        model: GkaeModel = ck.model
        if model.n_nodes != dataset.n_uavs:
            raise DataError(f"checkpoint expects {model.n_nodes} UAVs, dataset has "
                            f"{dataset.n_uavs}")
        return CentralizedPredictor(model, dataset.features, dataset.adjacency, dataset.weights)
    if len(kae_files) != dataset.n_uavs:
        raise DataError(f"found {len(kae_files)} KAE checkpoints for {dataset.n_uavs} UAVs")
    models = []
    for f in kae_files:
        ck = load_checkpoint(f)
        if ck.config_hash != dataset.config_hash:
            raise DataError(f"{f} was trained on dataset {ck.config_hash}, "
                            f"not {dataset.config_hash}")
        if ck.model.input_dim != dataset.n_uavs - 1:
            raise DataError(f"{f} expects {ck.model.input_dim} features per UAV")
        models.append(ck.model)
    return DistributedPredictor(models, dataset.features)


ROW_HEADER = ["mode", "horizon", "point_kind", "point_value", "kappa", "start", "epsilon",
              "tp", "fp", "tn", "fn", "f1", "far"]
SUMMARY_HEADER = ["mode", "horizon", "point_kind", "point_value", "kappa", "starts",
                  "epsilon_mean", "tp", "fp", "tn", "fn", "f1", "far",
                  "f1_degenerate", "far_degenerate"]


def write_evaluation(results, out: Path, n_uavs: int):
    from .metrics import f1_score, false_alarm_rate

    out.mkdir(parents=True, exist_ok=True)
    uav_cols = [f"uav{l}_{c}" for l in range(1, n_uavs + 1) for c in ("tp", "fp", "tn", "fn")]
    rows = []
    for res in results:
        for s in res.starts:
            c = s.network
            rows.append([res.mode, res.horizon, res.point_kind, fmt(res.point_value),
                         fmt(res.kappa), s.start, fmt(s.epsilon), c.tp, c.fp, c.tn, c.fn,
                         fmt(f1_score(c)), fmt(false_alarm_rate(c))]
                        + [v for u in s.per_uav for v in (u.tp, u.fp, u.tn, u.fn)])
    write_csv(out / "eval_rows.csv", ROW_HEADER + uav_cols, rows)

    uav_summary = [f"uav{l}_{c}" for l in range(1, n_uavs + 1) for c in ("f1", "far")]
    summary = []
    for res in results:
        rep = res.report()
        c = rep.counts
        summary.append([res.mode, res.horizon, res.point_kind, fmt(res.point_value),
                        fmt(res.kappa), len(res.starts), fmt(rep.epsilon), c.tp, c.fp, c.tn,
                        c.fn, fmt(rep.f1), fmt(rep.far), int(rep.f1_degenerate),
                        int(rep.far_degenerate)]
                       + [fmt(v) for u in rep.per_uav
                          for v in (f1_score(u), false_alarm_rate(u))])
    write_csv(out / "eval_summary.csv", SUMMARY_HEADER + uav_summary, summary)

    steps = []
    seen = set()
    for res in results:
        if (res.mode, res.horizon) in seen:
            continue
        seen.add((res.mode, res.horizon))
        steps += [[res.mode, res.horizon, l + 1, fmt(v)] for l, v in enumerate(res.step_error)]
    write_csv(out / "step_errors.csv", ["mode", "horizon", "step", "epsilon"], steps)


def cmd_evaluate(args) -> int:
    extra = {}
    if args.horizon:
        extra["evaluation.horizons"] = ", ".join(str(h) for h in args.horizon)
    config = _config(args, extra)
    dataset = load_dataset(args.dataset)
    config = _adopt(dataset, config)
    predictor = load_predictor(args.checkpoints, dataset, args.mode)
    results = evaluate_all(predictor, dataset, config)
    write_evaluation(results, args.out, dataset.n_uavs)
    return EXIT_OK


def cmd_sweep_isolation(args) -> int:
    config = _config(args)
    if args.dataset:
        dataset = load_dataset(args.dataset)
        config = _adopt(dataset, config)
    else:
        dataset = build_dataset(config)
    points = config.evaluation.sweep_points(config.channel.params())
    counts = count_isolation(dataset.features, points)
    n = dataset.n_uavs
    target = args.out if args.out.suffix == ".csv" else args.out / "isolation_counts.csv"
    target.parent.mkdir(parents=True, exist_ok=True)
    write_csv(target,
              ["point_kind", "point_value", "kappa", "steps", "network_events"]
              + [f"uav{l}_events" for l in range(1, n + 1)],
              [[c.point_kind, fmt(c.point_value), fmt(c.kappa), dataset.features.shape[0],
                c.network, *c.per_uav] for c in counts])
    return EXIT_OK


def cmd_report(args) -> int:
    rows = []
    header = None
    for d in args.inputs:
        h, body = read_csv(Path(d) / "eval_summary.csv")
        header = header or h
        if h[:len(SUMMARY_HEADER)] != SUMMARY_HEADER:
            raise DataError(f"{d}: not an evaluation summary")
        rows += [[str(d)] + r[:len(SUMMARY_HEADER)] for r in body]
    rows.sort(key=lambda r: (r[1], int(r[2]), r[3], float(r[4]), r[0]))
    args.out.mkdir(parents=True, exist_ok=True)
    write_csv(args.out / "report.csv", ["source"] + SUMMARY_HEADER, rows)
    cols = ("source", "mode", "horizon", "point", "epsilon", "f1", "far")
    print("  ".join(f"{c:>12}" for c in cols))
    for r in rows:
        print("  ".join(f"{v:>12}" for v in (
            Path(r[0]).name[-12:], r[1], r[2], f"{r[3]}={float(r[4]):g}",
            f"{float(r[7]):.4g}", f"{float(r[12]):.3f}", f"{float(r[13]):.3f}")))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "evaluate": cmd_evaluate,
            "sweep-isolation": cmd_sweep_isolation, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore")
    try:
        return COMMANDS[args.command](args)
    except DegenerateGeometryError as exc:
        log.error("%s", exc)
        return EXIT_RUNTIME
    except (ConfigError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except (DataError, PlacementError, TrainingDivergence, OSError) as exc:
        log.error("%s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
