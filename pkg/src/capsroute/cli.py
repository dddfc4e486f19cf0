"""Command-line entry points.

Subcommands: gen-data, train, eval, gradcheck, bench-routing, sweep-lambda.
Every command accepts ``--config FILE`` (key=value lines) and repeated
``--set key=value`` overrides; precedence is defaults < file < --set.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bench, config as cfg_mod, data, experiment, gradcheck, models
from .errors import CapsrouteError, ConfigurationError

__all__ = ["main"]


def _resolved_config(args) -> dict:
    file_values = cfg_mod.parse_config_file(args.config) if args.config else {}
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return cfg_mod.resolve(file_values, overrides)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _cmd_gen_data(args) -> int:
    cfg = _resolved_config(args)
    dataset = data.generate(cfg_mod.synth_config_from(cfg))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    data.save(dataset, args.out)
    n_pos = int(dataset.labels.sum())
    print(f"wrote {len(dataset)} samples ({n_pos} positive) to {args.out}")
    return 0


def _load_splits(args, cfg):
    if args.data:
        dataset = data.load(args.data)
        return data.split(dataset, tuple(cfg["split_fractions"]), cfg["split_seed"])
    return experiment.prepare_splits(cfg)


def _cmd_train(args) -> int:
    cfg = _resolved_config(args)
    splits = _load_splits(args, cfg)
    model, record = experiment.run_experiment(cfg, splits=splits)
    run_dir = Path(args.run_dir)
    _write(run_dir / "record.txt", record.to_text())
    _write(run_dir / "config.txt", "\n".join(f"{k}={v}" for k, v in sorted(record.config.items())) + "\n")
    _write(run_dir / "metrics.csv", record.metric_csv())
    report = record.metrics.get("test") or record.metrics["val"]
    _write(run_dir / "confusion.txt", report.confusion_table() + "\n")
    models.save_params(model, run_dir / "model.npz")
    print(f"run artifacts in {run_dir}")
    for name in sorted(record.metrics):
        print(f"--- {name} ---")
        print(record.metrics[name].to_text())
    return 0


def _cmd_eval(args) -> int:
    run_dir = Path(args.run_dir)
    if not (run_dir / "config.txt").is_file():
        raise ConfigurationError(f"{run_dir} is not a run directory (no config.txt)")
    file_values = cfg_mod.parse_config_file(run_dir / "config.txt")
    cfg = cfg_mod.resolve(file_values)
    dataset = data.load(args.data)
    proportions = data.class_proportions(dataset.labels, cfg["n_classes"])
    model = models.build_model(
        cfg_mod.model_config_from(cfg),
        tuple(cfg["image_size"]),
        cfg_mod.margin_params_from(cfg),
        cfg_mod.weighted_params_from(cfg, proportions),
        seed=cfg["seed"],
    )
    models.load_params(model, run_dir / "model.npz")
    from .training import evaluate

    report = evaluate(model, dataset)
    print(report.to_text())
    print(report.confusion_table())
    return 0


def _cmd_gradcheck(args) -> int:
    results = gradcheck.standard_suite(seed=args.seed)
    for res in results:
        print(res.line())
    failed = [r for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} gradient checks passed")
    return 1 if failed else 0


def _parse_shapes(raw: str):
    shapes = []
    for part in raw.split(";"):
        dims = tuple(int(x) for x in part.split(","))
        if len(dims) != 3:
            raise ConfigurationError(f"shape needs n_in,n_out,d_out, got {part!r}")
        shapes.append(dims)
    return tuple(shapes)


def _cmd_bench_routing(args) -> int:
    rows = bench.bench_routing(
        shapes=_parse_shapes(args.shapes),
        r_values=tuple(int(x) for x in args.iterations.split(",")),
        repeats=args.repeats,
    )
    text = bench.rows_to_csv(rows)
    if args.out:
        _write(Path(args.out), text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def _cmd_sweep_lambda(args) -> int:
    cfg = _resolved_config(args)
    grid = tuple(float(x) for x in args.grid.split(","))
    results = experiment.sweep_lambda(cfg, grid)
    table = experiment.lambda_table(results)
    if args.out:
        _write(Path(args.out), table)
        print(f"wrote {args.out}")
    else:
        print(table, end="")
    return 0


def _add_config_args(parser) -> None:
    parser.add_argument("--config", help="key=value configuration file")
    parser.add_argument(
        "--set", action="append", metavar="KEY=VALUE", help="override one configuration key"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="capsroute", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="render a synthetic dataset to an ECAP file")
    _add_config_args(p)
    p.add_argument("--out", required=True, help="output .ecap path")
    p.set_defaults(fn=_cmd_gen_data)

    p = sub.add_parser("train", help="train a model and write run artifacts")
    _add_config_args(p)
    p.add_argument("--data", help="existing .ecap file (otherwise data is generated)")
    p.add_argument("--run-dir", required=True, help="directory for record, metrics, and weights")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained run directory on an ECAP file")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("gradcheck", help="run the finite-difference verification battery")
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("bench-routing", help="time dynamic vs attention routing")
    p.add_argument("--shapes", default="128,2,16;512,2,16;1152,2,16",
                   help="semicolon-separated n_in,n_out,d_out triples")
    p.add_argument("--iterations", default="1,2,3", help="comma-separated dynamic r values")
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(fn=_cmd_bench_routing)

    p = sub.add_parser("sweep-lambda", help="train across auxiliary-loss multipliers")
    _add_config_args(p)
    p.add_argument("--grid", default="0.0001,0.001,0.01,0.05,0.1,0.5")
    p.add_argument("--out", help="write the metric table CSV here")
    p.set_defaults(fn=_cmd_sweep_lambda)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CapsrouteError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
