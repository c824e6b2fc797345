"""Command-line entry point: ``simam2 {train,eval,sweep,diag,gradcheck}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .harness.config import ConfigError, ExperimentConfig, load_config
from .harness.data import SyntheticSpec, gen_synthetic
from .harness.checkpoint import load_checkpoint
from .harness.sweep import Cell, classification_grid, sweep
from .harness.training import NumericalAbort, evaluate, train
from .tensor import NonFiniteError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

PROBES = ("concat", "ratio", "dispersion", "film-order")

log = logging.getLogger("simam2")


def _load(args) -> tuple[ExperimentConfig, SyntheticSpec]:
    if args.config:
        cfg, spec = load_config(args.config)
    else:
        cfg, spec = ExperimentConfig(), SyntheticSpec()
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
        spec = replace(spec, seed=args.seed)
    return cfg, spec


def cmd_train(args) -> int:
    cfg, spec = _load(args)
    out = Path(args.out) if args.out else None
    result = train(cfg, spec, out)
    print(f"best epoch {result.checkpoint.epoch}: test top-1 {result.test.top1_accuracy:.4f}, "
          f"mAP {result.test.mAP:.4f}")
    if out:
        print(f"artifacts written to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    _, spec = _load(args)
    data = gen_synthetic(spec)
    row = evaluate(ckpt, getattr(data, args.split), args.split)
    print(json.dumps({"split": args.split, "top1_accuracy": row.top1_accuracy, "mAP": row.mAP,
                      "loss": row.loss}))
    return EXIT_OK


def _grid(spec_arg: str) -> list[Cell]:
    if spec_arg == "classification":
        return classification_grid()
    try:
        raw = json.loads(Path(spec_arg).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read grid {spec_arg}: {exc}")
    if not isinstance(raw, list):
        raise ConfigError("grid file must be a JSON list of {label, overrides} objects")
    cells = []
    for item in raw:
        if not isinstance(item, dict) or "overrides" not in item:
            raise ConfigError("each grid entry needs an 'overrides' object")
        overrides = dict(item["overrides"])
        if "lambda" in overrides:
            overrides["lambda_"] = overrides.pop("lambda")
        cells.append(Cell(item.get("label", json.dumps(item["overrides"], sort_keys=True)), overrides,
                          item.get("treatment", "")))
    return cells


def cmd_sweep(args) -> int:
    cfg, spec = _load(args)
    seeds = tuple(range(args.seeds)) if args.seed is None else (args.seed,)
    result = sweep(_grid(args.grid), cfg, spec, seeds=seeds, out_dir=args.out, jobs=args.jobs)
    print(result.table())
    return EXIT_OK


def cmd_diag(args) -> int:
    from . import diagnostics as diag

    cfg, spec = _load(args)
    if args.probe == "concat":
        report = diag.concat_energy_probe(trials=args.trials, seed=cfg.seed)
    elif args.probe == "ratio":
        run_cfg = cfg if cfg.fusion_kind.has_gate else cfg.with_overrides(fusion="summation-learnable")
        report = diag.ratio_agreement(train(run_cfg, spec), config=run_cfg)
    elif args.probe == "dispersion":
        targets = [float(t) for t in args.targets.split(",")]
        report = diag.zeta_dispersion_study(targets, cfg if args.config else None, spec)
    else:
        seeds = range(args.seeds) if args.seed is None else (args.seed,)
        report = diag.film_order_probe(cfg, spec, seeds)
    print(json.dumps(report.to_json(), indent=2))
    if args.out:
        print(f"report written to {report.save(args.out)}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .harness.pipeline_check import pipeline_gradcheck

    seed = 0 if args.seed is None else args.seed
    check = pipeline_gradcheck(seed=seed)
    for name, err in check.errors.items():
        print(f"{name:16s} {err:.3e}")
    status = "PASS" if check.passed() else "FAIL"
    print(f"{status}: max relative error {check.max_error:.3e} over {check.parameters} parameters")
    return EXIT_OK if check.passed() else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with 'experiment' and/or 'synthetic' sections")
    common.add_argument("--seed", type=int, help="override the seed of both sections")
    common.add_argument("--out", help="output directory for artifacts")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="simam2", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train one configuration")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", parents=[common], help="train a grid of configurations over seeds")
    p.add_argument("grid", help="'classification' or a JSON list of {label, overrides}")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds, starting at 0")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("diag", parents=[common], help="run an analysis probe")
    p.add_argument("probe", choices=PROBES)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--targets", default="-1,0,1,2", help="comma-separated soft-HGR targets")
    p.add_argument("--seeds", type=int, default=3)
    p.set_defaults(fn=cmd_diag)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of the full network")
    p.set_defaults(fn=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        where = f" (batch dump: {exc.dump_path})" if exc.dump_path else ""
        print(f"numerical abort: {exc}{where}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NonFiniteError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
