"""Command-line entry point.

Exit status: 0 success, 1 configuration / parse / shape / domain error,
2 numeric divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import harness
from .config import ConfigError, ExperimentConfig, load_config
from .core import DomainError, NumericOverflowError, PhysAttnError, RngHandle, ShapeError, energy
from .metrics import CSV_COLUMNS, evaluate, report_row, rows_to_csv
from .plots import bar_chart, line_plot, normalize
from .priors import run_physics_operator
from .serialization import ContainerParseError, read_features, read_masks, write_atomic, write_features

EXIT_OK, EXIT_INPUT, EXIT_DIVERGED = 0, 1, 2
RUN_COLUMNS = CSV_COLUMNS + ("status",)


def workers() -> int:
    raw = os.environ.get("PHYSATTN_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ConfigError(f"PHYSATTN_THREADS must be an integer, got {raw!r}") from None
    return min(4, os.cpu_count() or 1)


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    return Path(args.out if args.out is not None else cfg.out)


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {args.seed}")
        cfg = cfg.with_seed(args.seed)
    return cfg


def _run_id(rec: harness.RunRecord) -> str:
    return f"{rec.prior}-a{rec.alpha:g}-s{rec.scenario_seed}"


def records_csv(records) -> str:
    rows = []
    for rec in records:
        row = report_row(rec.final, run_id=_run_id(rec), alpha=rec.alpha, prior=rec.prior, seed=rec.scenario_seed)
        row["status"] = rec.status
        rows.append(row)
    return rows_to_csv(rows, RUN_COLUMNS)


def _emit_summary(summary, fmt: str, key_name: str) -> None:
    if fmt == "json":
        print(json.dumps(summary, indent=2, sort_keys=True))
        return
    cols = [key_name, "runs", "diverged", "R", "D", "S", "background_change"]
    rows = [{key_name: k, **v} for k, v in summary.items()]
    sys.stdout.write(rows_to_csv(rows, cols))


# -- commands ---------------------------------------------------------------

def cmd_operate(args) -> int:
    cfg = _load(args)
    features, fmt = read_features(args.features)
    masks = read_masks(args.masks)
    seed = cfg.seeds[0] if cfg.seeds else 0
    before = energy(features)
    result = run_physics_operator(features, masks, cfg.prior, cfg.params, cfg.schedule, RngHandle(seed, "operate"))
    out_dir = _out_dir(args, cfg)
    out_path = out_dir / ("phys.bin" if fmt == "binary" else "phys.json")
    write_features(out_path, result, fmt)
    print(f"energy_before={before:.12g} energy_after={energy(result):.12g}")
    print(f"wrote {out_path}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _load(args)
    records = harness.ablation_priors(
        cfg.scenario,
        cfg.params,
        cfg.schedule,
        cfg.L,
        seeds=cfg.seeds,
        base_spec=cfg.prior,
        metrics=cfg.metrics,
        denoiser=cfg.denoiser,
        workers=workers(),
    )
    summary = harness.summarize(records, key=lambda r: r.prior)
    out_dir = _out_dir(args, cfg)
    write_atomic(out_dir / "ablation.csv", records_csv(records))
    priors = list(summary)
    svg = bar_chart(
        f"Prior ablation (alpha={cfg.alpha:g}, {len(cfg.seeds)} seeds)",
        priors,
        {"mean R_t": [summary[p].get("R") for p in priors], "mean S_t": [summary[p].get("S") for p in priors]},
    )
    write_atomic(out_dir / "ablation.svg", svg)
    write_atomic(out_dir / "ablation.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _emit_summary(summary, args.format, "prior")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if not cfg.alphas:
        raise ConfigError("alpha grid is empty")
    records = harness.sweep_alpha(
        cfg.scenario,
        cfg.alphas,
        cfg.prior,
        cfg.schedule,
        cfg.L,
        constants=cfg.constants,
        seeds=cfg.seeds,
        metrics=cfg.metrics,
        denoiser=cfg.denoiser,
        workers=workers(),
    )
    summary = harness.summarize(records, key=lambda r: f"{r.alpha:g}")
    alphas = [float(a) for a in cfg.alphas]
    keys = list(dict.fromkeys(f"{a:g}" for a in alphas))
    xs = [float(k) for k in keys]
    series = {name: normalize([summary[k].get(name) for k in keys]) for name in ("R", "D", "S")}
    svg = line_plot(
        f"alpha sweep ({cfg.prior.kind.value}, normalized)",
        xs,
        {"R_t": series["R"], "D_t": series["D"], "S_t": series["S"]},
    )
    out_dir = _out_dir(args, cfg)
    write_atomic(out_dir / "sweep.csv", records_csv(records))
    write_atomic(out_dir / "sweep.svg", svg)
    write_atomic(out_dir / "sweep.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _emit_summary(summary, args.format, "alpha")
    return EXIT_OK


def cmd_metrics(args) -> int:
    cfg = _load(args)
    features, _ = read_features(args.features)
    report = evaluate(features, cfg.metrics, cosine=args.cosine)
    if args.format == "csv":
        row = report_row(report, run_id=Path(args.features).stem, alpha=cfg.alpha, prior="", seed="")
        sys.stdout.write(rows_to_csv([row]))
    else:
        print(json.dumps(report.to_dict(), sort_keys=True))
    return EXIT_OK


# -- parser -----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which is reserved for divergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--out", help="output directory (overrides config 'out')")
    common.add_argument("--seed", type=int, help="single seed, overrides config 'seeds'")
    common.add_argument("--format", choices=("json", "csv"), default="json", help="stdout format")

    parser = _Parser(prog="physattn", description="Physics-informed temporal priors: operator, metrics, ablations.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("operate", parents=[common], help="run the physics operator on a feature file")
    p.add_argument("features")
    p.add_argument("masks")
    p.set_defaults(func=cmd_operate)

    p = sub.add_parser("ablate", parents=[common], help="compare all temporal priors")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", parents=[common], help="sweep the alpha controller")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("metrics", parents=[common], help="score a feature sequence")
    p.add_argument("features")
    p.add_argument("--no-cosine", dest="cosine", action="store_false", help="skip adjacent-frame cosine")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericOverflowError as exc:
        print(f"error: divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ShapeError as exc:
        dim = f" [{exc.dimension}]" if exc.dimension else ""
        print(f"error: shape mismatch{dim}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConfigError, ContainerParseError, DomainError, PhysAttnError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc.strerror}: {exc.filename}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
