"""Command-line entry point.

Subcommands cover the whole workflow::

    genli gen-data --out data/              # synthetic planted-interest files
    genli train    --data data/ --out run/  # train + checkpoint + report CSV
    genli eval     --data data/ --checkpoint run/checkpoint.bin --out run/
    genli bench    --out bench/             # scoring / scaling / latency CSVs
    genli plot     --out bench/             # charts from the CSVs

Every configuration key is exposed both as a ``key = value`` line in the
``--config`` file and as a ``--key-name`` flag; flags win over the file,
which wins over defaults.  Each command echoes the fully resolved
configuration into its output directory, and all outputs are deterministic
for a fixed seed (timing measurements excepted, by nature).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
abort during training.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import benchmark, nn, training
from .baselines import SCORING_KERNELS
from .config import (Config, build_config, config_fields, format_value,
                     read_config_file, synthetic_spec, write_effective_config)
from .data import generate_synthetic, load_dataset
from .errors import DataError, GenliError
from .model import build_model

log = logging.getLogger(__name__)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("configuration overrides")
    defaults = Config()
    for f in config_fields():
        group.add_argument(
            f"--{f.name.replace('_', '-')}",
            dest=f"cfg_{f.name}", metavar="V", default=None,
            help=f"{f.metadata['help']} "
                 f"[default: {format_value(getattr(defaults, f.name))}]",
        )


def _resolve_config(args: argparse.Namespace) -> Config:
    file_values = read_config_file(args.config) if args.config else {}
    overrides = {
        f.name: getattr(args, f"cfg_{f.name}")
        for f in config_fields()
        if getattr(args, f"cfg_{f.name}") is not None
    }
    return build_config(file_values, overrides)


def _load_pair(data_dir: Path, seq_len: int):
    train_path = data_dir / "train.tsv"
    eval_path = data_dir / "eval.tsv"
    for path in (train_path, eval_path):
        if not path.exists():
            raise DataError(f"{path} not found; run gen-data first or point "
                            f"--data at a directory with train.tsv/eval.tsv")
    return load_dataset(train_path, seq_len), load_dataset(eval_path, seq_len)


def cmd_gen_data(args: argparse.Namespace) -> None:
    cfg = _resolve_config(args)
    out = Path(args.out)
    counts = generate_synthetic(synthetic_spec(cfg), out)
    write_effective_config(cfg, out)
    print(f"wrote {out / 'train.tsv'} ({counts['train']} impressions)")
    print(f"wrote {out / 'eval.tsv'} ({counts['eval']} impressions)")
    clicks = counts["clicks_in"] + counts["clicks_out"]
    shows = counts["shows_in"] + counts["shows_out"]
    print(f"overall click rate {clicks / shows:.3f} "
          f"(in-cluster {counts['clicks_in']}/{counts['shows_in']}, "
          f"out {counts['clicks_out']}/{counts['shows_out']})")


def cmd_train(args: argparse.Namespace) -> None:
    cfg = _resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_ds, eval_ds = _load_pair(Path(args.data), cfg.seq_len)
    item_hi = max(train_ds.max_ids()[0], eval_ds.max_ids()[0])
    cat_hi = max(train_ds.max_ids()[1], eval_ds.max_ids()[1])
    model = build_model(cfg, item_hi + 1, cat_hi + 1)
    log.info("%s model, %d parameters, %d train / %d eval samples",
             cfg.model, model.parameter_count(), len(train_ds), len(eval_ds))
    write_effective_config(cfg, out)
    report = training.train(model, train_ds, eval_ds, cfg, out_dir=out,
                            resume_from=args.resume)
    print(f"wrote {out / 'checkpoint.bin'} and {out / 'train_report.csv'}")
    if report.epochs:
        last = report.epochs[-1]
        print(f"final epoch {last.epoch}: loss {last.loss_total:.4f}, "
              f"val auc {last.val_auc:.4f} (best {report.best_auc:.4f})")


def cmd_eval(args: argparse.Namespace) -> None:
    cfg = _resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    arrays = nn.load_checkpoint(args.checkpoint)
    for needed in ("embedding/item", "embedding/category"):
        if needed not in arrays:
            raise DataError(f"{args.checkpoint}: missing {needed!r}; "
                            f"not a model checkpoint?")
    model = build_model(cfg, arrays["embedding/item"].shape[0],
                        arrays["embedding/category"].shape[0])
    model.store.load_state(arrays)
    eval_path = Path(args.data) / "eval.tsv"
    if not eval_path.exists():
        raise DataError(f"{eval_path} not found")
    ds = load_dataset(eval_path, cfg.seq_len)
    value, timings, count = benchmark.eval_model(model, ds)
    write_effective_config(cfg, out)
    report = out / "eval_report.txt"
    report.write_text(f"samples = {count}\nauc = {value:.6f}\n")
    total = sum(timings.values()) or 1.0
    breakdown = ", ".join(f"{stage} {secs * 1e3:.0f}ms ({secs / total:.0%})"
                          for stage, secs in sorted(timings.items()))
    log.info("forward stage times: %s", breakdown)
    print(f"auc {value:.6f} over {count} samples; wrote {report}")


def cmd_bench(args: argparse.Namespace) -> None:
    cfg = _resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_effective_config(cfg, out)
    length = cfg.bench_lengths[0]

    scoring = benchmark.bench_scoring(
        SCORING_KERNELS, length, cfg.bench_head_dims, cfg.hash_bits,
        cfg.hash_rounds, cfg.n_buckets, cfg.bench_reps, cfg.seed,
    )
    (out / "bench_scoring.csv").write_text(benchmark.scoring_csv(scoring))
    (out / "bench_stats.csv").write_text(benchmark.stats_csv(scoring))

    scaling = benchmark.bench_retrieval_scaling(
        cfg.bench_lengths, cfg.n_buckets, cfg.top_k, cfg.bench_reps, cfg.seed,
    )
    (out / "bench_scaling.csv").write_text(benchmark.scaling_csv(scaling))

    model = build_model(cfg, cfg.n_items + 1, cfg.n_categories + 1)
    latency = benchmark.bench_latency_compare(
        model, length, cfg.bench_users, cfg.bench_batch, cfg.bench_reps,
        cfg.seed,
    )
    (out / "bench_latency.csv").write_text(benchmark.latency_csv(latency))

    genli_ms = latency.median_ms("genli")
    twin_ms = latency.median_ms("twin")
    summary = out / "bench_summary.txt"
    summary.write_text(
        f"retrieval scaling: slope {scaling.slope * 1e6:.1f} ns per behavior, "
        f"linear fit R^2 = {scaling.r2:.5f}\n"
        f"end-to-end batch ({latency.users} users x {latency.candidates} "
        f"candidates, L={latency.length}, {latency.reps} reps): "
        f"generative {genli_ms:.1f} ms vs target-attention {twin_ms:.1f} ms\n"
    )
    print(summary.read_text(), end="")
    print(f"wrote CSVs and summary under {out}")


def cmd_plot(args: argparse.Namespace) -> None:
    written = benchmark.emit_plots(args.out)
    if not written:
        raise DataError(f"no benchmark CSVs found under {args.out}; "
                        f"run bench first")
    for path in written:
        print(f"wrote {path}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="genli",
        description="Generative long-term interest modeling for CTR: "
                    "data generation, training, evaluation, benchmarks.",
    )
    parser.add_argument("--log-level", default="INFO",
                        help="logging level (DEBUG, INFO, WARNING)")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, fn, help_text: str, *, data=False, checkpoint=False,
                resume=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None,
                       help="key = value configuration file")
        p.add_argument("--out", required=True, help="output directory")
        if data:
            p.add_argument("--data", required=True,
                           help="directory holding train.tsv / eval.tsv")
        if checkpoint:
            p.add_argument("--checkpoint", required=True,
                           help="model checkpoint to evaluate")
        if resume:
            p.add_argument("--resume", default=None, metavar="CHECKPOINT",
                           help="resume training from this checkpoint")
        _add_config_flags(p)
        p.set_defaults(fn=fn)
        return p

    command("gen-data", cmd_gen_data, "write synthetic impression files")
    command("train", cmd_train, "train a model and write checkpoint + report",
            data=True, resume=True)
    command("eval", cmd_eval, "AUC of a checkpoint on eval.tsv",
            data=True, checkpoint=True)
    command("bench", cmd_bench, "scoring / scaling / latency measurements")
    command("plot", cmd_plot, "render charts from benchmark CSVs")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper(), logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
    )
    np.seterr(over="warn", invalid="warn")
    try:
        args.fn(args)
    except GenliError as exc:
        log.error("%s", exc)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
