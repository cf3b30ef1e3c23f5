"""Command-line entry point.

Subcommands: train, eval, ablate, gradcheck, export-attn, layer-stats,
count-params. All take ``--config`` (JSON), repeatable ``--set
section.field=value`` overrides and ``--seed``. Exit codes: 0 success,
2 configuration problem, 3 numerical failure during training.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, apply_overrides, load_config
from .model import DcnModel, full_model_grad_check, load_checkpoint
from .export import export_attention
from .train import (NumericalError, evaluate, layer_attention_stats,
                    make_splits, stats_to_csv, train_loop)
from .train.data import gen_dataset


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.set:
        cfg = apply_overrides(cfg, args.set)
    if args.seed is not None:
        cfg.train.seed = args.seed
    cfg.validate()
    return cfg


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    out_dir = Path(args.out)
    train_ds, test_ds = make_splits(cfg.model, cfg.data, cfg.train.seed)
    model = DcnModel(cfg.model, seed=cfg.train.seed)
    result = train_loop(model, train_ds, cfg, eval_ds=test_ds, out_dir=out_dir)
    print(f"best accuracy {result.best_accuracy:.4f} at epoch {result.best_epoch}")
    print(f"metrics: {result.metrics_path}")
    print(f"checkpoint: {result.checkpoint_dir}")
    return 0


def cmd_eval(args) -> int:
    model, run_cfg, meta = load_checkpoint(args.checkpoint)
    _, test_ds = make_splits(run_cfg.model, run_cfg.data, run_cfg.train.seed)
    result = evaluate(model, test_ds)
    print(f"accuracy {result.accuracy:.4f} on {len(test_ds)} samples")
    for answer, (count, correct) in result.per_class.items():
        print(f"  class {answer}: {correct}/{count} = {correct / count:.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "eval.csv", "w") as fh:
            fh.write("class,count,correct,accuracy\n")
            for answer, (count, correct) in result.per_class.items():
                fh.write(f"{answer},{count},{correct},{correct / count!r}\n")
    return 0


ABLATION_AXES = [
    ("attention_direction", "direction",
     [("I<-Q", "question_guided"), ("I->Q", "image_guided"), ("I<->Q", "both")]),
    ("memory_size", "memory_slots", [("1", 1), ("3", 3), ("5", 5)]),
    ("parallel_heads", "heads", [("2", 2), ("4", 4), ("8", 8)]),
    ("stacked_layers", "layers", [("1", 1), ("2", 2), ("3", 3), ("4", 4)]),
    ("prediction_attention", "summary",
     [("attention", "attention"), ("average", "average")]),
    ("extraction_attention", "extraction",
     [("layer_attention", "layer_attention"), ("last_layer", "last_layer")]),
]


def cmd_ablate(args) -> int:
    cfg = _resolve_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_ds, test_ds = make_splits(cfg.model, cfg.data, cfg.train.seed)

    cache: dict[tuple, float | None] = {}

    def run_variant(field: str, value) -> float | None:
        variant = RunConfig.from_dict(cfg.to_dict())
        setattr(variant.model, field, value)
        key = tuple(sorted(variant.model.__dict__.items()))
        if key in cache:
            return cache[key]
        try:
            variant.validate()
            model = DcnModel(variant.model, seed=variant.train.seed)
            result = train_loop(model, train_ds, variant, eval_ds=test_ds)
            acc = result.best_accuracy
        except (ConfigError, NumericalError, ValueError) as exc:
            print(f"variant {field}={value} failed: {exc}", file=sys.stderr)
            acc = None
        cache[key] = acc
        return acc

    rows = []
    for category, field, options in ABLATION_AXES:
        baseline_value = getattr(cfg.model, field)
        for detail, value in options:
            acc = run_variant(field, value)
            star = "*" if value == baseline_value else ""
            rows.append((category, detail + star,
                         "" if acc is None else repr(acc)))
    csv_path = out_dir / "ablation.csv"
    with open(csv_path, "w") as fh:
        fh.write("category,detail,accuracy\n")
        for category, detail, acc in rows:
            fh.write(f"{category},{detail},{acc}\n")
    print(f"wrote {len(rows)} rows to {csv_path}")
    return 0


def cmd_gradcheck(args) -> int:
    cfg = _resolve_config(args)
    report = full_model_grad_check(head=cfg.model.head, seed=cfg.train.seed)
    for name, err in report.per_param:
        print(f"{name}: {err:.3e}")
    print(f"max relative error {report.max_rel_error:.3e} "
          f"({'PASS' if report.passed else 'FAIL'} at tol {report.tol})")
    return 0 if report.passed else 1


def _load_sample_spec(path) -> dict:
    try:
        spec = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read sample file {path}: {exc}") from exc
    if not isinstance(spec, dict):
        raise ConfigError("sample file must hold a JSON object")
    return spec


def cmd_export_attn(args) -> int:
    model, run_cfg, _ = load_checkpoint(args.checkpoint)
    spec = _load_sample_spec(args.sample) if args.sample else {}
    split_name = spec.get("split", "test")
    if split_name not in ("train", "test"):
        raise ConfigError(f"sample split must be 'train' or 'test', got {split_name!r}")
    index = int(spec.get("index", 0))
    if index < 0:
        raise ConfigError(f"sample index must be >= 0, got {index}")
    m = run_cfg.model
    ds = gen_dataset(index + 1, m.t, m.n_objects, m.n_attributes, m.n_fillers,
                     m.c, run_cfg.data.noise_sigma, run_cfg.train.seed,
                     split=0 if split_name == "train" else 1)
    sample = ds.samples[index]
    if "tokens" in spec:
        sample.tokens = [int(t) for t in spec["tokens"]]
    elif "tokens_file" in spec:
        from .encoder import read_token_sequences
        sequences = read_token_sequences(spec["tokens_file"])
        if not sequences:
            raise ConfigError(f"{spec['tokens_file']} holds no token sequence")
        sample.tokens = sequences[0]
    result = model.forward(sample)
    written = export_attention(result, args.out)
    print(f"wrote {len(written)} files to {args.out}")
    return 0


def cmd_layer_stats(args) -> int:
    model, run_cfg, _ = load_checkpoint(args.checkpoint)
    _, test_ds = make_splits(run_cfg.model, run_cfg.data, run_cfg.train.seed)
    rows = layer_attention_stats(model, test_ds)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "layer_stats.csv"
    stats_to_csv(rows, csv_path)
    print(f"wrote {len(rows)} groups to {csv_path}")
    return 0


def cmd_count_params(args) -> int:
    cfg = _resolve_config(args)
    model = DcnModel(cfg.model, seed=cfg.train.seed)
    total, breakdown = model.count_params()
    for name, count in breakdown.items():
        print(f"{name}: {count}")
    print(f"total learnable: {total}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dcn", description="dense co-attention network toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=False):
        p.add_argument("--config", help="JSON config path (defaults apply if omitted)")
        p.add_argument("--set", action="append", default=[],
                       metavar="SECTION.FIELD=VALUE", help="config override")
        p.add_argument("--seed", type=int, default=None, help="training seed override")
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="train on the synthetic task")
    common(p, needs_out=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on its test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="run the one-axis-at-a-time ablation grid")
    common(p, needs_out=True)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    common(p)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("export-attn", help="dump attention maps for one sample")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sample", default=None,
                   help="JSON sample spec: {split, index, tokens|tokens_file}")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_export_attn)

    p = sub.add_parser("layer-stats", help="level-attention statistics per question type")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_layer_stats)

    p = sub.add_parser("count-params", help="learnable parameter counts")
    common(p)
    p.set_defaults(fn=cmd_count_params)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
