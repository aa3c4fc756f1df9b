"""Command-line entry point: train, eval, ablate, validate-data, synth-gen.

Exit codes: 0 success, 1 usage/config error, 2 runtime error.  Every JSON
artifact carries format_version and the resolved configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .embeddings import load_embeddings
from .graphs import (
    FORMAT_VERSION,
    TARGETS,
    DataError,
    load_dataset,
    split_design_level,
    validate_ranges,
)
from .model import ModelConfig, build_model, load_checkpoint, save_checkpoint
from .synth import SynthConfig, generate
from .training import TrainConfig, evaluate, train

ABLATION_VARIANTS = ("full", "no_diff", "no_code_emb")


class UsageError(Exception):
    """Bad flags or configuration; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {p}")
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as err:
        raise UsageError(f"malformed config file {p}: {err}")
    allowed = {"manifest", "embeddings", "out", "model", "train"}
    unknown = set(obj) - allowed
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    for section, cls in (("model", ModelConfig), ("train", TrainConfig)):
        fields = set(cls.__dataclass_fields__)
        extra = set(obj.get(section, {})) - fields
        if extra:
            raise UsageError(f"unknown {section} config keys: {sorted(extra)}")
    return obj


def _merge(config: dict, args, key: str, arg_name: str | None = None):
    value = getattr(args, arg_name or key, None)
    return value if value is not None else config.get(key)


def _resolve_run(args) -> tuple[dict, ModelConfig, TrainConfig, Path]:
    """File < flags precedence; validates referenced paths exist."""
    config = _load_config_file(getattr(args, "config", None))
    manifest = _merge(config, args, "manifest")
    if manifest is None:
        raise UsageError("a dataset manifest is required (--manifest or config file)")
    manifest = Path(manifest)
    if not manifest.exists():
        raise UsageError(f"manifest not found: {manifest}")
    out = _merge(config, args, "out")
    if out is None:
        raise UsageError("an output directory is required (--out or config file)")

    model_section = dict(config.get("model", {}))
    for key in ("backbone", "num_layers", "hidden_dim", "use_diff", "use_code_emb",
                "dropout", "target"):
        value = getattr(args, key, None)
        if value is not None:
            model_section[key] = value
    train_section = dict(config.get("train", {}))
    for key in ("lr", "batch_size", "max_epochs", "plateau_patience",
                "plateau_factor", "seed", "eval_every"):
        value = getattr(args, key, None)
        if value is not None:
            train_section[key] = value

    embeddings = _merge(config, args, "embeddings")
    run = {
        "manifest": str(manifest),
        "embeddings": str(embeddings) if embeddings else None,
        "out": str(out),
        "model": model_section,
        "train": train_section,
    }
    try:
        train_cfg = TrainConfig(**train_section)
        train_cfg.validate()
        model_cfg = ModelConfig(**model_section)
    except (TypeError, ValueError) as err:
        raise UsageError(str(err))
    return run, model_cfg, train_cfg, manifest


def _resolve_embeddings(run: dict, dataset, model_cfg: ModelConfig):
    if not model_cfg.use_code_emb:
        return None
    path = Path(run["embeddings"]) if run["embeddings"] else dataset.embedding_file
    if path is None:
        raise UsageError("use_code_emb is set but no embedding file is configured")
    if not Path(path).exists():
        raise UsageError(f"embedding file not found: {path}")
    run["embeddings"] = str(path)
    return load_embeddings(path)


def _train_one(dataset, split, table, model_cfg: ModelConfig, train_cfg: TrainConfig):
    if model_cfg.use_code_emb:
        model_cfg.code_dim = table.dim
    model_cfg.validate()
    model = build_model(model_cfg, seed=train_cfg.seed)
    history = train(model, dataset, split, table, train_cfg)
    return model, history


def cmd_train(args) -> int:
    run, model_cfg, train_cfg, manifest = _resolve_run(args)
    dataset = load_dataset(manifest)
    if args.target is None and "target" not in run["model"]:
        model_cfg.target = dataset.target_name
        run["model"]["target"] = dataset.target_name
    table = _resolve_embeddings(run, dataset, model_cfg)
    split = split_design_level(dataset, seed=train_cfg.seed)
    model, history = _train_one(dataset, split, table, model_cfg, train_cfg)

    out_dir = Path(run["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    run["model"] = model.config.to_dict()
    run["train"] = train_cfg.to_dict()
    provenance = {"format_version": FORMAT_VERSION, "config": run}

    save_checkpoint(model, out_dir / "checkpoint.npz")
    _write_json(out_dir / "history.json", {**provenance, "history": history.to_dict()})
    report = evaluate(model, split.subset(dataset, "test"), table)
    _write_json(out_dir / "metrics.json", {**provenance, "split": "test",
                                           "metrics": report.to_dict()})
    print(
        f"trained {model.config.backbone} on {dataset.target_name}: "
        f"best val loss {history.best_val_loss:.6g} (epoch {history.best_epoch}), "
        f"test design MAPE {report.design.mape:.4g}%"
    )
    return 0


def cmd_eval(args) -> int:
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise UsageError(f"checkpoint not found: {ckpt}")
    manifest = Path(args.manifest)
    if not manifest.exists():
        raise UsageError(f"manifest not found: {manifest}")
    model = load_checkpoint(ckpt)
    dataset = load_dataset(manifest)
    table = None
    if model.config.use_code_emb:
        emb = Path(args.embeddings) if args.embeddings else dataset.embedding_file
        if emb is None or not Path(emb).exists():
            raise UsageError(f"embedding file not found: {emb}")
        table = load_embeddings(emb)
    if args.split == "all":
        samples = dataset.samples
    else:
        split = split_design_level(dataset, seed=args.seed)
        samples = split.subset(dataset, args.split)
    report = evaluate(model, samples, table)
    payload = {
        "format_version": FORMAT_VERSION,
        "config": {"checkpoint": str(ckpt), "manifest": str(manifest),
                   "split": args.split, "seed": args.seed,
                   "model": model.config.to_dict()},
        "metrics": report.to_dict(),
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def _variant_config(variant: str, base: ModelConfig) -> ModelConfig:
    cfg = replace(base)
    if variant == "full":
        cfg.use_diff, cfg.use_code_emb = True, True
    elif variant == "no_diff":
        cfg.use_diff, cfg.use_code_emb = False, True
    elif variant == "no_code_emb":
        cfg.use_diff, cfg.use_code_emb = True, False
        cfg.code_dim = None
    else:
        raise UsageError(f"unknown ablation variant {variant!r}")
    return cfg


def _format_ablation_table(rows: list[dict]) -> str:
    heads = ("design", "kernel", "delta")
    header = f"{'variant':<13}" + "".join(
        f"{h + ' ' + m:>16}" for h in heads for m in ("MAPE%", "MAE", "R2")
    )
    lines = [header]
    for row in rows:
        cells = [f"{row['variant']:<13}"]
        for h in heads:
            metrics = row["metrics"].get(h)
            for key in ("mape", "mae", "r2"):
                value = metrics.get(key) if metrics else None
                cells.append(f"{value:>16.4g}" if value is not None else f"{'-':>16}")
        lines.append("".join(cells))
    return "\n".join(lines)


def cmd_ablate(args) -> int:
    run, model_cfg, train_cfg, manifest = _resolve_run(args)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    if not variants:
        raise UsageError("variant list is empty")
    for v in variants:
        if v not in ABLATION_VARIANTS:
            raise UsageError(f"unknown ablation variant {v!r}")
    dataset = load_dataset(manifest)
    if args.target is None and "target" not in run["model"]:
        model_cfg.target = dataset.target_name
    split = split_design_level(dataset, seed=train_cfg.seed)
    out_dir = Path(run["out"])
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for variant in variants:
        cfg = _variant_config(variant, model_cfg)
        table = _resolve_embeddings(dict(run), dataset, cfg)
        model, history = _train_one(dataset, split, table, cfg, train_cfg)
        save_checkpoint(model, out_dir / f"checkpoint_{variant}.npz")
        report = evaluate(model, split.subset(dataset, "test"), table)
        rows.append({
            "variant": variant,
            "model": model.config.to_dict(),
            "best_val_loss": history.best_val_loss,
            "metrics": report.to_dict(),
        })
        print(f"{variant}: test design MAPE {report.design.mape:.4g}%")

    payload = {
        "format_version": FORMAT_VERSION,
        "config": {**run, "variants": variants, "train": train_cfg.to_dict()},
        "results": rows,
    }
    _write_json(out_dir / "ablation.json", payload)
    table_text = _format_ablation_table(rows)
    (out_dir / "ablation.txt").write_text(table_text + "\n")
    print(table_text)
    return 0


def cmd_validate(args) -> int:
    dataset = load_dataset(Path(args.manifest))
    warnings = validate_ranges(dataset, args.target)
    for w in warnings:
        print(w)
    print(f"{len(warnings)} warnings")
    return 0


def cmd_synth_gen(args) -> int:
    if args.preset == "differential":
        cfg = SynthConfig.differential_advantage()
    else:
        cfg = SynthConfig.emulating(args.target)
    if args.n_kernels is not None:
        cfg.n_kernels = args.n_kernels
    if args.designs_per_kernel is not None:
        cfg.designs_per_kernel = args.designs_per_kernel
    if args.seed is not None:
        cfg.seed = args.seed
    if args.noise_std is not None:
        cfg.noise_std = args.noise_std
    if args.embed_dim is not None:
        cfg.embed_dim = args.embed_dim
    cfg.emit_embeddings = not args.no_embeddings
    try:
        cfg.validate()
    except ValueError as err:
        raise UsageError(str(err))
    dataset = generate(cfg, Path(args.out))
    print(
        f"generated {len(dataset.samples)} samples "
        f"({cfg.n_kernels} kernels x {cfg.designs_per_kernel} designs) "
        f"for target {cfg.target} under {args.out}"
    )
    return 0


def _add_run_arguments(p: _Parser) -> None:
    p.add_argument("--config", help="JSON run-config file (flags override it)")
    p.add_argument("--manifest", help="dataset manifest path")
    p.add_argument("--embeddings", help="embedding file path")
    p.add_argument("--out", help="output directory")
    p.add_argument("--backbone", choices=("GCN", "SAGE", "GAT", "PNA"))
    p.add_argument("--num-layers", dest="num_layers", type=int)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--use-diff", dest="use_diff", action=argparse.BooleanOptionalAction,
                   default=None)
    p.add_argument("--use-code-emb", dest="use_code_emb",
                   action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--dropout", type=float)
    p.add_argument("--target", choices=TARGETS)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", dest="plateau_patience", type=int)
    p.add_argument("--factor", dest="plateau_factor", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--eval-every", dest="eval_every", type=int)


def build_parser() -> _Parser:
    parser = _Parser(prog="hlsdelta", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one model and write artifacts")
    _add_run_arguments(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a saved checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--embeddings")
    p_eval.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", help="also write metrics JSON here")
    p_eval.set_defaults(func=cmd_eval)

    p_abl = sub.add_parser("ablate", help="run full / no_diff / no_code_emb variants")
    _add_run_arguments(p_abl)
    p_abl.add_argument("--variants", default=",".join(ABLATION_VARIANTS))
    p_abl.set_defaults(func=cmd_ablate)

    p_val = sub.add_parser("validate-data", help="range-check a dataset")
    p_val.add_argument("--manifest", required=True)
    p_val.add_argument("--target", choices=TARGETS)
    p_val.set_defaults(func=cmd_validate)

    p_gen = sub.add_parser("synth-gen", help="generate a synthetic paired dataset")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--target", choices=TARGETS, default="DSP")
    p_gen.add_argument("--preset", choices=("table", "differential"), default="table")
    p_gen.add_argument("--n-kernels", dest="n_kernels", type=int)
    p_gen.add_argument("--designs-per-kernel", dest="designs_per_kernel", type=int)
    p_gen.add_argument("--seed", type=int)
    p_gen.add_argument("--noise-std", dest="noise_std", type=float)
    p_gen.add_argument("--embed-dim", dest="embed_dim", type=int)
    p_gen.add_argument("--no-embeddings", action="store_true")
    p_gen.set_defaults(func=cmd_synth_gen)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    except (DataError, ValueError, RuntimeError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
