"""Command-line interface.

Subcommands: train, eval, explain, interact, faithfulness, serve,
export-prototypes. Dataset directories contain dataset.jsonl +
embeddings.bin (+ offsets.idx for word-level); --config points at a flat
key=value file whose values individual flags override. All runs are
deterministic given --seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import faithfulness as faith_mod
from . import model as model_mod
from .config import build_train_config, parse_flat_config, sim_kind_from
from .errors import ProtoclfError
from .interaction import InteractionCommand, InteractionEngine
from .model import explain as explain_op
from .store import (
    Dataset,
    HttpProvider,
    Split,
    StoredProvider,
    ToyEncoder,
    load_dataset_dir,
)
from .trainer import Trainer, build_model, train


def _add_common(parser: argparse.ArgumentParser, data_required: bool = True):
    parser.add_argument("--data", required=data_required, help="dataset directory")
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--seed", type=int, help="RNG seed")
    parser.add_argument("--mode", choices=["sentence", "word"], help="embedding level")
    parser.add_argument("--sim", choices=["cosine", "l2"], help="similarity function")
    parser.add_argument("--selector", choices=["sliding", "attention", "brute"])
    parser.add_argument("--k", type=int, help="prototype length in tokens")
    parser.add_argument("--dilation", type=int, help="sliding-window dilation")
    parser.add_argument("--k-lim", dest="k_lim", type=int, help="attention word cap")
    parser.add_argument("--m", type=int, help="number of prototypes")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--lr", dest="lr_base", type=float)
    parser.add_argument("--val-frac", dest="val_frac", type=float)
    parser.add_argument("--test-frac", dest="test_frac", type=float)
    parser.add_argument("--max-tokens", dest="max_tokens", type=int)
    parser.add_argument(
        "--provider",
        help="novel-text embedding provider: toy[:seed] or http:<url> (default: stored only)",
    )


def _collect_values(args) -> dict:
    values = {}
    if args.config:
        values.update(parse_flat_config(args.config))
    for key in (
        "seed", "mode", "sim", "selector", "k", "dilation", "k_lim", "m",
        "epochs", "batch_size", "lr_base", "val_frac", "test_frac", "max_tokens",
    ):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return values


def _load_data(args, values: dict) -> Dataset:
    dataset = load_dataset_dir(args.data, max_tokens=int(values.get("max_tokens", 40)))
    mode = values.get("mode")
    if mode and mode != dataset.mode:
        raise ProtoclfError(
            f"--mode {mode} but the dataset directory is {dataset.mode}-level "
            f"(offsets.idx {'present' if dataset.mode == 'word' else 'absent'})"
        )
    val_frac = float(values.get("val_frac", 0.15))
    test_frac = float(values.get("test_frac", 0.15))
    seed = int(values.get("seed", 0))
    return dataset.with_split(Split.random(len(dataset), val_frac, test_frac, seed))


def _provider_for(args, dataset: Dataset):
    spec = getattr(args, "provider", None)
    if spec is None:
        return StoredProvider(dataset)
    if spec == "toy" or spec.startswith("toy:"):
        seed = int(spec.split(":", 1)[1]) if ":" in spec else 0
        return ToyEncoder(dim=dataset.dim, seed=seed)
    if spec.startswith("http:") or spec.startswith("https:"):
        return HttpProvider(spec, dim=dataset.dim)
    raise ProtoclfError(f"unknown provider spec {spec!r}")


def _print_explanation(result):
    print(f"predicted class: {result.predicted_class}")
    print("probs: " + " ".join(f"{p:.4f}" for p in result.probs))
    print("rank  proto  importance = sim·weight  text")
    for rank, item in enumerate(result.items, 1):
        text = item.display_text or "(latent prototype)"
        print(f"{rank:>4}  P{item.prototype_id:<4} {item.rendered():<24} {text}")


def cmd_train(args) -> int:
    values = _collect_values(args)
    cfg = build_train_config({k: v for k, v in values.items() if k not in ("val_frac", "test_frac", "max_tokens", "mode")})
    dataset = _load_data(args, values)
    model = build_model(cfg, dataset, sim_kind=sim_kind_from(values))
    model, report = train(dataset, model, cfg)
    out = Path(args.out)
    model_mod.save_checkpoint(model, out)
    if args.report:
        Path(args.report).write_text(report.to_json())
    print(f"checkpoint written to {out}")
    print(f"best val balanced accuracy: {report.best_val_acc:.4f} (epoch {report.best_epoch})")
    if report.projection:
        print(
            "projection at epoch "
            f"{report.projection['at_epoch']}: val "
            f"{report.projection['pre_val_acc']:.4f} -> {report.projection['post_val_acc']:.4f}"
        )
    if report.final_test_acc is not None:
        print(f"final test balanced accuracy: {report.final_test_acc:.4f}")
    return 0


def cmd_eval(args) -> int:
    values = _collect_values(args)
    dataset = _load_data(args, values)
    model = model_mod.load_checkpoint(args.checkpoint)
    trainer = Trainer(model, dataset, build_train_config({}))
    split = args.split
    indices = getattr(dataset.split, split)
    if len(indices) == 0:
        print(f"split {split!r} is empty", file=sys.stderr)
        return 2
    acc = trainer.evaluate(indices)
    print(f"balanced accuracy ({split}, n={len(indices)}): {acc:.4f}")
    return 0


def cmd_explain(args) -> int:
    values = _collect_values(args)
    dataset = _load_data(args, values)
    model = model_mod.load_checkpoint(args.checkpoint)
    if args.id:
        example = dataset.by_id(args.id)
    else:
        provider = _provider_for(args, dataset)
        tokens = args.text.split()
        sentence_vec, token_vecs = provider.encode(tokens)
        from .store import EmbeddedExample

        example = EmbeddedExample(
            id="(query)",
            label=0,
            text=args.text,
            tokens=tokens,
            sentence_vec=sentence_vec if model.mode == "sentence" else None,
            token_vecs=token_vecs if model.mode == "word" else None,
        )
    result = explain_op(example, model, top_k=args.top)
    _print_explanation(result)
    return 0


def cmd_interact(args) -> int:
    values = _collect_values(args)
    dataset = _load_data(args, values)
    model = model_mod.load_checkpoint(args.checkpoint)
    cfg = build_train_config({k: v for k, v in values.items() if k not in ("val_frac", "test_frac", "max_tokens", "mode")})
    provider = _provider_for(args, dataset)
    engine = InteractionEngine(model, dataset, cfg, provider=provider)
    command = InteractionCommand(
        op=args.op,
        target=args.proto,
        example_id=args.example_id,
        text=args.text,
        certainty=args.certainty,
        prune_threshold=args.prune_threshold,
        new_class=getattr(args, "cls", None),
    )
    command.validate()
    outcome = engine.apply(command)
    print(f"accepted: {outcome.accepted}")
    print(f"message:  {outcome.message}")
    before, after = outcome.before, outcome.after
    if before["val_acc"] is not None:
        print(f"val balanced accuracy: {before['val_acc']:.4f} -> {after['val_acc']:.4f}")
    if args.op in ("add", "replace", "soft_replace") and outcome.accepted:
        target = model.m - 1 if (args.op != "soft_replace" or args.certainty == 1.0) else args.proto
        display = model.protos.display[target]
        if display is not None:
            print(f"prototype text: {display.text}")
    out = Path(args.out) if args.out else Path(args.checkpoint)
    model_mod.save_checkpoint(model, out)
    print(f"checkpoint written to {out}")
    return 0


def cmd_faithfulness(args) -> int:
    values = _collect_values(args)
    dataset = _load_data(args, values)
    model = model_mod.load_checkpoint(args.checkpoint)
    provider = _provider_for(args, dataset)
    rationales = faith_mod.load_rationales(args.rationales)
    faith_mod.validate_rationales(rationales, dataset)
    split = getattr(dataset.split, args.split)
    indices = split if len(split) else np.arange(len(dataset.examples))
    report = faith_mod.evaluate(model, dataset, rationales, provider, indices=indices)
    print(f"comprehensiveness: {report.comprehensiveness:.4f}")
    print(f"sufficiency:       {report.sufficiency:.4f}")
    print(f"acc before/after prototype removal: {report.acc_before:.4f} / {report.acc_after:.4f}")
    if report.skipped_comp or report.skipped_suff:
        print(f"skipped (degenerate perturbations): comp={report.skipped_comp} suff={report.skipped_suff}")
    if args.json:
        Path(args.json).write_text(json.dumps(report.as_dict(), indent=2))
    return 0


def cmd_serve(args) -> int:
    from .server import Session, serve

    values = _collect_values(args)
    if args.demo:
        from .synthetic import two_cluster_dataset

        seed = int(values.get("seed", 0))
        dataset = two_cluster_dataset(seed=seed)
        values.setdefault("m", 4)
        values.setdefault("epochs", 100)
        cfg = build_train_config({k: v for k, v in values.items() if k not in ("val_frac", "test_frac", "max_tokens", "mode")})
        provider = ToyEncoder(dim=dataset.dim, seed=seed)
    else:
        if not args.data:
            print("serve needs --data or --demo", file=sys.stderr)
            return 2
        dataset = _load_data(args, values)
        cfg = build_train_config({k: v for k, v in values.items() if k not in ("val_frac", "test_frac", "max_tokens", "mode")})
        provider = _provider_for(args, dataset)
    if args.checkpoint:
        model = model_mod.load_checkpoint(args.checkpoint)
    else:
        model = build_model(cfg, dataset, sim_kind=sim_kind_from(values))
        if args.demo:
            train(dataset, model, cfg)
    session = Session(dataset, cfg, model, provider)
    print(f"serving on http://127.0.0.1:{args.port} (mode={model.mode}, m={model.m})")
    serve(session, port=args.port)
    return 0


def cmd_export_prototypes(args) -> int:
    model = model_mod.load_checkpoint(args.checkpoint)
    rows = []
    for j in range(model.m):
        display = model.protos.display[j]
        rows.append(
            {
                "id": j,
                "class": int(model.protos.class_of[j]),
                "head_weight": float(model.head.weights[model.protos.class_of[j], j]),
                "frozen": bool(model.protos.frozen[j]),
                "text": display.text if display else None,
                "source_id": display.source_id if display else None,
            }
        )
    payload = json.dumps({"m": model.m, "prototypes": rows}, indent=2, ensure_ascii=False)
    if args.out:
        Path(args.out).write_text(payload)
        print(f"wrote {args.out}")
    else:
        print(payload)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="protoclf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    _add_common(p)
    p.add_argument("--out", default="model.ckpt", help="checkpoint output path")
    p.add_argument("--report", help="write the JSON train report here")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="balanced accuracy of a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("explain", help="explain one prediction")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--id", help="stored example id")
    p.add_argument("--text", help="raw text query (needs --provider)")
    p.add_argument("--top", type=int, default=4)
    p.set_defaults(fn=cmd_explain)

    p = sub.add_parser("interact", help="apply one interaction command")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--op", required=True, choices=[
        "remove", "add", "replace", "reinit", "finetune", "prune", "soft_replace"
    ])
    p.add_argument("--proto", type=int, help="target prototype id")
    p.add_argument("--example-id", dest="example_id")
    p.add_argument("--text")
    p.add_argument("--certainty", type=float)
    p.add_argument("--prune-threshold", dest="prune_threshold", type=float, default=0.8)
    p.add_argument("--class", dest="cls", type=int, help="class for added prototypes")
    p.add_argument("--out", help="write the edited checkpoint here (default: in place)")
    p.set_defaults(fn=cmd_interact)

    p = sub.add_parser("faithfulness", help="comprehensiveness/sufficiency + prototype removal")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--rationales", required=True, help="rationales.jsonl path")
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--json", help="write the full report here")
    p.set_defaults(fn=cmd_faithfulness)

    p = sub.add_parser("serve", help="run the HTTP gateway")
    _add_common(p, data_required=False)
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--checkpoint", help="start from this checkpoint")
    p.add_argument("--demo", action="store_true",
                   help="train and serve the built-in synthetic task")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("export-prototypes", help="dump prototypes as JSON")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_export_prototypes)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ProtoclfError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error [FileNotFound]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
