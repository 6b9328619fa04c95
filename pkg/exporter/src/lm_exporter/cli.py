"""Exporter CLI: `python -m lm_exporter export|serve`."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .backends import make_backend
from .export import ExportJob, export


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="lm_exporter", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="embed a corpus into dataset files")
    p.add_argument("--backend", required=True, help="hash:<dim>[:seed] | sbert:<model> | hf:<model>")
    p.add_argument("--input", required=True, help="corpus .jsonl or .csv with text+label")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--mode", choices=["sentence", "word"], default="sentence")
    p.add_argument("--max-tokens", type=int, default=40)
    p.add_argument("--pooling", choices=["mean", "last"], default="mean",
                   help="sentence pooling for hf backends")
    p.add_argument("--text-field", default="text")
    p.add_argument("--label-field", default="label")
    p.add_argument("--id-field", default="id")

    s = sub.add_parser("serve", help="run the /embed service")
    s.add_argument("--backend", required=True)
    s.add_argument("--port", type=int, default=9009)
    s.add_argument("--pooling", choices=["mean", "last"], default="mean")

    args = parser.parse_args(argv)
    backend = make_backend(args.backend, pooling=args.pooling)

    if args.command == "export":
        job = ExportJob(
            backend=backend,
            input_path=Path(args.input),
            out_dir=Path(args.out),
            mode=args.mode,
            max_tokens=args.max_tokens,
            text_field=args.text_field,
            label_field=args.label_field,
            id_field=args.id_field,
        )
        result = export(job)
        print(
            f"exported {result.examples} examples ({result.rows} rows, dim {result.dim}) "
            f"to {args.out}; dropped {result.dropped_long} over {args.max_tokens} tokens"
        )
        return 0

    from .service import embed_service

    print(f"embed service for {backend.name} (dim {backend.dim}) on port {args.port}")
    embed_service(backend, port=args.port)
    return 0


if __name__ == "__main__":
    sys.exit(main())
