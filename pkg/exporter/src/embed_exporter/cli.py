"""CLI: export design-source embeddings, verify exported files.

    embed-export export --jobfile designs.json --model Qwen2.5-Coder-1.5B \
        --max-len 4096 --out embeddings.bin
    embed-export verify --path embeddings.bin

The job file maps design_id -> list of source file paths.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .backends import DEFAULT_MODEL
from .export import ExportError, ExportJob, export_embeddings
from .verify import verify_export


def cmd_export(args) -> int:
    jobfile = Path(args.jobfile)
    if not jobfile.exists():
        print(f"job file not found: {jobfile}", file=sys.stderr)
        return 1
    raw = json.loads(jobfile.read_text())
    sources = {
        design_id: [Path(p) for p in paths] for design_id, paths in raw.items()
    }
    job = ExportJob(
        sources=sources,
        out_path=Path(args.out),
        model_id=args.model,
        max_tokens=args.max_len,
    )
    summary = export_embeddings(job)
    print(
        f"exported {summary['designs']} designs at dim {summary['dim']} "
        f"({summary['model']}) -> {summary['out']}"
    )
    return 0


def cmd_verify(args) -> int:
    report = verify_export(Path(args.path))
    print(f"OK, {report['rows']} rows, dim {report['dim']} ({report['source_model']})")
    for design_id, norm in sorted(report["norms"].items()):
        print(f"  {design_id}: |v| = {norm:.4f}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="embed-export", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_exp = sub.add_parser("export", help="run the frozen model over design sources")
    p_exp.add_argument("--jobfile", required=True,
                       help="JSON mapping design_id -> list of source paths")
    p_exp.add_argument("--model", default=DEFAULT_MODEL)
    p_exp.add_argument("--max-len", dest="max_len", type=int, default=4096)
    p_exp.add_argument("--out", required=True)
    p_exp.set_defaults(func=cmd_export)

    p_ver = sub.add_parser("verify", help="check an exported embedding file")
    p_ver.add_argument("--path", required=True)
    p_ver.set_defaults(func=cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ExportError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
