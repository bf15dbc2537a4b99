"""Command-line interface: pipeline subcommands plus the gradient self-check."""

from __future__ import annotations

import argparse
import sys

from . import distill, pipeline
from .corpus_io import FormatError
from .pipeline import (
    EXIT_IO,
    EXIT_OK,
    EXIT_VALIDATION,
    PipelineConfig,
    PipelineError,
    apply_config_values,
    parse_config_file,
)

GRADIENT_TOLERANCE = 1e-4


def _add_io_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file; flags override it")
    parser.add_argument("--corpus", help="tab-separated parallel corpus")
    parser.add_argument("--annotations", help="source-entity JSON-lines file")
    parser.add_argument("--word-emb", help="word-level embeddings JSON-lines file")
    parser.add_argument("--subword-emb", help="subword-level embeddings JSON-lines file")
    parser.add_argument("--out", help="output CoNLL path")
    parser.add_argument("--workdir", help="directory for stage artifacts")
    parser.add_argument("--keep-fraction", type=float, help="fraction of scored sentences to keep")
    parser.add_argument(
        "--no-drop-uncovered",
        action="store_true",
        help="keep sentences whose entity words stayed unaligned",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xlner",
        description="Generate weakly labeled target-language NER data from a "
        "parallel corpus with source annotations and embeddings.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen", help="run the full pipeline in one shot")
    _add_io_options(gen)

    align = commands.add_parser("align", help="compute alignment links")
    _add_io_options(align)
    align.add_argument("--pharaoh", help="also dump src-tgt:score:method link lines")

    for name, help_text in (
        ("project", "project source tags across stored links"),
        ("score", "score projected sentences"),
        ("filter", "select the top fraction and write CoNLL output"),
    ):
        stage = commands.add_parser(name, help=help_text)
        _add_io_options(stage)

    check = commands.add_parser(
        "distill-check", help="verify analytic loss gradients against finite differences"
    )
    check.add_argument("--trials", type=int, default=100)
    check.add_argument("--seed", type=int, default=0)
    return parser


def build_config(args: argparse.Namespace) -> PipelineConfig:
    config = PipelineConfig()
    if args.config:
        config = apply_config_values(config, parse_config_file(args.config))
    flags = {
        "corpus": args.corpus,
        "annotations": args.annotations,
        "word_emb": args.word_emb,
        "subword_emb": args.subword_emb,
        "out": args.out,
        "workdir": args.workdir,
        "keep_fraction": args.keep_fraction,
    }
    updates = {key: value for key, value in flags.items() if value is not None}
    if args.no_drop_uncovered:
        updates["drop_uncovered"] = False
    for key, value in updates.items():
        setattr(config, key, value)
    return config


def _run_distill_check(args: argparse.Namespace) -> int:
    worst = distill.gradient_check(trials=args.trials, seed=args.seed)
    print(f"max gradient relative error: {worst:.3e} over {args.trials} instances")
    if worst >= GRADIENT_TOLERANCE:
        print(f"FAIL: error exceeds tolerance {GRADIENT_TOLERANCE:.0e}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"PASS: below tolerance {GRADIENT_TOLERANCE:.0e}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "distill-check":
        return _run_distill_check(args)

    try:
        config = build_config(args)
    except (FormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        if args.command == "gen":
            summary = pipeline.run_generate(config)
            for line in summary.lines():
                print(line)
        elif args.command == "align":
            alignments = pipeline.run_align_stage(config, pharaoh_path=args.pharaoh)
            with_entities = [a for a in alignments if not a.zero_entity]
            uncovered = sum(1 for a in with_entities if a.uncovered)
            print(
                f"aligned {len(with_entities)} sentences "
                f"({len(alignments) - len(with_entities)} zero-entity, "
                f"{uncovered} with uncovered entity words)"
            )
        elif args.command == "project":
            projections = pipeline.run_project_stage(config)
            ok = sum(1 for p in projections if p.status == pipeline.STATUS_OK)
            dropped = sum(1 for p in projections if p.status == pipeline.STATUS_DROPPED)
            print(f"projected {ok} sentences ({dropped} dropped uncovered)")
        elif args.command == "score":
            scored = pipeline.run_score_stage(config)
            print(f"scored {len(scored)} sentences")
        elif args.command == "filter":
            kept, dropped = pipeline.run_filter_stage(config)
            print(f"kept {len(kept)} of {len(kept) + len(dropped)} scored sentences")
        else:  # pragma: no cover - argparse enforces the choices
            return EXIT_VALIDATION
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
