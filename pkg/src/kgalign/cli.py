"""Command-line entry point: ``kgalign run|stage|gen-synthetic|ablate|evaluate``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .align import STANDARD_ABLATIONS, AlignmentTask
from .evaluation import ablation_grid, format_grid, generate_synthetic_pair
from .kg import ParseError, parse_links, parse_triples, split_alignment, write_links, write_triples
from .pipeline import (STAGES, ConfigError, LockedError, PipelineConfig, StageError, load_config,
                       run_pipeline, run_stage, write_config)
from .semantic import load_word_embeddings, merge_stores, write_word_embeddings
from .storage import FormatError
from .structural import TrainingConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_STAGE = 4

_DATA_ERRORS = (ParseError, FormatError, KeyError, UnicodeDecodeError)

log = logging.getLogger("kgalign")


def _load(args) -> PipelineConfig:
    if not args.config:
        raise ConfigError("--config is required")
    config = load_config(args.config)
    if args.output:
        config = replace(config, output=Path(args.output))
    if args.seed is not None:
        config = config.with_seed(args.seed)
    config.validate()
    return config


def cmd_run(args):
    report = run_pipeline(_load(args))
    if report is not None and not args.quiet:
        sys.stdout.write(report.to_text())


def cmd_stage(args):
    report = run_stage(_load(args), args.name)
    if args.name == "evaluate" and not args.quiet:
        sys.stdout.write(report.to_text())


def cmd_evaluate(args):
    args.name = "evaluate"
    cmd_stage(args)


def cmd_gen_synthetic(args):
    out = Path(args.output or "synthetic")
    out.mkdir(parents=True, exist_ok=True)
    bench = generate_synthetic_pair(args.entities, args.density, args.name_noise, args.structure_noise,
                                    args.seed if args.seed is not None else 0)
    write_triples(bench.kg1, out / "kg1_triples.tsv")
    write_triples(bench.kg2, out / "kg2_triples.tsv")
    write_links(bench.gold, out / "links.tsv")
    write_word_embeddings(bench.word_vectors, out / "word_vectors.txt")
    config = PipelineConfig(
        kg1_triples=Path("kg1_triples.tsv"), kg2_triples=Path("kg2_triples.tsv"), links=Path("links.tsv"),
        output=Path("output"), word_vectors=(Path("word_vectors.txt"),),
        training=TrainingConfig(), rng_seed=args.seed if args.seed is not None else 0,
    )
    write_config(config, out / "config.yaml")
    log.info("wrote synthetic benchmark to %s", out)


def cmd_ablate(args):
    config = _load(args)
    kg1 = parse_triples(config.kg1_triples)
    kg2 = parse_triples(config.kg2_triples)
    seed, test = split_alignment(parse_links(config.links), config.seed_fraction, config.rng_seed)
    store = None
    if config.word_vectors:
        store = merge_stores([load_word_embeddings(p) for p in config.word_vectors])
    rows = [sw for sw in STANDARD_ABLATIONS if store is not None or not sw.semantic]
    task = AlignmentTask(kg1, kg2, seed, test, store)
    grid = ablation_grid(task, rows, config.training, config.fusion, config.string, config.hits_at)
    text = format_grid(grid)
    config.output.mkdir(parents=True, exist_ok=True)
    (config.output / "ablation.tsv").write_text(text, encoding="utf-8")
    if not args.quiet:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat YAML config with dotted keys")
    common.add_argument("--output", help="output directory (overrides paths.output)")
    common.add_argument("--seed", type=int, help="overrides rng_seed")
    common.add_argument("--quiet", action="store_true", help="only log warnings and errors")

    parser = argparse.ArgumentParser(prog="kgalign", description="Collective entity alignment across two KGs.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run every enabled stage").set_defaults(func=cmd_run)
    p = sub.add_parser("stage", parents=[common], help="run a single stage")
    p.add_argument("name", choices=STAGES)
    p.set_defaults(func=cmd_stage)
    sub.add_parser("evaluate", parents=[common], help="score the current matching").set_defaults(func=cmd_evaluate)
    sub.add_parser("ablate", parents=[common], help="run the ablation grid").set_defaults(func=cmd_ablate)
    p = sub.add_parser("gen-synthetic", parents=[common], help="write a synthetic benchmark")
    p.add_argument("--entities", type=int, default=200)
    p.add_argument("--density", type=float, default=3.0, help="triples per entity")
    p.add_argument("--name-noise", type=int, default=0, help="character edits per target name")
    p.add_argument("--structure-noise", type=float, default=0.0, help="fraction of target triples dropped")
    p.set_defaults(func=cmd_gen_synthetic)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except StageError as exc:
        log.error("%s", exc)
        return EXIT_DATA if isinstance(exc.__cause__, _DATA_ERRORS) else EXIT_STAGE
    except LockedError as exc:
        log.error("%s", exc)
        return EXIT_STAGE
    except _DATA_ERRORS as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except ValueError as exc:
        # gen-synthetic parameter checks
        log.error("%s", exc)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
