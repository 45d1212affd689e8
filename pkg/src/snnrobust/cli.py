"""Command-line interface for the robustness laboratory.

Subcommands mirror the pipeline stages: gen-graphs, sweep, attack,
correlate, prune-baseline, report, plus init-manifest to emit a starting
manifest file.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .experiment import (CorrelationWithheldError, ExperimentManifest,
                         ScaleFactors, build_graph_dataset, correlate,
                         render_report, rerun_attacks, resolve_data_source,
                         run_pruning_baseline, run_sweep)
from .store import ResultsStore

log = logging.getLogger("snnrobust")


def _add_common(p: argparse.ArgumentParser, data: bool = False) -> None:
    p.add_argument("--manifest", required=True, help="path to the manifest JSON")
    p.add_argument("--out-dir", required=True, help="results directory")
    if data:
        p.add_argument("--data-dir", default="data",
                       help="directory holding the MNIST IDX files")
        p.add_argument("--scale", type=float, default=None,
                       help="multiply every manifest scale factor by this")


def _load_manifest(args) -> ExperimentManifest:
    manifest = ExperimentManifest.from_file(args.manifest)
    if getattr(args, "scale", None) is not None:
        manifest.scale = manifest.scale.scaled_by(args.scale)
    return manifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snnrobust",
        description="Sparse networks from random-graph priors: train, attack, correlate.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-manifest", help="write a default manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--desk", action="store_true",
                   help="desk-scale defaults (small epochs/subsets/DE budget)")

    p = sub.add_parser("gen-graphs", help="build the filtered graph dataset")
    _add_common(p)

    p = sub.add_parser("sweep", help="train and attack every (graph, init) pair")
    _add_common(p, data=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--resume", dest="resume", action="store_true", default=True)
    p.add_argument("--no-resume", dest="resume", action="store_false")

    p = sub.add_parser("attack", help="re-run attacks on stored checkpoints")
    _add_common(p, data=True)

    p = sub.add_parser("correlate", help="correlate graph properties with measures")
    _add_common(p)

    p = sub.add_parser("prune-baseline", help="dense model, random pruning steps")
    _add_common(p, data=True)

    p = sub.add_parser("report", help="render the summary report")
    _add_common(p)
    return parser


def desk_manifest() -> ExperimentManifest:
    m = ExperimentManifest()
    m.target_graph_count = 10
    m.init_methods = ["G_N", "U"]
    m.dataset = "auto"
    m.scale = ScaleFactors(epochs=0.1, train_subset=0.5, test_subset=0.5,
                           search_subset=0.1, one_pixel=0.2,
                           de_pop=0.06, de_iter=0.04)
    m.pruning.steps = 20
    return m


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s")

    if args.command == "init-manifest":
        manifest = desk_manifest() if args.desk else ExperimentManifest()
        manifest.save(args.out)
        log.info("wrote %s manifest to %s",
                 "desk-scale" if args.desk else "full-scale", args.out)
        return 0

    manifest = _load_manifest(args)
    store = ResultsStore(args.out_dir)

    if args.command == "gen-graphs":
        entries = build_graph_dataset(manifest, store)
        log.info("accepted %d graphs", len(entries))
        return 0

    if args.command == "sweep":
        source = resolve_data_source(manifest, args.data_dir)
        summaries = run_sweep(manifest, store, source,
                              workers=args.workers, resume=args.resume)
        log.info("sweep finished: %d models", len(summaries))
        return 0

    if args.command == "attack":
        source = resolve_data_source(manifest, args.data_dir)
        n = rerun_attacks(manifest, store, source)
        log.info("re-attacked %d models", n)
        return 0

    if args.command == "correlate":
        try:
            table = correlate(manifest, store)
        except CorrelationWithheldError as exc:
            log.error("correlation withheld: %s", exc)
            return 1
        defined = sum(1 for c in table.cells if c.defined)
        log.info("correlations written (%d/%d cells defined)",
                 defined, len(table.cells))
        return 0

    if args.command == "prune-baseline":
        source = resolve_data_source(manifest, args.data_dir)
        steps = run_pruning_baseline(manifest, store, source)
        log.info("pruning baseline finished: %d step records", len(steps))
        return 0

    if args.command == "report":
        text = render_report(manifest, store)
        sys.stdout.write(text)
        return 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    raise SystemExit(main())
