"""Command line interface.

Subcommands:
  run        execute one variant for N repetitions, writing CSVs, champion
             archives, fitness plots and a summary under --out
  variants   list the eight variant names and their toggles
  plot       render the fitness figure for an existing run CSV
  summarize  rebuild the summary table from an output directory
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .evolution import EvolutionConfig
from .foraging import Geometry
from . import harness
from .harness import VariantSpec, all_variants


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neatlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one variant for N repetitions")
    run.add_argument("--variant", required=True, choices=[v.name for v in all_variants()])
    run.add_argument("--reps", type=int, default=None, help="repetitions (default 5)")
    run.add_argument("--gens", type=int, default=None, help="generations (default 500)")
    run.add_argument("--pop", type=int, default=None, help="full population size (default 500)")
    run.add_argument("--window", type=int, default=None,
                     help="consecutive max-fitness champions counted as success (default 5)")
    run.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--config", default=None, help="JSON config file; flags override it")
    run.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    run.add_argument("--progress", action="store_true", help="print progress lines")

    sub.add_parser("variants", help="list the eight variants")

    plot = sub.add_parser("plot", help="plot an existing run CSV")
    plot.add_argument("csv", help="path to a run.csv")
    plot.add_argument("--out", default=None, help="output figure (default: <csv>.svg)")

    summ = sub.add_parser("summarize", help="summarize an output directory")
    summ.add_argument("directory")
    summ.add_argument("--out", default=None, help="write the summary here instead of stdout")
    return parser


def _resolved_config(args) -> tuple[EvolutionConfig, Geometry, int, int]:
    """Defaults, then config file, then explicit CLI flags."""
    if args.config:
        cfg, geometry, hsec = harness.load_config_file(args.config)
    else:
        cfg, geometry, hsec = EvolutionConfig(), Geometry(), {}
    overrides = {}
    if args.gens is not None:
        overrides["generations"] = args.gens
    if args.pop is not None:
        overrides["population_size"] = args.pop
        if cfg.ramp_start > args.pop:
            overrides["ramp_start"] = args.pop
    if overrides:
        cfg = replace(cfg, **overrides)
    reps = args.reps if args.reps is not None else int(hsec.get("reps", 5))
    window = args.window if args.window is not None else int(hsec.get("window", harness.DEFAULT_WINDOW))
    return cfg, geometry, reps, window


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "variants":
        print(f"{'name':<12}{'recurrent':<11}{'feature_select':<16}pop_ramp")
        for v in all_variants():
            print(f"{v.name:<12}{str(v.recurrent).lower():<11}"
                  f"{str(v.feature_select).lower():<16}{str(v.pop_ramp).lower()}")
        return 0

    if args.command == "run":
        cfg, geometry, reps, window = _resolved_config(args)
        variant = VariantSpec.parse(args.variant)
        records = harness.run_experiment(
            variant,
            reps,
            cfg,
            geometry,
            args.seed,
            args.out,
            window=window,
            plots=not args.no_plots,
            progress=args.progress,
        )
        failed = [r for r in records if r.failed]
        print(f"wrote {len(records)} run(s) under {Path(args.out) / variant.name}")
        if failed:
            print(f"{len(failed)} repetition(s) failed; see summary.txt", file=sys.stderr)
        return 0

    if args.command == "plot":
        out = args.out or str(Path(args.csv).with_suffix(".svg"))
        harness.emit_plot(harness.read_run_csv(args.csv), out)
        print(out)
        return 0

    if args.command == "summarize":
        records = harness.scan_runs(args.directory)
        if not records:
            print(f"no runs found under {args.directory}", file=sys.stderr)
            return 1
        text = harness.summarize(records)
        if args.out:
            Path(args.out).write_text(text)
            print(args.out)
        else:
            print(text, end="")
        return 0

    return 2


if __name__ == "__main__":
    raise SystemExit(main())
