"""Experiment runner: variants, repetitions, logging, plots, summaries.

Each repetition of a variant is an independent seeded run of the
generational loop on the foraging task. Per run the harness writes a CSV of
per-generation statistics, a JSONL archive of champion genomes, and a
fitness plot; a summary document covers the repetitions of a variant. CSV,
plot, and summary are all derived from the same in-memory statistics.

Wall-clock time is deliberately not reported; the machine-independent cost
proxies are the genome-evaluation and network-activation counters.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import foraging
from .evolution import (
    EvaluationError,
    EvolutionConfig,
    EvolutionState,
    GenerationStats,
    evolve_generation,
    initial_state,
)
from .foraging import Geometry, build_trial_set, derive_seed, evaluate
from .genome import Genome, GenomeParams, genome_from_dict, genome_to_dict

SUCCESS_FITNESS = 60.0  # 32 + 32 edible - 4 mandatory poison tastes
DEFAULT_WINDOW = 5

CSV_HEADER = (
    "generation,pop_size,champion_fitness,mean_fitness,std_fitness,"
    "species_count,champion_nodes,champion_connections,evaluations_cumulative"
)


@dataclass(frozen=True)
class VariantSpec:
    """One cell of the 2x2x2 improvement matrix."""

    recurrent: bool = False
    feature_select: bool = False
    pop_ramp: bool = False

    @property
    def name(self) -> str:
        parts = []
        if self.recurrent:
            parts.append("rc")
        if self.feature_select:
            parts.append("fs")
        if self.pop_ramp:
            parts.append("ips")
        return "+".join(parts) if parts else "base"

    @staticmethod
    def parse(name: str) -> "VariantSpec":
        by_name = {v.name: v for v in all_variants()}
        if name not in by_name:
            raise ValueError(f"unknown variant {name!r}; choose from {sorted(by_name)}")
        return by_name[name]


def all_variants() -> list[VariantSpec]:
    """The eight variants in canonical order."""
    return [
        VariantSpec(),
        VariantSpec(recurrent=True),
        VariantSpec(feature_select=True),
        VariantSpec(pop_ramp=True),
        VariantSpec(recurrent=True, feature_select=True),
        VariantSpec(recurrent=True, pop_ramp=True),
        VariantSpec(feature_select=True, pop_ramp=True),
        VariantSpec(recurrent=True, feature_select=True, pop_ramp=True),
    ]


def run_seed(master_seed: int, variant_name: str, rep: int) -> int:
    """Per-repetition seed: first 8 bytes of sha256("master|variant|rep")."""
    digest = hashlib.sha256(f"{master_seed}|{variant_name}|{rep}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def generation_trial_seed(seed: int, gen: int) -> int:
    """Seed of the trial set shared by every genome of one generation."""
    return derive_seed(seed, gen)


def detect_consistent_success(
    champion_series: list[float], window: int, f_max: float = SUCCESS_FITNESS
) -> Optional[int]:
    """First generation opening ``window`` consecutive champions at or
    above ``f_max``, or None."""
    if window < 2:
        raise ValueError("window must be at least 2")
    streak = 0
    for i, f in enumerate(champion_series):
        streak = streak + 1 if f >= f_max else 0
        if streak == window:
            return i - window + 1
    return None


class EvolutionRun:
    """Drives one seeded run and keeps its statistics and cost counters.

    Trial layouts are regenerated from the run seed every generation and
    shared by the whole population unless ``cfg.per_genome_layouts`` is
    set, in which case every evaluation draws its own layout.
    """

    def __init__(self, cfg: EvolutionConfig, geometry: Geometry, variant: VariantSpec, seed: int):
        self.cfg = cfg
        self.geometry = geometry
        self.variant = variant
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.state: EvolutionState = initial_state(
            cfg, variant.feature_select, variant.recurrent, variant.pop_ramp, self.rng
        )
        self.generation = 0
        self.stats: list[GenerationStats] = []
        self.evaluations = 0
        self.activations = 0
        self.evaluations_cumulative: list[int] = []

    def _evaluator(self, gen: int):
        cost = len(foraging.TRIAL_PLAN) * self.geometry.steps
        if self.cfg.per_genome_layouts:
            counter = itertools.count()

            def evaluator(g: Genome):
                trial_set = build_trial_set(
                    derive_seed(self.seed, gen, next(counter)), self.geometry
                )
                self.evaluations += 1
                self.activations += cost
                return evaluate(g, trial_set, self.geometry)

        else:
            trial_set = build_trial_set(generation_trial_seed(self.seed, gen), self.geometry)

            def evaluator(g: Genome):
                self.evaluations += 1
                self.activations += cost
                return evaluate(g, trial_set, self.geometry)

        return evaluator

    def step(self) -> GenerationStats:
        gen = self.generation
        stats = evolve_generation(self.state, self._evaluator(gen), self.cfg, gen, self.rng)
        self.stats.append(stats)
        self.evaluations_cumulative.append(self.evaluations)
        self.generation += 1
        return stats

    def run(self) -> list[GenerationStats]:
        while self.generation < self.cfg.generations:
            self.step()
        return self.stats


@dataclass
class RunRecord:
    """Outcome of one repetition."""

    variant: VariantSpec
    rep: int
    seed: int
    champion_series: list[float]
    success_generation: Optional[int]
    evaluations: int
    activations: int
    window: int
    failed: Optional[str] = None
    csv_path: Optional[str] = None
    archive_path: Optional[str] = None


def _fmt(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def write_run_csv(path, stats: list[GenerationStats], evals_cumulative: list[int]) -> None:
    lines = [CSV_HEADER]
    for s, cum in zip(stats, evals_cumulative):
        champion_connections = sum(1 for c in s.champion.connections if c.enabled)
        lines.append(
            ",".join(
                [
                    str(s.generation),
                    str(s.population_size),
                    _fmt(s.champion_fitness),
                    _fmt(s.mean_fitness),
                    _fmt(s.std_fitness),
                    str(s.species_count),
                    str(len(s.champion.nodes)),
                    str(champion_connections),
                    str(cum),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_run_csv(path) -> dict[str, list[float]]:
    """Parse a run CSV into column lists (floats for fitness columns)."""
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    if lines[0] != CSV_HEADER:
        raise ValueError(f"{path} does not have the expected run CSV header")
    columns: dict[str, list[float]] = {h: [] for h in header}
    int_cols = {
        "generation",
        "pop_size",
        "species_count",
        "champion_nodes",
        "champion_connections",
        "evaluations_cumulative",
    }
    for line in lines[1:]:
        for h, cell in zip(header, line.split(",")):
            columns[h].append(int(cell) if h in int_cols else float(cell))
    return columns


def write_champion_archive(path, stats: list[GenerationStats]) -> None:
    """One JSON line per generation: fitness record plus serialized genome."""
    with open(path, "w") as fh:
        for s in stats:
            fh.write(
                json.dumps(
                    {
                        "generation": s.generation,
                        "e": s.champion.fitness.e,
                        "p": s.champion.fitness.p,
                        "f": s.champion.fitness.f,
                        "genome": genome_to_dict(s.champion),
                    },
                    separators=(",", ":"),
                )
                + "\n"
            )


def read_champion_archive(path) -> list[tuple[int, foraging.FitnessRecord, Genome]]:
    out = []
    for line in Path(path).read_text().splitlines():
        data = json.loads(line)
        out.append(
            (
                int(data["generation"]),
                foraging.FitnessRecord(int(data["e"]), int(data["p"])),
                genome_from_dict(data["genome"]),
            )
        )
    return out


def figure_from_columns(columns: dict[str, list[float]]):
    """Build the fitness figure: champion (red), mean (blue), mean plus
    one standard deviation (green) against generation."""
    gens = columns["generation"]
    if not gens:
        raise ValueError("cannot plot an empty run")
    mean = np.asarray(columns["mean_fitness"])
    std = np.asarray(columns["std_fitness"])
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(gens, columns["champion_fitness"], color="red", label="champion")
    ax.plot(gens, mean, color="blue", label="mean")
    ax.plot(gens, mean + std, color="green", label="mean + 1 std")
    ax.set_xlabel("Generation")
    ax.set_ylabel("Fitness")
    ax.set_xlim(gens[0], gens[-1] if len(gens) > 1 else gens[0] + 1)
    ax.legend(loc="lower right")
    fig.tight_layout()
    return fig


def emit_plot(columns: dict[str, list[float]], out_path) -> str:
    """Render the fitness figure to a file (vector format for .svg/.pdf)."""
    fig = figure_from_columns(columns)
    fig.savefig(out_path)
    plt.close(fig)
    return str(out_path)


def stats_columns(stats: list[GenerationStats], evals_cumulative: list[int]) -> dict[str, list]:
    """The CSV columns, straight from in-memory statistics."""
    return {
        "generation": [s.generation for s in stats],
        "pop_size": [s.population_size for s in stats],
        "champion_fitness": [s.champion_fitness for s in stats],
        "mean_fitness": [s.mean_fitness for s in stats],
        "std_fitness": [s.std_fitness for s in stats],
        "species_count": [s.species_count for s in stats],
        "champion_nodes": [len(s.champion.nodes) for s in stats],
        "champion_connections": [
            sum(1 for c in s.champion.connections if c.enabled) for s in stats
        ],
        "evaluations_cumulative": list(evals_cumulative),
    }


def config_echo(cfg: EvolutionConfig, geometry: Geometry, harness: dict) -> dict:
    return {"evolution": asdict(cfg), "foraging": asdict(geometry), "harness": harness}


def run_experiment(
    variant: VariantSpec,
    reps: int,
    cfg: EvolutionConfig,
    geometry: Geometry,
    master_seed: int,
    out_dir,
    window: int = DEFAULT_WINDOW,
    success_fitness: float = SUCCESS_FITNESS,
    plots: bool = True,
    progress: bool = False,
) -> list[RunRecord]:
    """Run ``reps`` independent repetitions of one variant.

    Every repetition gets its own derived seed and its own output directory
    with ``run.csv``, ``champions.jsonl`` and ``fitness.svg``. A failing
    repetition is recorded and the others continue. Returns the records and
    writes ``summary.txt`` plus a config echo next to them.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    variant_dir = Path(out_dir) / variant.name
    variant_dir.mkdir(parents=True, exist_ok=True)

    records: list[RunRecord] = []
    for rep in range(reps):
        seed = run_seed(master_seed, variant.name, rep)
        rep_dir = variant_dir / f"rep{rep}"
        rep_dir.mkdir(parents=True, exist_ok=True)
        record = RunRecord(
            variant=variant,
            rep=rep,
            seed=seed,
            champion_series=[],
            success_generation=None,
            evaluations=0,
            activations=0,
            window=window,
        )
        try:
            run = EvolutionRun(cfg, geometry, variant, seed)
            for _ in range(cfg.generations):
                run.step()
                if progress and run.generation % 50 == 0:
                    print(
                        f"[{variant.name} rep{rep}] generation {run.generation}/"
                        f"{cfg.generations} champion={run.stats[-1].champion_fitness:.1f}",
                        flush=True,
                    )
            record.champion_series = [s.champion_fitness for s in run.stats]
            record.success_generation = detect_consistent_success(
                record.champion_series, window, success_fitness
            )
            record.evaluations = run.evaluations
            record.activations = run.activations
            csv_path = rep_dir / "run.csv"
            write_run_csv(csv_path, run.stats, run.evaluations_cumulative)
            record.csv_path = str(csv_path)
            archive_path = rep_dir / "champions.jsonl"
            write_champion_archive(archive_path, run.stats)
            record.archive_path = str(archive_path)
            if plots:
                emit_plot(
                    stats_columns(run.stats, run.evaluations_cumulative),
                    rep_dir / "fitness.svg",
                )
        except EvaluationError as exc:
            record.failed = str(exc)
        records.append(record)
        _write_meta(rep_dir / "meta.json", record, cfg)

    echo = config_echo(
        cfg, geometry, {"master_seed": master_seed, "reps": reps, "window": window}
    )
    (variant_dir / "config.json").write_text(json.dumps(echo, indent=2) + "\n")
    (variant_dir / "summary.txt").write_text(summarize(records, echo))
    return records


def _write_meta(path, record: RunRecord, cfg: EvolutionConfig) -> None:
    Path(path).write_text(
        json.dumps(
            {
                "variant": record.variant.name,
                "rep": record.rep,
                "seed": record.seed,
                "window": record.window,
                "success_generation": record.success_generation,
                "evaluations": record.evaluations,
                "activations": record.activations,
                "generations": cfg.generations,
                "failed": record.failed,
            },
            indent=2,
        )
        + "\n"
    )


def summarize(records: list[RunRecord], echo: Optional[dict] = None) -> str:
    """Per-variant success table plus config echo.

    The success generation convention: the reported generation is the first
    of the qualifying window, stated in the header.
    """
    if not records:
        raise ValueError("nothing to summarize")
    window = records[0].window
    lines = [
        "Experiment summary",
        f"Success criterion: champion fitness >= {SUCCESS_FITNESS:g} for "
        f"{window} consecutive generations; the reported generation is the "
        "first of that window.",
        "",
        f"{'variant':<12}{'reps':<6}{'successes':<11}{'mean_gen':<10}success_generations",
    ]
    by_variant: dict[str, list[RunRecord]] = {}
    for r in records:
        by_variant.setdefault(r.variant.name, []).append(r)
    for name, group in by_variant.items():
        successes = [r.success_generation for r in group if r.success_generation is not None]
        failed = [r for r in group if r.failed]
        mean_gen = f"{np.mean(successes):g}" if successes else "n/a"
        gens_txt = str(sorted(successes)) if successes else "none"
        if failed:
            gens_txt += f" ({len(failed)} rep(s) failed)"
        ratio = f"{len(successes)}/{len(group)}"
        lines.append(f"{name:<12}{len(group):<6}{ratio:<11}{mean_gen:<10}{gens_txt}")
    evals = sum(r.evaluations for r in records)
    acts = sum(r.activations for r in records)
    lines += [
        "",
        f"Total genome evaluations: {evals}",
        f"Total network activations: {acts}",
    ]
    if echo:
        lines += ["", "Config:"]
        for section, values in echo.items():
            for key, value in _flatten(values).items():
                lines.append(f"  {section}.{key} = {value}")
    return "\n".join(lines) + "\n"


def _flatten(values: dict, prefix: str = "") -> dict:
    flat = {}
    for key, value in values.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{name}."))
        else:
            flat[name] = value
    return flat


def load_config_file(path) -> tuple[EvolutionConfig, Geometry, dict]:
    """Read a JSON config with optional "evolution", "foraging" and
    "harness" sections; unknown keys are rejected. CLI flags take
    precedence over values loaded here."""
    data = json.loads(Path(path).read_text())
    unknown = set(data) - {"evolution", "foraging", "harness"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")

    ev = dict(data.get("evolution", {}))
    genome_params = ev.pop("genome", {})
    bad = set(ev) - set(EvolutionConfig.__dataclass_fields__)
    bad |= set(genome_params) - set(GenomeParams.__dataclass_fields__)
    if bad:
        raise ValueError(f"unknown evolution config keys: {sorted(bad)}")
    cfg = EvolutionConfig(**ev, genome=GenomeParams(**genome_params))

    fo = dict(data.get("foraging", {}))
    bad = set(fo) - set(Geometry.__dataclass_fields__)
    if bad:
        raise ValueError(f"unknown foraging config keys: {sorted(bad)}")
    geometry = Geometry(**fo)
    return cfg, geometry, dict(data.get("harness", {}))


def scan_runs(directory) -> list[RunRecord]:
    """Rebuild run records from an output tree (meta.json + run.csv)."""
    records = []
    for meta_path in sorted(Path(directory).rglob("meta.json")):
        meta = json.loads(meta_path.read_text())
        csv_path = meta_path.parent / "run.csv"
        series: list[float] = []
        if csv_path.exists():
            series = read_run_csv(csv_path)["champion_fitness"]
        records.append(
            RunRecord(
                variant=VariantSpec.parse(meta["variant"]),
                rep=meta["rep"],
                seed=meta["seed"],
                champion_series=series,
                success_generation=meta.get("success_generation"),
                evaluations=meta.get("evaluations", 0),
                activations=meta.get("activations", 0),
                window=meta.get("window", DEFAULT_WINDOW),
                failed=meta.get("failed"),
                csv_path=str(csv_path) if csv_path.exists() else None,
            )
        )
    return records
