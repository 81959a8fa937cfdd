"""Generational loop: speciation, stagnation, fitness sharing, reproduction.

The per-generation pipeline is: evaluate every genome on the generation's
trial set, record stats, partition into species, drop stagnant species
(except the top three performers), and breed the next population at the
scheduled size. Reproduction is the only phase that touches the innovation
registry, and the registry's per-generation memory is cleared once the
offspring exist.

A whole run is a pure function of (config, toggles, seed): evaluation never
draws randomness, so repeated runs produce identical statistics.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .foraging import FitnessRecord
from .genome import (
    Genome,
    GenomeParams,
    InnovationRegistry,
    compatibility_distance,
    crossover,
    mutate_add_connection,
    mutate_add_node,
    mutate_weights,
    new_genome,
)

Evaluator = Callable[[Genome], FitnessRecord]


class EvaluationError(RuntimeError):
    """Evaluator failure; carries the generation at which the run died."""

    def __init__(self, generation: int, cause: BaseException):
        super().__init__(f"evaluation failed at generation {generation}: {cause}")
        self.generation = generation


@dataclass
class EvolutionConfig:
    """Run-level knobs.

    The population ramp, when enabled, grows linearly from ``ramp_start``
    to ``population_size`` across the run. ``small_genome_threshold`` of 0
    always normalizes compatibility distance by the larger gene count;
    setting it to e.g. 20 switches to raw excess/disjoint counts for pairs
    of genomes below that size.
    """

    population_size: int = 500
    ramp_start: int = 200
    generations: int = 500
    stagnation_limit: int = 20
    elite_species: int = 3
    compatibility_threshold: float = 3.0
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 0.4
    small_genome_threshold: int = 0
    survival_fraction: float = 0.2
    elitism_min_species_size: int = 5
    n_inputs: int = 13
    n_outputs: int = 3
    per_genome_layouts: bool = False
    genome: GenomeParams = field(default_factory=GenomeParams)

    def __post_init__(self):
        if self.ramp_start > self.population_size:
            raise ValueError("ramp_start cannot exceed population_size")
        if self.elite_species < 0:
            raise ValueError("elite_species cannot be negative")
        if self.generations < 1:
            raise ValueError("need at least one generation")

    @property
    def coeffs(self) -> tuple[float, float, float]:
        return (self.c1, self.c2, self.c3)


@dataclass
class Species:
    """A compatibility niche persisting across generations.

    ``best_history`` gains one entry per generation the species exists;
    ``last_improved_index`` points at the history entry that last raised
    the species' best fitness.
    """

    id: int
    representative: Genome
    members: list[Genome] = field(default_factory=list)
    best_history: list[float] = field(default_factory=list)
    last_improved_index: int = 0
    created: int = 0

    def best_fitness(self) -> float:
        return self.best_history[-1]

    def champion(self) -> Genome:
        return max(self.members, key=lambda g: g.fitness.f)

    def stagnation_age(self) -> int:
        return len(self.best_history) - 1 - self.last_improved_index

    def record_generation(self) -> None:
        """Append this generation's best member fitness to the history."""
        best = max(m.fitness.f for m in self.members)
        improved = not self.best_history or best > max(self.best_history)
        self.best_history.append(best)
        if improved:
            self.last_improved_index = len(self.best_history) - 1


@dataclass
class GenerationStats:
    generation: int
    population_size: int
    champion_fitness: float
    mean_fitness: float
    std_fitness: float
    species_count: int
    champion: Genome


@dataclass
class EvolutionState:
    """Everything that persists between generations of one run."""

    population: list[Genome]
    species: list[Species]
    registry: InnovationRegistry
    species_ids: "itertools.count"
    allow_recurrent: bool
    ramp_enabled: bool


def target_population_size(gen: int, cfg: EvolutionConfig, ramp_enabled: bool) -> int:
    """Scheduled population size for a generation.

    Without the ramp this is constant; with it, a linear climb from
    ``ramp_start`` at generation 0 to ``population_size`` at the final
    generation (monotone nondecreasing).
    """
    if gen < 0 or gen >= cfg.generations:
        raise ValueError(f"generation {gen} outside [0, {cfg.generations})")
    if not ramp_enabled:
        return cfg.population_size
    if cfg.generations == 1:
        return cfg.population_size
    span = cfg.population_size - cfg.ramp_start
    return round(cfg.ramp_start + span * gen / (cfg.generations - 1))


def speciate(
    population: list[Genome],
    prev_species: list[Species],
    cfg: EvolutionConfig,
    generation: int,
    species_ids: "itertools.count",
    rng: np.random.Generator,
) -> list[Species]:
    """Assign every genome to the first species whose representative is
    within the compatibility threshold, founding new species as needed.

    Species that attract no members are dropped. Each surviving species
    then draws a uniform member as its representative for the next
    generation's assignment.
    """
    species = list(prev_species)
    for s in species:
        s.members = []
    for g in population:
        for s in species:
            d = compatibility_distance(
                g, s.representative, cfg.coeffs, cfg.small_genome_threshold
            )
            if d <= cfg.compatibility_threshold:
                s.members.append(g)
                break
        else:
            fresh = Species(next(species_ids), g, created=generation)
            fresh.members.append(g)
            species.append(fresh)
    species = [s for s in species if s.members]
    for s in species:
        s.representative = s.members[int(rng.integers(len(s.members)))]
    return species


def rank_species(species: list[Species]) -> list[Species]:
    """Best current fitness first, ties to the older (smaller) id."""
    return sorted(species, key=lambda s: (-s.best_fitness(), s.id))


def remove_stagnant(species: list[Species], cfg: EvolutionConfig) -> list[Species]:
    """Drop species whose best fitness has not improved for more than the
    stagnation limit, except the top performers, and never all of them."""
    ranked = rank_species(species)
    elite = {s.id for s in ranked[: cfg.elite_species]}
    kept = [
        s
        for s in species
        if s.id in elite or s.stagnation_age() <= cfg.stagnation_limit
    ]
    if not kept:
        kept = [ranked[0]]
    return kept


def _largest_remainder(weights: list[float], total: int) -> list[int]:
    """Integer allocation proportional to weights summing exactly to total."""
    if not weights:
        return []
    wsum = sum(weights)
    if wsum <= 0.0:
        weights = [1.0] * len(weights)
        wsum = float(len(weights))
    quotas = [w / wsum * total for w in weights]
    counts = [math.floor(q) for q in quotas]
    remainder = total - sum(counts)
    by_fraction = sorted(range(len(weights)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in by_fraction[:remainder]:
        counts[i] += 1
    return counts


def reproduce(
    species: list[Species],
    target_size: int,
    cfg: EvolutionConfig,
    allow_recurrent: bool,
    reg: InnovationRegistry,
    rng: np.random.Generator,
) -> list[Genome]:
    """Breed the next population, exactly ``target_size`` genomes.

    Offspring are allocated per species proportionally to adjusted fitness
    (member fitness divided by species size, i.e. the species mean).
    Within a species the bottom of the fitness ranking is culled before
    parents are drawn, and species at or above the elitism size copy their
    champion through unchanged.
    """
    if not species:
        raise RuntimeError("reproduction with no species left")
    if target_size < 1:
        raise ValueError("target_size must be at least 1")

    adjusted = [sum(m.fitness.f for m in s.members) / len(s.members) for s in species]
    allocation = _largest_remainder(adjusted, target_size)

    offspring: list[Genome] = []
    for s, n_off in zip(species, allocation):
        if n_off == 0:
            continue
        members = sorted(
            range(len(s.members)), key=lambda i: (-s.members[i].fitness.f, i)
        )
        ranked = [s.members[i] for i in members]
        remaining = n_off
        if len(ranked) >= cfg.elitism_min_species_size:
            offspring.append(ranked[0].clone())
            remaining -= 1
        cutoff = min(len(ranked), max(2, math.ceil(cfg.survival_fraction * len(ranked))))
        parents = ranked[:cutoff]
        for _ in range(remaining):
            pa = parents[int(rng.integers(len(parents)))]
            pb = parents[int(rng.integers(len(parents)))]
            if pa.fitness.f > pb.fitness.f:
                fitter = "a"
            elif pb.fitness.f > pa.fitness.f:
                fitter = "b"
            else:
                fitter = "tie"
            child = crossover(pa, pb, fitter, cfg.genome, allow_recurrent, rng)
            child = mutate_weights(child, cfg.genome, rng)
            if rng.random() < cfg.genome.p_add_connection:
                child = mutate_add_connection(child, allow_recurrent, cfg.genome, reg, rng)
            if rng.random() < cfg.genome.p_add_node:
                child = mutate_add_node(child, cfg.genome, reg, rng)
            offspring.append(child)
    return offspring


def initial_state(
    cfg: EvolutionConfig,
    feature_select: bool,
    allow_recurrent: bool,
    ramp_enabled: bool,
    rng: np.random.Generator,
) -> EvolutionState:
    """Fresh registry and generation-0 population."""
    reg = InnovationRegistry()
    init_mode = "feature_select" if feature_select else "partial"
    size = target_population_size(0, cfg, ramp_enabled)
    population = [
        new_genome(cfg.n_inputs, cfg.n_outputs, init_mode, cfg.genome, reg, rng)
        for _ in range(size)
    ]
    return EvolutionState(
        population=population,
        species=[],
        registry=reg,
        species_ids=itertools.count(0),
        allow_recurrent=allow_recurrent,
        ramp_enabled=ramp_enabled,
    )


def evolve_generation(
    state: EvolutionState,
    evaluator: Evaluator,
    cfg: EvolutionConfig,
    gen: int,
    rng: np.random.Generator,
) -> GenerationStats:
    """Evaluate, speciate, prune, and breed one generation.

    Afterwards ``state.population`` holds the next generation at its
    scheduled size (reproduction is skipped after the final generation) and
    the registry's per-generation memory is cleared.
    """
    if gen < 0 or gen >= cfg.generations:
        raise ValueError(f"generation {gen} outside [0, {cfg.generations})")

    for g in state.population:
        try:
            g.fitness = evaluator(g)
        except Exception as exc:
            raise EvaluationError(gen, exc) from exc

    fits = np.array([g.fitness.f for g in state.population])
    champion = state.population[int(np.argmax(fits))]
    stats = GenerationStats(
        generation=gen,
        population_size=len(state.population),
        champion_fitness=float(fits.max()),
        mean_fitness=float(fits.mean()),
        std_fitness=float(fits.std()),
        species_count=0,
        champion=champion.clone(fitness=champion.fitness),
    )

    state.species = speciate(
        state.population, state.species, cfg, gen, state.species_ids, rng
    )
    stats.species_count = len(state.species)
    for s in state.species:
        s.record_generation()
    state.species = remove_stagnant(state.species, cfg)

    if gen + 1 < cfg.generations:
        target = target_population_size(gen + 1, cfg, state.ramp_enabled)
        state.population = reproduce(
            state.species, target, cfg, state.allow_recurrent, state.registry, rng
        )
    state.registry.begin_generation()
    return stats
