"""The genetic algorithm: selection, crossover, mutation, and the loop.

Crossover is difference-guided: parent pairs are re-drawn by binary
tournament until their normalized Hamming distance exceeds a threshold
(give up after a bounded number of attempts and keep the last pair), then
exchanged over five half-open segments delimited by ten sorted random cut
points.  Environmental selection keeps an elite of the combined
parent+offspring pool and fills the rest by binary tournament.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .fitness import EvaluationError, Evaluator, FitnessCache, evaluate_population
from .genome import (
    OP_GENE_BITS,
    BlockGene,
    Genotype,
    SearchSpaceConfig,
    genotype_to_bits,
    normalized_hamming,
    parse_genotype,
    random_genotype,
)
from .runlog import GenerationRecord, RunLog

SELECTION_STRATEGIES = ("elitist_plus_tournament", "top_n", "elitist_1")
TOURNAMENT_POOLS = ("combined", "parents")


@dataclass(frozen=True)
class EvolutionConfig:
    """All hyperparameters of the search loop."""

    population_size: int = 20
    generations: int = 50
    p_crossover: float = 0.9
    p_mutation: float = 0.7
    p_bit_flip: float = 0.05
    diff_threshold: float = 0.2
    elite_size: int = 5
    crossover_points: int = 10
    max_reselect: int = 10
    selection_strategy: str = "elitist_plus_tournament"
    tournament_pool: str = "combined"
    rng_seed: int = 0

    def __post_init__(self) -> None:
        for name in ("p_crossover", "p_mutation", "p_bit_flip", "diff_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if not 1 <= self.elite_size <= self.population_size:
            raise ValueError(
                f"elite_size must be in [1, population_size], got {self.elite_size}"
            )
        if self.crossover_points < 2 or self.crossover_points % 2 != 0:
            raise ValueError(
                f"crossover_points must be even and >= 2, got {self.crossover_points}"
            )
        if self.max_reselect < 1:
            raise ValueError("max_reselect must be >= 1")
        if self.selection_strategy not in SELECTION_STRATEGIES:
            raise ValueError(
                f"selection_strategy must be one of {SELECTION_STRATEGIES}, "
                f"got {self.selection_strategy!r}"
            )
        if self.tournament_pool not in TOURNAMENT_POOLS:
            raise ValueError(
                f"tournament_pool must be one of {TOURNAMENT_POOLS}, "
                f"got {self.tournament_pool!r}"
            )

    def to_dict(self) -> dict:
        return {
            "population_size": self.population_size,
            "generations": self.generations,
            "p_crossover": self.p_crossover,
            "p_mutation": self.p_mutation,
            "p_bit_flip": self.p_bit_flip,
            "diff_threshold": self.diff_threshold,
            "elite_size": self.elite_size,
            "crossover_points": self.crossover_points,
            "max_reselect": self.max_reselect,
            "selection_strategy": self.selection_strategy,
            "tournament_pool": self.tournament_pool,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvolutionConfig":
        unknown = set(data) - set(cls().to_dict())
        if unknown:
            raise ValueError(f"unknown evolution-config fields: {sorted(unknown)}")
        return cls(**data)


@dataclass
class Individual:
    """A genotype with its cached fitness and provenance."""

    genotype: Genotype
    fitness: float | None = None
    uid: int = -1
    birth_generation: int = 0
    parent_uids: tuple[int, ...] = ()

    def set_fitness(self, value: float) -> None:
        if self.fitness is not None and self.fitness != value:
            raise ValueError(
                f"fitness of individual {self.uid} already set to "
                f"{self.fitness}, refusing {value}"
            )
        self.fitness = value

    def to_dict(self) -> dict:
        return {
            "uid": self.uid,
            "genome": self.genotype.to_text(),
            "fitness": self.fitness,
            "birth_generation": self.birth_generation,
            "parent_uids": list(self.parent_uids),
        }


Population = list[Individual]


@dataclass(frozen=True)
class CrossoverStats:
    """Bookkeeping for one crossover event, logged per generation."""

    diff: float
    attempts: int
    met_threshold: bool
    crossed: bool
    parent_uids: tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "diff": self.diff,
            "attempts": self.attempts,
            "met_threshold": self.met_threshold,
            "crossed": self.crossed,
            "parent_uids": list(self.parent_uids),
        }


@dataclass(frozen=True)
class CrossoverResult:
    offspring: tuple[Genotype, Genotype]
    stats: CrossoverStats


def binary_tournament(pop: Sequence[Individual],
                      rng: np.random.Generator) -> Individual:
    """Draw two distinct individuals uniformly; return the fitter.

    Ties are broken by a fair coin.
    """
    if len(pop) < 2:
        raise ValueError("binary tournament needs at least 2 individuals")
    i, j = rng.choice(len(pop), size=2, replace=False)
    a, b = pop[i], pop[j]
    if a.fitness is None or b.fitness is None:
        raise ValueError("binary tournament over unevaluated individuals")
    if a.fitness > b.fitness:
        return a
    if b.fitness > a.fitness:
        return b
    return a if rng.random() < 0.5 else b


def exchange_segments(bits1: np.ndarray, bits2: np.ndarray,
                      cut_points: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Swap the half-open slices [c0,c1), [c2,c3), ... between two genomes."""
    out1, out2 = bits1.copy(), bits2.copy()
    for k in range(0, len(cut_points), 2):
        start, end = cut_points[k], cut_points[k + 1]
        out1[start:end], out2[start:end] = (
            bits2[start:end].copy(), bits1[start:end].copy(),
        )
    return out1, out2


def difference_guided_crossover(
    pop: Sequence[Individual],
    cfg: EvolutionConfig,
    rng: np.random.Generator,
) -> CrossoverResult:
    """Pick two sufficiently different parents and recombine them.

    Parent pairs are re-drawn up to ``cfg.max_reselect`` times until their
    normalized Hamming distance exceeds ``cfg.diff_threshold``; the last
    pair is used regardless.  With probability ``cfg.p_crossover`` the
    pair exchanges ``cfg.crossover_points // 2`` segments, otherwise the
    parents pass through unchanged.
    """
    p1 = p2 = None
    diff = 0.0
    attempts = 0
    for attempts in range(1, cfg.max_reselect + 1):
        p1 = binary_tournament(pop, rng)
        p2 = binary_tournament(pop, rng)
        diff = normalized_hamming(p1.genotype, p2.genotype)
        if diff > cfg.diff_threshold:
            break
    met = diff > cfg.diff_threshold

    crossed = rng.random() < cfg.p_crossover
    if crossed:
        cuts = np.sort(
            rng.choice(p1.genotype.length, size=cfg.crossover_points,
                       replace=False)
        )
        b1, b2 = exchange_segments(
            genotype_to_bits(p1.genotype), genotype_to_bits(p2.genotype), cuts
        )
        offspring = (
            _rebuild_like(p1.genotype, b1),
            _rebuild_like(p1.genotype, b2),
        )
    else:
        offspring = (p1.genotype, p2.genotype)

    stats = CrossoverStats(
        diff=diff,
        attempts=attempts,
        met_threshold=met,
        crossed=crossed,
        parent_uids=(p1.uid, p2.uid),
    )
    return CrossoverResult(offspring=offspring, stats=stats)


def _rebuild_like(template: Genotype, bits: np.ndarray) -> Genotype:
    """Reassemble a genotype with the same block layout as ``template``."""
    blocks = []
    pos = 0
    for block in template.blocks:
        width = OP_GENE_BITS + len(block.conn_bits)
        chunk = bits[pos:pos + width]
        op_id = int("".join(str(int(b)) for b in chunk[:OP_GENE_BITS]), 2)
        conn = tuple(int(b) for b in chunk[OP_GENE_BITS:])
        blocks.append(BlockGene(op_id=op_id, conn_bits=conn))
        pos += width
    return Genotype(blocks=tuple(blocks))


def mutate(genotype: Genotype, cfg: EvolutionConfig,
           rng: np.random.Generator) -> Genotype:
    """With probability p_mutation, flip each bit independently at p_bit_flip."""
    if rng.random() >= cfg.p_mutation:
        return genotype
    bits = genotype_to_bits(genotype)
    mask = rng.random(bits.size) < cfg.p_bit_flip
    if not mask.any():
        return genotype
    return _rebuild_like(genotype, bits ^ mask)


def _ranked_indices(pool: Sequence[Individual]) -> list[int]:
    """Pool indices sorted by fitness descending, insertion order on ties."""
    if any(ind.fitness is None for ind in pool):
        raise ValueError("environmental selection over unevaluated individuals")
    return sorted(range(len(pool)), key=lambda i: (-pool[i].fitness, i))


def environmental_select(
    parents: Population,
    offspring: Population,
    cfg: EvolutionConfig,
    rng: np.random.Generator,
) -> Population:
    """Build the next generation of exactly ``population_size`` individuals.

    ``elitist_plus_tournament`` keeps the ``elite_size`` fittest of the
    combined pool and fills the remainder by binary tournament (with
    replacement) over the non-elite pool; ``top_n`` keeps the N fittest;
    ``elitist_1`` keeps only the single best before tournament filling.
    """
    n = cfg.population_size
    if len(parents) != n:
        raise ValueError(f"expected {n} parents, got {len(parents)}")
    pool = list(parents) + list(offspring)
    ranked = _ranked_indices(pool)

    if cfg.selection_strategy == "top_n":
        return [pool[i] for i in ranked[:n]]

    elite_size = 1 if cfg.selection_strategy == "elitist_1" else cfg.elite_size
    elite_idx = ranked[:elite_size]
    elites = [pool[i] for i in elite_idx]

    if cfg.tournament_pool == "parents":
        fill_pool = [
            parents[i] for i in range(len(parents))
            if i not in set(elite_idx)
        ]
    else:
        fill_pool = [
            pool[i] for i in sorted(set(range(len(pool))) - set(elite_idx))
        ]
    if len(fill_pool) < 2:
        raise ValueError("tournament fill pool must hold at least 2 individuals")

    selected = list(elites)
    while len(selected) < n:
        selected.append(binary_tournament(fill_pool, rng))
    return selected


def best_of(pop: Sequence[Individual]) -> Individual:
    """Fittest individual, ties broken by position (older first)."""
    ranked = _ranked_indices(pop)
    return pop[ranked[0]]


def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def _spawn_offspring(
    population: Population,
    cfg: EvolutionConfig,
    rng: np.random.Generator,
    generation: int,
    next_uid: int,
) -> tuple[Population, list[CrossoverStats], int]:
    offspring: Population = []
    stats: list[CrossoverStats] = []
    while len(offspring) < cfg.population_size:
        result = difference_guided_crossover(population, cfg, rng)
        stats.append(result.stats)
        for child_genotype in result.offspring:
            mutated = mutate(child_genotype, cfg, rng)
            if len(offspring) >= cfg.population_size:
                break  # odd population size: drop the surplus child
            offspring.append(
                Individual(
                    genotype=mutated,
                    uid=next_uid,
                    birth_generation=generation,
                    parent_uids=result.stats.parent_uids,
                )
            )
            next_uid += 1
    return offspring, stats, next_uid


def evolve(
    cfg: EvolutionConfig,
    space: SearchSpaceConfig,
    evaluator: Evaluator,
    run_dir: str | Path | None = None,
    parallelism: int = 1,
    progress: Callable[[int, Individual], None] | None = None,
) -> RunLog:
    """Run the full search loop from a fresh random population.

    Every stochastic choice is driven by a single seeded generator, so a
    given (config, space, evaluator) triple always produces the same log.
    Fitness evaluation never consumes randomness.
    """
    if cfg.crossover_points > space.genome_length:
        raise ValueError(
            f"crossover_points={cfg.crossover_points} exceeds genome length "
            f"{space.genome_length}"
        )
    log = RunLog.create(
        run_dir=run_dir,
        config=cfg.to_dict(),
        space=space.to_dict(),
        evaluator_spec=evaluator.spec,
        evaluator_identity=evaluator.identity,
        evaluator_options=getattr(evaluator, "options", {}),
    )
    cache = FitnessCache(log.cache_path)
    rng = np.random.default_rng(cfg.rng_seed)

    population = [
        Individual(genotype=random_genotype(rng, space), uid=uid)
        for uid in range(cfg.population_size)
    ]
    next_uid = cfg.population_size
    evaluate_population(population, evaluator, cache, parallelism)
    log.append_generation(
        GenerationRecord(
            generation=0,
            population=[ind.to_dict() for ind in population],
            offspring=[],
            crossover=[],
            best=best_of(population).to_dict(),
            next_uid=next_uid,
            rng_state=_rng_state(rng),
        )
    )
    if progress is not None:
        progress(0, best_of(population))

    return _run_generations(
        log, cfg, space, evaluator, cache, rng, population, next_uid,
        start_generation=1, parallelism=parallelism, progress=progress,
    )


def _run_generations(
    log: RunLog,
    cfg: EvolutionConfig,
    space: SearchSpaceConfig,
    evaluator: Evaluator,
    cache: FitnessCache,
    rng: np.random.Generator,
    population: Population,
    next_uid: int,
    start_generation: int,
    parallelism: int,
    progress: Callable[[int, Individual], None] | None,
) -> RunLog:
    for t in range(start_generation, cfg.generations + 1):
        offspring, stats, next_uid = _spawn_offspring(
            population, cfg, rng, t, next_uid
        )
        evaluate_population(offspring, evaluator, cache, parallelism)
        population = environmental_select(population, offspring, cfg, rng)
        log.append_generation(
            GenerationRecord(
                generation=t,
                population=[ind.to_dict() for ind in population],
                offspring=[ind.to_dict() for ind in offspring],
                crossover=[s.to_dict() for s in stats],
                best=best_of(population).to_dict(),
                next_uid=next_uid,
                rng_state=_rng_state(rng),
            )
        )
        if progress is not None:
            progress(t, best_of(population))
    log.finalize(top_k=5)
    return log


def resume(
    run_dir: str | Path,
    evaluator: Evaluator | None = None,
    parallelism: int = 1,
    progress: Callable[[int, Individual], None] | None = None,
) -> RunLog:
    """Continue an interrupted run from its directory.

    The log plus the persisted fitness cache reconstruct the exact state;
    replayed generations reuse cached fitness values, so the resumed log
    is byte-identical to what the uninterrupted run would have written.
    When ``evaluator`` is omitted it is rebuilt from the logged spec.
    """
    from .fitness import build_evaluator

    log = RunLog.load(run_dir)
    cfg = EvolutionConfig.from_dict(log.config)
    space = SearchSpaceConfig.from_dict(log.space)
    if evaluator is None:
        evaluator = build_evaluator(
            log.evaluator_spec, space, **log.evaluator_options
        )
    if evaluator.identity != log.evaluator_identity:
        raise EvaluationError(
            f"evaluator identity {evaluator.identity!r} does not match the "
            f"run's {log.evaluator_identity!r}"
        )
    if not log.records:
        raise ValueError(f"run log in {run_dir} holds no generations")

    last = log.records[-1]
    if last.generation >= cfg.generations:
        return log  # already complete

    cache = FitnessCache(log.cache_path)
    rng = np.random.default_rng(cfg.rng_seed)
    rng.bit_generator.state = last.rng_state
    population = [
        Individual(
            genotype=_parse_member(member, space),
            fitness=member["fitness"],
            uid=member["uid"],
            birth_generation=member["birth_generation"],
            parent_uids=tuple(member["parent_uids"]),
        )
        for member in last.population
    ]
    return _run_generations(
        log, cfg, space, evaluator, cache, rng, population, last.next_uid,
        start_generation=last.generation + 1, parallelism=parallelism,
        progress=progress,
    )


def _parse_member(member: dict, space: SearchSpaceConfig) -> Genotype:
    return parse_genotype(member["genome"], space)
