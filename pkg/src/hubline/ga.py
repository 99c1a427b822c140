"""Seeded genetic-algorithm engine.

Operator suite: roulette-wheel selection, single-point crossover with
post-crossover repair, single-position mutation with repair-and-retry,
and elitism (the best individual ever seen re-enters each generation).
The whole evolution trace is a pure function of the problem and the
seed; fitness values must be finite and non-negative.

A problem object supplies:

    random_genes(rng) -> ndarray      fresh feasible-ish genes
    repair(genes) -> ndarray          project genes onto the feasible set
    fitness(genes) -> float           >= 0, larger is better
    mutate_position(genes, pos, rng) -> ndarray   change one gene
    feasible(genes) -> bool           optional; default: always true
    seed_genes() -> list[ndarray]     optional; injected into generation 0
"""

import csv
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class GAParams:
    population_size: int = 50
    generations: int = 500
    crossover_prob: float = 0.8
    mutation_prob: float = 0.5
    seed: Optional[int] = None

    def __post_init__(self):
        if self.population_size < 2 or self.population_size % 2:
            raise ValueError("population size must be even and at least 2")
        if self.generations < 1:
            raise ValueError("need at least one generation")
        for p in (self.crossover_prob, self.mutation_prob):
            if not 0 <= p <= 1:
                raise ValueError("operator probabilities must lie in [0, 1]")


@dataclass
class Individual:
    genes: np.ndarray
    fitness: float


@dataclass
class EvolutionResult:
    best: Individual
    history: np.ndarray  # (generations, 2): best and mean fitness per generation

    def history_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["generation", "best", "mean"])
            for g, (b, m) in enumerate(self.history):
                w.writerow([g, f"{b:.9g}", f"{m:.9g}"])


def roulette_select(fitnesses, count: int, rng: np.random.Generator) -> np.ndarray:
    """Indices drawn with replacement, proportionally to fitness.

    A population whose fitness sums to zero is drawn uniformly.
    """
    fits = np.asarray(fitnesses, dtype=float)
    if np.any(fits < 0):
        raise ValueError("roulette selection needs non-negative fitness values")
    total = fits.sum()
    if total <= 0:
        return rng.integers(0, len(fits), size=count)
    return rng.choice(len(fits), size=count, replace=True, p=fits / total)


def single_point_crossover(
    a: np.ndarray, b: np.ndarray, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Swap the gene segment from a uniformly chosen position onwards.

    Position 0 exchanges the full chromosomes.
    """
    if a.shape != b.shape:
        raise ValueError(f"cannot cross individuals of lengths {a.shape} and {b.shape}")
    point = int(rng.integers(0, len(a)))
    child1 = np.concatenate([a[:point], b[point:]])
    child2 = np.concatenate([b[:point], a[point:]])
    return child1, child2


def mutate_gene(
    genes: np.ndarray, problem, rng: np.random.Generator, max_retries: int = 100
) -> np.ndarray:
    """Perturb one uniformly chosen position, then repair; re-mutate until
    the repaired genes are feasible (bounded retries)."""
    feasible = getattr(problem, "feasible", None)
    for _ in range(max_retries):
        pos = int(rng.integers(0, len(genes)))
        candidate = problem.repair(problem.mutate_position(genes, pos, rng))
        if feasible is None or feasible(candidate):
            return candidate
    raise RuntimeError(f"mutation failed to reach a feasible individual in {max_retries} tries")


def evolve(problem, params: GAParams) -> EvolutionResult:
    """Run the engine and return the best individual ever evaluated plus the
    per-generation (best, mean) fitness trace."""
    rng = np.random.default_rng(params.seed)
    m = params.population_size

    seeds = list(getattr(problem, "seed_genes", lambda: [])())[:m]
    population: List[np.ndarray] = [problem.repair(np.array(g, dtype=float)) for g in seeds]
    while len(population) < m:
        population.append(problem.repair(problem.random_genes(rng)))

    best: Optional[Individual] = None
    history = np.zeros((params.generations, 2))

    for gen in range(params.generations):
        fits = np.array([problem.fitness(g) for g in population])
        if not np.all(np.isfinite(fits)) or np.any(fits < 0):
            raise ValueError("fitness must be finite and non-negative")
        top = int(np.argmax(fits))
        if best is None or fits[top] > best.fitness:
            best = Individual(population[top].copy(), float(fits[top]))
        history[gen] = (best.fitness, float(fits.mean()))

        if gen == params.generations - 1:
            break

        parent_idx = roulette_select(fits, m, rng)
        parents = [population[i] for i in parent_idx]
        children: List[np.ndarray] = []
        for p in range(m // 2):
            a, b = parents[2 * p], parents[2 * p + 1]
            if rng.random() < params.crossover_prob:
                c1, c2 = single_point_crossover(a, b, rng)
                children.append(problem.repair(c1))
                children.append(problem.repair(c2))
            else:
                children.append(a.copy())
                children.append(b.copy())
        for idx in range(m):
            if rng.random() < params.mutation_prob:
                children[idx] = mutate_gene(children[idx], problem, rng)
        children[0] = best.genes.copy()  # elitism
        population = children

    return EvolutionResult(best=best, history=history)
