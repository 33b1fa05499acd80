"""Microbial-GA pathway search.

Each generation: draw two distinct genotypes, train and score both on the
task (sequentially, same parameter bank), overwrite the loser with a mutated
copy of the winner. Fitness is the running rate of correct predictions over
one shuffled pass of the training set, measured on each batch before that
batch's update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import HyperParams
from .data import ArrayDataset
from .network import (
    Genotype,
    ModuleBank,
    add_head,
    forward,
    init_params,
    loss_and_grads,
    random_genotype,
    sgd_step,
)


@dataclass
class FitnessRecord:
    genotype: Genotype
    accuracy: float
    batches_seen: int


@dataclass
class GenerationRecord:
    generation: int
    winner_index: int
    winner_fitness: float
    loser_fitness: float
    test_accuracy: float | None = None


@dataclass
class EvolutionState:
    population: list[Genotype]
    fitness: list[float | None]
    generation: int
    rng: np.random.Generator
    history: list[GenerationRecord] = field(default_factory=list)


def init_population(hp: HyperParams, rng: np.random.Generator) -> EvolutionState:
    """P random genotypes, genes i.i.d. uniform in [0, M-1], nothing scored."""
    population = [random_genotype(hp, rng) for _ in range(hp.population_size)]
    return EvolutionState(
        population=population,
        fitness=[None] * hp.population_size,
        generation=0,
        rng=rng,
    )


def mutate(
    g: Genotype, hp: HyperParams, rng: np.random.Generator, return_mask: bool = False
):
    """Independently per gene, with probability ``mutation_prob``, add a
    uniform integer delta from [-mutation_range, mutation_range] and wrap
    modulo M. A zero delta still counts as a mutation event."""
    mask = rng.random(g.genes.shape) < hp.mutation_prob
    deltas = rng.integers(-hp.mutation_range, hp.mutation_range + 1, size=g.genes.shape)
    genes = np.where(mask, (g.genes + deltas) % hp.modules_per_layer, g.genes)
    out = Genotype(genes)
    return (out, mask) if return_mask else out


def evaluate_pathway(
    bank: ModuleBank,
    g: Genotype,
    x: np.ndarray,
    y: np.ndarray,
    task_id: str,
    hp: HyperParams,
    rng: np.random.Generator,
    pinned: Genotype | None = None,
) -> FitnessRecord:
    """Train the pathway for one shuffled pass (ceil(n/B) SGD steps) and
    return its rate of correct pre-update predictions. The bank keeps the
    trained weights."""
    n = int(np.asarray(x).shape[0])
    if n == 0:
        raise ValueError("empty training set")
    order = rng.permutation(n)
    steps = math.ceil(n / hp.batch_size)
    correct = 0
    for t in range(steps):
        idx = order[t * hp.batch_size : (t + 1) * hp.batch_size]
        bx, by = x[idx], y[idx]
        probs = forward(bank, g, bx, task_id, pinned=pinned)
        correct += int((probs.argmax(axis=1) == by).sum())
        _, grads = loss_and_grads(bank, g, bx, by, task_id, pinned=pinned)
        sgd_step(bank, grads, hp.learning_rate)
    return FitnessRecord(genotype=g, accuracy=correct / n, batches_seen=steps)


def tournament_step(
    state: EvolutionState,
    hp: HyperParams,
    evaluate: Callable[[Genotype], float],
    probe: Callable[[Genotype], float] | None = None,
) -> GenerationRecord:
    """One microbial-GA generation. ``evaluate`` scores (and may train on)
    a genotype; ties make the second-drawn genotype the loser. The loser
    slot gets a mutated copy of the winner with its fitness cleared."""
    i, j = (int(v) for v in state.rng.choice(len(state.population), size=2, replace=False))
    fi = evaluate(state.population[i])
    fj = evaluate(state.population[j])
    state.fitness[i] = fi
    state.fitness[j] = fj
    winner, loser = (i, j) if fi >= fj else (j, i)
    child = mutate(state.population[winner].copy(), hp, state.rng)
    state.population[loser] = child
    state.fitness[loser] = None
    record = GenerationRecord(
        generation=state.generation,
        winner_index=winner,
        winner_fitness=max(fi, fj),
        loser_fitness=min(fi, fj),
        test_accuracy=probe(state.population[winner]) if probe else None,
    )
    state.history.append(record)
    state.generation += 1
    return record


def best_genotype(state: EvolutionState) -> tuple[Genotype, float]:
    """Member with the highest recorded fitness; ties go to the lowest
    population index. Stale scores count until re-evaluation."""
    best_i, best_f = None, -1.0
    for idx, f in enumerate(state.fitness):
        if f is not None and f > best_f:
            best_i, best_f = idx, f
    if best_i is None:
        raise ValueError("no fitness recorded")
    return state.population[best_i].copy(), best_f


@dataclass
class EvolveResult:
    best: Genotype
    best_fitness: float
    bank: ModuleBank
    history: list[GenerationRecord]
    state: EvolutionState


def evolve(
    train: ArrayDataset,
    hp: HyperParams,
    seed: int | np.random.SeedSequence,
    bank: ModuleBank | None = None,
    pinned: Genotype | None = None,
    probe: Callable[[ModuleBank, Genotype], float] | None = None,
) -> EvolveResult:
    """Full pathway search on one task: init population, run G tournaments,
    return the best pathway and the trained bank.

    The seed always spawns the same (bank, evolution) stream pair, so runs
    that share a seed draw identical populations whether or not a bank is
    supplied — that keeps transfer-vs-scratch comparisons paired.
    """
    ss = (
        seed
        if isinstance(seed, np.random.SeedSequence)
        else np.random.SeedSequence(seed)
    )
    bank_ss, evo_ss = ss.spawn(2)
    if bank is None:
        bank = init_params(hp, np.random.default_rng(bank_ss))
    rng = np.random.default_rng(evo_ss)
    task_id = train.name
    if task_id not in bank.heads:
        add_head(bank, task_id, len(train.class_list), rng)
    state = init_population(hp, rng)

    def run_eval(g: Genotype) -> float:
        return evaluate_pathway(
            bank, g, train.x, train.y, task_id, hp, rng, pinned=pinned
        ).accuracy

    probe_fn = (lambda g: probe(bank, g)) if probe else None
    for _ in range(hp.generations):
        tournament_step(state, hp, run_eval, probe=probe_fn)
    best, best_fit = best_genotype(state)
    return EvolveResult(
        best=best, best_fitness=best_fit, bank=bank, history=state.history, state=state
    )


HISTORY_COLUMNS = "generation,winner_index,winner_fitness,loser_fitness,test_accuracy"


def history_to_csv(history: list[GenerationRecord]) -> str:
    lines = [HISTORY_COLUMNS]
    for r in history:
        probe = "" if r.test_accuracy is None else repr(r.test_accuracy)
        lines.append(
            f"{r.generation},{r.winner_index},{r.winner_fitness!r},{r.loser_fitness!r},{probe}"
        )
    return "\n".join(lines) + "\n"
