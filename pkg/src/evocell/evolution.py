"""The generational search loop.

Each generation, in order: underperforming unused genes are culled from
both pools, the pools breed a bounded number of gene children, the
population spawns its children (new reduction cells first, then new
individuals, each picking a reduction cell by tournament), everyone alive
trains, and survivor selection trims back to the population size while
always preserving the best individual. Thresholds follow the survivors:
the gene-cull threshold becomes the worst survivor's fitness, the
extra-epoch reward threshold a fraction of it.

Every mutation of the state draws from one owned RNG stream in one fixed
order, so identical seeds give identical runs and snapshots resume
bit-identically.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field

from . import genepool as gp
from .compiler import BudgetExceeded, ModelDescriptor, assemble_network
from .fitness import EvaluationFailure, build_request
from .karva import Genotype, random_genotype
from .persistence import genotype_from_dict, genotype_to_dict, pool_from_dict, pool_to_dict
from .search_space import Context, SearchConfig, alphabet_for

SPAWN_RETRY_LIMIT = 100  # budget redraws per child slot


class SpawnAborted(RuntimeError):
    """Could not draw a within-budget child after the retry limit."""


@dataclass
class Individual:
    id: int
    normal_genotype: Genotype
    reduction_cell_id: int
    fitness: float | None = None
    epochs_trained: int = 0
    birth_generation: int = 0
    alive: bool = True
    marked_dead: bool = False


@dataclass
class ReductionCell:
    id: int
    genotype: Genotype
    fitness: float | None = None
    in_use_count: int = 0
    alive: bool = True
    marked_dead: bool = False


@dataclass
class BestEver:
    """Self-contained record of the best candidate seen, with its genes frozen."""

    fitness: float
    generation: int
    individual_id: int
    normal_genotype: Genotype
    reduction_genotype: Genotype
    normal_genes: dict[int, Genotype]
    reduction_genes: dict[int, Genotype]

    def to_dict(self) -> dict:
        return {
            "fitness": self.fitness,
            "generation": self.generation,
            "individual_id": self.individual_id,
            "normal_genotype": genotype_to_dict(self.normal_genotype),
            "reduction_genotype": genotype_to_dict(self.reduction_genotype),
            "normal_genes": {str(k): genotype_to_dict(v) for k, v in self.normal_genes.items()},
            "reduction_genes": {str(k): genotype_to_dict(v) for k, v in self.reduction_genes.items()},
        }

    @staticmethod
    def from_dict(d: dict) -> "BestEver":
        return BestEver(
            fitness=d["fitness"],
            generation=d["generation"],
            individual_id=d["individual_id"],
            normal_genotype=genotype_from_dict(d["normal_genotype"]),
            reduction_genotype=genotype_from_dict(d["reduction_genotype"]),
            normal_genes={int(k): genotype_from_dict(v) for k, v in d["normal_genes"].items()},
            reduction_genes={int(k): genotype_from_dict(v) for k, v in d["reduction_genes"].items()},
        )


@dataclass
class SearchState:
    config: SearchConfig
    generation: int = 0
    individuals: dict[int, Individual] = field(default_factory=dict)
    reduction_cells: dict[int, ReductionCell] = field(default_factory=dict)
    normal_gene_pool: gp.GenePool | None = None
    reduction_gene_pool: gp.GenePool | None = None
    gene_threshold: float | None = None   # T_g; None = no culling yet
    reward_threshold: float | None = None  # T_c; None = no bonus epochs yet
    rng: random.Random = field(default_factory=random.Random)
    elapsed_seconds: float = 0.0
    event_count: int = 0
    next_individual_id: int = 0
    next_cell_id: int = 0
    best_ever: BestEver | None = None

    # -- liveness views ----------------------------------------------------

    def alive_individuals(self) -> list[Individual]:
        return sorted((i for i in self.individuals.values() if i.alive), key=lambda i: i.id)

    def alive_cells(self) -> list[ReductionCell]:
        return sorted((c for c in self.reduction_cells.values() if c.alive), key=lambda c: c.id)

    def new_individual(self, genotype: Genotype, cell_id: int, generation: int) -> Individual:
        ind = Individual(
            id=self.next_individual_id, normal_genotype=genotype,
            reduction_cell_id=cell_id, birth_generation=generation,
        )
        self.individuals[ind.id] = ind
        self.next_individual_id += 1
        return ind

    def new_cell(self, genotype: Genotype) -> ReductionCell:
        cell = ReductionCell(id=self.next_cell_id, genotype=genotype)
        self.reduction_cells[cell.id] = cell
        self.next_cell_id += 1
        return cell

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        st = self.rng.getstate()
        return {
            "generation": self.generation,
            "gene_threshold": self.gene_threshold,
            "reward_threshold": self.reward_threshold,
            "elapsed_seconds": self.elapsed_seconds,
            "event_count": self.event_count,
            "next_individual_id": self.next_individual_id,
            "next_cell_id": self.next_cell_id,
            "rng_state": [st[0], list(st[1]), st[2]],
            "individuals": [
                {
                    "id": i.id,
                    "normal_genotype": genotype_to_dict(i.normal_genotype),
                    "reduction_cell_id": i.reduction_cell_id,
                    "fitness": i.fitness,
                    "epochs_trained": i.epochs_trained,
                    "birth_generation": i.birth_generation,
                    "alive": i.alive,
                    "marked_dead": i.marked_dead,
                }
                for i in sorted(self.individuals.values(), key=lambda i: i.id)
            ],
            "reduction_cells": [
                {
                    "id": c.id,
                    "genotype": genotype_to_dict(c.genotype),
                    "fitness": c.fitness,
                    "in_use_count": c.in_use_count,
                    "alive": c.alive,
                    "marked_dead": c.marked_dead,
                }
                for c in sorted(self.reduction_cells.values(), key=lambda c: c.id)
            ],
            "normal_gene_pool": pool_to_dict(self.normal_gene_pool),
            "reduction_gene_pool": pool_to_dict(self.reduction_gene_pool),
            "best_ever": self.best_ever.to_dict() if self.best_ever else None,
        }

    @staticmethod
    def from_dict(d: dict, config: SearchConfig | None = None) -> "SearchState":
        state = SearchState(config=config)
        state.generation = d["generation"]
        state.gene_threshold = d["gene_threshold"]
        state.reward_threshold = d["reward_threshold"]
        state.elapsed_seconds = d["elapsed_seconds"]
        state.event_count = d["event_count"]
        state.next_individual_id = d["next_individual_id"]
        state.next_cell_id = d["next_cell_id"]
        st = d["rng_state"]
        state.rng.setstate((st[0], tuple(st[1]), st[2]))
        for idata in d["individuals"]:
            state.individuals[idata["id"]] = Individual(
                id=idata["id"],
                normal_genotype=genotype_from_dict(idata["normal_genotype"]),
                reduction_cell_id=idata["reduction_cell_id"],
                fitness=idata["fitness"],
                epochs_trained=idata["epochs_trained"],
                birth_generation=idata["birth_generation"],
                alive=idata["alive"],
                marked_dead=idata["marked_dead"],
            )
        for cdata in d["reduction_cells"]:
            state.reduction_cells[cdata["id"]] = ReductionCell(
                id=cdata["id"],
                genotype=genotype_from_dict(cdata["genotype"]),
                fitness=cdata["fitness"],
                in_use_count=cdata["in_use_count"],
                alive=cdata["alive"],
                marked_dead=cdata["marked_dead"],
            )
        state.normal_gene_pool = pool_from_dict(d["normal_gene_pool"])
        state.reduction_gene_pool = pool_from_dict(d["reduction_gene_pool"])
        if d["best_ever"]:
            state.best_ever = BestEver.from_dict(d["best_ever"])
        return state


# --------------------------------------------------------------------------
# selection


def tournament_select(population, k: int, rng: random.Random):
    """Best of k draws with replacement; unevaluated members rank below any
    evaluated one, fitness ties go to the lower id."""
    members = list(population)
    if not members:
        raise ValueError("tournament over an empty population")
    drawn = [members[rng.randrange(len(members))] for _ in range(k)]
    return max(drawn, key=lambda m: (m.fitness is not None, m.fitness if m.fitness is not None else 0.0, -m.id))


def _eligible_cells(state: SearchState) -> list[ReductionCell]:
    cells = [c for c in state.alive_cells() if not c.marked_dead]
    # if everything alive is marked (degenerate), fall back rather than deadlock
    return cells or state.alive_cells()


# --------------------------------------------------------------------------
# candidate compilation and the parameter budget


def compile_candidate(state: SearchState, genotype: Genotype, cell_id: int, *, width: int | None = None, enforce_budget: bool = True) -> ModelDescriptor:
    cfg = state.config
    cell = state.reduction_cells[cell_id]
    return assemble_network(
        genotype,
        cell.genotype,
        state.normal_gene_pool,
        state.reduction_gene_pool,
        profile=cfg.profile,
        width=width if width is not None else cfg.search_width,
        normal_repeats=cfg.normal_repeats,
        classes=cfg.classes,
        param_limit=cfg.param_limit if enforce_budget else None,
    )


def _draw_within_budget(state: SearchState, draw) -> tuple[Genotype, int, ModelDescriptor, int]:
    """Run `draw` until the candidate fits the parameter budget.

    Returns (genotype, cell_id, descriptor, rejected_count). Over-budget
    candidates are stillborn: discarded and redrawn, never entering the
    population.
    """
    rejected = 0
    for _ in range(SPAWN_RETRY_LIMIT):
        genotype, cell_id = draw()
        try:
            descriptor = compile_candidate(state, genotype, cell_id)
        except BudgetExceeded:
            rejected += 1
            continue
        return genotype, cell_id, descriptor, rejected
    raise SpawnAborted(
        f"no candidate fit the {state.config.param_limit}-parameter budget "
        f"in {SPAWN_RETRY_LIMIT} draws (generation {state.generation})"
    )


# --------------------------------------------------------------------------
# the generational workflow steps


def init_search(config: SearchConfig, rng: random.Random | None = None) -> SearchState:
    """Gene pools, the initial reduction cells, and the first population."""
    config.validate()
    state = SearchState(config=config)
    if rng is not None:
        state.rng = rng
    else:
        state.rng.seed(config.rng_seed)
    r = state.rng
    state.normal_gene_pool = gp.init_pool(
        Context.NORMAL_GENE, config.gene_pool_init, r, head_len=config.gene_head_len
    )
    state.reduction_gene_pool = gp.init_pool(
        Context.REDUCTION_GENE, config.gene_pool_init, r, head_len=config.gene_head_len
    )
    for _ in range(config.reduction_pool_init):
        state.new_cell(random_genotype(
            Context.REDUCTION_CELL, r,
            head_len=config.cell_head_len, gene_ids=state.reduction_gene_pool.ids(),
        ))
    cell_ids = sorted(state.reduction_cells)
    for _ in range(config.population_size):
        def draw():
            genotype = random_genotype(
                Context.NORMAL_CELL, r,
                head_len=config.cell_head_len, gene_ids=state.normal_gene_pool.ids(),
            )
            return genotype, cell_ids[r.randrange(len(cell_ids))]
        genotype, cell_id, _, _ = _draw_within_budget(state, draw)
        state.new_individual(genotype, cell_id, generation=0)
    return state


def spawn_generation(state: SearchState, events: list) -> None:
    """New reduction cells, then new individuals (children add to the population)."""
    cfg = state.config
    r = state.rng
    parents = state.alive_individuals()
    cell_parents = _eligible_cells(state)
    cell_alphabet = alphabet_for(Context.REDUCTION_CELL, gene_ids=state.reduction_gene_pool.ids())
    normal_alphabet = alphabet_for(Context.NORMAL_CELL, gene_ids=state.normal_gene_pool.ids())

    from .reproduction import reproduce_pair

    new_cells = []
    for _ in range(cfg.reduction_pool_init):
        pa = tournament_select(cell_parents, cfg.tournament_size, r)
        pb = tournament_select(cell_parents, cfg.tournament_size, r)
        child, _ = reproduce_pair(pa.genotype, pb.genotype, cfg.rates, r, cell_alphabet)
        new_cells.append(state.new_cell(child).id)

    assignable = _eligible_cells(state)
    children = []
    total_rejected = 0
    for _ in range(cfg.population_size):
        def draw():
            pa = tournament_select(parents, cfg.tournament_size, r)
            pb = tournament_select(parents, cfg.tournament_size, r)
            child, _ = reproduce_pair(pa.normal_genotype, pb.normal_genotype, cfg.rates, r, normal_alphabet)
            cell = tournament_select(assignable, cfg.tournament_size, r)
            return child, cell.id
        genotype, cell_id, _, rejected = _draw_within_budget(state, draw)
        total_rejected += rejected
        ind = state.new_individual(genotype, cell_id, generation=state.generation)
        children.append({"id": ind.id, "reduction_cell": cell_id})

    events.append({
        "gen": state.generation, "event": "spawn",
        "cell_children": new_cells, "children": children, "rejected": total_rejected,
    })


def step_training(state: SearchState, evaluator, events: list) -> None:
    """Train every alive individual one epoch, reward those above the
    threshold with a second, and retire anyone reaching the epoch limit."""
    cfg = state.config
    records = []
    for ind in state.alive_individuals():
        if ind.epochs_trained >= cfg.epochs_max:
            continue  # retired but protected (elite); fitness frozen
        epochs_before = ind.epochs_trained
        first = _train_one_epoch(state, ind, evaluator)
        bonus = False
        if (
            state.reward_threshold is not None
            and ind.fitness >= state.reward_threshold
            and ind.epochs_trained < cfg.epochs_max
        ):
            bonus = True
            _train_one_epoch(state, ind, evaluator)
        if ind.epochs_trained >= cfg.epochs_max:
            ind.marked_dead = True
            state.reduction_cells[ind.reduction_cell_id].marked_dead = True
        records.append({
            "id": ind.id, "epochs_before": epochs_before, "first_fitness": first,
            "bonus": bonus, "final_fitness": ind.fitness,
            "epochs_after": ind.epochs_trained, "marked_dead": ind.marked_dead,
        })
    events.append({
        "gen": state.generation, "event": "train",
        "reward_threshold": state.reward_threshold, "records": records,
    })


def _train_one_epoch(state: SearchState, ind: Individual, evaluator) -> float:
    descriptor = _candidate_descriptor(state, ind)
    request = build_request(
        descriptor, candidate_id=ind.id, epochs_to_train=1,
        cumulative_epochs=ind.epochs_trained + 1,
    )
    try:
        record = evaluator.evaluate(request)
        fitness = record.fitness
    except EvaluationFailure:
        fitness = 0.0
    ind.epochs_trained += 1
    ind.fitness = fitness
    _attribute(state, ind)
    _update_best(state, ind)
    return fitness


def _candidate_descriptor(state: SearchState, ind: Individual) -> ModelDescriptor:
    # compiled descriptors are immutable per individual (gene genotypes never
    # mutate in place), so each state memoizes them for its lifetime
    cache = getattr(state, "_descriptor_cache", None)
    if cache is None:
        cache = {}
        state._descriptor_cache = cache
    if ind.id not in cache:
        cache[ind.id] = compile_candidate(
            state, ind.normal_genotype, ind.reduction_cell_id, enforce_budget=False
        )
    return cache[ind.id]


def _attribute(state: SearchState, ind: Individual) -> None:
    fitness = ind.fitness
    gp.attribute_fitness(state.normal_gene_pool, fitness, ind.normal_genotype.gene_ids())
    cell = state.reduction_cells[ind.reduction_cell_id]
    gp.attribute_fitness(state.reduction_gene_pool, fitness, cell.genotype.gene_ids())
    if cell.fitness is None or fitness > cell.fitness:
        cell.fitness = fitness


def _update_best(state: SearchState, ind: Individual) -> None:
    if state.best_ever is not None and ind.fitness <= state.best_ever.fitness:
        return
    cell = state.reduction_cells[ind.reduction_cell_id]
    state.best_ever = BestEver(
        fitness=ind.fitness,
        generation=state.generation,
        individual_id=ind.id,
        normal_genotype=ind.normal_genotype,
        reduction_genotype=cell.genotype,
        normal_genes={
            g: state.normal_gene_pool.genotype_of(g) for g in ind.normal_genotype.gene_ids()
        },
        reduction_genes={
            g: state.reduction_gene_pool.genotype_of(g) for g in cell.genotype.gene_ids()
        },
    )


def survivor_select(state: SearchState, events: list) -> None:
    """Elitism, the oldest-individual kill, dead removal, fitness trimming,
    reduction-cell pruning, and the threshold updates."""
    cfg = state.config
    alive = state.alive_individuals()
    elite = max(alive, key=lambda i: (i.fitness, -i.id))

    oldest = min(alive, key=lambda i: (i.birth_generation, i.id))
    oldest_killed = None
    if oldest is not elite:
        oldest.alive = False
        oldest_killed = oldest.id

    removed_dead = []
    for ind in state.alive_individuals():
        if ind.marked_dead and ind is not elite:
            ind.alive = False
            removed_dead.append(ind.id)

    ranked = sorted(state.alive_individuals(), key=lambda i: (-i.fitness, i.id))
    trimmed = [i.id for i in ranked[cfg.population_size:]]
    for ind in ranked[cfg.population_size:]:
        ind.alive = False
    survivors = state.alive_individuals()

    # reduction cells: in-use survive unconditionally; the rest are trimmed
    # toward the reduction population target by fitness
    used_ids = {i.reduction_cell_id for i in survivors}
    for cell in state.reduction_cells.values():
        cell.in_use_count = sum(1 for i in survivors if i.reduction_cell_id == cell.id)
    cells_removed = []
    unused = [c for c in state.alive_cells() if c.id not in used_ids]
    for cell in unused:
        if cell.marked_dead:
            cell.alive = False
            cells_removed.append(cell.id)
    still_unused = [c for c in state.alive_cells() if c.id not in used_ids]
    keep = max(cfg.reduction_pool_init - len(used_ids), 0)
    ranked_cells = sorted(
        still_unused,
        key=lambda c: (c.fitness is not None, c.fitness if c.fitness is not None else 0.0, -c.id),
        reverse=True,
    )
    for cell in ranked_cells[keep:]:
        cell.alive = False
        cells_removed.append(cell.id)

    # physically drop dead records; ids never get reused
    for iid in [i for i, ind in state.individuals.items() if not ind.alive]:
        del state.individuals[iid]
    for cid in [c for c, cell in state.reduction_cells.items() if not cell.alive]:
        del state.reduction_cells[cid]

    state.gene_threshold = min(i.fitness for i in survivors)
    state.reward_threshold = cfg.reward_fraction * state.gene_threshold

    _refresh_usage(state)
    events.append({
        "gen": state.generation, "event": "survivor_select",
        "elite": elite.id, "oldest_killed": oldest_killed,
        "removed_dead": removed_dead, "trimmed": trimmed,
        "cells_removed": sorted(cells_removed),
        "survivors": [i.id for i in survivors],
        "gene_threshold": state.gene_threshold,
        "reward_threshold": state.reward_threshold,
    })


def _refresh_usage(state: SearchState) -> None:
    gp.recompute_usage(
        state.normal_gene_pool,
        (i.normal_genotype for i in state.alive_individuals()),
    )
    gp.recompute_usage(
        state.reduction_gene_pool,
        (c.genotype for c in state.alive_cells()),
    )


def _gene_maintenance(state: SearchState, events: list) -> None:
    """Cull both pools against the gene threshold, then breed children."""
    cfg = state.config
    _refresh_usage(state)
    for pool in (state.normal_gene_pool, state.reduction_gene_pool):
        removed = gp.cull(pool, state.gene_threshold)
        events.append({
            "gen": state.generation, "event": "gene_cull",
            "pool": pool.context.value, "removed": removed,
            "gene_threshold": state.gene_threshold,
        })
    for pool in (state.normal_gene_pool, state.reduction_gene_pool):
        created = gp.reproduce_genes(
            pool, cfg.gene_children_min, cfg.gene_children_max, cfg.gene_pool_max,
            cfg.tournament_size, cfg.rates, state.rng, state.generation,
        )
        events.append({
            "gen": state.generation, "event": "gene_reproduce",
            "pool": pool.context.value, "created": created,
        })


# --------------------------------------------------------------------------
# the run loop


@dataclass
class SearchResult:
    best: BestEver
    state: SearchState
    events: list
    stats: list


def _generation_stats(state: SearchState) -> dict:
    alive = state.alive_individuals()
    fits = [i.fitness for i in alive if i.fitness is not None]
    return {
        "gen": state.generation,
        "alive": len(alive),
        "cells_alive": len(state.alive_cells()),
        "normal_pool": len(state.normal_gene_pool),
        "reduction_pool": len(state.reduction_gene_pool),
        "best_fitness": max(fits) if fits else None,
        "mean_fitness": sum(fits) / len(fits) if fits else None,
        "best_ever": state.best_ever.fitness if state.best_ever else None,
        "gene_threshold": state.gene_threshold,
        "reward_threshold": state.reward_threshold,
    }


def _budget_exhausted(state: SearchState) -> bool:
    cfg = state.config
    if cfg.budget_generations is not None:
        return state.generation >= cfg.budget_generations
    return state.elapsed_seconds >= cfg.budget_seconds


def run_search(config: SearchConfig, evaluator, *, state: SearchState | None = None, on_generation=None) -> SearchResult:
    """Run (or continue) the search until the budget is spent.

    Generation 0 is initialization plus a single training epoch for every
    founder; each later generation runs gene-cull, gene-reproduce, spawn,
    train, survivor-select, in that order. The budget is checked at
    generation boundaries only, so a wall-clock budget can overshoot by one
    generation.
    """
    events: list = []
    stats: list = []
    # wall time is budget-accounting state; generation-budget runs keep it at
    # zero so identical invocations produce byte-identical snapshots
    track_time = config.budget_seconds is not None
    if state is None:
        config.validate()
        started = time.monotonic()
        state = init_search(config)
        events.append({
            "gen": 0, "event": "init",
            "individuals": [i.id for i in state.alive_individuals()],
            "reduction_cells": [c.id for c in state.alive_cells()],
            "normal_pool": len(state.normal_gene_pool),
            "reduction_pool": len(state.reduction_gene_pool),
        })
        step_training(state, evaluator, events)
        stats.append(_generation_stats(state))
        if track_time:
            state.elapsed_seconds += time.monotonic() - started
        if on_generation:
            on_generation(state, events, stats)
    else:
        state.config = config

    while not _budget_exhausted(state):
        started = time.monotonic()
        state.generation += 1
        _gene_maintenance(state, events)
        spawn_generation(state, events)
        step_training(state, evaluator, events)
        survivor_select(state, events)
        stats.append(_generation_stats(state))
        if track_time:
            state.elapsed_seconds += time.monotonic() - started
        if on_generation:
            on_generation(state, events, stats)
    state.event_count += len(events)
    return SearchResult(best=state.best_ever, state=state, events=events, stats=stats)


def random_baseline(config: SearchConfig, evaluator, count: int, *, rng: random.Random | None = None) -> list[float]:
    """Fitness of `count` random within-budget candidates after full training."""
    if count == 0:
        return []
    config.validate()
    state = SearchState(config=config)
    if rng is not None:
        state.rng = rng
    else:
        state.rng.seed(config.rng_seed)
    r = state.rng
    state.normal_gene_pool = gp.init_pool(
        Context.NORMAL_GENE, config.gene_pool_init, r, head_len=config.gene_head_len
    )
    state.reduction_gene_pool = gp.init_pool(
        Context.REDUCTION_GENE, config.gene_pool_init, r, head_len=config.gene_head_len
    )
    for _ in range(config.reduction_pool_init):
        state.new_cell(random_genotype(
            Context.REDUCTION_CELL, r,
            head_len=config.cell_head_len, gene_ids=state.reduction_gene_pool.ids(),
        ))
    cell_ids = sorted(state.reduction_cells)
    results = []
    for i in range(count):
        def draw():
            genotype = random_genotype(
                Context.NORMAL_CELL, r,
                head_len=config.cell_head_len, gene_ids=state.normal_gene_pool.ids(),
            )
            return genotype, cell_ids[r.randrange(len(cell_ids))]
        genotype, cell_id, descriptor, _ = _draw_within_budget(state, draw)
        request = build_request(
            descriptor, candidate_id=i, epochs_to_train=config.epochs_max,
            cumulative_epochs=config.epochs_max,
        )
        try:
            results.append(evaluator.evaluate(request).fitness)
        except EvaluationFailure:
            results.append(0.0)
    return results
