"""The pool of reusable sub-tree modules (genes).

Genes never carry their own training signal; they inherit the best fitness
any host network achieved while using them. Unused genes whose inherited
fitness falls below the running threshold get culled each generation, and
the survivors breed a bounded number of children. Usage counts are always
recomputed from the referencing genotypes, never incrementally updated, so
they cannot drift.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable

from .karva import Genotype, random_genotype
from .reproduction import reproduce_pair
from .search_space import Context, OperatorRates, alphabet_for


@dataclass
class GeneRecord:
    id: int
    genotype: Genotype
    fitness: float | None = None
    in_use_count: int = 0
    birth_generation: int = 0
    weight_key: str = ""


def gene_weight_key(context: Context, gene_id: int) -> str:
    prefix = "gn" if context is Context.NORMAL_GENE else "gr"
    return f"{prefix}{gene_id}"


@dataclass
class GenePool:
    context: Context
    records: dict[int, GeneRecord] = field(default_factory=dict)
    next_id: int = 0

    def __len__(self) -> int:
        return len(self.records)

    def ids(self) -> list[int]:
        return sorted(self.records)

    def genotype_of(self, gene_id: int) -> Genotype:
        return self.records[gene_id].genotype

    def add(self, genotype: Genotype, generation: int) -> GeneRecord:
        rec = GeneRecord(
            id=self.next_id,
            genotype=genotype,
            birth_generation=generation,
            weight_key=gene_weight_key(self.context, self.next_id),
        )
        self.records[rec.id] = rec
        self.next_id += 1
        return rec

    def evaluated(self) -> list[GeneRecord]:
        return [r for r in self.records.values() if r.fitness is not None]


def init_pool(context: Context, size: int, rng: random.Random, *, head_len: int | None = None) -> GenePool:
    """A fresh pool of `size` random gene genotypes, nothing evaluated."""
    if size < 1:
        raise ValueError("pool size must be >= 1")
    if not context.is_gene:
        raise ValueError(f"gene pool context must be a gene context, got {context.value}")
    pool = GenePool(context=context)
    for _ in range(size):
        pool.add(random_genotype(context, rng, head_len=head_len), generation=0)
    return pool


def attribute_fitness(pool: GenePool, individual_fitness: float, gene_ids_used: Iterable[int]) -> None:
    """Credit a host's fitness to the genes it used: best host wins."""
    for gid in gene_ids_used:
        if gid not in pool.records:
            raise KeyError(f"gene {gid} not in {pool.context.value} pool (pool corruption)")
        rec = pool.records[gid]
        if rec.fitness is None or individual_fitness > rec.fitness:
            rec.fitness = individual_fitness


def recompute_usage(pool: GenePool, referencing_genotypes: Iterable[Genotype]) -> None:
    """Recount in_use_count from scratch against the alive referencing genotypes.

    A genotype counts as one user per gene it mentions anywhere in its
    sequence; even positions the decoded tree never reaches keep a gene
    alive, because reproduction can move them into play later.
    """
    for rec in pool.records.values():
        rec.in_use_count = 0
    for genotype in referencing_genotypes:
        for gid in genotype.gene_ids():
            if gid in pool.records:
                pool.records[gid].in_use_count += 1


def cull(pool: GenePool, threshold: float | None) -> list[int]:
    """Drop unused, evaluated genes scoring below the threshold.

    in_use_count must have been recomputed first. Never-evaluated genes are
    not "below" any threshold and are kept. A None threshold culls nothing.
    """
    if threshold is None:
        return []
    removed = [
        gid
        for gid, rec in pool.records.items()
        if rec.in_use_count == 0 and rec.fitness is not None and rec.fitness < threshold
    ]
    for gid in removed:
        del pool.records[gid]
    return sorted(removed)


def _tournament_gene(pool: GenePool, k: int, rng: random.Random) -> GeneRecord:
    ids = pool.ids()
    drawn = [pool.records[ids[rng.randrange(len(ids))]] for _ in range(k)]
    return max(drawn, key=lambda r: (r.fitness is not None, r.fitness or 0.0, -r.id))


def reproduce_genes(
    pool: GenePool,
    children_min: int,
    children_max: int,
    pool_max: int,
    tournament_size: int,
    rates: OperatorRates,
    rng: random.Random,
    generation: int,
) -> list[int]:
    """Breed new genes until the per-generation child quota or the pool cap.

    Children are admitted one at a time, so the pool cap can stop the
    generation even below the children_min floor (the cap is the harder
    resource constraint). Parents come from tournaments over gene fitness;
    if fewer than two genes have ever been evaluated, parents are drawn
    uniformly instead.
    """
    if len(pool) < 1:
        raise ValueError("gene reproduction needs a non-empty pool")
    alphabet = alphabet_for(pool.context)
    use_tournament = len(pool.evaluated()) >= 2
    created: list[int] = []
    buffer: list[Genotype] = []
    while len(created) < children_max and len(pool) < pool_max:
        if not buffer:
            if use_tournament:
                pa = _tournament_gene(pool, tournament_size, rng)
                pb = _tournament_gene(pool, tournament_size, rng)
            else:
                ids = pool.ids()
                pa = pool.records[ids[rng.randrange(len(ids))]]
                pb = pool.records[ids[rng.randrange(len(ids))]]
            buffer = list(reproduce_pair(pa.genotype, pb.genotype, rates, rng, alphabet))
        child = buffer.pop(0)
        rec = pool.add(child, generation)
        created.append(rec.id)
    return created
