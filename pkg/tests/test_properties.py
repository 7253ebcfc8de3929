"""Hypothesis property tests over generated genotypes and operator inputs."""

import random

import hypothesis.strategies as st
from hypothesis import given, settings

from evocell import genepool as gp
from evocell.karva import Genotype, decode, validate
from evocell.reproduction import reproduce_pair
from evocell.search_space import (
    ADD,
    CONCAT,
    CONV_FUNCTIONS,
    CONV_TERMINALS,
    Context,
    INPUT_PREV,
    INPUT_PREV_PREV,
    OperatorRates,
    alphabet_for,
    gene_ref,
)

GENE_IDS = tuple(range(10))
CELL_TERMINALS = tuple(gene_ref(i) for i in GENE_IDS)
GENE_TERMINALS = CONV_TERMINALS + (INPUT_PREV, INPUT_PREV_PREV)


def cell_genotypes(context=Context.NORMAL_CELL):
    head = st.tuples(*[st.sampled_from((ADD, CONCAT) + CELL_TERMINALS)] * 4)
    tail = st.tuples(*[st.sampled_from(CELL_TERMINALS)] * 5)
    return st.builds(Genotype, head, tail, st.just(context))


def gene_genotypes(context=Context.NORMAL_GENE):
    terminals = GENE_TERMINALS if context is Context.NORMAL_GENE else CONV_TERMINALS
    head = st.tuples(st.sampled_from((ADD,) + CONV_FUNCTIONS + terminals))
    tail = st.tuples(*[st.sampled_from(terminals)] * 2)
    return st.builds(Genotype, head, tail, st.just(context))


@given(cell_genotypes())
def test_decode_total_and_consistent(genotype):
    tree = decode(genotype)
    assert 1 <= tree.used_length <= len(genotype.sequence)
    assert tree.used_length == len(tree.nodes)
    for node in tree.nodes:
        assert len(node.children) == node.symbol.arity


@given(cell_genotypes())
def test_decode_round_trips_level_order(genotype):
    # reading the decoded tree back in level order reproduces the used prefix
    tree = decode(genotype)
    level = []
    frontier = [tree.root]
    while frontier:
        level.extend(frontier)
        frontier = [c for n in frontier for c in tree.nodes[n].children]
    symbols = tuple(tree.nodes[n].symbol for n in level)
    assert symbols == genotype.sequence[: tree.used_length]


@settings(max_examples=60)
@given(cell_genotypes(), cell_genotypes(), st.integers(0, 2**32 - 1))
def test_reproduce_pair_closure(a, b, seed):
    rates = OperatorRates()
    alphabet = alphabet_for(Context.NORMAL_CELL, gene_ids=GENE_IDS)
    ca, cb = reproduce_pair(a, b, rates, random.Random(seed), alphabet)
    assert validate(ca) == [] and validate(cb) == []


@settings(max_examples=60)
@given(gene_genotypes(Context.REDUCTION_GENE), gene_genotypes(Context.REDUCTION_GENE),
       st.integers(0, 2**32 - 1))
def test_reproduce_pair_closure_reduction_genes(a, b, seed):
    rates = OperatorRates()
    ca, cb = reproduce_pair(a, b, rates, random.Random(seed))
    assert validate(ca) == [] and validate(cb) == []


@settings(max_examples=40)
@given(st.lists(st.tuples(st.floats(0, 1), st.sets(st.integers(0, 9), min_size=1)), min_size=1, max_size=6),
       st.randoms(use_true_random=False))
def test_attribution_commutes(attributions, shuffler):
    pools = []
    for ordering in (attributions, sorted(attributions, key=repr, reverse=True)):
        pool = gp.init_pool(Context.NORMAL_GENE, 10, random.Random(0))
        items = list(ordering)
        shuffler.shuffle(items)
        for fitness, ids in items:
            gp.attribute_fitness(pool, fitness, ids)
        pools.append({gid: rec.fitness for gid, rec in pool.records.items()})
    assert pools[0] == pools[1]
