import random

import pytest

from evocell.karva import Genotype, random_genotype
from evocell.search_space import Context, alphabet_for


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)


def make_genotype(context: Context, rng: random.Random, gene_ids=tuple(range(8))) -> Genotype:
    """Random genotype for any context; cells draw refs from a small id set."""
    if context.is_cell:
        return random_genotype(context, rng, gene_ids=gene_ids)
    return random_genotype(context, rng)


def bound_alphabet(context: Context, gene_ids=tuple(range(8))):
    if context.is_cell:
        return alphabet_for(context, gene_ids=gene_ids)
    return alphabet_for(context)


ALL_CONTEXTS = (
    Context.NORMAL_CELL,
    Context.REDUCTION_CELL,
    Context.NORMAL_GENE,
    Context.REDUCTION_GENE,
)
