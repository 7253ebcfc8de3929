import json
import random

import pytest

from celltrainer.descriptor import parse_descriptor


def primary_descriptor(seed=0, width=16, repeats=1, profile="cifar", classes=10):
    """Random descriptor generated by the search engine (the producing side)."""
    from evocell.compiler import assemble_network
    from evocell.karva import random_genotype
    from evocell.persistence import descriptor_to_dict
    from evocell.search_space import Context

    rng = random.Random(seed)
    npool = {i: random_genotype(Context.NORMAL_GENE, rng) for i in range(8)}
    rpool = {i: random_genotype(Context.REDUCTION_GENE, rng) for i in range(8)}
    ncell = random_genotype(Context.NORMAL_CELL, rng, gene_ids=list(npool))
    rcell = random_genotype(Context.REDUCTION_CELL, rng, gene_ids=list(rpool))
    descriptor = assemble_network(
        ncell, rcell, npool, rpool, profile=profile, width=width,
        normal_repeats=repeats, classes=classes,
    )
    return descriptor, descriptor_to_dict(descriptor)


@pytest.fixture
def descriptor_pair():
    primary, payload = primary_descriptor()
    return primary, parse_descriptor(json.loads(json.dumps(payload)))
