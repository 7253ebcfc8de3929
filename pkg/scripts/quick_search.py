#!/usr/bin/env python3
"""Small surrogate search with a readable summary of what evolved.

Usage: python scripts/quick_search.py [generations] [seed]
"""

import sys

from evocell.evolution import run_search
from evocell.fitness import SurrogateEvaluator
from evocell.karva import decode
from evocell.search_space import default_config, with_overrides


def main():
    generations = int(sys.argv[1]) if len(sys.argv) > 1 else 20
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 0
    cfg = with_overrides(default_config(), budget_generations=generations, rng_seed=seed)
    result = run_search(cfg, SurrogateEvaluator(seed))

    best = result.best
    print(f"ran {result.state.generation} generations, seed {seed}")
    print(f"best fitness {best.fitness:.4f} (individual {best.individual_id}, "
          f"found in generation {best.generation})")
    print(f"normal cell:    {best.normal_genotype}")
    print(f"reduction cell: {best.reduction_genotype}")
    print(f"normal genes in play: "
          f"{ {g: str(t) for g, t in sorted(best.normal_genes.items())} }")
    tree = decode(best.normal_genotype)
    print(f"normal cell tree uses {tree.used_length} of {len(best.normal_genotype.sequence)} positions")
    print("\ngen  best    mean    pool(n/r)  T_g")
    for row in result.stats:
        t_g = f"{row['gene_threshold']:.3f}" if row["gene_threshold"] is not None else "-"
        print(f"{row['gen']:>3}  {row['best_fitness']:.4f}  {row['mean_fitness']:.4f}  "
              f"{row['normal_pool']:>3}/{row['reduction_pool']:<3}    {t_g}")


if __name__ == "__main__":
    main()
