#!/usr/bin/env python3
"""Desk-scale relative-improvement experiment: evolved search vs random sampling.

Runs a handful of surrogate searches and equally many random-sampling
baselines, then reports mean fitness of each and the relative improvement.

Usage: python scripts/search_vs_random.py [runs] [generations]
"""

import sys

from evocell.evolution import random_baseline, run_search
from evocell.fitness import SurrogateEvaluator, relative_improvement
from evocell.search_space import default_config, with_overrides


def main():
    runs = int(sys.argv[1]) if len(sys.argv) > 1 else 5
    generations = int(sys.argv[2]) if len(sys.argv) > 2 else 25

    searched, sampled = [], []
    for seed in range(runs):
        cfg = with_overrides(default_config(), budget_generations=generations, rng_seed=seed)
        result = run_search(cfg, SurrogateEvaluator(seed))
        searched.append(result.best.fitness)
        # a baseline candidate gets the same total epochs a finished search
        # candidate would: E_max
        base_cfg = with_overrides(cfg, rng_seed=seed + 10_000)
        fits = random_baseline(base_cfg, SurrogateEvaluator(seed), count=cfg.population_size)
        sampled.append(max(fits))
        print(f"run {seed}: searched {searched[-1]:.4f}  best-of-random {sampled[-1]:.4f}")

    acc_m = sum(searched) / len(searched)
    acc_r = sum(sampled) / len(sampled)
    print(f"\nmean searched fitness: {acc_m:.4f}")
    print(f"mean random fitness:   {acc_r:.4f}")
    print(f"relative improvement:  {relative_improvement(acc_m, acc_r):.4f}%")


if __name__ == "__main__":
    main()
