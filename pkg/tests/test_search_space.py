import pytest

from evocell.search_space import (
    ADD,
    CONCAT,
    CONV_FUNCTIONS,
    CONV_TERMINALS,
    Context,
    alphabet_for,
    config_from_dict,
    config_to_dict,
    conv_family,
    default_config,
    kernel_of,
    load_config,
    parse_symbol,
    with_overrides,
)


class TestCatalog:
    def test_catalog_counts(self):
        names = [s.name for s in CONV_FUNCTIONS]
        assert names.count("pw") == 1
        assert sum(n.startswith("dw") for n in names) == 6
        assert sum(n.startswith("sep") for n in names) + sum(n.startswith("inv") for n in names) == 12
        assert len(CONV_FUNCTIONS) == 19
        assert len(CONV_TERMINALS) == 19

    def test_arities(self):
        assert ADD.arity == 2 and CONCAT.arity == 2
        assert all(s.arity == 1 for s in CONV_FUNCTIONS)
        assert all(s.arity == 0 for s in CONV_TERMINALS)

    def test_kernels(self):
        assert kernel_of("pw") == (1, 1)
        assert kernel_of("dw3x5") == (3, 5)
        assert kernel_of("sep1x7") == (1, 7)
        assert kernel_of("inv7x1") == (7, 1)
        assert conv_family("inv5x3") == "inv"

    def test_symbol_parse_round_trip(self):
        for sym in (ADD, CONCAT) + CONV_FUNCTIONS + CONV_TERMINALS:
            assert parse_symbol(sym.name) == sym
        with pytest.raises(ValueError):
            parse_symbol("bogus")


class TestAlphabets:
    def test_normal_cell(self):
        a = alphabet_for(Context.NORMAL_CELL, gene_ids=[1, 2])
        assert set(a.functions) == {ADD, CONCAT}
        assert all(t.is_gene_ref for t in a.terminals)

    def test_reduction_gene_excludes_inputs(self):
        a = alphabet_for(Context.REDUCTION_GENE)
        assert not any(t.is_input_ref for t in a.terminals)
        assert ADD in a.functions and CONCAT not in a.functions

    def test_normal_gene_includes_both_inputs(self):
        a = alphabet_for(Context.NORMAL_GENE)
        input_refs = {t.name for t in a.terminals if t.is_input_ref}
        assert input_refs == {"h1", "h2"}

    def test_every_function_within_max_arity(self):
        for context in Context:
            a = alphabet_for(context, gene_ids=[0] if context.is_cell else None)
            assert all(0 < f.arity <= a.max_arity for f in a.functions)
            assert all(t.arity == 0 for t in a.terminals)


class TestConfig:
    def test_paper_defaults(self):
        cfg = default_config()
        assert cfg.population_size == 10
        assert cfg.gene_pool_init == 50
        assert cfg.gene_pool_max == 100
        assert cfg.gene_children_min == 2 and cfg.gene_children_max == 10
        assert cfg.epochs_max == 10
        assert cfg.reward_fraction == 0.75
        assert cfg.cell_head_len == 4 and cfg.cell_tail_len == 5
        assert cfg.gene_head_len == 1 and cfg.gene_tail_len == 2
        assert cfg.param_limit == 300_000
        assert cfg.search_width == 16 and cfg.full_width == 64
        assert cfg.normal_repeats == 3
        assert cfg.reduction_pool_init == 10  # defaulted to the population size

    def test_validation_rejects_bad_values(self):
        from dataclasses import replace

        with pytest.raises(ValueError):
            with_overrides(default_config(), reward_fraction=1.5)
        with pytest.raises(ValueError):
            with_overrides(default_config(), population_size=0)
        with pytest.raises(ValueError):
            replace(default_config(), budget_generations=None).validate()  # no budget at all
        with pytest.raises(ValueError):
            replace(default_config(), budget_seconds=3600.0).validate()  # two budgets at once

    def test_dict_round_trip(self):
        cfg = default_config()
        assert config_from_dict(config_to_dict(cfg)) == cfg

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            config_from_dict({"not_a_key": 1})
        with pytest.raises(ValueError, match="unknown rates keys"):
            config_from_dict({"rates": {"bogus": 0.5}})

    def test_load_yaml_with_overrides(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("population_size: 4\nrates:\n  mutation_rate: 0.2\n")
        cfg = load_config(path, overrides={"rng_seed": 9})
        assert cfg.population_size == 4
        assert cfg.rates.mutation_rate == 0.2
        assert cfg.rng_seed == 9
        # untouched fields keep their defaults
        assert cfg.gene_pool_init == 50
