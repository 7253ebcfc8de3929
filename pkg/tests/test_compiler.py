"""Compiler soundness against independent oracles.

The oracles recompute everything from op semantics alone: channels by a
bottom-up walk, parameters by enumerating the actual weight-tensor shapes
each block would allocate, spatial behavior by path analysis from the
inputs. None of them call the compiler's own inference helpers.
"""

import random
from math import prod

import pytest

from evocell.compiler import (
    BudgetExceeded,
    CompileError,
    assemble_network,
    compile_cell,
    count_params,
    wire_cell_inputs,
)
from evocell.karva import Genotype, random_genotype
from evocell.search_space import (
    ADD,
    CONCAT,
    Context,
    Symbol,
    gene_ref,
)

def g(i):
    return gene_ref(i)


def gene(head, tail, context=Context.NORMAL_GENE):
    return Genotype(tuple(head), tuple(tail), context)


PW_T = Symbol("pw*", 0)
DW33_T = Symbol("dw3x3*", 0)
SEP33_T = Symbol("sep3x3*", 0)
H1 = Symbol("h1", 0)
H2 = Symbol("h2", 0)
PW_F = Symbol("pw", 1)
DW33_F = Symbol("dw3x3", 1)


def random_pool(context, n, seed):
    rng = random.Random(seed)
    return {i: random_genotype(context, rng) for i in range(n)}


def random_cell_and_pool(kind, seed, n_genes=8):
    rng = random.Random(seed)
    gene_ctx = Context.NORMAL_GENE if kind == "normal" else Context.REDUCTION_GENE
    cell_ctx = Context.NORMAL_CELL if kind == "normal" else Context.REDUCTION_CELL
    pool = {i: random_genotype(gene_ctx, rng) for i in range(n_genes)}
    cell = random_genotype(cell_ctx, rng, gene_ids=list(pool))
    return cell, pool


# --------------------------------------------------------------------------
# oracles


def oracle_channels(graph):
    """Bottom-up channel evaluation from op semantics only."""
    out = {}
    remaining = {n.id for n in graph.nodes}
    while remaining:
        progressed = False
        for node in graph.nodes:
            if node.id not in remaining or any(i in remaining for i in node.inputs):
                continue
            ins = [out[i] for i in node.inputs]
            if node.op == "input":
                out[node.id] = graph.base_width
            elif node.op == "add":
                assert ins[0] == ins[1], f"add node {node.id} over unequal widths {ins}"
                out[node.id] = ins[0]
            elif node.op == "cat":
                out[node.id] = ins[0] + ins[1]
            elif node.op == "dw":
                out[node.id] = ins[0]
            elif node.op in ("pw", "sep", "inv"):
                out[node.id] = graph.base_width
            elif node.op == "proj":
                out[node.id] = node.out_channels
            else:
                raise AssertionError(node.op)
            remaining.discard(node.id)
            progressed = True
        assert progressed, "cycle detected"
    return out


def oracle_scales(graph):
    out = {}
    for node in graph.nodes:  # canonical order is topological
        if node.op == "input":
            out[node.id] = 1
        else:
            scales = {out[i] for i in node.inputs}
            assert len(scales) == 1, f"node {node.id} joins mixed scales {scales}"
            out[node.id] = scales.pop() * node.stride
    return out


def tensor_shapes(node, cin, cout):
    """Every weight tensor a block allocates (conv weights, bn affine pairs)."""
    kh, kw = node.kernel if node.kernel else (1, 1)
    if node.op in ("add", "cat", "input"):
        return []
    if node.op in ("pw", "proj"):
        return [(cout, cin, 1, 1), (cout,), (cout,)]
    if node.op == "dw":
        return [(cin, 1, kh, kw), (cin,), (cin,)]
    if node.op == "sep":
        return [(cout, cin, 1, 1), (cout,), (cout,), (cout, 1, kh, kw), (cout,), (cout,)]
    if node.op == "inv":
        return [(cin, 1, kh, kw), (cin,), (cin,), (cout, cin, 1, 1), (cout,), (cout,)]
    raise AssertionError(node.op)


def oracle_graph_params(graph):
    channels = oracle_channels(graph)
    total = 0
    for node in graph.nodes:
        cin = channels[node.inputs[0]] if node.inputs else graph.base_width
        total += sum(prod(s) for s in tensor_shapes(node, cin, channels[node.id]))
    return total


def oracle_descriptor_params(descriptor):
    total = 0
    for blk in descriptor.stem:
        kh, kw = blk.kernel
        total += prod((blk.out_channels, blk.in_channels, kh, kw)) + 2 * blk.out_channels
    for inst in descriptor.cells:
        stage = descriptor.stages[inst.stage]
        graph = stage.normal_cell if inst.kind == "normal" else stage.reduction_cell
        total += oracle_graph_params(graph)
        proj = inst.prevprev_projection
        if proj is not None:
            total += prod((proj.out_channels, proj.in_channels, 1, 1)) + 2 * proj.out_channels
    head = descriptor.head
    total += 2 * head.in_features if head.final_bn_relu else 0
    total += head.in_features * head.classes + head.classes
    return total


def paths_from_inputs(graph):
    """All input-to-output paths as lists of node ids."""
    consumers = {n.id: [] for n in graph.nodes}
    for node in graph.nodes:
        for i in node.inputs:
            consumers[i].append(node.id)
    paths = []

    def walk(nid, acc):
        acc = acc + [nid]
        if nid == graph.output:
            paths.append(acc)
        for nxt in consumers[nid]:
            walk(nxt, acc)

    for node in graph.nodes:
        if node.op == "input":
            walk(node.id, [])
    return paths


# --------------------------------------------------------------------------
# hand-built examples


class TestCompileExamples:
    def test_smallest_cell_input_pointwise_output(self):
        pool = {0: gene([PW_T], [PW_T, PW_T])}
        cell = Genotype((g(0), g(0), g(0), g(0)), (g(0),) * 5, Context.NORMAL_CELL)
        graph = compile_cell(cell, pool, "normal", 16)
        ops = [n.op for n in graph.nodes]
        assert ops == ["input", "pw"]
        assert graph.nodes[graph.output].op == "pw"
        assert graph.out_channels == 16

    def test_cell_shape_add_over_concat(self):
        # add(cat(g0, g1), g2) with single-conv genes
        pool = {
            0: gene([PW_T], [PW_T, PW_T]),
            1: gene([DW33_T], [PW_T, PW_T]),
            2: gene([SEP33_T], [PW_T, PW_T]),
        }
        cell = Genotype((ADD, CONCAT, g(2), g(0)), (g(1), g(0), g(1), g(2), g(0)), Context.NORMAL_CELL)
        graph = compile_cell(cell, pool, "normal", 16)
        ops = {n.op for n in graph.nodes}
        assert "add" in ops and "cat" in ops
        adds = [n for n in graph.nodes if n.op == "add"]
        cats = [n for n in graph.nodes if n.op == "cat"]
        assert len(adds) == 1 and len(cats) == 1
        # cat produced 32 channels, the g2 side carried 16: projection inserted
        add = adds[0]
        in_widths = [graph.nodes[i].out_channels for i in add.inputs]
        assert in_widths == [32, 32]
        assert any(n.op == "proj" and n.out_channels == 32 for n in graph.nodes)

    def test_same_gene_twice_shares_one_subgraph(self):
        pool = {0: gene([DW33_T], [PW_T, PW_T]), 1: gene([PW_T], [PW_T, PW_T])}
        cell = Genotype((ADD, g(0), g(0), g(1)), (g(1),) * 5, Context.NORMAL_CELL)
        graph = compile_cell(cell, pool, "normal", 16)
        add = next(n for n in graph.nodes if n.op == "add")
        assert add.inputs[0] == add.inputs[1]  # one instance, referenced twice
        assert sum(1 for n in graph.nodes if n.op == "dw") == 1

    def test_add_of_equal_widths_needs_no_projection(self):
        pool = {0: gene([PW_T], [PW_T, PW_T]), 1: gene([DW33_T], [PW_T, PW_T])}
        cell = Genotype((ADD, g(0), g(1), g(0)), (g(0),) * 5, Context.NORMAL_CELL)
        graph = compile_cell(cell, pool, "normal", 16)
        assert not any(n.op == "proj" for n in graph.nodes)

    def test_root_projection_to_base_width(self):
        # cat(cat(g,g), g) -> 48 channels -> projected back to 16
        pool = {0: gene([PW_T], [PW_T, PW_T])}
        cell = Genotype((CONCAT, CONCAT, g(0), g(0)), (g(0),) * 5, Context.NORMAL_CELL)
        graph = compile_cell(cell, pool, "normal", 16)
        out = graph.nodes[graph.output]
        assert out.op == "proj" and out.in_channels == 48 and out.out_channels == 16

    def test_reduction_strides_every_input_path(self):
        cell, pool = random_cell_and_pool("reduction", seed=5)
        graph = compile_cell(cell, pool, "reduction", 16)
        for path in paths_from_inputs(graph):
            first_conv = next(
                graph.nodes[n] for n in path if graph.nodes[n].op in ("pw", "dw", "sep", "inv")
            )
            assert first_conv.stride == 2
        assert graph.out_channels == 32

    def test_dangling_gene_reference(self):
        cell = Genotype((g(0), g(0), g(0), g(0)), (g(0),) * 5, Context.NORMAL_CELL)
        with pytest.raises(CompileError, match="dangling"):
            compile_cell(cell, {}, "normal", 16)

    def test_input_ref_inside_reduction_gene_rejected(self):
        pool = {0: gene([H1], [PW_T, PW_T])}  # invalid for reduction context
        cell = Genotype((g(0), g(0), g(0), g(0)), (g(0),) * 5, Context.REDUCTION_CELL)
        with pytest.raises(CompileError, match="cell input"):
            compile_cell(cell, pool, "reduction", 16)

    def test_gene_with_both_inputs_and_functions(self):
        pool = {0: gene([ADD], [H1, DW33_T]), 1: gene([PW_F], [H2, PW_T])}
        cell = Genotype((ADD, g(0), g(1), g(0)), (g(0),) * 5, Context.NORMAL_CELL)
        graph = compile_cell(cell, pool, "normal", 16)
        slots = {n.input_slot for n in graph.nodes if n.op == "input"}
        assert slots == {"prev", "prevprev"}


class TestParamFormulas:
    def params_of(self, head, tail, width=16):
        pool = {0: gene(head, tail)}
        cell = Genotype((g(0), g(0), g(0), g(0)), (g(0),) * 5, Context.NORMAL_CELL)
        graph = compile_cell(cell, pool, "normal", width)
        return count_params(graph)

    def test_pointwise_block(self):
        assert self.params_of([PW_T], [PW_T, PW_T]) == 16 * 16 + 2 * 16  # 288

    def test_depthwise_block(self):
        assert self.params_of([DW33_T], [PW_T, PW_T]) == 9 * 16 + 2 * 16  # 176

    def test_separable_block(self):
        assert self.params_of([SEP33_T], [PW_T, PW_T]) == 288 + 176  # 464

    def test_inverse_separable_block(self):
        inv = Symbol("inv3x3*", 0)
        assert self.params_of([inv], [PW_T, PW_T]) == (9 * 16 + 2 * 16) + (16 * 16 + 2 * 16)


class TestCompilerSoundnessFuzz:
    @pytest.mark.parametrize("kind", ["normal", "reduction"])
    def test_channels_scales_params_against_oracles(self, kind):
        for seed in range(150):
            cell, pool = random_cell_and_pool(kind, seed=seed)
            graph = compile_cell(cell, pool, kind, 16)
            channels = oracle_channels(graph)
            scales = oracle_scales(graph)
            for node in graph.nodes:
                assert node.out_channels == channels[node.id]
                assert node.scale == scales[node.id]
                if node.op == "add":
                    l, r = node.inputs
                    assert channels[l] == channels[r]
                    assert scales[l] == scales[r]
            required = 32 if kind == "reduction" else 16
            assert graph.out_channels == required
            assert scales[graph.output] == (2 if kind == "reduction" else 1)
            assert count_params(graph) == oracle_graph_params(graph)

    def test_compile_is_deterministic(self):
        cell, pool = random_cell_and_pool("normal", seed=77)
        a = compile_cell(cell, pool, "normal", 16)
        b = compile_cell(cell, pool, "normal", 16)
        assert [(n.id, n.op, n.inputs, n.weight_key) for n in a.nodes] == [
            (n.id, n.op, n.inputs, n.weight_key) for n in b.nodes
        ]


class TestAssembly:
    def build(self, profile="cifar", width=16, repeats=3, seed=0, classes=10, limit=None):
        ncell, npool = random_cell_and_pool("normal", seed=seed)
        rcell, rpool = random_cell_and_pool("reduction", seed=seed + 1)
        return assemble_network(
            ncell, rcell, npool, rpool, profile=profile, width=width,
            normal_repeats=repeats, classes=classes, param_limit=limit,
        )

    def test_cifar_structure(self):
        d = self.build()
        assert len(d.stem) == 1 and d.stem[0].has_relu is False
        kinds = [c.kind for c in d.cells]
        assert kinds.count("normal") == 9 and kinds.count("reduction") == 2
        assert [s.width for s in d.stages] == [16, 32, 64]
        assert d.head.in_features == 64

    def test_full_width_profile(self):
        d = self.build(width=64)
        assert [s.width for s in d.stages] == [64, 128, 256]
        assert d.head.in_features == 256

    def test_imagenet_stem(self):
        d = self.build(profile="imagenet_mobile", width=64, classes=1000)
        chans = [(b.in_channels, b.out_channels) for b in d.stem]
        assert chans == [(3, 32), (32, 64), (64, 64)]
        assert all(b.stride == 2 for b in d.stem)
        assert [b.has_relu for b in d.stem] == [False, True, True]

    def test_wiring_first_cell_and_post_reduction(self):
        d = self.build()
        first = d.cells[0]
        assert first.prev == "stem" and first.prevprev == "stem"
        # cells right after each reduction carry the stride-2 projection
        post_reduction = [c for c in d.cells if c.prevprev_projection is not None]
        assert [c.index for c in post_reduction] == [4, 8]
        for cell in post_reduction:
            proj = cell.prevprev_projection
            assert proj.stride == 2 and proj.out_channels == 2 * proj.in_channels

    def test_wiring_scales_consistent_network_wide(self):
        d = self.build()
        downsample = {"stem": 1}
        for inst in d.cells:
            downsample[inst.index] = inst.downsample
        for inst in d.cells:
            prev_s = downsample[inst.prev]
            pp_s = downsample[inst.prevprev]
            if inst.prevprev_projection is None:
                assert prev_s == pp_s
            else:
                assert pp_s * 2 == prev_s
            expected = prev_s * (2 if inst.kind == "reduction" else 1)
            assert inst.downsample == expected

    def test_params_match_enumeration_oracle(self):
        for seed in (0, 3, 9):
            for profile, width in (("cifar", 16), ("cifar", 64), ("imagenet_mobile", 64)):
                d = self.build(profile=profile, width=width, seed=seed)
                assert d.total_params == oracle_descriptor_params(d)
                assert d.total_params == count_params(d)

    def test_budget_rejection_fires_iff_over_limit(self):
        d = self.build()
        oracle = oracle_descriptor_params(d)
        # a limit just below the oracle rejects, at the oracle accepts
        with pytest.raises(BudgetExceeded):
            self.build(limit=oracle - 1)
        assert self.build(limit=oracle).total_params == oracle

    def test_rewire_is_idempotent(self):
        d = self.build()
        before = [(c.prev, c.prevprev, c.downsample) for c in d.cells]
        wire_cell_inputs(d)
        assert [(c.prev, c.prevprev, c.downsample) for c in d.cells] == before
