"""Compile expression trees into typed convolutional-cell DAGs and networks.

A cell genotype decodes to a tree of add/concat over gene references; each
referenced gene's own tree is inlined (shared, so one gene used twice is one
subgraph instance and one set of weights). Channels are inferred bottom-up:
pointwise and separable convolutions project to the cell's base width,
depthwise preserves its input, concat sums, and add requires equal widths,
inserting a pointwise projection on the narrower side where needed. Normal
cells emit exactly the base width; reduction cells emit twice that and put
stride 2 on the first convolution of every path out of a cell input.

Every conv block is the sequence ReLU -> conv -> batch norm (the stem's
first block skips the ReLU); convolutions are bias-free and batch-norm
affine pairs count as parameters, its running statistics do not.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, replace

from .karva import ExpressionTree, Genotype, decode
from .search_space import Context, conv_family, kernel_of

SCHEMA_VERSION = 1


class CompileError(ValueError):
    """Structurally invalid input to the compiler (dangling gene, bad leaf)."""


class BudgetExceeded(Exception):
    """Candidate-rejected signal: the assembled network busts the parameter cap.

    Deliberately not a CompileError; the candidate is well-formed, just too big.
    """

    def __init__(self, total_params: int, limit: int):
        super().__init__(f"{total_params} parameters exceed the {limit} budget")
        self.total_params = total_params
        self.limit = limit


@dataclass
class GraphNode:
    id: int
    op: str                       # add | cat | input | proj | pw | dw | sep | inv
    kernel: tuple[int, int] | None
    in_channels: int
    out_channels: int
    stride: int
    scale: int                    # cumulative downsample factor inside the cell
    inputs: tuple[int, ...]
    weight_key: str | None
    has_relu: bool
    gene_id: int | None = None    # provenance of gene-internal nodes
    gene_root: bool = False       # node is the output of a gene subgraph
    input_slot: str | None = None  # "prev" | "prevprev" for op == "input"

    @property
    def params(self) -> int:
        return node_params(self)


@dataclass
class CellGraph:
    kind: str                     # "normal" | "reduction"
    base_width: int
    nodes: list[GraphNode]
    output: int

    @property
    def out_channels(self) -> int:
        return self.nodes[self.output].out_channels


@dataclass(frozen=True)
class ConvBlockSpec:
    """A standalone conv block outside any cell (stem, wiring projections)."""

    op: str                       # "conv" (dense) | "proj" (pointwise)
    kernel: tuple[int, int]
    in_channels: int
    out_channels: int
    stride: int
    has_relu: bool
    weight_key: str

    @property
    def params(self) -> int:
        kh, kw = self.kernel
        if self.op == "conv":
            return kh * kw * self.in_channels * self.out_channels + 2 * self.out_channels
        return self.in_channels * self.out_channels + 2 * self.out_channels


@dataclass(frozen=True)
class HeadSpec:
    final_bn_relu: bool
    pool: str
    in_features: int
    classes: int
    bn_weight_key: str
    fc_weight_key: str

    @property
    def params(self) -> int:
        bn = 2 * self.in_features if self.final_bn_relu else 0
        return bn + self.in_features * self.classes + self.classes


@dataclass
class Stage:
    width: int
    normal_cell: CellGraph
    repeats: int
    reduction_cell: CellGraph | None


@dataclass
class CellInstance:
    """One unrolled cell in the assembled network.

    prev / prevprev are indexes of earlier instances, or "stem". The
    projection (pointwise, stride 2) appears on the prevprev path exactly
    when that input is one reduction behind the prev input.
    """

    index: int
    stage: int
    kind: str
    prev: int | str
    prevprev: int | str
    prevprev_projection: ConvBlockSpec | None
    out_channels: int
    downsample: int               # cumulative network downsample at the output


@dataclass
class ModelDescriptor:
    schema_version: int
    profile: str
    classes: int
    width: int
    normal_repeats: int
    stem: list[ConvBlockSpec]
    stages: list[Stage]
    cells: list[CellInstance]
    head: HeadSpec
    total_params: int = 0


def node_params(node: GraphNode) -> int:
    """Closed-form parameter count for one graph node."""
    cin, cout = node.in_channels, node.out_channels
    if node.op in ("add", "cat", "input"):
        return 0
    if node.op == "proj":
        return cin * cout + 2 * cout
    kh, kw = node.kernel
    if node.op == "pw":
        return cin * cout + 2 * cout
    if node.op == "dw":
        return kh * kw * cin + 2 * cin
    if node.op == "sep":  # pointwise then depthwise
        return (cin * cout + 2 * cout) + (kh * kw * cout + 2 * cout)
    if node.op == "inv":  # depthwise then pointwise
        return (kh * kw * cin + 2 * cin) + (cin * cout + 2 * cout)
    raise ValueError(f"unknown node op {node.op!r}")


def _conv_out_channels(family: str, in_channels: int, base_width: int) -> int:
    # depthwise cannot change its channel count; everything else projects to C
    return in_channels if family == "dw" else base_width


class _GraphBuilder:
    def __init__(self, kind: str, base_width: int):
        self.kind = kind
        self.base_width = base_width
        self.nodes: list[GraphNode] = []
        self.input_nodes: dict[str, int] = {}

    def add(self, **kw) -> int:
        node = GraphNode(id=len(self.nodes), **kw)
        self.nodes.append(node)
        return node.id

    def input_node(self, slot: str) -> int:
        if slot not in self.input_nodes:
            self.input_nodes[slot] = self.add(
                op="input", kernel=None, in_channels=self.base_width,
                out_channels=self.base_width, stride=1, scale=1, inputs=(),
                weight_key=None, has_relu=False, input_slot=slot,
            )
        return self.input_nodes[slot]

    def conv_node(self, opcode: str, child: int, *, gene_id: int, key_prefix: str, node_idx: int) -> int:
        family = conv_family(opcode)
        kernel = kernel_of(opcode)
        cin = self.nodes[child].out_channels
        cout = _conv_out_channels(family, cin, self.base_width)
        scale = self.nodes[child].scale
        # stride suffix is appended once reduction strides are known
        key = f"{key_prefix}/n{node_idx}:{opcode}:{cin}x{cout}"
        return self.add(
            op=family, kernel=kernel, in_channels=cin, out_channels=cout,
            stride=1, scale=scale, inputs=(child,), weight_key=key,
            has_relu=True, gene_id=gene_id,
        )


def compile_cell(
    cell_tree: ExpressionTree | Genotype,
    gene_pool,
    kind: str,
    base_width: int,
) -> CellGraph:
    """Inline gene trees into the cell tree and lower to a typed DAG.

    `gene_pool` is anything with a ``genotype_of(gene_id)`` method or a plain
    mapping of gene id -> gene Genotype.
    """
    if isinstance(cell_tree, Genotype):
        cell_tree = decode(cell_tree)
    if kind not in ("normal", "reduction"):
        raise ValueError(f"cell kind must be 'normal' or 'reduction', got {kind!r}")

    def gene_genotype(gid: int) -> Genotype:
        try:
            if isinstance(gene_pool, Mapping):
                return gene_pool[gid]
            return gene_pool.genotype_of(gid)
        except KeyError:
            raise CompileError(f"dangling gene reference g{gid}") from None

    b = _GraphBuilder(kind, base_width)
    gene_roots: dict[int, int] = {}

    def build_gene(gid: int) -> int:
        if gid in gene_roots:
            return gene_roots[gid]
        genotype = gene_genotype(gid)
        tree = decode(genotype)
        key_prefix = ("gn" if genotype.context is Context.NORMAL_GENE else "gr") + str(gid)
        counter = iter(range(len(tree.nodes)))

        def build(node_id: int) -> int:
            node = tree.nodes[node_id]
            sym = node.symbol
            if sym.is_input_ref:
                if kind == "reduction":
                    raise CompileError(
                        f"gene g{gid} uses cell input {sym.name} inside a reduction cell"
                    )
                return b.input_node("prev" if sym.name == "h1" else "prevprev")
            if sym.is_conv:
                if sym.is_terminal:
                    # a conv leaf consumes the cell's primary input
                    child = b.input_node("prev")
                else:
                    child = build(node.children[0])
                return b.conv_node(
                    sym.conv_opcode(), child, gene_id=gid,
                    key_prefix=key_prefix, node_idx=next(counter),
                )
            if sym.name == "add":
                left = build(node.children[0])
                right = build(node.children[1])
                return _add_node(b, left, right, gene_id=gid)
            raise CompileError(f"symbol {sym.name!r} not allowed inside a gene")

        root = build(tree.root)
        if b.nodes[root].gene_id == gid:
            # bare input-ref genes own no node; never flag the shared input
            b.nodes[root].gene_root = True
        gene_roots[gid] = root
        return root

    def build_cell(node_id: int) -> int:
        node = cell_tree.nodes[node_id]
        sym = node.symbol
        if sym.is_gene_ref:
            return build_gene(sym.gene_id)
        if sym.name in ("add", "cat"):
            left = build_cell(node.children[0])
            right = build_cell(node.children[1])
            if sym.name == "add":
                return _add_node(b, left, right, gene_id=None)
            return _cat_node(b, left, right)
        raise CompileError(f"symbol {sym.name!r} not allowed at cell level")

    root = build_cell(cell_tree.root)
    graph = CellGraph(kind=kind, base_width=base_width, nodes=b.nodes, output=root)
    if kind == "reduction":
        _apply_reduction_strides(graph)
    for node in graph.nodes:
        if node.op in ("pw", "dw", "sep", "inv"):
            node.weight_key = f"{node.weight_key}@s{node.stride}"
    graph = insert_projections(graph)
    graph = _canonicalize(graph)
    _check_graph(graph)
    return graph


def _add_node(b: _GraphBuilder, left: int, right: int, gene_id: int | None) -> int:
    cl, cr = b.nodes[left].out_channels, b.nodes[right].out_channels
    return b.add(
        op="add", kernel=None, in_channels=max(cl, cr), out_channels=max(cl, cr),
        stride=1, scale=b.nodes[left].scale, inputs=(left, right),
        weight_key=None, has_relu=False, gene_id=gene_id,
    )


def _cat_node(b: _GraphBuilder, left: int, right: int) -> int:
    cl, cr = b.nodes[left].out_channels, b.nodes[right].out_channels
    return b.add(
        op="cat", kernel=None, in_channels=cl + cr, out_channels=cl + cr,
        stride=1, scale=b.nodes[left].scale, inputs=(left, right),
        weight_key=None, has_relu=False,
    )


def _apply_reduction_strides(graph: CellGraph) -> None:
    """Stride 2 on every conv fed directly by a cell input, then rescale."""
    nodes = graph.nodes
    input_ids = {n.id for n in nodes if n.op == "input"}
    for node in nodes:
        if node.op in ("pw", "dw", "sep", "inv") and any(i in input_ids for i in node.inputs):
            node.stride = 2
    _recompute_scales(graph)


def _recompute_scales(graph: CellGraph) -> None:
    order = _topo_order(graph)
    for nid in order:
        node = graph.nodes[nid]
        if node.op == "input":
            node.scale = 1
            continue
        in_scales = {graph.nodes[i].scale for i in node.inputs}
        if len(in_scales) != 1:
            raise CompileError(f"node {node.id}: inputs at mixed spatial scales {sorted(in_scales)}")
        node.scale = next(iter(in_scales)) * node.stride


def insert_projections(graph: CellGraph) -> CellGraph:
    """Channel-match adds and pin the cell output to its required width.

    Where an add's inputs disagree, a pointwise projection lifts the
    narrower one. If the root's width is not the cell's contract (base width
    for normal cells, double for reduction), a final projection is appended.
    """
    nodes = graph.nodes

    def project(src: int, cout: int) -> int:
        s = nodes[src]
        key = f"blk:proj:{s.out_channels}x{cout}@s1"
        node = GraphNode(
            id=len(nodes), op="proj", kernel=(1, 1), in_channels=s.out_channels,
            out_channels=cout, stride=1, scale=s.scale, inputs=(src,),
            weight_key=key, has_relu=True,
        )
        nodes.append(node)
        return node.id

    for nid in _topo_order(graph):
        node = nodes[nid]
        if node.op != "add":
            continue
        left, right = node.inputs
        cl, cr = nodes[left].out_channels, nodes[right].out_channels
        if cl == cr:
            continue
        if cl < cr:
            node.inputs = (project(left, cr), right)
        else:
            node.inputs = (left, project(right, cl))
        node.in_channels = node.out_channels = max(cl, cr)

    required = graph.base_width * (2 if graph.kind == "reduction" else 1)
    if nodes[graph.output].out_channels != required:
        graph.output = project(graph.output, required)
    return graph


def _topo_order(graph: CellGraph) -> list[int]:
    """Deterministic topological order: DFS post-order from the output."""
    seen: set[int] = set()
    order: list[int] = []

    def visit(nid: int) -> None:
        if nid in seen:
            return
        seen.add(nid)
        for child in graph.nodes[nid].inputs:
            visit(child)
        order.append(nid)

    visit(graph.output)
    return order


def _canonicalize(graph: CellGraph) -> CellGraph:
    """Renumber nodes into DFS post-order; drops unreachable nodes."""
    order = _topo_order(graph)
    remap = {old: new for new, old in enumerate(order)}
    nodes = []
    for old in order:
        n = graph.nodes[old]
        nodes.append(replace_node(n, id=remap[old], inputs=tuple(remap[i] for i in n.inputs)))
    return CellGraph(kind=graph.kind, base_width=graph.base_width, nodes=nodes, output=remap[graph.output])


def replace_node(node: GraphNode, **kw) -> GraphNode:
    return replace(node, **kw)


def infer_channels(graph: CellGraph) -> dict[int, int]:
    """Bottom-up channel widths implied by op semantics (not the annotations)."""
    out: dict[int, int] = {}
    for nid in _topo_order(graph):
        node = graph.nodes[nid]
        ins = [out[i] for i in node.inputs]
        if node.op == "input":
            out[nid] = graph.base_width
        elif node.op == "add":
            if ins[0] != ins[1]:
                raise CompileError(f"node {node.id}: add over unequal widths {ins}")
            out[nid] = ins[0]
        elif node.op == "cat":
            out[nid] = ins[0] + ins[1]
        elif node.op == "dw":
            out[nid] = ins[0]
        elif node.op in ("pw", "sep", "inv"):
            out[nid] = graph.base_width
        else:  # proj carries an explicit target width
            out[nid] = node.out_channels
    return out


def _check_graph(graph: CellGraph) -> None:
    inferred = infer_channels(graph)
    for node in graph.nodes:
        if inferred[node.id] != node.out_channels:
            raise CompileError(
                f"node {node.id}: annotated {node.out_channels} channels, inferred {inferred[node.id]}"
            )
        if node.op in ("pw", "dw", "sep", "inv", "proj"):
            if graph.nodes[node.inputs[0]].out_channels != node.in_channels:
                raise CompileError(f"node {node.id}: input width mismatch")
        if node.inputs:
            scales = {graph.nodes[i].scale for i in node.inputs}
            if len(scales) != 1:
                raise CompileError(f"node {node.id}: inputs at mixed scales")
    required = graph.base_width * (2 if graph.kind == "reduction" else 1)
    if graph.nodes[graph.output].out_channels != required:
        raise CompileError(f"cell output width {graph.nodes[graph.output].out_channels} != required {required}")
    expected_scale = 2 if graph.kind == "reduction" else 1
    if graph.nodes[graph.output].scale != expected_scale:
        raise CompileError(f"cell output scale {graph.nodes[graph.output].scale} != {expected_scale}")


def count_params(obj) -> int:
    """Total trainable parameters of a graph, block, or assembled descriptor."""
    if isinstance(obj, CellGraph):
        return sum(node_params(n) for n in obj.nodes)
    if isinstance(obj, (ConvBlockSpec, HeadSpec)):
        return obj.params
    if isinstance(obj, ModelDescriptor):
        total = sum(blk.params for blk in obj.stem)
        for inst in obj.cells:
            total += count_params(_instance_graph(obj, inst))
            if inst.prevprev_projection is not None:
                total += inst.prevprev_projection.params
        total += obj.head.params
        return total
    raise TypeError(f"cannot count parameters of {type(obj).__name__}")


def _instance_graph(descriptor: ModelDescriptor, inst: CellInstance) -> CellGraph:
    stage = descriptor.stages[inst.stage]
    return stage.normal_cell if inst.kind == "normal" else stage.reduction_cell


def _stem_blocks(profile: str, width: int) -> tuple[list[ConvBlockSpec], int]:
    """Stem conv blocks and the cumulative downsample they apply."""
    def blk(cin, cout, stride, has_relu):
        key = f"blk:conv3x3:{cin}x{cout}@s{stride}"
        return ConvBlockSpec(
            op="conv", kernel=(3, 3), in_channels=cin, out_channels=cout,
            stride=stride, has_relu=has_relu, weight_key=key,
        )

    if profile == "cifar":
        return [blk(3, width, 1, False)], 1
    if profile == "imagenet_mobile":
        half = width // 2
        return [blk(3, half, 2, False), blk(half, width, 2, True), blk(width, width, 2, True)], 8
    raise ValueError(f"unknown profile {profile!r}")


def assemble_network(
    normal_genotype: Genotype,
    reduction_genotype: Genotype,
    normal_genes,
    reduction_genes,
    *,
    profile: str = "cifar",
    width: int = 16,
    normal_repeats: int = 3,
    classes: int = 10,
    param_limit: int | None = None,
) -> ModelDescriptor:
    """Assemble the staged full-network descriptor and wire cell inputs.

    Three stages of `normal_repeats` normal cells, a reduction cell after
    stages one and two, width doubling at each reduction. Cells are compiled
    per stage width from the genotypes. Raises BudgetExceeded when a
    parameter cap is given and breached.
    """
    stem, stem_scale = _stem_blocks(profile, width)
    stages = []
    for i, w in enumerate((width, width * 2, width * 4)):
        normal = compile_cell(normal_genotype, normal_genes, "normal", w)
        reduction = (
            compile_cell(reduction_genotype, reduction_genes, "reduction", w)
            if i < 2 else None
        )
        stages.append(Stage(width=w, normal_cell=normal, repeats=normal_repeats, reduction_cell=reduction))
    head = HeadSpec(
        final_bn_relu=True, pool="avg", in_features=width * 4, classes=classes,
        bn_weight_key=f"blk:headbn:{width * 4}",
        fc_weight_key=f"blk:fc:{width * 4}x{classes}",
    )
    descriptor = ModelDescriptor(
        schema_version=SCHEMA_VERSION, profile=profile, classes=classes,
        width=width, normal_repeats=normal_repeats, stem=stem, stages=stages,
        cells=[], head=head,
    )
    wire_cell_inputs(descriptor, stem_scale=stem_scale)
    descriptor.total_params = count_params(descriptor)
    if param_limit is not None and descriptor.total_params > param_limit:
        raise BudgetExceeded(descriptor.total_params, param_limit)
    return descriptor


def wire_cell_inputs(descriptor: ModelDescriptor, *, stem_scale: int | None = None) -> ModelDescriptor:
    """Unroll the stages and bind every cell's two inputs.

    Each instance's prev input is the previous cell's output and prevprev
    the one before; the first cell takes the stem for both. Right after a
    reduction, the prevprev path is one reduction behind, so a stride-2
    pointwise projection block lifts it to the current width and scale.
    """
    if stem_scale is None:
        stem_scale = _stem_blocks(descriptor.profile, descriptor.width)[1]
    stem_width = descriptor.stem[-1].out_channels

    instances: list[CellInstance] = []
    # (producer, out_channels, downsample) history; index -1/-2 views
    outputs: list[tuple[int | str, int, int]] = [("stem", stem_width, stem_scale)]

    def bind(kind: str, stage_idx: int, cell: CellGraph) -> None:
        prev_ref, prev_c, prev_s = outputs[-1]
        pp_ref, pp_c, pp_s = outputs[-2] if len(outputs) >= 2 else outputs[-1]
        expected_in = cell.base_width
        # the stage layout guarantees the direct predecessor already carries
        # the stage width; only the prevprev path can lag by one reduction
        assert prev_c == expected_in, (prev_c, expected_in)
        projection = None
        if pp_s < prev_s:
            # one reduction behind: project channels up and stride down
            key = f"blk:proj:{pp_c}x{expected_in}@s2"
            projection = ConvBlockSpec(
                op="proj", kernel=(1, 1), in_channels=pp_c, out_channels=expected_in,
                stride=2, has_relu=True, weight_key=key,
            )
        else:
            assert pp_c == expected_in, (pp_c, expected_in)
        out_c = cell.out_channels
        out_s = prev_s * (2 if kind == "reduction" else 1)
        instances.append(CellInstance(
            index=len(instances), stage=stage_idx, kind=kind,
            prev=prev_ref, prevprev=pp_ref, prevprev_projection=projection,
            out_channels=out_c, downsample=out_s,
        ))
        outputs.append((len(instances) - 1, out_c, out_s))

    for stage_idx, stage in enumerate(descriptor.stages):
        for _ in range(stage.repeats):
            bind("normal", stage_idx, stage.normal_cell)
        if stage.reduction_cell is not None:
            bind("reduction", stage_idx, stage.reduction_cell)

    descriptor.cells = instances
    return descriptor
