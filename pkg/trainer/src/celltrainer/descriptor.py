"""Standalone reader for the model-descriptor JSON contract.

The trainer deliberately re-validates descriptors on its own instead of
importing the search engine: the JSON file is the only contract between the
two components.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

SCHEMA_VERSION = 1

CONV_OPS = ("pw", "dw", "sep", "inv", "proj")


class DescriptorError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    id: int
    op: str
    kernel: tuple[int, int] | None
    in_channels: int
    out_channels: int
    stride: int
    scale: int
    inputs: tuple[int, ...]
    weight_key: str | None
    has_relu: bool
    gene_id: int | None
    gene_root: bool
    input_slot: str | None


@dataclass(frozen=True)
class Graph:
    kind: str
    base_width: int
    output: int
    nodes: tuple[Node, ...]


@dataclass(frozen=True)
class Block:
    op: str
    kernel: tuple[int, int]
    in_channels: int
    out_channels: int
    stride: int
    has_relu: bool
    weight_key: str


@dataclass(frozen=True)
class Instance:
    index: int
    stage: int
    kind: str
    prev: int | str
    prevprev: int | str
    prevprev_projection: Block | None
    out_channels: int
    downsample: int


@dataclass(frozen=True)
class Head:
    final_bn_relu: bool
    pool: str
    in_features: int
    classes: int
    bn_weight_key: str
    fc_weight_key: str


@dataclass(frozen=True)
class Descriptor:
    profile: str
    classes: int
    width: int
    normal_repeats: int
    total_params: int
    stem: tuple[Block, ...]
    stages: tuple[dict, ...]   # {"width", "repeats", "normal_cell", "reduction_cell"}
    cells: tuple[Instance, ...]
    head: Head

    def graph_for(self, instance: Instance) -> Graph:
        stage = self.stages[instance.stage]
        graph = stage["normal_cell"] if instance.kind == "normal" else stage["reduction_cell"]
        if graph is None:
            raise DescriptorError(f"cell {instance.index}: stage {instance.stage} has no {instance.kind} cell")
        return graph


def _node(data: dict) -> Node:
    return Node(
        id=data["id"], op=data["op"],
        kernel=tuple(data["kernel"]) if data["kernel"] else None,
        in_channels=data["in_channels"], out_channels=data["out_channels"],
        stride=data["stride"], scale=data["scale"],
        inputs=tuple(data["inputs"]), weight_key=data["weight_key"],
        has_relu=data["has_relu"], gene_id=data.get("gene_id"),
        gene_root=data.get("gene_root", False), input_slot=data.get("input_slot"),
    )


def _graph(data: dict) -> Graph:
    nodes = tuple(_node(n) for n in data["nodes"])
    graph = Graph(kind=data["kind"], base_width=data["base_width"], output=data["output"], nodes=nodes)
    _check_graph(graph)
    return graph


def _block(data: dict) -> Block:
    return Block(
        op=data["op"], kernel=tuple(data["kernel"]), in_channels=data["in_channels"],
        out_channels=data["out_channels"], stride=data["stride"],
        has_relu=data["has_relu"], weight_key=data["weight_key"],
    )


def _check_graph(graph: Graph) -> None:
    for node in graph.nodes:
        if node.id >= len(graph.nodes) or graph.nodes[node.id] is not node:
            raise DescriptorError(f"node {node.id}: ids must be dense and ordered")
        for i in node.inputs:
            if i >= node.id:
                raise DescriptorError(f"node {node.id}: input {i} is not topologically earlier")
        if node.op == "add":
            l, r = node.inputs
            if graph.nodes[l].out_channels != graph.nodes[r].out_channels:
                raise DescriptorError(f"node {node.id}: add over unequal channel widths")
        if node.op in CONV_OPS and graph.nodes[node.inputs[0]].out_channels != node.in_channels:
            raise DescriptorError(f"node {node.id}: input width mismatch")
        if node.op == "dw" and node.in_channels != node.out_channels:
            raise DescriptorError(f"node {node.id}: depthwise cannot change channels")


def parse_descriptor(data: dict) -> Descriptor:
    if data.get("schema_version") != SCHEMA_VERSION:
        raise DescriptorError(f"unsupported schema_version {data.get('schema_version')!r}")
    stages = tuple(
        {
            "width": s["width"],
            "repeats": s["repeats"],
            "normal_cell": _graph(s["normal_cell"]),
            "reduction_cell": _graph(s["reduction_cell"]) if s["reduction_cell"] else None,
        }
        for s in data["stages"]
    )
    cells = tuple(
        Instance(
            index=c["index"], stage=c["stage"], kind=c["kind"],
            prev=c["prev"], prevprev=c["prevprev"],
            prevprev_projection=_block(c["prevprev_projection"]) if c["prevprev_projection"] else None,
            out_channels=c["out_channels"], downsample=c["downsample"],
        )
        for c in data["cells"]
    )
    head = Head(
        final_bn_relu=data["head"]["final_bn_relu"], pool=data["head"]["pool"],
        in_features=data["head"]["in_features"], classes=data["head"]["classes"],
        bn_weight_key=data["head"]["bn_weight_key"], fc_weight_key=data["head"]["fc_weight_key"],
    )
    return Descriptor(
        profile=data["profile"], classes=data["classes"], width=data["width"],
        normal_repeats=data["normal_repeats"], total_params=data["total_params"],
        stem=tuple(_block(b) for b in data["stem"]),
        stages=stages, cells=cells, head=head,
    )


def load_descriptor(path) -> Descriptor:
    with open(path) as fh:
        return parse_descriptor(json.load(fh))
