"""Build a trainable torch network from a model descriptor.

One layer instance per descriptor node. Conv blocks are ReLU -> conv ->
batch norm with bias-free convolutions; separable blocks run their two
convolutions each with its own batch norm after one leading ReLU, striding
on the depthwise part. Drop-path, when enabled, zeroes whole gene-subgraph
outputs during training.
"""

from __future__ import annotations

import torch
from torch import nn

from .descriptor import Block, Descriptor, Graph


def _pad(kernel):
    kh, kw = kernel
    return (kh // 2, kw // 2)


class ConvBlock(nn.Module):
    """ReLU -> conv(s) -> BN(s) for every block kind in the catalog."""

    def __init__(self, op: str, kernel, cin: int, cout: int, stride: int, has_relu: bool):
        super().__init__()
        self.has_relu = has_relu
        layers = []
        if op in ("pw", "proj"):
            layers.append(nn.Conv2d(cin, cout, 1, stride=stride, bias=False))
            layers.append(nn.BatchNorm2d(cout))
        elif op == "dw":
            layers.append(nn.Conv2d(cin, cin, kernel, stride=stride, padding=_pad(kernel), groups=cin, bias=False))
            layers.append(nn.BatchNorm2d(cin))
        elif op == "sep":  # pointwise then depthwise; stride on the depthwise part
            layers.append(nn.Conv2d(cin, cout, 1, bias=False))
            layers.append(nn.BatchNorm2d(cout))
            layers.append(nn.Conv2d(cout, cout, kernel, stride=stride, padding=_pad(kernel), groups=cout, bias=False))
            layers.append(nn.BatchNorm2d(cout))
        elif op == "inv":  # depthwise then pointwise
            layers.append(nn.Conv2d(cin, cin, kernel, stride=stride, padding=_pad(kernel), groups=cin, bias=False))
            layers.append(nn.BatchNorm2d(cin))
            layers.append(nn.Conv2d(cin, cout, 1, bias=False))
            layers.append(nn.BatchNorm2d(cout))
        elif op == "conv":
            layers.append(nn.Conv2d(cin, cout, kernel, stride=stride, padding=_pad(kernel), bias=False))
            layers.append(nn.BatchNorm2d(cout))
        else:
            raise ValueError(f"unknown block op {op!r}")
        self.body = nn.Sequential(*layers)

    def forward(self, x):
        if self.has_relu:
            x = torch.relu(x)
        return self.body(x)


def block_module(block: Block) -> ConvBlock:
    return ConvBlock(block.op, block.kernel, block.in_channels, block.out_channels, block.stride, block.has_relu)


class DropPath(nn.Module):
    """Zero a whole sample's path with probability p, rescaling survivors."""

    def __init__(self, p: float):
        super().__init__()
        self.p = p

    def forward(self, x):
        if not self.training or self.p <= 0.0:
            return x
        keep = 1.0 - self.p
        mask = torch.rand(x.shape[0], 1, 1, 1, device=x.device, dtype=x.dtype) < keep
        return x * mask / keep


class CellModule(nn.Module):
    """One cell instance executing its (shared, per-stage) graph template."""

    def __init__(self, graph: Graph, drop_path_rate: float = 0.0):
        super().__init__()
        self.graph = graph
        self.ops = nn.ModuleDict()
        self.drops = nn.ModuleDict()
        for node in graph.nodes:
            if node.op in ("pw", "dw", "sep", "inv", "proj"):
                self.ops[str(node.id)] = ConvBlock(
                    node.op, node.kernel or (1, 1), node.in_channels,
                    node.out_channels, node.stride, node.has_relu,
                )
            if node.gene_root and drop_path_rate > 0.0:
                self.drops[str(node.id)] = DropPath(drop_path_rate)

    def forward(self, prev, prevprev):
        values: dict[int, torch.Tensor] = {}
        for node in self.graph.nodes:
            if node.op == "input":
                value = prev if node.input_slot == "prev" else prevprev
            elif node.op == "add":
                value = values[node.inputs[0]] + values[node.inputs[1]]
            elif node.op == "cat":
                value = torch.cat([values[i] for i in node.inputs], dim=1)
            else:
                value = self.ops[str(node.id)](values[node.inputs[0]])
            if str(node.id) in self.drops:
                value = self.drops[str(node.id)](value)
            values[node.id] = value
        return values[self.graph.output]

    def weight_keyed_modules(self):
        for node in self.graph.nodes:
            if str(node.id) in self.ops and node.weight_key:
                yield node.weight_key, self.ops[str(node.id)]


class CellNetwork(nn.Module):
    """The assembled network: stem, unrolled cells, classifier head."""

    def __init__(self, descriptor: Descriptor, drop_path_rate: float = 0.0):
        super().__init__()
        self.descriptor = descriptor
        self.stem = nn.ModuleList(block_module(b) for b in descriptor.stem)
        self.cells = nn.ModuleList(
            CellModule(descriptor.graph_for(inst), drop_path_rate) for inst in descriptor.cells
        )
        self.projections = nn.ModuleDict({
            str(inst.index): block_module(inst.prevprev_projection)
            for inst in descriptor.cells
            if inst.prevprev_projection is not None
        })
        head = descriptor.head
        self.head_bn = nn.BatchNorm2d(head.in_features) if head.final_bn_relu else None
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.classifier = nn.Linear(head.in_features, head.classes)

    def forward(self, x):
        return self.forward_with_taps(x)[0]

    def forward_with_taps(self, x):
        """Logits plus every cell output, for shape-contract checks."""
        for block in self.stem:
            x = block(x)
        outputs: dict[int | str, torch.Tensor] = {"stem": x}
        taps = []
        for inst, cell in zip(self.descriptor.cells, self.cells):
            prev = outputs[inst.prev]
            prevprev = outputs[inst.prevprev]
            key = str(inst.index)
            if key in self.projections:
                prevprev = self.projections[key](prevprev)
            out = cell(prev, prevprev)
            outputs[inst.index] = out
            taps.append(out)
        x = outputs[self.descriptor.cells[-1].index]
        if self.head_bn is not None:
            x = torch.relu(self.head_bn(x))
        x = self.pool(x).flatten(1)
        return self.classifier(x), taps

    def weight_keyed_modules(self):
        """(weight_key, module) pairs; instances sharing a key yield it once each."""
        for block, spec in zip(self.stem, self.descriptor.stem):
            yield spec.weight_key, block
        for inst, cell in zip(self.descriptor.cells, self.cells):
            yield from cell.weight_keyed_modules()
            key = str(inst.index)
            if key in self.projections:
                yield inst.prevprev_projection.weight_key, self.projections[key]
        if self.head_bn is not None:
            yield self.descriptor.head.bn_weight_key, self.head_bn
        yield self.descriptor.head.fc_weight_key, self.classifier


def build_model(descriptor: Descriptor, drop_path_rate: float = 0.0) -> CellNetwork:
    return CellNetwork(descriptor, drop_path_rate)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
