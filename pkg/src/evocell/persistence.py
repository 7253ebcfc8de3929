"""Serialization: descriptors, gene pools, search snapshots, resumable runs.

Everything is canonical JSON (sorted keys, fixed indentation, trailing
newline) so identical objects produce byte-identical files. Snapshots carry
the Mersenne-Twister state verbatim, which is what makes a resumed run
continue bit-identically.
"""

from __future__ import annotations

import json
from dataclasses import asdict

from .compiler import (
    SCHEMA_VERSION,
    CellGraph,
    CellInstance,
    ConvBlockSpec,
    GraphNode,
    HeadSpec,
    ModelDescriptor,
    Stage,
    count_params,
    infer_channels,
)
from .genepool import GenePool, GeneRecord
from .karva import Genotype
from .search_space import Context, config_from_dict, config_to_dict

RNG_ALGORITHM = "python-mersenne-twister"


class SchemaError(ValueError):
    pass


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


# --------------------------------------------------------------------------
# model descriptors


def descriptor_to_dict(d: ModelDescriptor) -> dict:
    return {
        "schema_version": d.schema_version,
        "profile": d.profile,
        "classes": d.classes,
        "width": d.width,
        "normal_repeats": d.normal_repeats,
        "total_params": d.total_params,
        "stem": [asdict(b) for b in d.stem],
        "stages": [
            {
                "width": s.width,
                "repeats": s.repeats,
                "normal_cell": _graph_to_dict(s.normal_cell),
                "reduction_cell": _graph_to_dict(s.reduction_cell) if s.reduction_cell else None,
            }
            for s in d.stages
        ],
        "cells": [asdict(c) for c in d.cells],
        "head": asdict(d.head),
    }


def _graph_to_dict(g: CellGraph) -> dict:
    return {
        "kind": g.kind,
        "base_width": g.base_width,
        "output": g.output,
        "nodes": [asdict(n) for n in g.nodes],
    }


def _graph_from_dict(data: dict) -> CellGraph:
    nodes = []
    for nd in data["nodes"]:
        nd = dict(nd)
        nd["kernel"] = tuple(nd["kernel"]) if nd["kernel"] else None
        nd["inputs"] = tuple(nd["inputs"])
        nodes.append(GraphNode(**nd))
    return CellGraph(kind=data["kind"], base_width=data["base_width"], nodes=nodes, output=data["output"])


def _block_from_dict(data: dict) -> ConvBlockSpec:
    data = dict(data)
    data["kernel"] = tuple(data["kernel"])
    return ConvBlockSpec(**data)


def descriptor_from_dict(data: dict) -> ModelDescriptor:
    if data.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(
            f"descriptor schema_version {data.get('schema_version')!r}, expected {SCHEMA_VERSION}"
        )
    stages = [
        Stage(
            width=s["width"],
            repeats=s["repeats"],
            normal_cell=_graph_from_dict(s["normal_cell"]),
            reduction_cell=_graph_from_dict(s["reduction_cell"]) if s["reduction_cell"] else None,
        )
        for s in data["stages"]
    ]
    cells = []
    for c in data["cells"]:
        c = dict(c)
        proj = c.pop("prevprev_projection")
        cells.append(CellInstance(prevprev_projection=_block_from_dict(proj) if proj else None, **c))
    d = ModelDescriptor(
        schema_version=data["schema_version"],
        profile=data["profile"],
        classes=data["classes"],
        width=data["width"],
        normal_repeats=data["normal_repeats"],
        stem=[_block_from_dict(b) for b in data["stem"]],
        stages=stages,
        cells=cells,
        head=HeadSpec(**data["head"]),
        total_params=data["total_params"],
    )
    validate_descriptor(d)
    return d


def validate_descriptor(d: ModelDescriptor) -> None:
    """Re-check every structural invariant; raises SchemaError naming the node."""
    for stage in d.stages:
        for graph in filter(None, (stage.normal_cell, stage.reduction_cell)):
            try:
                inferred = infer_channels(graph)
            except Exception as exc:
                raise SchemaError(f"stage width {stage.width}: {exc}") from None
            for node in graph.nodes:
                if inferred[node.id] != node.out_channels:
                    raise SchemaError(
                        f"node {node.id} in {graph.kind} cell (width {graph.base_width}): "
                        f"annotated {node.out_channels} channels, inferred {inferred[node.id]}"
                    )
                if node.op == "add":
                    l, r = node.inputs
                    if graph.nodes[l].out_channels != graph.nodes[r].out_channels:
                        raise SchemaError(f"node {node.id}: add over unequal channel widths")
                    if graph.nodes[l].scale != graph.nodes[r].scale:
                        raise SchemaError(f"node {node.id}: add over unequal spatial scales")
                for i in node.inputs:
                    if i >= node.id:
                        raise SchemaError(f"node {node.id}: non-topological input {i}")
            required = graph.base_width * (2 if graph.kind == "reduction" else 1)
            if graph.nodes[graph.output].out_channels != required:
                raise SchemaError(
                    f"{graph.kind} cell output node {graph.output}: "
                    f"{graph.nodes[graph.output].out_channels} channels, required {required}"
                )
    recomputed = count_params(d)
    if recomputed != d.total_params:
        raise SchemaError(f"total_params {d.total_params} != recomputed {recomputed}")


def export_descriptor(d: ModelDescriptor, path) -> None:
    with open(path, "w") as fh:
        fh.write(canonical_json(descriptor_to_dict(d)))


def import_descriptor(path) -> ModelDescriptor:
    with open(path) as fh:
        data = json.load(fh)
    return descriptor_from_dict(data)


# --------------------------------------------------------------------------
# search snapshots


def genotype_to_dict(g: Genotype) -> dict:
    return {"text": g.to_text(), "context": g.context.value}


def genotype_from_dict(d: dict) -> Genotype:
    return Genotype.from_text(d["text"], Context(d["context"]))


def pool_to_dict(pool: GenePool) -> dict:
    return {
        "context": pool.context.value,
        "next_id": pool.next_id,
        "records": [
            {
                "id": r.id,
                "genotype": genotype_to_dict(r.genotype),
                "fitness": r.fitness,
                "in_use_count": r.in_use_count,
                "birth_generation": r.birth_generation,
                "weight_key": r.weight_key,
            }
            for r in sorted(pool.records.values(), key=lambda r: r.id)
        ],
    }


def pool_from_dict(d: dict) -> GenePool:
    pool = GenePool(context=Context(d["context"]), next_id=d["next_id"])
    for rd in d["records"]:
        pool.records[rd["id"]] = GeneRecord(
            id=rd["id"],
            genotype=genotype_from_dict(rd["genotype"]),
            fitness=rd["fitness"],
            in_use_count=rd["in_use_count"],
            birth_generation=rd["birth_generation"],
            weight_key=rd["weight_key"],
        )
    return pool


def snapshot_to_dict(state, config) -> dict:
    """Snapshot of a SearchState (imported lazily to avoid a module cycle)."""
    return {
        "schema_version": SCHEMA_VERSION,
        "rng_algorithm": RNG_ALGORITHM,
        "config": config_to_dict(config),
        "state": state.to_dict(),
    }


def write_snapshot(state, config, path) -> None:
    with open(path, "w") as fh:
        fh.write(canonical_json(snapshot_to_dict(state, config)))


def read_snapshot(path):
    from .evolution import SearchState

    with open(path) as fh:
        data = json.load(fh)
    if data.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"snapshot schema_version {data.get('schema_version')!r}")
    if data.get("rng_algorithm") != RNG_ALGORITHM:
        raise SchemaError(f"snapshot rng_algorithm {data.get('rng_algorithm')!r}")
    config = config_from_dict(data["config"])
    state = SearchState.from_dict(data["state"], config=config)
    return config, state
