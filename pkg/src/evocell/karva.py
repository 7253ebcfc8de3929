"""K-expression genotypes and their breadth-first decoding.

A genotype is a fixed-length symbol sequence split into a head (functions or
terminals) and a tail (terminals only, one longer than the head for binary
alphabets). Decoding reads the sequence as the level-order serialization of
a tree: position 0 is the root and every function claims the next
still-unclaimed positions, one per argument. The tail-length rule guarantees
the tree always completes; whatever the tree does not reach is carried along
silently as inert genetic material.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass

from .search_space import (
    Alphabet,
    Context,
    Symbol,
    alphabet_for,
    parse_symbol,
)

DEFAULT_CELL_HEAD_LEN = 4
DEFAULT_GENE_HEAD_LEN = 1


def default_head_len(context: Context) -> int:
    return DEFAULT_CELL_HEAD_LEN if context.is_cell else DEFAULT_GENE_HEAD_LEN


@dataclass(frozen=True)
class Genotype:
    head: tuple[Symbol, ...]
    tail: tuple[Symbol, ...]
    context: Context

    @property
    def sequence(self) -> tuple[Symbol, ...]:
        return self.head + self.tail

    @property
    def head_len(self) -> int:
        return len(self.head)

    def gene_ids(self) -> set[int]:
        """Every gene id referenced anywhere in the sequence, used or not."""
        return {s.gene_id for s in self.sequence if s.is_gene_ref}

    def to_text(self) -> str:
        return " ".join(s.name for s in self.head) + " | " + " ".join(s.name for s in self.tail)

    @staticmethod
    def from_text(text: str, context: Context) -> "Genotype":
        head_part, sep, tail_part = text.partition("|")
        if not sep:
            raise ValueError("genotype text must contain a '|' head/tail delimiter")
        head = tuple(parse_symbol(t) for t in head_part.split())
        tail = tuple(parse_symbol(t) for t in tail_part.split())
        return Genotype(head, tail, context)

    def __str__(self) -> str:
        return self.to_text()


@dataclass(frozen=True)
class TreeNode:
    symbol: Symbol
    children: tuple[int, ...]


@dataclass(frozen=True)
class ExpressionTree:
    nodes: tuple[TreeNode, ...]  # arena; node ids index into it
    root: int
    used_length: int

    def node_count(self) -> int:
        return len(self.nodes)


def random_genotype(
    context: Context,
    rng: random.Random,
    *,
    head_len: int | None = None,
    gene_ids: list[int] | tuple[int, ...] | None = None,
    alphabet: Alphabet | None = None,
) -> Genotype:
    """Draw a uniform random genotype for the context.

    Head symbols are drawn uniformly from functions plus terminals, tail
    symbols from terminals only. Cell contexts need the gene ids currently
    in circulation (or a pre-bound alphabet).
    """
    if alphabet is None:
        alphabet = alphabet_for(context, gene_ids=gene_ids)
    if not alphabet.samplable:
        raise ValueError(f"alphabet for {context.value} has no terminals to sample")
    if head_len is None:
        head_len = default_head_len(context)
    pool = alphabet.functions + alphabet.terminals
    head = tuple(rng.choice(pool) for _ in range(head_len))
    tail = tuple(rng.choice(alphabet.terminals) for _ in range(head_len + 1))
    return Genotype(head, tail, context)


def decode(genotype: Genotype) -> ExpressionTree:
    """Breadth-first K-expression decoding.

    A FIFO of open argument slots walks the sequence left to right; each
    processed position becomes a node and, if it is a function, appends its
    argument count of fresh slots. Tail construction guarantees the walk
    never runs past the sequence end.
    """
    seq = genotype.sequence
    children: list[list[int]] = [[]]
    order: list[int] = [0]  # positions in claim order == position order
    queue: deque[int] = deque([0])  # node indexes awaiting child assignment
    next_pos = 1
    while queue:
        node_idx = queue.popleft()
        sym = seq[order[node_idx]]
        for _ in range(sym.arity):
            child_idx = len(order)
            order.append(next_pos)
            children[node_idx].append(child_idx)
            children.append([])
            queue.append(child_idx)
            next_pos += 1
    nodes = tuple(
        TreeNode(seq[pos], tuple(kids)) for pos, kids in zip(order, children)
    )
    return ExpressionTree(nodes=nodes, root=0, used_length=next_pos)


def validate(
    genotype: Genotype,
    *,
    cell_head_len: int = DEFAULT_CELL_HEAD_LEN,
    gene_head_len: int = DEFAULT_GENE_HEAD_LEN,
) -> list[str]:
    """Every invariant violation as data; an empty list means valid."""
    violations = []
    expected_head = cell_head_len if genotype.context.is_cell else gene_head_len
    alphabet = alphabet_for(genotype.context)
    if len(genotype.head) != expected_head:
        violations.append(
            f"head length {len(genotype.head)} != {expected_head} for {genotype.context.value}"
        )
    if len(genotype.tail) != len(genotype.head) + 1:
        violations.append(
            f"tail length {len(genotype.tail)} != head length + 1 ({len(genotype.head) + 1})"
        )
    for i, sym in enumerate(genotype.head):
        if not alphabet.allows_head(sym):
            violations.append(f"symbol {sym.name!r} not allowed in head at index {i}")
    for i, sym in enumerate(genotype.tail):
        if sym.is_function:
            violations.append(f"function {sym.name!r} in tail at index {i}")
        elif not alphabet.allows_tail(sym):
            violations.append(f"symbol {sym.name!r} not allowed in tail at index {i}")
    return violations
