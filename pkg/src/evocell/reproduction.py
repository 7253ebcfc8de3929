"""GEP variation operators.

A pair of parents goes through, in fixed order: point mutation, insertion
transposition, root transposition, one-point recombination, two-point
recombination. One deliberate twist on the textbook operators: a mutated
head symbol is always replaced by a *function*, never a terminal, which
pushes heads toward richer add/concat combinations over time. All operators
preserve head/tail lengths and the tail's terminals-only rule, so closure
under validity holds by construction.
"""

from __future__ import annotations

import random

from .karva import Genotype
from .search_space import Alphabet, OperatorRates, alphabet_for


def _resolve_alphabet(g: Genotype, alphabet: Alphabet | None) -> Alphabet:
    if alphabet is not None:
        return alphabet
    derived = alphabet_for(g.context)
    if not derived.samplable:
        raise ValueError(
            f"{g.context.value} genotypes need a bound alphabet (gene ids) for mutation"
        )
    return derived


def mutate(
    g: Genotype,
    rates: OperatorRates,
    rng: random.Random,
    alphabet: Alphabet | None = None,
) -> Genotype:
    """Per-symbol point mutation; heads mutate to functions, tails to terminals."""
    alphabet = _resolve_alphabet(g, alphabet)
    head = list(g.head)
    tail = list(g.tail)
    for i in range(len(head)):
        if rng.random() < rates.mutation_rate:
            head[i] = rng.choice(alphabet.functions)
    for i in range(len(tail)):
        if rng.random() < rates.mutation_rate:
            tail[i] = rng.choice(alphabet.terminals)
    return Genotype(tuple(head), tuple(tail), g.context)


def is_transpose(g: Genotype, rates: OperatorRates, rng: random.Random) -> Genotype:
    """Copy a short segment from anywhere and insert it at a non-root head slot.

    Head symbols shift right and fall off the end; the tail is untouched.
    Inserted material may start with a terminal (that is legal anywhere in
    the head). Heads of length one have no non-root slot, so nothing happens.
    """
    if g.head_len < 2 or rng.random() >= rates.is_rate:
        return g
    seq = g.sequence
    length = min(rng.choice(rates.is_element_lengths), len(seq))
    start = rng.randrange(len(seq) - length + 1)
    segment = seq[start:start + length]
    pos = rng.randrange(1, g.head_len)
    new_head = (g.head[:pos] + segment + g.head[pos:])[: g.head_len]
    return Genotype(new_head, g.tail, g.context)


def ris_transpose(g: Genotype, rates: OperatorRates, rng: random.Random) -> Genotype:
    """Root transposition: re-root the head on a segment starting at a function.

    Scans forward from a random head point for a function symbol; if none is
    found, the genotype is returned unchanged.
    """
    if rng.random() >= rates.ris_rate:
        return g
    scan_from = rng.randrange(g.head_len)
    fpos = next((i for i in range(scan_from, g.head_len) if g.head[i].is_function), None)
    if fpos is None:
        return g
    seq = g.sequence
    length = min(rng.choice(rates.is_element_lengths), len(seq) - fpos)
    segment = seq[fpos:fpos + length]
    new_head = (segment + g.head)[: g.head_len]
    return Genotype(new_head, g.tail, g.context)


def _require_same_context(a: Genotype, b: Genotype) -> None:
    if a.context is not b.context:
        raise ValueError(f"context mismatch: {a.context.value} vs {b.context.value}")
    if a.head_len != b.head_len:
        raise ValueError("head length mismatch between recombination parents")


def one_point(
    a: Genotype, b: Genotype, rates: OperatorRates, rng: random.Random
) -> tuple[Genotype, Genotype]:
    """Swap suffixes at one cut position over the full head+tail length."""
    _require_same_context(a, b)
    if rng.random() >= rates.one_point_rate:
        return a, b
    sa, sb = a.sequence, b.sequence
    cut = rng.randrange(len(sa))
    ca = sa[:cut] + sb[cut:]
    cb = sb[:cut] + sa[cut:]
    return _from_sequence(ca, a), _from_sequence(cb, b)


def two_point(
    a: Genotype, b: Genotype, rates: OperatorRates, rng: random.Random
) -> tuple[Genotype, Genotype]:
    """Swap the segment between two cut positions."""
    _require_same_context(a, b)
    if rng.random() >= rates.two_point_rate:
        return a, b
    sa, sb = a.sequence, b.sequence
    i, j = sorted((rng.randint(0, len(sa)), rng.randint(0, len(sa))))
    ca = sa[:i] + sb[i:j] + sa[j:]
    cb = sb[:i] + sa[i:j] + sb[j:]
    return _from_sequence(ca, a), _from_sequence(cb, b)


def _from_sequence(seq, like: Genotype) -> Genotype:
    h = like.head_len
    return Genotype(tuple(seq[:h]), tuple(seq[h:]), like.context)


def reproduce_pair(
    a: Genotype,
    b: Genotype,
    rates: OperatorRates,
    rng: random.Random,
    alphabet: Alphabet | None = None,
) -> tuple[Genotype, Genotype]:
    """Full variation pipeline on a parent pair, in the fixed operator order."""
    _require_same_context(a, b)
    alphabet = _resolve_alphabet(a, alphabet)
    a = mutate(a, rates, rng, alphabet)
    b = mutate(b, rates, rng, alphabet)
    a = is_transpose(a, rates, rng)
    b = is_transpose(b, rates, rng)
    a = ris_transpose(a, rates, rng)
    b = ris_transpose(b, rates, rng)
    a, b = one_point(a, b, rates, rng)
    a, b = two_point(a, b, rates, rng)
    return a, b
