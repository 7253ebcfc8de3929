"""Symbol alphabets, the convolution catalog, and the run configuration.

Symbols are the atoms genotypes are made of. Each symbol has a fixed arity:
add/concat take two inputs, a convolution used as a function takes one, and
terminals (convolutions used as leaves, cell-input references, gene
references) take none. A convolution kind therefore appears twice in the
catalog, once as a function and once as a leaf; the leaf form carries a
trailing ``*`` in its mnemonic and consumes the cell's primary input.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields, replace


class Context(str, enum.Enum):
    """Which alphabet a genotype is written in."""

    NORMAL_CELL = "normal_cell"
    REDUCTION_CELL = "reduction_cell"
    NORMAL_GENE = "normal_gene"
    REDUCTION_GENE = "reduction_gene"

    @property
    def is_cell(self) -> bool:
        return self in (Context.NORMAL_CELL, Context.REDUCTION_CELL)

    @property
    def is_gene(self) -> bool:
        return not self.is_cell


@dataclass(frozen=True, order=True)
class Symbol:
    """A genotype element. Identity is the mnemonic; arity is fixed by it."""

    name: str
    arity: int

    @property
    def is_function(self) -> bool:
        return self.arity > 0

    @property
    def is_terminal(self) -> bool:
        return self.arity == 0

    @property
    def is_gene_ref(self) -> bool:
        return self.name.startswith("g") and self.name[1:].isdigit()

    @property
    def gene_id(self) -> int:
        if not self.is_gene_ref:
            raise ValueError(f"symbol {self.name!r} is not a gene reference")
        return int(self.name[1:])

    @property
    def is_input_ref(self) -> bool:
        return self.name in ("h1", "h2")

    @property
    def is_conv(self) -> bool:
        return self.name.rstrip("*") in _CONV_NAME_SET

    def conv_opcode(self) -> str:
        """Mnemonic without the terminal marker, e.g. 'dw3x3' for 'dw3x3*'."""
        return self.name.rstrip("*")

    def __str__(self) -> str:
        return self.name


# The six rectangular kernels depthwise/separable variants may use.
CONV_KERNELS: tuple[tuple[int, int], ...] = ((3, 3), (5, 5), (3, 5), (5, 3), (1, 7), (7, 1))

ADD = Symbol("add", 2)
CONCAT = Symbol("cat", 2)
INPUT_PREV = Symbol("h1", 0)      # previous cell's output
INPUT_PREV_PREV = Symbol("h2", 0)  # output of the cell before that


def _conv_names() -> list[str]:
    names = ["pw"]
    for prefix in ("dw", "sep", "inv"):
        names.extend(f"{prefix}{kh}x{kw}" for kh, kw in CONV_KERNELS)
    return names


_CONV_NAME_SET = frozenset(_conv_names())
CONV_FUNCTIONS: tuple[Symbol, ...] = tuple(Symbol(n, 1) for n in _conv_names())
CONV_TERMINALS: tuple[Symbol, ...] = tuple(Symbol(n + "*", 0) for n in _conv_names())


def gene_ref(gene_id: int) -> Symbol:
    return Symbol(f"g{gene_id}", 0)


def parse_symbol(text: str) -> Symbol:
    """Inverse of str(symbol); raises ValueError on unknown mnemonics."""
    if text in ("add", "cat"):
        return ADD if text == "add" else CONCAT
    if text in ("h1", "h2"):
        return INPUT_PREV if text == "h1" else INPUT_PREV_PREV
    if text.startswith("g") and text[1:].isdigit():
        return gene_ref(int(text[1:]))
    if text.endswith("*") and text[:-1] in _conv_names():
        return Symbol(text, 0)
    if text in _conv_names():
        return Symbol(text, 1)
    raise ValueError(f"unknown symbol mnemonic {text!r}")


def conv_family(opcode: str) -> str:
    """'pw', 'dw', 'sep' or 'inv'."""
    for fam in ("pw", "dw", "sep", "inv"):
        if opcode.startswith(fam):
            return fam
    raise ValueError(f"not a conv opcode: {opcode!r}")


def kernel_of(opcode: str) -> tuple[int, int]:
    """Kernel shape of a conv opcode ('pw' -> (1, 1), 'sep5x3' -> (5, 3))."""
    if opcode == "pw":
        return (1, 1)
    kh, kw = opcode[len(conv_family(opcode)):].split("x")
    return (int(kh), int(kw))


@dataclass(frozen=True)
class Alphabet:
    """Function and terminal sets for one genotype context.

    Cell alphabets have dynamic terminals (references into the current gene
    pool); construct them with the gene ids in circulation. An unbound cell
    alphabet can still classify symbols but cannot be sampled from.
    """

    context: Context
    functions: tuple[Symbol, ...]
    terminals: tuple[Symbol, ...]
    max_arity: int = 2

    @property
    def samplable(self) -> bool:
        return bool(self.terminals)

    def allows_head(self, sym: Symbol) -> bool:
        return self.allows_tail(sym) or sym in self.functions

    def allows_tail(self, sym: Symbol) -> bool:
        if self.context.is_cell:
            return sym.is_gene_ref
        return sym in _GENE_TERMINALS[self.context]


_GENE_TERMINALS = {
    Context.NORMAL_GENE: frozenset(CONV_TERMINALS) | {INPUT_PREV, INPUT_PREV_PREV},
    Context.REDUCTION_GENE: frozenset(CONV_TERMINALS),
}


def alphabet_for(context: Context, gene_ids: tuple[int, ...] | list[int] | None = None) -> Alphabet:
    """Alphabet for a context; cell contexts take the gene ids in circulation.

    Reduction genes exclude the cell-input terminals: adding feature maps of
    different spatial sizes is not possible there.
    """
    if context.is_cell:
        terminals = tuple(gene_ref(g) for g in gene_ids) if gene_ids else ()
        return Alphabet(context, functions=(ADD, CONCAT), terminals=terminals)
    functions = (ADD,) + CONV_FUNCTIONS
    terminals = CONV_TERMINALS
    if context is Context.NORMAL_GENE:
        terminals = terminals + (INPUT_PREV, INPUT_PREV_PREV)
    return Alphabet(context, functions=functions, terminals=terminals)


@dataclass(frozen=True)
class OperatorRates:
    """Per-operator application rates for the variation pipeline."""

    mutation_rate: float = 0.05      # per symbol
    is_rate: float = 0.1             # per genotype
    ris_rate: float = 0.1            # per genotype
    one_point_rate: float = 0.2      # per pair
    two_point_rate: float = 0.5      # per pair
    is_element_lengths: tuple[int, ...] = (1, 2, 3)

    def validate(self) -> None:
        for name in ("mutation_rate", "is_rate", "ris_rate", "one_point_rate", "two_point_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if not self.is_element_lengths or min(self.is_element_lengths) < 1:
            raise ValueError("is_element_lengths must be positive")


@dataclass(frozen=True)
class SearchConfig:
    """Complete run configuration. Every field is a config-file key."""

    population_size: int = 10        # P_i
    reduction_pool_init: int = 10    # P_r, defaulted to P_i
    gene_pool_init: int = 50         # P_g
    gene_pool_max: int = 100
    gene_children_min: int = 2
    gene_children_max: int = 10
    epochs_max: int = 10
    reward_fraction: float = 0.75
    cell_head_len: int = 4
    gene_head_len: int = 1
    param_limit: int = 300_000
    search_width: int = 16
    full_width: int = 64
    normal_repeats: int = 3
    budget_generations: int | None = 20
    budget_seconds: float | None = None
    rng_seed: int = 0
    tournament_size: int = 3
    classes: int = 10
    profile: str = "cifar"           # "cifar" | "imagenet_mobile"
    rates: OperatorRates = field(default_factory=OperatorRates)

    @property
    def cell_tail_len(self) -> int:
        return self.cell_head_len + 1

    @property
    def gene_tail_len(self) -> int:
        return self.gene_head_len + 1

    def head_len(self, context: Context) -> int:
        return self.cell_head_len if context.is_cell else self.gene_head_len

    def validate(self) -> None:
        positive = (
            "population_size", "reduction_pool_init", "gene_pool_init", "gene_pool_max",
            "gene_children_min", "gene_children_max", "epochs_max", "cell_head_len",
            "gene_head_len", "param_limit", "search_width", "full_width",
            "normal_repeats", "tournament_size", "classes",
        )
        for name in positive:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 < self.reward_fraction < 1.0:
            raise ValueError("reward_fraction must be in (0, 1)")
        if (self.budget_generations is None) == (self.budget_seconds is None):
            raise ValueError("exactly one of budget_generations / budget_seconds must be set")
        if self.budget_generations is not None and self.budget_generations < 0:
            raise ValueError("budget_generations must be >= 0")
        if self.budget_seconds is not None and self.budget_seconds <= 0:
            raise ValueError("budget_seconds must be > 0")
        if self.profile not in ("cifar", "imagenet_mobile"):
            raise ValueError(f"unknown profile {self.profile!r}")
        if self.gene_children_min > self.gene_children_max:
            raise ValueError("gene_children_min exceeds gene_children_max")
        self.rates.validate()


def default_config() -> SearchConfig:
    cfg = SearchConfig()
    cfg.validate()
    return cfg


def config_to_dict(cfg: SearchConfig) -> dict:
    d = {f.name: getattr(cfg, f.name) for f in fields(cfg) if f.name != "rates"}
    d["rates"] = {
        "mutation_rate": cfg.rates.mutation_rate,
        "is_rate": cfg.rates.is_rate,
        "ris_rate": cfg.rates.ris_rate,
        "one_point_rate": cfg.rates.one_point_rate,
        "two_point_rate": cfg.rates.two_point_rate,
        "is_element_lengths": list(cfg.rates.is_element_lengths),
    }
    return d


def config_from_dict(data: dict) -> SearchConfig:
    """Build a config from a plain dict, rejecting unknown keys."""
    data = dict(data)
    rates_data = data.pop("rates", None) or {}
    known = {f.name for f in fields(SearchConfig)} - {"rates"}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    rate_known = {f.name for f in fields(OperatorRates)}
    rate_unknown = set(rates_data) - rate_known
    if rate_unknown:
        raise ValueError(f"unknown rates keys: {sorted(rate_unknown)}")
    if "is_element_lengths" in rates_data:
        rates_data["is_element_lengths"] = tuple(rates_data["is_element_lengths"])
    rates = OperatorRates(**rates_data)
    cfg = SearchConfig(rates=rates, **data)
    cfg.validate()
    return cfg


def load_config(path, overrides: dict | None = None) -> SearchConfig:
    """Load a YAML config file, apply overrides, validate."""
    import yaml

    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must contain a mapping")
    if overrides:
        data.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(data)


def with_overrides(cfg: SearchConfig, **overrides) -> SearchConfig:
    changed = {k: v for k, v in overrides.items() if v is not None}
    out = replace(cfg, **changed)
    out.validate()
    return out
