"""Evolutionary search over gene-expression-programmed convolutional cells."""

from .compiler import (
    BudgetExceeded,
    CellGraph,
    CompileError,
    ModelDescriptor,
    assemble_network,
    compile_cell,
    count_params,
)
from .evolution import SearchResult, SearchState, init_search, random_baseline, run_search
from .fitness import (
    EvaluationFailure,
    FitnessRecord,
    SurrogateEvaluator,
    TrainerClient,
    relative_improvement,
    surrogate_eval,
)
from .karva import Genotype, decode, random_genotype, validate
from .persistence import export_descriptor, import_descriptor, read_snapshot, write_snapshot
from .search_space import Context, OperatorRates, SearchConfig, default_config, load_config

__version__ = "0.1.0"

__all__ = [
    "BudgetExceeded",
    "CellGraph",
    "CompileError",
    "Context",
    "EvaluationFailure",
    "FitnessRecord",
    "Genotype",
    "ModelDescriptor",
    "OperatorRates",
    "SearchConfig",
    "SearchResult",
    "SearchState",
    "SurrogateEvaluator",
    "TrainerClient",
    "assemble_network",
    "compile_cell",
    "count_params",
    "decode",
    "default_config",
    "export_descriptor",
    "import_descriptor",
    "init_search",
    "load_config",
    "random_baseline",
    "random_genotype",
    "read_snapshot",
    "relative_improvement",
    "run_search",
    "surrogate_eval",
    "validate",
    "write_snapshot",
]
