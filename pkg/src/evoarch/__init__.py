"""Evolutionary search over bitstring-encoded U-shaped segmentation networks."""

__version__ = "0.1.0"

from .genome import (  # noqa: F401
    Genotype,
    SearchSpaceConfig,
    normalized_hamming,
    parse_genotype,
    random_genotype,
    serialize_genotype,
)
from .archspace import (  # noqa: F401
    ArchitectureIR,
    decode_block,
    decode_genotype,
    document_to_ir,
    ir_to_document,
    op_table,
    reference_unet,
    validate,
)
from .analysis import (  # noqa: F401
    CostReport,
    cost_report,
    count_macs,
    count_params,
    population_op_histogram,
)
from .evolution import (  # noqa: F401
    EvolutionConfig,
    Individual,
    binary_tournament,
    difference_guided_crossover,
    environmental_select,
    evolve,
    mutate,
    resume,
)
from .fitness import (  # noqa: F401
    ArchProxyEvaluator,
    EvaluationError,
    ExternalEvaluator,
    FitnessCache,
    OneMaxEvaluator,
    build_evaluator,
    evaluate_population,
)
from .runlog import RunLog  # noqa: F401
