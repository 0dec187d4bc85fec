"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    service: str
    version: str


class SpaceParams(BaseModel):
    """Partial search-space override; omitted fields keep their defaults."""

    num_blocks: int | None = None
    max_nodes: int | None = None
    op_gene_bits: int | None = None
    channels: int | None = None
    stages: int | None = None

    def overrides(self) -> dict:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class EvolutionParams(BaseModel):
    """Partial evolution-config override; omitted fields keep their defaults."""

    population_size: int | None = None
    generations: int | None = None
    p_crossover: float | None = None
    p_mutation: float | None = None
    p_bit_flip: float | None = None
    diff_threshold: float | None = None
    elite_size: int | None = None
    crossover_points: int | None = None
    max_reselect: int | None = None
    selection_strategy: str | None = None
    tournament_pool: str | None = None
    rng_seed: int | None = None

    def overrides(self) -> dict:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class DecodeRequest(BaseModel):
    genome: str
    space: SpaceParams = Field(default_factory=SpaceParams)


class BlockModel(BaseModel):
    label: str
    op_id: int
    op_units: list[str]
    active_nodes: list[int]
    edges: list[list[int]]
    input_targets: list[int]
    output_sources: list[int]


class DecodeResponse(BaseModel):
    genome: str
    blocks: list[BlockModel]
    valid: bool
    violations: list[str]


class AnalyzeRequest(BaseModel):
    genome: str | None = None
    baseline: str | None = None
    channels: int | None = None
    in_channels: int = 3
    input_shape: tuple[int, int, int] = (3, 565, 584)
    space: SpaceParams = Field(default_factory=SpaceParams)


class AnalyzeResponse(BaseModel):
    params: int
    macs: int
    model_size_bytes: int
    source: str
    channels: int | None
    input_shape: tuple[int, int, int]


class ExportRequest(BaseModel):
    genome: str
    in_channels: int = 3
    space: SpaceParams = Field(default_factory=SpaceParams)


class SearchRequest(BaseModel):
    evolution: EvolutionParams = Field(default_factory=EvolutionParams)
    space: SpaceParams = Field(default_factory=SpaceParams)
    seed: int | None = None
    evaluator: str = "onemax"
    strategy: str | None = None
    eval_config: dict = Field(default_factory=dict)
    parallelism: int = 1
    workers: int | None = None
    timeout_s: float | None = None
    out_dir: str | None = None
    wait: bool = True


class TopGenome(BaseModel):
    genome: str
    fitness: float


class RunSummary(BaseModel):
    seed: int
    generations: int
    total_evaluations: int
    dispatches: int
    best_genome: str
    best_fitness: float
    per_generation_best: list[float]
    top_genomes: list[TopGenome]
    run_dir: str | None


class RunStatusResponse(BaseModel):
    run_id: str
    status: str
    summary: RunSummary | None = None
    error: str | None = None


class RunListResponse(BaseModel):
    runs: list[RunStatusResponse]


class ResumeRequest(BaseModel):
    run_dir: str
    parallelism: int = 1
    workers: int | None = None
    timeout_s: float | None = None
    wait: bool = True
