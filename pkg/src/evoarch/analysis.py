"""Static cost model: parameter counts, MACs, and population statistics.

Counting conventions: a convolution costs k^2*C_in*C_out + C_out
parameters (bias everywhere) and k^2*C_in*C_out multiply-accumulates per
output pixel; a 2x2 stride-2 transposed convolution applies its kernel
once per *input* pixel; instance normalization carries 2*C affine
parameters and no MACs; pooling, activations, and element-wise additions
are free.  "B" in reports means 1e9 MACs.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

from .archspace import (
    CONV3,
    CONV5,
    INORM,
    ArchitectureIR,
    BlockGraph,
    ReferenceUNet,
    validate,
)

if TYPE_CHECKING:  # pragma: no cover
    from .evolution import Individual

BYTES_PER_PARAM = 4


@dataclass(frozen=True)
class CostReport:
    """Cost summary for one architecture at one input shape."""

    params: int
    macs: int

    @property
    def model_size_bytes(self) -> int:
        return self.params * BYTES_PER_PARAM

    def to_dict(self) -> dict:
        return {
            "params": self.params,
            "macs": self.macs,
            "model_size_bytes": self.model_size_bytes,
        }


def conv_params(kernel: int, c_in: int, c_out: int) -> int:
    """Weights plus bias of one convolution."""
    return kernel * kernel * c_in * c_out + c_out


def conv_macs(kernel: int, c_in: int, c_out: int, pixels: int) -> int:
    """Multiply-accumulates of one convolution over ``pixels`` output sites."""
    return kernel * kernel * c_in * c_out * pixels


def _require_valid(ir: ArchitectureIR) -> None:
    violations = validate(ir)
    if violations:
        raise ValueError("invalid architecture: " + "; ".join(violations))


def _padded_hw(height: int, width: int, stages: int) -> tuple[int, int]:
    """Pad spatial dims up to the next multiple of 2^(stages-1)."""
    unit = 2 ** (stages - 1)
    return (math.ceil(height / unit) * unit, math.ceil(width / unit) * unit)


def _node_op_params(units: Sequence[str], c_in: int, c_out: int) -> int:
    """Walk one node's unit sequence, tracking the live channel count."""
    params = 0
    channels = c_in
    for unit in units:
        if unit in (CONV3, CONV5):
            params += conv_params(3 if unit == CONV3 else 5, channels, c_out)
            channels = c_out
        elif unit == INORM:
            params += 2 * channels
    return params


def _node_op_macs(units: Sequence[str], c_in: int, c_out: int,
                  pixels: int) -> int:
    macs = 0
    channels = c_in
    for unit in units:
        if unit in (CONV3, CONV5):
            macs += conv_macs(3 if unit == CONV3 else 5, channels, c_out, pixels)
            channels = c_out
    return macs


def _block_node_inputs(block: BlockGraph, stem_channels: int,
                       c: int) -> list[int]:
    """Input channel count for each operation-applying node of a block.

    Order: default input node first (it may carry the stem adaptation),
    then the intermediate nodes, then the default output node.  Only the
    input node can see a non-``c`` channel count; everything downstream
    consumes fused ``c``-wide maps.
    """
    return [stem_channels] + [c] * (len(block.active_nodes) + 1)


def count_params(ir: ArchitectureIR, c: int | None = None,
                 in_channels: int | None = None) -> int:
    """Total learnable parameters of a decoded architecture.

    ``c`` and ``in_channels`` default to the IR's own values so the same
    structure can be re-costed at other widths.
    """
    if isinstance(ir, ReferenceUNet):
        return _reference_params(ir, in_channels or 3)
    _require_valid(ir)
    c = ir.channels if c is None else c
    in_channels = ir.in_channels if in_channels is None else in_channels
    if c < 1 or in_channels < 1:
        raise ValueError("channel counts must be >= 1")

    params = 0
    for label, block in ir.blocks.items():
        stem = in_channels if label == "e0" else c
        for node_in in _block_node_inputs(block, stem, c):
            params += _node_op_params(block.op.units, node_in, c)
    # One transposed convolution (c -> c, kernel 2) per decoder block.
    params += (ir.stages - 1) * (2 * 2 * c * c + c)
    # 1x1 convolution head.
    params += c * ir.out_channels + ir.out_channels
    return params


def count_macs(ir: ArchitectureIR, c: int | None = None,
               input_shape: tuple[int, int, int] = (3, 565, 584)) -> int:
    """Multiply-accumulates for one forward pass at ``input_shape`` (C,H,W).

    Spatial dims are padded up to a multiple of 2^(stages-1) first, the
    boundary behaviour of the executable model.
    """
    if isinstance(ir, ReferenceUNet):
        return _reference_macs(ir, input_shape)
    _require_valid(ir)
    c = ir.channels if c is None else c
    in_channels, height, width = input_shape
    if height < 1 or width < 1 or in_channels < 1 or c < 1:
        raise ValueError("input dimensions and channels must be >= 1")

    height, width = _padded_hw(height, width, ir.stages)
    stage_pixels = [
        (height >> s) * (width >> s) for s in range(ir.stages)
    ]

    macs = 0
    for label, block in ir.blocks.items():
        stage = ir.block_stage(label)
        pixels = stage_pixels[stage]
        stem = in_channels if label == "e0" else c
        for node_in in _block_node_inputs(block, stem, c):
            macs += _node_op_macs(block.op.units, node_in, c, pixels)
    # Transposed convolutions up into stages stages-2 .. 0; kernel applied
    # once per input pixel, i.e. at the coarser resolution.
    for stage in range(ir.stages - 1):
        macs += 2 * 2 * c * c * stage_pixels[stage + 1]
    # Head at full (padded) resolution.
    macs += c * ir.out_channels * stage_pixels[0]
    return macs


def _reference_params(ref: ReferenceUNet, in_channels: int = 3) -> int:
    k = ref.kernel_size
    params = 0
    channels = in_channels
    for width in ref.widths:
        for _ in range(ref.convs_per_block):
            params += k * k * channels * width + width
            channels = width
    for width in reversed(ref.widths[:-1]):
        params += 2 * 2 * channels * width + width  # transposed conv halves
        channels = width
        block_in = 2 * width  # concatenated skip
        for _ in range(ref.convs_per_block):
            params += k * k * block_in * width + width
            block_in = width
    params += channels * ref.out_channels + ref.out_channels
    return params


def _reference_macs(ref: ReferenceUNet,
                    input_shape: tuple[int, int, int]) -> int:
    """MAC walk for the baseline, with its original unpadded convolutions."""
    in_channels, height, width = input_shape
    k = ref.kernel_size
    shrink = k - 1
    macs = 0
    channels = in_channels
    h, w = height, width
    for level, out_width in enumerate(ref.widths):
        for _ in range(ref.convs_per_block):
            h, w = h - shrink, w - shrink
            macs += k * k * channels * out_width * h * w
            channels = out_width
        if level < ref.levels - 1:
            h, w = h // 2, w // 2
    for out_width in reversed(ref.widths[:-1]):
        macs += 2 * 2 * channels * out_width * h * w  # tconv, per input pixel
        h, w = h * 2, w * 2
        channels = out_width
        block_in = 2 * out_width
        for _ in range(ref.convs_per_block):
            h, w = h - shrink, w - shrink
            macs += k * k * block_in * out_width * h * w
            block_in = out_width
    macs += channels * ref.out_channels * h * w
    return macs


def cost_report(ir: ArchitectureIR, c: int | None = None,
                input_shape: tuple[int, int, int] = (3, 565, 584)) -> CostReport:
    in_channels = input_shape[0]
    return CostReport(
        params=count_params(ir, c, in_channels),
        macs=count_macs(ir, c, input_shape),
    )


def population_op_histogram(pop: Sequence["Individual"],
                            top_k: int) -> Counter[int]:
    """Operation-id frequencies over all block genes of the top_k fittest."""
    if not pop:
        raise ValueError("population is empty")
    if top_k > len(pop):
        raise ValueError(f"top_k={top_k} exceeds population size {len(pop)}")
    if any(ind.fitness is None for ind in pop):
        raise ValueError("population contains unevaluated individuals")
    ranked = sorted(range(len(pop)), key=lambda i: (-pop[i].fitness, i))
    histogram: Counter[int] = Counter()
    for i in ranked[:top_k]:
        histogram.update(gene.op_id for gene in pop[i].genotype.blocks)
    return histogram
