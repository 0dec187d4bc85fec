"""Decoding genotypes into concrete U-shaped encoder-decoder architectures.

A decoded architecture is a set of per-block DAGs wired into a fixed
backbone: encoder blocks separated by 2x2 max-pooling, decoder blocks fed
by 2x2 stride-2 transposed convolutions, element-wise-addition skip
connections at every stage except the deepest, a stem that adapts the
image channels to the internal width, and a 1x1 convolution head with a
logistic activation producing a probability map.
"""

from __future__ import annotations

from dataclasses import dataclass

from .genome import (
    BlockGene,
    Genotype,
    SearchSpaceConfig,
    conn_pair_order,
)

IR_FORMAT = "evoarch-ir"
IR_VERSION = 1

CONV3 = "conv3x3"
CONV5 = "conv5x5"
INORM = "instance_norm"
RELU = "relu"
MISH = "mish"

# The 16 selectable node operation sequences.  Ids 0-7 are
# post-activated (convolution first), ids 8-15 pre-activated
# (convolution last); kernel size and the presence of instance
# normalization vary per row.
_OP_UNITS: tuple[tuple[str, ...], ...] = (
    (CONV3, RELU),                # 0
    (CONV3, MISH),                # 1
    (CONV3, INORM, RELU),         # 2
    (CONV3, INORM, MISH),         # 3
    (CONV5, RELU),                # 4
    (CONV5, MISH),                # 5
    (CONV5, INORM, RELU),         # 6
    (CONV5, INORM, MISH),         # 7
    (RELU, CONV3),                # 8
    (MISH, CONV3),                # 9
    (INORM, RELU, CONV3),         # 10
    (INORM, MISH, CONV3),         # 11
    (RELU, CONV5),                # 12
    (MISH, CONV5),                # 13
    (INORM, RELU, CONV5),         # 14
    (INORM, MISH, CONV5),         # 15
)


@dataclass(frozen=True)
class OpSequence:
    """An ordered run of primitive units shared by every node of a block."""

    op_id: int
    units: tuple[str, ...]

    @property
    def kernel_size(self) -> int:
        return 5 if CONV5 in self.units else 3

    @property
    def has_norm(self) -> bool:
        return INORM in self.units

    @property
    def pre_activated(self) -> bool:
        """True when the convolution comes last (activation-first rows)."""
        return self.units[-1] in (CONV3, CONV5)


_OP_TABLE = tuple(
    OpSequence(op_id=i, units=units) for i, units in enumerate(_OP_UNITS)
)


def op_table() -> tuple[OpSequence, ...]:
    """All 16 node operation sequences, indexed by operation id."""
    return _OP_TABLE


@dataclass(frozen=True)
class BlockGraph:
    """One block's DAG over intermediate nodes, after pruning.

    Node indices are 1-based.  Edges always point from a lower index to a
    higher one, so the graph is acyclic by construction.  ``input_targets``
    are the surviving nodes fed by the block input, ``output_sources``
    those summed into the block output.  An empty ``active_nodes`` means
    the block degenerates to its default input->output node chain.
    """

    active_nodes: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    input_targets: tuple[int, ...]
    output_sources: tuple[int, ...]
    op: OpSequence

    @property
    def node_count(self) -> int:
        """Operation-applying nodes, counting the default input and output."""
        return len(self.active_nodes) + 2


@dataclass(frozen=True)
class ArchitectureIR:
    """A decoded network: per-block DAGs plus the fixed stage wiring."""

    blocks: dict[str, BlockGraph]
    channels: int
    stages: int
    in_channels: int = 3
    out_channels: int = 1
    downsample: str = "maxpool2x2"
    upsample: str = "tconv2x2"
    fusion: str = "add"
    skip_stages: tuple[int, ...] = (0, 1, 2)

    @property
    def encoder_labels(self) -> tuple[str, ...]:
        return tuple(f"e{i}" for i in range(self.stages))

    @property
    def decoder_labels(self) -> tuple[str, ...]:
        return tuple(f"d{i}" for i in range(self.stages - 1))

    def block_stage(self, label: str) -> int:
        """Stage index a block operates at (d_i runs at stage stages-2-i)."""
        index = int(label[1:])
        if label.startswith("e"):
            return index
        return self.stages - 2 - index


def decode_block(gene: BlockGene, config: SearchSpaceConfig) -> BlockGraph:
    """Turn one block gene into its pruned DAG.

    Connection bits are read in ``conn_pair_order``; intermediate nodes
    left with neither a predecessor nor a successor are removed.  Removal
    cannot cascade (a pruned node has no incident edges), so a single
    sweep reaches the fixpoint.
    """
    pairs = conn_pair_order(config.max_nodes)
    if len(gene.conn_bits) != len(pairs):
        raise ValueError(
            f"connection gene has {len(gene.conn_bits)} bits, "
            f"config wants {len(pairs)}"
        )
    edges = tuple(
        pair for pair, bit in zip(pairs, gene.conn_bits) if bit
    )
    touched = {node for edge in edges for node in edge}
    active = tuple(sorted(touched))
    has_pred = {dst for _, dst in edges}
    has_succ = {src for src, _ in edges}
    input_targets = tuple(n for n in active if n not in has_pred)
    output_sources = tuple(n for n in active if n not in has_succ)
    return BlockGraph(
        active_nodes=active,
        edges=tuple(sorted(edges)),
        input_targets=input_targets,
        output_sources=output_sources,
        op=_OP_TABLE[gene.op_id],
    )


def decode_genotype(
    genotype: Genotype,
    config: SearchSpaceConfig,
    in_channels: int = 3,
) -> ArchitectureIR:
    """Decode a full genotype into the fixed U-shaped backbone."""
    labels = config.block_labels
    if len(genotype.blocks) != len(labels):
        raise ValueError(
            f"genotype has {len(genotype.blocks)} blocks, "
            f"config wants {len(labels)}"
        )
    blocks = {
        label: decode_block(gene, config)
        for label, gene in zip(labels, genotype.blocks)
    }
    return ArchitectureIR(
        blocks=blocks,
        channels=config.channels,
        stages=config.stages,
        in_channels=in_channels,
        skip_stages=tuple(range(config.stages - 1)),
    )


def validate(ir: ArchitectureIR) -> list[str]:
    """Check all structural invariants; returns every violation found."""
    violations: list[str] = []
    if ir.stages < 2:
        violations.append(f"stages must be >= 2, got {ir.stages}")
    if ir.channels < 1:
        violations.append(f"channels must be >= 1, got {ir.channels}")
    if ir.in_channels < 1:
        violations.append(f"in_channels must be >= 1, got {ir.in_channels}")

    expected_labels = ir.encoder_labels + ir.decoder_labels
    if tuple(ir.blocks.keys()) != expected_labels:
        violations.append(
            f"block labels {tuple(ir.blocks.keys())} != expected {expected_labels}"
        )
    if ir.skip_stages != tuple(range(ir.stages - 1)):
        violations.append(
            f"skip connections must cover stages 0..{ir.stages - 2}, "
            f"got {ir.skip_stages}"
        )
    if ir.fusion != "add":
        violations.append(f"fusion must be element-wise add, got {ir.fusion!r}")

    for label, block in ir.blocks.items():
        violations.extend(_validate_block(label, block))
    return violations


def _validate_block(label: str, block: BlockGraph) -> list[str]:
    out: list[str] = []
    active = set(block.active_nodes)
    if any(n < 1 for n in active):
        out.append(f"{label}: node indices must be >= 1")
    if not (0 <= block.op.op_id < len(_OP_TABLE)):
        out.append(f"{label}: op id {block.op.op_id} out of range")
    elif block.op.units != _OP_TABLE[block.op.op_id].units:
        out.append(f"{label}: op units do not match table row {block.op.op_id}")

    has_pred: set[int] = set()
    has_succ: set[int] = set()
    for src, dst in block.edges:
        if src not in active or dst not in active:
            out.append(f"{label}: edge ({src},{dst}) touches a pruned node")
            continue
        if src >= dst:
            out.append(f"{label}: edge ({src},{dst}) must go low->high index")
        has_pred.add(dst)
        has_succ.add(src)

    for node in sorted(active):
        if node not in has_pred and node not in has_succ:
            out.append(f"{label}: node {node} is isolated and should be pruned")

    want_inputs = tuple(sorted(n for n in active if n not in has_pred))
    want_outputs = tuple(sorted(n for n in active if n not in has_succ))
    if tuple(sorted(block.input_targets)) != want_inputs:
        out.append(
            f"{label}: input_targets {block.input_targets} != "
            f"predecessor-free nodes {want_inputs}"
        )
    if tuple(sorted(block.output_sources)) != want_outputs:
        out.append(
            f"{label}: output_sources {block.output_sources} != "
            f"successor-free nodes {want_outputs}"
        )
    return out


def ir_to_document(ir: ArchitectureIR) -> dict:
    """Export an IR as its canonical, versioned JSON document."""
    return {
        "format": IR_FORMAT,
        "version": IR_VERSION,
        "channels": ir.channels,
        "stages": ir.stages,
        "in_channels": ir.in_channels,
        "out_channels": ir.out_channels,
        "downsample": ir.downsample,
        "upsample": ir.upsample,
        "fusion": ir.fusion,
        "skip_stages": list(ir.skip_stages),
        "stem": {"adapts": [ir.in_channels, ir.channels]},
        "head": {"kernel_size": 1, "out_channels": ir.out_channels,
                 "activation": "sigmoid"},
        "blocks": [
            {
                "label": label,
                "op_id": block.op.op_id,
                "op_units": list(block.op.units),
                "active_nodes": list(block.active_nodes),
                "edges": [list(edge) for edge in block.edges],
                "input_targets": list(block.input_targets),
                "output_sources": list(block.output_sources),
            }
            for label, block in ir.blocks.items()
        ],
    }


def document_to_ir(doc: dict) -> ArchitectureIR:
    """Parse an exported IR document; raises ValueError on schema problems."""
    if doc.get("format") != IR_FORMAT:
        raise ValueError(f"not an IR document (format={doc.get('format')!r})")
    if doc.get("version") != IR_VERSION:
        raise ValueError(f"unsupported IR version {doc.get('version')!r}")
    try:
        blocks = {
            spec["label"]: BlockGraph(
                active_nodes=tuple(spec["active_nodes"]),
                edges=tuple(tuple(e) for e in spec["edges"]),
                input_targets=tuple(spec["input_targets"]),
                output_sources=tuple(spec["output_sources"]),
                op=_OP_TABLE[spec["op_id"]],
            )
            for spec in doc["blocks"]
        }
        return ArchitectureIR(
            blocks=blocks,
            channels=doc["channels"],
            stages=doc["stages"],
            in_channels=doc["in_channels"],
            out_channels=doc["out_channels"],
            downsample=doc["downsample"],
            upsample=doc["upsample"],
            fusion=doc["fusion"],
            skip_stages=tuple(doc["skip_stages"]),
        )
    except (KeyError, IndexError, TypeError) as exc:
        raise ValueError(f"malformed IR document: {exc}") from exc


@dataclass(frozen=True)
class ReferenceUNet:
    """The classic U-Net baseline used for cost comparisons only.

    Five encoder levels with width doubling 64..1024, two unpadded 3x3
    conv+ReLU layers per block, 2x2 max-pooling, 2x2 stride-2 transposed
    convolutions halving the width, crop-and-concatenate skip fusion, and
    a 1x1 convolution head.  Never executed here, only counted.
    """

    base_width: int = 64
    levels: int = 5
    convs_per_block: int = 2
    kernel_size: int = 3
    out_channels: int = 1

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(self.base_width * 2 ** i for i in range(self.levels))

    @property
    def deepest_width(self) -> int:
        return self.widths[-1]


def reference_unet() -> ReferenceUNet:
    """Descriptor of the standard U-Net baseline."""
    return ReferenceUNet()
