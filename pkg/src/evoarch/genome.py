"""Fixed-length bitstring genotypes for the U-shaped block search space.

A genotype is a sequence of block genes, one per building block of the
encoder-decoder backbone, serialized as a single line of '0'/'1'
characters.  Each block gene is a 4-bit operation id (most significant
bit first) followed by one connection bit per ordered node pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OP_GENE_BITS = 4


def as_rng(seed_or_rng: int | np.random.Generator) -> np.random.Generator:
    """Return a PCG64 generator, seeding one if an integer is given."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def conn_pair_order(max_nodes: int) -> list[tuple[int, int]]:
    """Node pairs in connection-gene order: (1,2), (1,3), (2,3), (1,4), ...

    The k-th group of bits wires node k+1 to every lower-numbered node,
    so bit order is "for each target node, all sources below it".
    """
    return [(i, j) for j in range(2, max_nodes + 1) for i in range(1, j)]


@dataclass(frozen=True)
class SearchSpaceConfig:
    """Geometry of the encoding and the backbone it decodes into."""

    num_blocks: int = 7
    max_nodes: int = 5
    op_gene_bits: int = OP_GENE_BITS
    channels: int = 20
    stages: int = 4

    def __post_init__(self) -> None:
        if self.max_nodes < 1:
            raise ValueError(f"max_nodes must be >= 1, got {self.max_nodes}")
        if self.channels < 1:
            raise ValueError(f"channels must be >= 1, got {self.channels}")
        if self.op_gene_bits != OP_GENE_BITS:
            raise ValueError(f"op_gene_bits is fixed at {OP_GENE_BITS}")
        if self.stages < 1:
            raise ValueError(f"stages must be >= 1, got {self.stages}")
        if self.num_blocks != 2 * self.stages - 1:
            raise ValueError(
                f"num_blocks must equal 2*stages-1 "
                f"({2 * self.stages - 1}), got {self.num_blocks}"
            )

    @property
    def conn_gene_bits(self) -> int:
        return self.max_nodes * (self.max_nodes - 1) // 2

    @property
    def block_gene_bits(self) -> int:
        return self.op_gene_bits + self.conn_gene_bits

    @property
    def genome_length(self) -> int:
        return self.num_blocks * self.block_gene_bits

    @property
    def block_labels(self) -> tuple[str, ...]:
        """Block order: encoder top-down, then decoder bottom-up."""
        encoder = [f"e{i}" for i in range(self.stages)]
        decoder = [f"d{i}" for i in range(self.stages - 1)]
        return tuple(encoder + decoder)

    def to_dict(self) -> dict:
        return {
            "num_blocks": self.num_blocks,
            "max_nodes": self.max_nodes,
            "op_gene_bits": self.op_gene_bits,
            "channels": self.channels,
            "stages": self.stages,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SearchSpaceConfig":
        known = {f: data[f] for f in
                 ("num_blocks", "max_nodes", "op_gene_bits", "channels", "stages")
                 if f in data}
        unknown = set(data) - set(known)
        if unknown:
            raise ValueError(f"unknown search-space fields: {sorted(unknown)}")
        return cls(**known)


@dataclass(frozen=True)
class BlockGene:
    """One block's slice of the genome: operation id plus connection bits."""

    op_id: int
    conn_bits: tuple[int, ...]

    def __post_init__(self) -> None:
        if not 0 <= self.op_id < 2 ** OP_GENE_BITS:
            raise ValueError(f"op_id must be in [0, 16), got {self.op_id}")
        if any(b not in (0, 1) for b in self.conn_bits):
            raise ValueError("conn_bits must contain only 0/1")

    def to_text(self) -> str:
        return format(self.op_id, f"0{OP_GENE_BITS}b") + "".join(
            str(b) for b in self.conn_bits
        )


@dataclass(frozen=True)
class Genotype:
    """An architecture's full bitstring, as an ordered tuple of block genes."""

    blocks: tuple[BlockGene, ...]

    def to_text(self) -> str:
        return "".join(block.to_text() for block in self.blocks)

    def __str__(self) -> str:
        return self.to_text()

    @property
    def length(self) -> int:
        return sum(OP_GENE_BITS + len(b.conn_bits) for b in self.blocks)


def serialize_genotype(genotype: Genotype) -> str:
    """Canonical text form: one line of '0'/'1', no separators."""
    return genotype.to_text()


def parse_genotype(text: str, config: SearchSpaceConfig) -> Genotype:
    """Parse the canonical text form back into a structured genotype.

    Raises ValueError on wrong length or any character outside '0'/'1'.
    """
    if len(text) != config.genome_length:
        raise ValueError(
            f"genome must be {config.genome_length} bits, got {len(text)}"
        )
    bad = set(text) - {"0", "1"}
    if bad:
        raise ValueError(f"genome contains illegal characters: {sorted(bad)}")
    blocks = []
    step = config.block_gene_bits
    for start in range(0, len(text), step):
        chunk = text[start:start + step]
        op_id = int(chunk[:OP_GENE_BITS], 2)
        conn = tuple(int(ch) for ch in chunk[OP_GENE_BITS:])
        blocks.append(BlockGene(op_id=op_id, conn_bits=conn))
    return Genotype(blocks=tuple(blocks))


def genotype_to_bits(genotype: Genotype) -> np.ndarray:
    """Flatten a genotype to a uint8 0/1 array (crossover/mutation workhorse)."""
    return np.frombuffer(genotype.to_text().encode(), dtype=np.uint8) - ord("0")


def genotype_from_bits(bits: np.ndarray, config: SearchSpaceConfig) -> Genotype:
    """Rebuild a genotype from a 0/1 array laid out per `config`."""
    if bits.size != config.genome_length:
        raise ValueError(
            f"expected {config.genome_length} bits, got {bits.size}"
        )
    text = "".join("1" if b else "0" for b in bits)
    return parse_genotype(text, config)


def random_genotype(
    rng: int | np.random.Generator, config: SearchSpaceConfig
) -> Genotype:
    """Draw every bit independently uniform on {0, 1}."""
    gen = as_rng(rng)
    bits = gen.integers(0, 2, size=config.genome_length, dtype=np.uint8)
    return genotype_from_bits(bits, config)


def normalized_hamming(g1: Genotype, g2: Genotype) -> float:
    """Fraction of differing bit positions, in [0, 1]."""
    t1, t2 = g1.to_text(), g2.to_text()
    if len(t1) != len(t2):
        raise ValueError(f"genome lengths differ: {len(t1)} vs {len(t2)}")
    differing = sum(a != b for a, b in zip(t1, t2))
    return differing / len(t1)
