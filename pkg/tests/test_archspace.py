import dataclasses
import itertools

import numpy as np
import pytest

from evoarch.archspace import (
    CONV3,
    CONV5,
    INORM,
    MISH,
    RELU,
    ArchitectureIR,
    BlockGraph,
    decode_block,
    decode_genotype,
    document_to_ir,
    ir_to_document,
    op_table,
    reference_unet,
    validate,
)
from evoarch.genome import (
    BlockGene,
    SearchSpaceConfig,
    conn_pair_order,
    parse_genotype,
    random_genotype,
)

# Expected rows of the operation table: kernel size, instance norm,
# activation, and activation placement for every id.
EXPECTED_OP_UNITS = {
    0: (CONV3, RELU),
    1: (CONV3, MISH),
    2: (CONV3, INORM, RELU),
    3: (CONV3, INORM, MISH),
    4: (CONV5, RELU),
    5: (CONV5, MISH),
    6: (CONV5, INORM, RELU),
    7: (CONV5, INORM, MISH),
    8: (RELU, CONV3),
    9: (MISH, CONV3),
    10: (INORM, RELU, CONV3),
    11: (INORM, MISH, CONV3),
    12: (RELU, CONV5),
    13: (MISH, CONV5),
    14: (INORM, RELU, CONV5),
    15: (INORM, MISH, CONV5),
}


class TestOpTable:
    def test_all_sixteen_rows(self):
        table = op_table()
        assert len(table) == 16
        for op_id, expected in EXPECTED_OP_UNITS.items():
            assert table[op_id].op_id == op_id
            assert table[op_id].units == expected

    def test_every_row_has_exactly_one_convolution(self):
        for seq in op_table():
            convs = [u for u in seq.units if u in (CONV3, CONV5)]
            assert len(convs) == 1

    def test_derived_attributes(self):
        table = op_table()
        assert table[11].kernel_size == 3 and table[11].has_norm
        assert table[11].pre_activated
        assert table[0].kernel_size == 3 and not table[0].pre_activated
        assert table[15].kernel_size == 5 and table[15].pre_activated


def brute_force_decode(conn_bits, max_nodes):
    """Independent fixpoint-pruning oracle over the raw edge list."""
    pairs = conn_pair_order(max_nodes)
    edges = {pair for pair, bit in zip(pairs, conn_bits) if bit}
    nodes = set(range(1, max_nodes + 1))
    while True:
        preds = {d for _, d in edges}
        succs = {s for s, _ in edges}
        doomed = {n for n in nodes if n not in preds and n not in succs}
        if not doomed:
            break
        nodes -= doomed
        edges = {e for e in edges if e[0] in nodes and e[1] in nodes}
    preds = {d for _, d in edges}
    succs = {s for s, _ in edges}
    return {
        "active": tuple(sorted(nodes)),
        "edges": tuple(sorted(edges)),
        "inputs": tuple(sorted(n for n in nodes if n not in preds)),
        "outputs": tuple(sorted(n for n in nodes if n not in succs)),
    }


class TestDecodeBlock:
    def test_exhaustive_against_pruning_oracle(self, space):
        for value in range(1024):
            conn = tuple(int(ch) for ch in format(value, "010b"))
            block = decode_block(BlockGene(op_id=0, conn_bits=conn), space)
            want = brute_force_decode(conn, space.max_nodes)
            assert block.active_nodes == want["active"]
            assert block.edges == want["edges"]
            assert block.input_targets == want["inputs"]
            assert block.output_sources == want["outputs"]

    def test_all_isolated_gives_degenerate_block(self, space):
        block = decode_block(BlockGene(0, (0,) * 10), space)
        assert block.active_nodes == ()
        assert block.edges == ()
        assert block.node_count == 2

    def test_two_parallel_chains(self, space):
        # Bits (1,2) and (4,5) set: node 3 is pruned, leaving the chains
        # input->1->2->output and input->4->5->output.
        conn = (1, 0, 0, 0, 0, 0, 0, 0, 0, 1)
        block = decode_block(BlockGene(0, conn), space)
        assert block.active_nodes == (1, 2, 4, 5)
        assert block.edges == ((1, 2), (4, 5))
        assert block.input_targets == (1, 4)
        assert block.output_sources == (2, 5)

    def test_fully_connected(self, space):
        block = decode_block(BlockGene(0, (1,) * 10), space)
        assert block.active_nodes == (1, 2, 3, 4, 5)
        assert len(block.edges) == 10
        assert block.input_targets == (1,)
        assert block.output_sources == (5,)

    def test_exhaustive_structural_invariants(self, space):
        for value in range(1024):
            conn = tuple(int(ch) for ch in format(value, "010b"))
            block = decode_block(BlockGene(0, conn), space)
            active = set(block.active_nodes)
            raw_pairs = conn_pair_order(space.max_nodes)
            raw_edges = {p for p, b in zip(raw_pairs, conn) if b}
            touched = {n for e in raw_edges for n in e}
            # Pruned exactly the isolated nodes of the raw edge set.
            assert active == touched
            for src, dst in block.edges:
                assert src < dst  # acyclic by index ordering
                assert src in active and dst in active
            # Reachability from input and co-reachability to output.
            reachable = set(block.input_targets)
            frontier = list(block.input_targets)
            while frontier:
                node = frontier.pop()
                for src, dst in block.edges:
                    if src == node and dst not in reachable:
                        reachable.add(dst)
                        frontier.append(dst)
            assert reachable == active
            coreach = set(block.output_sources)
            frontier = list(block.output_sources)
            while frontier:
                node = frontier.pop()
                for src, dst in block.edges:
                    if dst == node and src not in coreach:
                        coreach.add(src)
                        frontier.append(src)
            assert coreach == active

    def test_conn_length_mismatch_rejected(self, space):
        with pytest.raises(ValueError):
            decode_block(BlockGene(0, (0,) * 6), space)


class TestDecodeGenotype:
    def test_all_zeros_genome(self, space):
        ir = decode_genotype(parse_genotype("0" * 98, space), space)
        assert list(ir.blocks) == ["e0", "e1", "e2", "e3", "d0", "d1", "d2"]
        for block in ir.blocks.values():
            assert block.op.op_id == 0
            assert block.active_nodes == ()
        assert ir.skip_stages == (0, 1, 2)

    def test_random_genomes_validate(self, space):
        rng = np.random.default_rng(21)
        for _ in range(1000):
            ir = decode_genotype(random_genotype(rng, space), space)
            assert validate(ir) == []

    def test_decode_is_deterministic(self, space):
        genotype = random_genotype(5, space)
        assert decode_genotype(genotype, space) == decode_genotype(genotype, space)

    def test_stage_assignment(self, space):
        ir = decode_genotype(random_genotype(1, space), space)
        assert [ir.block_stage(lbl) for lbl in ir.blocks] == [0, 1, 2, 3, 2, 1, 0]

    def test_genes_decoding_to_same_graph_give_same_ir(self, space):
        # Decode is injective on connection genes under this pruning rule,
        # so equal decoded graphs can only come from equal genes; verify
        # both directions exhaustively for one block.
        seen: dict[tuple, tuple] = {}
        for value in range(1024):
            conn = tuple(int(ch) for ch in format(value, "010b"))
            block = decode_block(BlockGene(0, conn), space)
            key = (block.active_nodes, block.edges)
            assert key not in seen or seen[key] == conn
            seen[key] = conn


class TestValidate:
    def test_edge_to_pruned_node_flagged(self, space):
        ir = decode_genotype(random_genotype(2, space), space)
        bad_block = BlockGraph(
            active_nodes=(1, 2),
            edges=((1, 2), (1, 3)),  # node 3 is not active
            input_targets=(1,),
            output_sources=(2,),
            op=op_table()[0],
        )
        blocks = dict(ir.blocks)
        blocks["e1"] = bad_block
        tampered = dataclasses.replace(ir, blocks=blocks)
        assert any("pruned node" in v for v in validate(tampered))

    def test_missing_skip_stage_flagged(self, space):
        ir = decode_genotype(random_genotype(2, space), space)
        tampered = dataclasses.replace(ir, skip_stages=(0, 2))
        assert any("skip connections" in v for v in validate(tampered))

    def test_isolated_active_node_flagged(self, space):
        ir = decode_genotype(parse_genotype("0" * 98, space), space)
        blocks = dict(ir.blocks)
        blocks["d2"] = BlockGraph(
            active_nodes=(3,), edges=(),
            input_targets=(3,), output_sources=(3,),
            op=op_table()[0],
        )
        tampered = dataclasses.replace(ir, blocks=blocks)
        assert any("isolated" in v for v in validate(tampered))

    def test_wrong_fusion_flagged(self, space):
        ir = decode_genotype(random_genotype(2, space), space)
        tampered = dataclasses.replace(ir, fusion="concat")
        assert any("fusion" in v for v in validate(tampered))


class TestIrDocument:
    def test_round_trip(self, space):
        ir = decode_genotype(random_genotype(13, space), space)
        assert document_to_ir(ir_to_document(ir)) == ir

    def test_document_carries_schema_header(self, space):
        doc = ir_to_document(decode_genotype(random_genotype(1, space), space))
        assert doc["format"] == "evoarch-ir"
        assert doc["version"] == 1
        assert doc["stem"] == {"adapts": [3, 20]}
        assert doc["head"]["activation"] == "sigmoid"
        assert len(doc["blocks"]) == 7

    def test_rejects_foreign_documents(self):
        with pytest.raises(ValueError, match="format"):
            document_to_ir({"format": "other"})
        with pytest.raises(ValueError, match="version"):
            document_to_ir({"format": "evoarch-ir", "version": 99})

    def test_rejects_missing_fields(self, space):
        doc = ir_to_document(decode_genotype(random_genotype(1, space), space))
        del doc["blocks"][0]["edges"]
        with pytest.raises(ValueError, match="malformed"):
            document_to_ir(doc)


class TestReferenceUNet:
    def test_widths_double_to_1024(self):
        ref = reference_unet()
        assert ref.widths == (64, 128, 256, 512, 1024)
        assert ref.deepest_width == 1024
        assert ref.convs_per_block == 2
        assert ref.out_channels == 1
