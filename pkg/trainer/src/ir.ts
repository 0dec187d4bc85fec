/**
 * Parsing and validation of exported architecture documents.
 *
 * The engine exports a versioned JSON description of a decoded network:
 * per-block DAGs over intermediate nodes plus the fixed U-shaped wiring
 * (max-pool downsampling, transposed-conv upsampling, additive skips,
 * a channel-adapting stem on the first encoder block, and a 1x1 sigmoid
 * head).
 */

import { z } from "zod";

export const OP_UNITS = [
  "conv3x3",
  "conv5x5",
  "instance_norm",
  "relu",
  "mish",
] as const;

export type OpUnit = (typeof OP_UNITS)[number];

const BlockSchema = z.object({
  label: z.string().regex(/^[ed]\d+$/),
  op_id: z.number().int().min(0).max(15),
  op_units: z.array(z.enum(OP_UNITS)).min(2),
  active_nodes: z.array(z.number().int().min(1)),
  edges: z.array(z.tuple([z.number().int().min(1), z.number().int().min(1)])),
  input_targets: z.array(z.number().int().min(1)),
  output_sources: z.array(z.number().int().min(1)),
});

const IrSchema = z.object({
  format: z.literal("evoarch-ir"),
  version: z.literal(1),
  channels: z.number().int().min(1),
  stages: z.number().int().min(2),
  in_channels: z.number().int().min(1),
  out_channels: z.number().int().min(1),
  downsample: z.literal("maxpool2x2"),
  upsample: z.literal("tconv2x2"),
  fusion: z.literal("add"),
  skip_stages: z.array(z.number().int().min(0)),
  stem: z.object({ adapts: z.tuple([z.number().int(), z.number().int()]) }),
  head: z.object({
    kernel_size: z.number().int(),
    out_channels: z.number().int(),
    activation: z.literal("sigmoid"),
  }),
  blocks: z.array(BlockSchema),
});

export type IrBlock = z.infer<typeof BlockSchema>;
export type IrDocument = z.infer<typeof IrSchema>;

export class IrError extends Error {}

/** Validate an IR document and its structural invariants. */
export function parseIr(raw: unknown): IrDocument {
  const parsed = IrSchema.safeParse(raw);
  if (!parsed.success) {
    throw new IrError(`bad IR document: ${parsed.error.issues[0]?.message} at ${parsed.error.issues[0]?.path.join(".")}`);
  }
  const ir = parsed.data;
  const expected: string[] = [];
  for (let s = 0; s < ir.stages; s++) expected.push(`e${s}`);
  for (let s = 0; s < ir.stages - 1; s++) expected.push(`d${s}`);
  const labels = ir.blocks.map((b) => b.label);
  if (labels.join(",") !== expected.join(",")) {
    throw new IrError(`block labels [${labels}] do not match the ${ir.stages}-stage backbone`);
  }
  for (const block of ir.blocks) {
    const active = new Set(block.active_nodes);
    for (const [src, dst] of block.edges) {
      if (src >= dst) throw new IrError(`${block.label}: edge ${src}->${dst} must ascend`);
      if (!active.has(src) || !active.has(dst)) {
        throw new IrError(`${block.label}: edge ${src}->${dst} touches a pruned node`);
      }
    }
    const convs = block.op_units.filter((u) => u === "conv3x3" || u === "conv5x5");
    if (convs.length !== 1) {
      throw new IrError(`${block.label}: operation sequence must contain exactly one convolution`);
    }
  }
  return ir;
}

/** Stage a block runs at: e_i at stage i, d_i at stage stages-2-i. */
export function blockStage(label: string, stages: number): number {
  const index = Number(label.slice(1));
  return label.startsWith("e") ? index : stages - 2 - index;
}
