/**
 * Builds an executable network from an exported IR document.
 *
 * Weight layout mirrors the engine's cost model exactly: every
 * convolution carries a bias, instance normalization carries per-channel
 * scale and offset over however many channels flow into it, upsampling
 * is a 2x2 stride-2 transposed convolution, and the head is a 1x1
 * convolution followed by a sigmoid.  Inputs are zero-padded to a
 * multiple of 2^(stages-1) and the output is cropped back.
 */

import * as tf from "@tensorflow/tfjs";

import { IrBlock, IrDocument, OpUnit, blockStage } from "./ir.js";

let modelCounter = 0;

interface ConvSpec {
  kind: "conv" | "tconv";
  kernel: number;
  cin: number;
  cout: number;
}

function heStd(spec: ConvSpec): number {
  return Math.sqrt(2 / (spec.kernel * spec.kernel * spec.cin));
}

class VariableStore {
  readonly variables: tf.Variable[] = [];
  private seedCounter: number;

  constructor(private readonly prefix: string, baseSeed: number) {
    this.seedCounter = baseSeed;
  }

  conv(name: string, spec: ConvSpec): { kernel: tf.Variable; bias: tf.Variable } {
    // tconv filters are stored [h, w, out, in] per the backend contract.
    const shape =
      spec.kind === "conv"
        ? [spec.kernel, spec.kernel, spec.cin, spec.cout]
        : [spec.kernel, spec.kernel, spec.cout, spec.cin];
    const kernel = tf.variable(
      tf.randomNormal(shape, 0, heStd(spec), "float32", this.seedCounter++),
      true,
      `${this.prefix}/${name}/kernel`,
    );
    const bias = tf.variable(
      tf.zeros([spec.cout]),
      true,
      `${this.prefix}/${name}/bias`,
    );
    this.variables.push(kernel, bias);
    return { kernel, bias };
  }

  norm(name: string, channels: number): { scale: tf.Variable; offset: tf.Variable } {
    const scale = tf.variable(
      tf.ones([channels]),
      true,
      `${this.prefix}/${name}/scale`,
    );
    const offset = tf.variable(
      tf.zeros([channels]),
      true,
      `${this.prefix}/${name}/offset`,
    );
    this.variables.push(scale, offset);
    return { scale, offset };
  }
}

function mish(x: tf.Tensor4D): tf.Tensor4D {
  return tf.mul(x, tf.tanh(tf.softplus(x))) as tf.Tensor4D;
}

function instanceNorm(
  x: tf.Tensor4D,
  scale: tf.Variable,
  offset: tf.Variable,
): tf.Tensor4D {
  const { mean, variance } = tf.moments(x, [1, 2], true);
  const normalized = tf.div(tf.sub(x, mean), tf.sqrt(tf.add(variance, 1e-5)));
  return tf.add(tf.mul(normalized, scale), offset) as tf.Tensor4D;
}

type UnitApply = (x: tf.Tensor4D) => tf.Tensor4D;

/** Pre-create variables for one node's unit sequence; returns its apply. */
function buildNodeOps(
  store: VariableStore,
  name: string,
  units: readonly OpUnit[],
  cin: number,
  cout: number,
): UnitApply {
  const applies: UnitApply[] = [];
  let channels = cin;
  for (const [index, unit] of units.entries()) {
    if (unit === "conv3x3" || unit === "conv5x5") {
      const kernelSize = unit === "conv3x3" ? 3 : 5;
      const { kernel, bias } = store.conv(`${name}/u${index}`, {
        kind: "conv",
        kernel: kernelSize,
        cin: channels,
        cout,
      });
      applies.push((x) =>
        tf.add(
          tf.conv2d(x, kernel as tf.Tensor4D, 1, "same"),
          bias,
        ) as tf.Tensor4D,
      );
      channels = cout;
    } else if (unit === "instance_norm") {
      const { scale, offset } = store.norm(`${name}/u${index}`, channels);
      applies.push((x) => instanceNorm(x, scale, offset));
    } else if (unit === "relu") {
      applies.push((x) => tf.relu(x));
    } else {
      applies.push(mish);
    }
  }
  return (x) => applies.reduce((acc, apply) => apply(acc), x);
}

interface BuiltBlock {
  block: IrBlock;
  inputNode: UnitApply;
  nodes: Map<number, UnitApply>;
  outputNode: UnitApply;
}

function buildBlock(
  store: VariableStore,
  block: IrBlock,
  stemChannels: number,
  channels: number,
): BuiltBlock {
  const nodes = new Map<number, UnitApply>();
  for (const node of block.active_nodes) {
    nodes.set(
      node,
      buildNodeOps(store, `${block.label}/n${node}`, block.op_units, channels, channels),
    );
  }
  return {
    block,
    inputNode: buildNodeOps(
      store,
      `${block.label}/in`,
      block.op_units,
      stemChannels,
      channels,
    ),
    nodes,
    outputNode: buildNodeOps(
      store,
      `${block.label}/out`,
      block.op_units,
      channels,
      channels,
    ),
  };
}

function runBlock(built: BuiltBlock, input: tf.Tensor4D): tf.Tensor4D {
  const { block } = built;
  const fromInput = built.inputNode(input);
  if (block.active_nodes.length === 0) {
    return built.outputNode(fromInput);
  }
  const outputs = new Map<number, tf.Tensor4D>();
  const inputTargets = new Set(block.input_targets);
  for (const node of block.active_nodes) {
    const terms: tf.Tensor4D[] = [];
    if (inputTargets.has(node)) terms.push(fromInput);
    for (const [src, dst] of block.edges) {
      if (dst === node) terms.push(outputs.get(src)!);
    }
    const fused = terms.length === 1 ? terms[0] : (tf.addN(terms) as tf.Tensor4D);
    outputs.set(node, built.nodes.get(node)!(fused));
  }
  const sourceTerms = block.output_sources.map((n) => outputs.get(n)!);
  const fused =
    sourceTerms.length === 1
      ? sourceTerms[0]
      : (tf.addN(sourceTerms) as tf.Tensor4D);
  return built.outputNode(fused);
}

export interface BuiltModel {
  ir: IrDocument;
  variables: tf.Variable[];
  countParams(): number;
  /** [1, H, W, in_channels] probabilities out, same spatial size. */
  forward(input: tf.Tensor4D): tf.Tensor4D;
  dispose(): void;
}

export function buildNetwork(ir: IrDocument, seed = 0): BuiltModel {
  const store = new VariableStore(`net${modelCounter++}`, seed * 1000 + 1);
  const channels = ir.channels;
  const stages = ir.stages;

  const encoders: BuiltBlock[] = [];
  const decoders: BuiltBlock[] = [];
  for (const block of ir.blocks) {
    const stem = block.label === "e0" ? ir.in_channels : channels;
    const built = buildBlock(store, block, stem, channels);
    (block.label.startsWith("e") ? encoders : decoders).push(built);
  }

  const upsamplers = decoders.map((built, i) =>
    store.conv(`up${i}`, { kind: "tconv", kernel: 2, cin: channels, cout: channels }),
  );
  const head = store.conv("head", {
    kind: "conv",
    kernel: 1,
    cin: channels,
    cout: ir.out_channels,
  });

  const unit = 2 ** (stages - 1);

  const forward = (input: tf.Tensor4D): tf.Tensor4D => {
    const [, height, width] = input.shape;
    const padH = (unit - (height % unit)) % unit;
    const padW = (unit - (width % unit)) % unit;
    let x = input;
    if (padH || padW) {
      const top = Math.floor(padH / 2);
      const left = Math.floor(padW / 2);
      x = tf.pad(input, [
        [0, 0],
        [top, padH - top],
        [left, padW - left],
        [0, 0],
      ]) as tf.Tensor4D;
    }

    const skips: tf.Tensor4D[] = [];
    for (const [level, encoder] of encoders.entries()) {
      x = runBlock(encoder, x);
      if (level < stages - 1) {
        skips.push(x);
        x = tf.maxPool(x, 2, 2, "same");
      }
    }
    for (const [i, decoder] of decoders.entries()) {
      const [, h, w] = x.shape;
      const up = upsamplers[i];
      x = tf.add(
        tf.conv2dTranspose(
          x,
          up.kernel as tf.Tensor4D,
          [1, h * 2, w * 2, channels],
          2,
          "valid",
        ),
        up.bias,
      ) as tf.Tensor4D;
      x = tf.add(x, skips[stages - 2 - i]) as tf.Tensor4D;
      x = runBlock(decoder, x);
    }
    x = tf.sigmoid(
      tf.add(tf.conv2d(x, head.kernel as tf.Tensor4D, 1, "same"), head.bias),
    ) as tf.Tensor4D;
    if (padH || padW) {
      const top = Math.floor(padH / 2);
      const left = Math.floor(padW / 2);
      x = tf.slice(x, [0, top, left, 0], [1, height, width, ir.out_channels]);
    }
    return x;
  };

  return {
    ir,
    variables: store.variables,
    countParams: () =>
      store.variables.reduce(
        (total, v) => total + v.shape.reduce((a, b) => a * b, 1),
        0,
      ),
    forward,
    dispose: () => {
      for (const variable of store.variables) variable.dispose();
    },
  };
}
