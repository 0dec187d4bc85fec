/**
 * The evaluation training loop: initialize, train with one full image
 * per iteration under flip/rotation augmentation, validate after a
 * warm-up epoch count, and report the best validation F1 as fitness.
 */

import * as tf from "@tensorflow/tfjs";

import { Sample, augmentSample, cropSample, imageTensor, labelTensor } from "./data.js";
import { IrDocument } from "./ir.js";
import { focalLossTensor } from "./loss.js";
import { SegMetrics, computeMetrics } from "./metrics.js";
import { BuiltModel, buildNetwork } from "./model.js";
import { Adam, Lookahead } from "./optim.js";
import { mulberry32, shuffled } from "./rng.js";

export interface TrainConfig {
  epochs: number;
  validateAfter: number;
  learningRate: number;
  alpha: number;
  omega: number;
  lookaheadAlpha: number;
  lookaheadK: number;
  seed: number;
  crop: [number, number] | null;
}

export const SEARCH_DEFAULTS: TrainConfig = {
  epochs: 130,
  validateAfter: 80,
  learningRate: 0.001,
  alpha: 0.5,
  omega: 2,
  lookaheadAlpha: 0.5,
  lookaheadK: 6,
  seed: 0,
  crop: null,
};

export interface WeightSnapshot {
  name: string;
  shape: number[];
  data: Float32Array;
}

export interface TrainOutcome {
  fitness: number;
  bestEpoch: number;
  epochLosses: number[];
  validation: SegMetrics | null;
  /** Weights at the best validation epoch, when snapshotting is on. */
  bestWeights: WeightSnapshot[] | null;
}

export function snapshotWeights(model: BuiltModel): WeightSnapshot[] {
  return model.variables.map((variable) => ({
    name: variable.name,
    shape: variable.shape.slice(),
    data: new Float32Array(variable.dataSync()),
  }));
}

export function restoreWeights(model: BuiltModel, weights: WeightSnapshot[]): void {
  const byName = new Map(weights.map((w) => [w.name, w]));
  for (const variable of model.variables) {
    const saved = byName.get(variable.name);
    if (!saved) throw new Error(`no saved weight for ${variable.name}`);
    variable.assign(tf.tensor(saved.data, saved.shape as never));
  }
}

/** Pool predictions over a whole split and compute metrics once. */
export function evaluateSplit(
  model: BuiltModel,
  samples: Sample[],
  threshold = 0.5,
): SegMetrics {
  const probs: number[] = [];
  const labels: number[] = [];
  const fovs: number[] = [];
  let anyFov = false;
  for (const sample of samples) {
    const x = imageTensor(sample);
    const out = tf.tidy(() => model.forward(x));
    const data = out.dataSync();
    x.dispose();
    out.dispose();
    for (let i = 0; i < data.length; i++) {
      probs.push(data[i]);
      labels.push(sample.label[i]);
      fovs.push(sample.fov ? sample.fov[i] : 1);
    }
    if (sample.fov) anyFov = true;
  }
  return computeMetrics(probs, labels, anyFov ? fovs : null, threshold);
}

/** Train an already-built model in place; the caller owns its lifetime. */
export function runTrainingLoop(
  model: BuiltModel,
  trainSet: Sample[],
  valSet: Sample[],
  cfg: TrainConfig = SEARCH_DEFAULTS,
  keepBestWeights = false,
): TrainOutcome {
  if (trainSet.length === 0 || valSet.length === 0) {
    throw new Error("training and validation splits must be non-empty");
  }
  if (cfg.validateAfter >= cfg.epochs) {
    throw new Error(
      `validate_after (${cfg.validateAfter}) must be < epochs (${cfg.epochs})`,
    );
  }
  const optimizer = new Lookahead(
    new Adam({ learningRate: cfg.learningRate }),
    { alpha: cfg.lookaheadAlpha, k: cfg.lookaheadK },
  );
  const rng = mulberry32(cfg.seed ^ 0x5eed5eed);
  const lossCfg = { alpha: cfg.alpha, omega: cfg.omega };

  const epochLosses: number[] = [];
  let bestF1 = 0;
  let bestEpoch = 0;
  let bestMetrics: SegMetrics | null = null;
  let bestWeights: WeightSnapshot[] | null = null;

  try {
    for (let epoch = 1; epoch <= cfg.epochs; epoch++) {
      let lossSum = 0;
      for (const source of shuffled(trainSet, rng)) {
        const cropped = cfg.crop
          ? cropSample(source, cfg.crop[0], cfg.crop[1], rng)
          : source;
        const sample = augmentSample(cropped, rng);
        const x = imageTensor(sample);
        const y = labelTensor(sample);
        const { value, grads } = tf.variableGrads(
          () => focalLossTensor(model.forward(x), y, lossCfg),
          model.variables,
        );
        optimizer.applyGradients(model.variables, grads);
        lossSum += value.dataSync()[0];
        value.dispose();
        for (const grad of Object.values(grads)) grad.dispose();
        x.dispose();
        y.dispose();
      }
      const meanLoss = lossSum / trainSet.length;
      if (!Number.isFinite(meanLoss)) {
        throw new Error(`training diverged at epoch ${epoch} (loss ${meanLoss})`);
      }
      epochLosses.push(meanLoss);
      if (epoch > cfg.validateAfter) {
        const metrics = evaluateSplit(model, valSet);
        if (metrics.f1 > bestF1 || bestMetrics === null) {
          bestF1 = metrics.f1;
          bestEpoch = epoch;
          bestMetrics = metrics;
          if (keepBestWeights) bestWeights = snapshotWeights(model);
        }
      }
    }
  } finally {
    optimizer.dispose();
  }
  return {
    fitness: bestF1,
    bestEpoch,
    epochLosses,
    validation: bestMetrics,
    bestWeights,
  };
}

/** Build, train, and dispose; the fitness-worker entry point. */
export function trainForFitness(
  ir: IrDocument,
  trainSet: Sample[],
  valSet: Sample[],
  cfg: TrainConfig = SEARCH_DEFAULTS,
): TrainOutcome {
  const model = buildNetwork(ir, cfg.seed);
  try {
    return runTrainingLoop(model, trainSet, valSet, cfg);
  } finally {
    model.dispose();
  }
}
