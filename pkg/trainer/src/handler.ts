/**
 * Fitness-protocol request handling, one JSON object in, one out.
 *
 * `eval_config` keys (all optional): `epochs`, `validate_after`, `lr`,
 * `alpha`, `omega`, `lookahead_alpha`, `lookahead_k`, `seed`,
 * `crop` ([h, w]) and `dataset`.  A dataset is either
 * `{"kind": "synthetic", "size": 32, "train": 2, "val": 1, "seed": 7}`
 * or `{"kind": "files", "root": "...", "train": [names], "val": [names]}`
 * pointing at image/label/fov triples.  Without a dataset a small
 * synthetic smoke set is used.
 */

import { Sample, loadFileDataset, syntheticSamples } from "./data.js";
import { parseIr } from "./ir.js";
import { SEARCH_DEFAULTS, TrainConfig, trainForFitness } from "./train.js";

export interface WireResponse {
  version: 1;
  request_id: number;
  status: "ok" | "error";
  fitness?: number;
  metrics?: Record<string, number>;
  error?: string;
}

export function trainConfigFrom(evalConfig: Record<string, unknown>): TrainConfig {
  const epochs = Number(evalConfig.epochs ?? SEARCH_DEFAULTS.epochs);
  const validateAfter = Number(
    evalConfig.validate_after ??
      Math.min(SEARCH_DEFAULTS.validateAfter, Math.max(0, epochs - 1)),
  );
  const crop = evalConfig.crop as [number, number] | undefined;
  return {
    epochs,
    validateAfter,
    learningRate: Number(evalConfig.lr ?? SEARCH_DEFAULTS.learningRate),
    alpha: Number(evalConfig.alpha ?? SEARCH_DEFAULTS.alpha),
    omega: Number(evalConfig.omega ?? SEARCH_DEFAULTS.omega),
    lookaheadAlpha: Number(
      evalConfig.lookahead_alpha ?? SEARCH_DEFAULTS.lookaheadAlpha,
    ),
    lookaheadK: Number(evalConfig.lookahead_k ?? SEARCH_DEFAULTS.lookaheadK),
    seed: Number(evalConfig.seed ?? SEARCH_DEFAULTS.seed),
    crop: crop ? [Number(crop[0]), Number(crop[1])] : null,
  };
}

export function datasetsFrom(
  evalConfig: Record<string, unknown>,
  inChannels: number,
): { train: Sample[]; val: Sample[] } {
  const spec = (evalConfig.dataset ?? { kind: "synthetic" }) as Record<string, unknown>;
  if (spec.kind === "synthetic" || spec.kind === undefined) {
    const size = Number(spec.size ?? 32);
    const trainCount = Number(spec.train ?? 2);
    const valCount = Number(spec.val ?? 1);
    const seed = Number(spec.seed ?? 7);
    const all = syntheticSamples(trainCount + valCount, size, inChannels, seed);
    return { train: all.slice(0, trainCount), val: all.slice(trainCount) };
  }
  if (spec.kind === "files") {
    const root = String(spec.root ?? "");
    const trainNames = (spec.train ?? []) as string[];
    const valNames = (spec.val ?? []) as string[];
    return {
      train: loadFileDataset(root, trainNames),
      val: loadFileDataset(root, valNames),
    };
  }
  throw new Error(`unknown dataset kind ${JSON.stringify(spec.kind)}`);
}

export function handleRequest(message: Record<string, unknown>): WireResponse {
  const requestId =
    typeof message.request_id === "number" ? message.request_id : -1;
  try {
    const ir = parseIr(message.arch_ir);
    const evalConfig = (message.eval_config ?? {}) as Record<string, unknown>;
    const cfg = trainConfigFrom(evalConfig);
    const { train, val } = datasetsFrom(evalConfig, ir.in_channels);
    const outcome = trainForFitness(ir, train, val, cfg);
    const metrics: Record<string, number> = {
      F1: outcome.fitness,
      epoch_of_best: outcome.bestEpoch,
      loss_first_epoch: outcome.epochLosses[0],
      loss_last_epoch: outcome.epochLosses[outcome.epochLosses.length - 1],
    };
    if (outcome.validation) {
      metrics.ACC = outcome.validation.acc;
      metrics.SE = outcome.validation.se;
      metrics.SP = outcome.validation.sp;
      metrics.AUROC = outcome.validation.auroc;
    }
    return {
      version: 1,
      request_id: requestId,
      status: "ok",
      fitness: outcome.fitness,
      metrics,
    };
  } catch (error) {
    return {
      version: 1,
      request_id: requestId,
      status: "error",
      error: error instanceof Error ? error.message : String(error),
    };
  }
}
