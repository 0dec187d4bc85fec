/** Checkpoint serialization: weights as base64 float32 blobs in JSON. */

import * as fs from "node:fs";

import { BuiltModel } from "./model.js";
import { WeightSnapshot, restoreWeights, snapshotWeights } from "./train.js";

interface CheckpointFile {
  format: "evoarch-weights";
  version: 1;
  weights: { name: string; shape: number[]; data: string }[];
}

export function weightsToFile(weights: WeightSnapshot[], file: string): void {
  const payload: CheckpointFile = {
    format: "evoarch-weights",
    version: 1,
    weights: weights.map((w) => ({
      name: w.name,
      shape: w.shape,
      data: Buffer.from(w.data.buffer, w.data.byteOffset, w.data.byteLength)
        .toString("base64"),
    })),
  };
  fs.writeFileSync(file, JSON.stringify(payload));
}

export function weightsFromFile(file: string): WeightSnapshot[] {
  const payload = JSON.parse(fs.readFileSync(file, "utf-8")) as CheckpointFile;
  if (payload.format !== "evoarch-weights" || payload.version !== 1) {
    throw new Error(`${file} is not a supported checkpoint`);
  }
  return payload.weights.map((w) => {
    const buffer = Buffer.from(w.data, "base64");
    return {
      name: w.name,
      shape: w.shape,
      data: new Float32Array(
        buffer.buffer, buffer.byteOffset, buffer.byteLength / 4,
      ).slice(),
    };
  });
}

export function saveModel(model: BuiltModel, file: string): void {
  weightsToFile(snapshotWeights(model), file);
}

export function loadModelWeights(model: BuiltModel, file: string): void {
  restoreWeights(model, weightsFromFile(file));
}
