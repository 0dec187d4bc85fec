/**
 * Final-training entry point: long training run on a file dataset, a
 * weight checkpoint at the best validation epoch, and a test-set report
 * with rows computed inside and outside the field of view.
 *
 * Usage:
 *   node dist/train_final.js --ir ir.json --data <root> \
 *     --train img1,img2 --val img3 --test img4,img5 \
 *     [--epochs 900] [--validate-after 80] [--seed 0] \
 *     [--crop 1000x1000] --out <dir>
 */

import * as fs from "node:fs";
import * as path from "node:path";

import * as tf from "@tensorflow/tfjs";

import { Sample, imageTensor, loadFileDataset } from "./data.js";
import { weightsToFile } from "./io.js";
import { parseIr } from "./ir.js";
import { computeMetrics } from "./metrics.js";
import { BuiltModel, buildNetwork } from "./model.js";
import {
  SEARCH_DEFAULTS,
  restoreWeights,
  runTrainingLoop,
  snapshotWeights,
} from "./train.js";

function parseArgs(argv: string[]): Map<string, string> {
  const args = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`bad arguments near ${key}`);
    }
    args.set(key.slice(2), argv[i + 1]);
  }
  return args;
}

function names(csv: string | undefined): string[] {
  return csv ? csv.split(",").filter(Boolean) : [];
}

function poolPredictions(model: BuiltModel, samples: Sample[]) {
  const probs: number[] = [];
  const labels: number[] = [];
  const fovs: number[] = [];
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
  }
  return { probs, labels, fovs };
}

function main(): number {
  const args = parseArgs(process.argv.slice(2));
  for (const required of ["ir", "data", "train", "val", "test", "out"]) {
    if (!args.has(required)) {
      process.stderr.write(`missing --${required}\n`);
      return 1;
    }
  }
  const ir = parseIr(JSON.parse(fs.readFileSync(args.get("ir")!, "utf-8")));
  const root = args.get("data")!;
  const trainSet = loadFileDataset(root, names(args.get("train")));
  const valSet = loadFileDataset(root, names(args.get("val")));
  const testSet = loadFileDataset(root, names(args.get("test")));

  const epochs = Number(args.get("epochs") ?? 900);
  const validateAfter = Number(
    args.get("validate-after") ?? Math.min(80, Math.max(0, epochs - 1)),
  );
  const crop = args.get("crop");
  const cfg = {
    ...SEARCH_DEFAULTS,
    epochs,
    validateAfter,
    seed: Number(args.get("seed") ?? 0),
    crop: crop
      ? ([Number(crop.split("x")[0]), Number(crop.split("x")[1])] as [number, number])
      : null,
  };

  const outDir = args.get("out")!;
  fs.mkdirSync(outDir, { recursive: true });

  const model = buildNetwork(ir, cfg.seed);
  try {
    const outcome = runTrainingLoop(model, trainSet, valSet, cfg, true);
    if (outcome.bestWeights) {
      restoreWeights(model, outcome.bestWeights);
    }
    weightsToFile(
      outcome.bestWeights ?? snapshotWeights(model),
      path.join(outDir, "weights.json"),
    );

    const pooled = poolPredictions(model, testSet);
    const report = {
      best_epoch: outcome.bestEpoch,
      best_validation_f1: outcome.fitness,
      epoch_losses: outcome.epochLosses,
      test: {
        with_fov: computeMetrics(pooled.probs, pooled.labels, pooled.fovs),
        without_fov: computeMetrics(pooled.probs, pooled.labels, null),
      },
    };
    fs.writeFileSync(
      path.join(outDir, "report.json"),
      JSON.stringify(report, null, 2),
    );
    process.stderr.write(
      `best epoch ${outcome.bestEpoch}, validation F1 ` +
      `${outcome.fitness.toFixed(4)}, test F1 (FOV) ` +
      `${report.test.with_fov.f1.toFixed(4)}\n`,
    );
    return 0;
  } finally {
    model.dispose();
  }
}

process.exit(main());
