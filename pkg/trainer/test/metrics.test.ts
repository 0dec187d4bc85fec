import { describe, expect, it } from "vitest";

import { SegMetrics, computeMetrics, rocAuc } from "../src/metrics.js";
import { mulberry32 } from "../src/rng.js";

/** Brute-force oracle: explicit confusion counts and pairwise AUROC. */
function oracleMetrics(
  probs: number[],
  target: number[],
  fov: number[] | null,
  threshold = 0.5,
): SegMetrics {
  let tp = 0, fp = 0, tn = 0, fn = 0;
  const keptScores: number[] = [];
  const keptLabels: number[] = [];
  for (let i = 0; i < probs.length; i++) {
    if (fov !== null && !fov[i]) continue;
    const predicted = probs[i] > threshold;
    const actual = target[i] === 1;
    if (predicted && actual) tp++;
    else if (predicted && !actual) fp++;
    else if (!predicted && actual) fn++;
    else tn++;
    keptScores.push(probs[i]);
    keptLabels.push(actual ? 1 : 0);
  }
  let greater = 0, ties = 0, pairs = 0;
  for (let i = 0; i < keptScores.length; i++) {
    if (keptLabels[i] !== 1) continue;
    for (let j = 0; j < keptScores.length; j++) {
      if (keptLabels[j] !== 0) continue;
      pairs++;
      if (keptScores[i] > keptScores[j]) greater++;
      else if (keptScores[i] === keptScores[j]) ties++;
    }
  }
  const div = (a: number, b: number) => (b > 0 ? a / b : 0);
  return {
    acc: div(tp + tn, tp + tn + fp + fn),
    se: div(tp, tp + fn),
    sp: div(tn, tn + fp),
    f1: div(2 * tp, 2 * tp + fp + fn),
    auroc: pairs > 0 ? (greater + 0.5 * ties) / pairs : 0.5,
    withinFov: fov !== null,
  };
}

function randomCase(seed: number, size = 32) {
  const rng = mulberry32(seed);
  const n = size * size;
  const probs: number[] = [];
  const target: number[] = [];
  const fov: number[] = [];
  for (let i = 0; i < n; i++) {
    probs.push(rng());
    target.push(rng() < 0.3 ? 1 : 0);
    fov.push(rng() < 0.8 ? 1 : 0);
  }
  return { probs, target, fov };
}

describe("computeMetrics", () => {
  it("is perfect on exact predictions", () => {
    const target = [1, 0, 1, 0, 1];
    const metrics = computeMetrics(target, target);
    expect(metrics.acc).toBe(1);
    expect(metrics.se).toBe(1);
    expect(metrics.sp).toBe(1);
    expect(metrics.f1).toBe(1);
    expect(metrics.auroc).toBe(1);
  });

  it("zeroes sensitivity and specificity on inverted predictions", () => {
    const target = [1, 0, 1, 0];
    const inverted = target.map((v) => 1 - v);
    const metrics = computeMetrics(inverted, target);
    expect(metrics.se).toBe(0);
    expect(metrics.sp).toBe(0);
  });

  it("matches the brute-force oracle exactly on 100 random cases", () => {
    for (let seed = 0; seed < 100; seed++) {
      const { probs, target, fov } = randomCase(seed);
      const bare = computeMetrics(probs, target, null);
      const bareOracle = oracleMetrics(probs, target, null);
      expect(bare).toEqual(bareOracle);
      const masked = computeMetrics(probs, target, fov);
      const maskedOracle = oracleMetrics(probs, target, fov);
      expect(masked).toEqual(maskedOracle);
    }
  });

  it("restricts counting to the field of view", () => {
    const probs = [0.9, 0.9, 0.1, 0.1];
    const target = [1, 0, 0, 1];
    const fov = [1, 0, 1, 0]; // keeps one true positive and one true negative
    const metrics = computeMetrics(probs, target, fov);
    expect(metrics.acc).toBe(1);
    expect(metrics.withinFov).toBe(true);
  });

  it("handles constant scores with the tie convention", () => {
    const probs = [0.5, 0.5, 0.5, 0.5];
    const target = [1, 0, 1, 0];
    expect(computeMetrics(probs, target).auroc).toBe(0.5);
  });

  it("rejects mismatched shapes", () => {
    expect(() => computeMetrics([0.1], [1, 0])).toThrow(/mismatch/);
    expect(() => computeMetrics([0.1, 0.2], [1, 0], [1])).toThrow(/fov/);
  });
});

describe("rocAuc", () => {
  it("is 0.5 for a single-class problem", () => {
    expect(rocAuc([0.2, 0.8], [1, 1])).toBe(0.5);
  });

  it("scores a perfect ranking as 1", () => {
    expect(rocAuc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])).toBe(1);
  });
});
