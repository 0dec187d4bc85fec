/**
 * Pixel-classification metrics over probability maps.
 *
 * A pixel counts as a predicted positive when its probability is
 * strictly above the threshold (default 0.5).  When a field-of-view
 * mask is supplied only pixels inside it participate.  Ratios with an
 * empty denominator are reported as 0; AUROC with an empty class is
 * reported as 0.5.
 */

export interface SegMetrics {
  acc: number;
  se: number;
  sp: number;
  f1: number;
  auroc: number;
  withinFov: boolean;
}

function safeDiv(numerator: number, denominator: number): number {
  return denominator > 0 ? numerator / denominator : 0;
}

/**
 * Area under the ROC curve via average ranks (Mann-Whitney), ties
 * counted half.
 */
export function rocAuc(scores: number[], labels: number[]): number {
  const n = scores.length;
  let positives = 0;
  for (const label of labels) positives += label;
  const negatives = n - positives;
  if (positives === 0 || negatives === 0) return 0.5;

  const order = Array.from({ length: n }, (_, i) => i).sort(
    (a, b) => scores[a] - scores[b],
  );
  const ranks = new Float64Array(n);
  let i = 0;
  while (i < n) {
    let j = i;
    while (j + 1 < n && scores[order[j + 1]] === scores[order[i]]) j++;
    const avgRank = (i + j) / 2 + 1; // 1-based average rank of the tie group
    for (let k = i; k <= j; k++) ranks[order[k]] = avgRank;
    i = j + 1;
  }
  let rankSum = 0;
  for (let k = 0; k < n; k++) {
    if (labels[k] === 1) rankSum += ranks[k];
  }
  return (rankSum - (positives * (positives + 1)) / 2) / (positives * negatives);
}

export function computeMetrics(
  probabilities: ArrayLike<number>,
  target: ArrayLike<number>,
  fov: ArrayLike<number> | null = null,
  threshold = 0.5,
): SegMetrics {
  if (probabilities.length !== target.length) {
    throw new Error(
      `shape mismatch: ${probabilities.length} vs ${target.length}`,
    );
  }
  if (fov !== null && fov.length !== target.length) {
    throw new Error(`fov mask length ${fov.length} != ${target.length}`);
  }
  let tp = 0;
  let fp = 0;
  let tn = 0;
  let fn = 0;
  const scores: number[] = [];
  const labels: number[] = [];
  for (let i = 0; i < probabilities.length; i++) {
    if (fov !== null && !fov[i]) continue;
    const predicted = probabilities[i] > threshold ? 1 : 0;
    const actual = target[i] ? 1 : 0;
    if (predicted && actual) tp++;
    else if (predicted && !actual) fp++;
    else if (!predicted && !actual) tn++;
    else fn++;
    scores.push(probabilities[i]);
    labels.push(actual);
  }
  return {
    acc: safeDiv(tp + tn, tp + tn + fp + fn),
    se: safeDiv(tp, tp + fn),
    sp: safeDiv(tn, tn + fp),
    f1: safeDiv(2 * tp, 2 * tp + fp + fn),
    auroc: rocAuc(scores, labels),
    withinFov: fov !== null,
  };
}
