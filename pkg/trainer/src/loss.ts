/**
 * Class-balanced, hardness-weighted cross-entropy over probability maps.
 *
 * For prediction p and binary target y the per-pixel contribution is
 *
 *   -[ alpha * y * (1-p)^omega * ln(p)
 *      + (1-alpha) * (1-y) * p^omega * ln(1-p) ]
 *
 * summed (not averaged) over all pixels.  `alpha` balances the positive
 * and negative classes, `omega` down-weights easy pixels.  At omega=0,
 * alpha=0.5 this is exactly half the summed binary cross-entropy.
 *
 * The scalar/array implementations run in float64 and back the
 * verifiable contract (value and analytic gradient); the tensor version
 * is the differentiable path used in training.
 */

import * as tf from "@tensorflow/tfjs";

export interface FocalLossConfig {
  alpha: number;
  omega: number;
}

export const DEFAULT_FOCAL: FocalLossConfig = { alpha: 0.5, omega: 2 };

function checkConfig(cfg: FocalLossConfig): void {
  if (!(cfg.alpha >= 0 && cfg.alpha <= 1)) {
    throw new Error(`alpha must be in [0, 1], got ${cfg.alpha}`);
  }
  if (!(cfg.omega >= 0)) {
    throw new Error(`omega must be >= 0, got ${cfg.omega}`);
  }
}

function checkShapes(pred: ArrayLike<number>, target: ArrayLike<number>): void {
  if (pred.length !== target.length) {
    throw new Error(`shape mismatch: ${pred.length} vs ${target.length}`);
  }
}

/** Summed focal loss in float64. Predictions must lie in (0, 1). */
export function focalLossValue(
  pred: ArrayLike<number>,
  target: ArrayLike<number>,
  cfg: FocalLossConfig = DEFAULT_FOCAL,
): number {
  checkConfig(cfg);
  checkShapes(pred, target);
  const { alpha, omega } = cfg;
  let total = 0;
  for (let i = 0; i < pred.length; i++) {
    const p = pred[i];
    const y = target[i];
    total -=
      alpha * y * Math.pow(1 - p, omega) * Math.log(p) +
      (1 - alpha) * (1 - y) * Math.pow(p, omega) * Math.log(1 - p);
  }
  return total;
}

/** Analytic d(loss)/d(pred) in float64, matching `focalLossValue`. */
export function focalLossGrad(
  pred: ArrayLike<number>,
  target: ArrayLike<number>,
  cfg: FocalLossConfig = DEFAULT_FOCAL,
): Float64Array {
  checkConfig(cfg);
  checkShapes(pred, target);
  const { alpha, omega } = cfg;
  const grad = new Float64Array(pred.length);
  for (let i = 0; i < pred.length; i++) {
    const p = pred[i];
    const y = target[i];
    let g = 0;
    if (y > 0) {
      // d/dp of -alpha*y*(1-p)^omega*ln(p)
      const pow = Math.pow(1 - p, omega);
      const powm1 = omega === 0 ? 0 : omega * Math.pow(1 - p, omega - 1);
      g += alpha * y * (powm1 * Math.log(p) - pow / p);
    }
    if (y < 1) {
      // d/dp of -(1-alpha)*(1-y)*p^omega*ln(1-p)
      const pow = Math.pow(p, omega);
      const powm1 = omega === 0 ? 0 : omega * Math.pow(p, omega - 1);
      g += (1 - alpha) * (1 - y) * (pow / (1 - p) - powm1 * Math.log(1 - p));
    }
    grad[i] = g;
  }
  return grad;
}

const EPSILON = 1e-7;

/** Differentiable focal loss; predictions are clipped away from {0, 1}. */
export function focalLossTensor(
  pred: tf.Tensor,
  target: tf.Tensor,
  cfg: FocalLossConfig = DEFAULT_FOCAL,
): tf.Scalar {
  checkConfig(cfg);
  if (pred.shape.join(",") !== target.shape.join(",")) {
    throw new Error(
      `shape mismatch: [${pred.shape}] vs [${target.shape}]`,
    );
  }
  return tf.tidy(() => {
    const p = tf.clipByValue(pred, EPSILON, 1 - EPSILON);
    const one = tf.scalar(1);
    const positive = tf
      .scalar(cfg.alpha)
      .mul(target)
      .mul(one.sub(p).pow(cfg.omega))
      .mul(tf.log(p));
    const negative = tf
      .scalar(1 - cfg.alpha)
      .mul(one.sub(target))
      .mul(p.pow(cfg.omega))
      .mul(tf.log(one.sub(p)));
    return positive.add(negative).sum().neg() as tf.Scalar;
  });
}
