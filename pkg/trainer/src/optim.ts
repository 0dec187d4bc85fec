/**
 * Adam with a Lookahead wrapper, operating directly on tf.Variables.
 *
 * Lookahead keeps a slow copy of every weight; every k fast steps the
 * slow weights move a fraction alpha toward the fast ones and the fast
 * weights snap back onto them.
 */

import * as tf from "@tensorflow/tfjs";

export interface AdamConfig {
  learningRate: number;
  beta1: number;
  beta2: number;
  epsilon: number;
}

export const DEFAULT_ADAM: AdamConfig = {
  learningRate: 0.001,
  beta1: 0.9,
  beta2: 0.999,
  epsilon: 1e-8,
};

export class Adam {
  private readonly cfg: AdamConfig;
  private m = new Map<string, tf.Variable>();
  private v = new Map<string, tf.Variable>();
  private step_ = 0;

  constructor(cfg: Partial<AdamConfig> = {}) {
    this.cfg = { ...DEFAULT_ADAM, ...cfg };
  }

  get stepCount(): number {
    return this.step_;
  }

  private moments(variable: tf.Variable): [tf.Variable, tf.Variable] {
    const key = variable.name;
    if (!this.m.has(key)) {
      this.m.set(key, tf.variable(tf.zerosLike(variable), false));
      this.v.set(key, tf.variable(tf.zerosLike(variable), false));
    }
    return [this.m.get(key)!, this.v.get(key)!];
  }

  /** One update over named gradients (as produced by tf.variableGrads). */
  applyGradients(variables: tf.Variable[], grads: tf.NamedTensorMap): void {
    this.step_ += 1;
    const { learningRate, beta1, beta2, epsilon } = this.cfg;
    const correction1 = 1 - Math.pow(beta1, this.step_);
    const correction2 = 1 - Math.pow(beta2, this.step_);
    for (const variable of variables) {
      const grad = grads[variable.name];
      if (grad === undefined) continue;
      const [m, v] = this.moments(variable);
      tf.tidy(() => {
        m.assign(m.mul(beta1).add(grad.mul(1 - beta1)));
        v.assign(v.mul(beta2).add(grad.square().mul(1 - beta2)));
        const mHat = m.div(correction1);
        const vHat = v.div(correction2);
        variable.assign(
          variable.sub(mHat.mul(learningRate).div(vHat.sqrt().add(epsilon))),
        );
      });
    }
  }

  dispose(): void {
    for (const buf of this.m.values()) buf.dispose();
    for (const buf of this.v.values()) buf.dispose();
    this.m.clear();
    this.v.clear();
  }
}

export interface LookaheadConfig {
  alpha: number;
  k: number;
}

export const DEFAULT_LOOKAHEAD: LookaheadConfig = { alpha: 0.5, k: 6 };

export class Lookahead {
  private readonly cfg: LookaheadConfig;
  private slow = new Map<string, tf.Variable>();
  private sinceSync = 0;

  constructor(
    private readonly inner: Adam,
    cfg: Partial<LookaheadConfig> = {},
  ) {
    this.cfg = { ...DEFAULT_LOOKAHEAD, ...cfg };
    if (this.cfg.k < 1) throw new Error(`lookahead k must be >= 1`);
  }

  applyGradients(variables: tf.Variable[], grads: tf.NamedTensorMap): void {
    for (const variable of variables) {
      if (!this.slow.has(variable.name)) {
        this.slow.set(variable.name, tf.variable(variable.clone(), false));
      }
    }
    this.inner.applyGradients(variables, grads);
    this.sinceSync += 1;
    if (this.sinceSync >= this.cfg.k) {
      this.sinceSync = 0;
      const { alpha } = this.cfg;
      for (const variable of variables) {
        const slow = this.slow.get(variable.name)!;
        tf.tidy(() => {
          slow.assign(slow.add(variable.sub(slow).mul(alpha)));
          variable.assign(slow.clone());
        });
      }
    }
  }

  dispose(): void {
    this.inner.dispose();
    for (const buf of this.slow.values()) buf.dispose();
    this.slow.clear();
  }
}
