/**
 * Small feed-forward classifier with hand-rolled forward/backward passes.
 *
 * input --(w1, b1)--> tanh hidden --(w2, b2)--> softmax over classes.
 *
 * Training updates every parameter; gradient *export* flattens only the
 * final-layer block (w2 row-major by class, then b2), keeping the exported
 * per-sample dimension small while staying faithful to what the last layer
 * sees during training.
 */

import { Rng } from "./rng.js";

export interface ModelSpec {
  inputDim: number;
  hiddenDim: number;
  classCount: number;
}

/** Length of the flattened final-layer gradient block. */
export function finalLayerDim(spec: ModelSpec): number {
  return spec.classCount * spec.hiddenDim + spec.classCount;
}

export function validateModelSpec(spec: ModelSpec): string[] {
  const violations: string[] = [];
  if (!Number.isInteger(spec.inputDim) || spec.inputDim < 1) {
    violations.push(`inputDim must be >= 1, got ${spec.inputDim}`);
  }
  if (!Number.isInteger(spec.hiddenDim) || spec.hiddenDim < 1) {
    violations.push(`hiddenDim must be >= 1, got ${spec.hiddenDim}`);
  }
  if (!Number.isInteger(spec.classCount) || spec.classCount < 2) {
    violations.push(`classCount must be >= 2, got ${spec.classCount}`);
  }
  return violations;
}

export class Mlp {
  readonly spec: ModelSpec;
  readonly w1: Float64Array; // hiddenDim x inputDim, row-major
  readonly b1: Float64Array; // hiddenDim
  readonly w2: Float64Array; // classCount x hiddenDim, row-major
  readonly b2: Float64Array; // classCount

  private constructor(
    spec: ModelSpec,
    w1: Float64Array,
    b1: Float64Array,
    w2: Float64Array,
    b2: Float64Array,
  ) {
    this.spec = spec;
    this.w1 = w1;
    this.b1 = b1;
    this.w2 = w2;
    this.b2 = b2;
  }

  /** Fresh model with scaled-gaussian weights and zero biases. */
  static init(spec: ModelSpec, rng: Rng): Mlp {
    const violations = validateModelSpec(spec);
    if (violations.length > 0) {
      throw new Error(`invalid model spec: ${violations.join("; ")}`);
    }
    const w1 = rng.gaussianVector(spec.hiddenDim * spec.inputDim, Math.sqrt(1 / spec.inputDim));
    const b1 = new Float64Array(spec.hiddenDim);
    const w2 = rng.gaussianVector(spec.classCount * spec.hiddenDim, Math.sqrt(1 / spec.hiddenDim));
    const b2 = new Float64Array(spec.classCount);
    return new Mlp(spec, w1, b1, w2, b2);
  }

  clone(): Mlp {
    return new Mlp(
      this.spec,
      Float64Array.from(this.w1),
      Float64Array.from(this.b1),
      Float64Array.from(this.w2),
      Float64Array.from(this.b2),
    );
  }

  hidden(x: Float64Array): Float64Array {
    const { inputDim, hiddenDim } = this.spec;
    if (x.length !== inputDim) {
      throw new Error(`input has ${x.length} features, model expects ${inputDim}`);
    }
    const h = new Float64Array(hiddenDim);
    for (let j = 0; j < hiddenDim; j++) {
      let a = this.b1[j];
      const row = j * inputDim;
      for (let i = 0; i < inputDim; i++) a += this.w1[row + i] * x[i];
      h[j] = Math.tanh(a);
    }
    return h;
  }

  logitsFromHidden(h: Float64Array): Float64Array {
    const { hiddenDim, classCount } = this.spec;
    const z = new Float64Array(classCount);
    for (let c = 0; c < classCount; c++) {
      let a = this.b2[c];
      const row = c * hiddenDim;
      for (let j = 0; j < hiddenDim; j++) a += this.w2[row + j] * h[j];
      z[c] = a;
    }
    return z;
  }

  /** Cross-entropy loss of one sample (no gradients). */
  lossOn(x: Float64Array, label: number): number {
    const { loss } = softmaxLoss(this.logitsFromHidden(this.hidden(x)), label);
    return loss;
  }

  /** Predicted class (argmax of the logits; ties go to the lower index). */
  predict(x: Float64Array): number {
    const z = this.logitsFromHidden(this.hidden(x));
    let best = 0;
    for (let c = 1; c < z.length; c++) if (z[c] > z[best]) best = c;
    return best;
  }
}

/** Numerically safe softmax cross-entropy: probabilities and loss. */
export function softmaxLoss(z: Float64Array, label: number): { loss: number; probs: Float64Array } {
  if (!Number.isInteger(label) || label < 0 || label >= z.length) {
    throw new Error(`label ${label} outside [0, ${z.length})`);
  }
  let zMax = -Infinity;
  for (let c = 0; c < z.length; c++) if (z[c] > zMax) zMax = z[c];
  const probs = new Float64Array(z.length);
  let sum = 0;
  for (let c = 0; c < z.length; c++) {
    probs[c] = Math.exp(z[c] - zMax);
    sum += probs[c];
  }
  for (let c = 0; c < z.length; c++) probs[c] /= sum;
  const loss = Math.log(sum) - (z[label] - zMax);
  return { loss, probs };
}

/** Accumulators shaped like the model parameters. */
export class GradBuffers {
  readonly w1: Float64Array;
  readonly b1: Float64Array;
  readonly w2: Float64Array;
  readonly b2: Float64Array;

  constructor(spec: ModelSpec) {
    this.w1 = new Float64Array(spec.hiddenDim * spec.inputDim);
    this.b1 = new Float64Array(spec.hiddenDim);
    this.w2 = new Float64Array(spec.classCount * spec.hiddenDim);
    this.b2 = new Float64Array(spec.classCount);
  }

  zero(): void {
    this.w1.fill(0);
    this.b1.fill(0);
    this.w2.fill(0);
    this.b2.fill(0);
  }
}

/**
 * Full backward pass for one sample; gradients are *added* into `gb` so a
 * batch is one zero() followed by one call per sample. Returns the loss.
 */
export function accumulateBackward(
  model: Mlp,
  x: Float64Array,
  label: number,
  gb: GradBuffers,
): number {
  const { inputDim, hiddenDim, classCount } = model.spec;
  const h = model.hidden(x);
  const z = model.logitsFromHidden(h);
  const { loss, probs } = softmaxLoss(z, label);

  // dLoss/dLogits = probs - onehot(label)
  const dz = probs; // reuse in place
  dz[label] -= 1;

  const dh = new Float64Array(hiddenDim);
  for (let c = 0; c < classCount; c++) {
    const row = c * hiddenDim;
    const g = dz[c];
    for (let j = 0; j < hiddenDim; j++) {
      gb.w2[row + j] += g * h[j];
      dh[j] += g * model.w2[row + j];
    }
    gb.b2[c] += g;
  }
  for (let j = 0; j < hiddenDim; j++) {
    const da = dh[j] * (1 - h[j] * h[j]); // through tanh
    const row = j * inputDim;
    for (let i = 0; i < inputDim; i++) gb.w1[row + i] += da * x[i];
    gb.b1[j] += da;
  }
  return loss;
}

/** SGD update: params -= learningRate * grads / scale. */
export function applySgdStep(model: Mlp, gb: GradBuffers, learningRate: number, scale: number): void {
  const lr = learningRate / scale;
  for (let i = 0; i < model.w1.length; i++) model.w1[i] -= lr * gb.w1[i];
  for (let i = 0; i < model.b1.length; i++) model.b1[i] -= lr * gb.b1[i];
  for (let i = 0; i < model.w2.length; i++) model.w2[i] -= lr * gb.w2[i];
  for (let i = 0; i < model.b2.length; i++) model.b2[i] -= lr * gb.b2[i];
}

/**
 * Per-sample gradient of the loss with respect to the final layer only,
 * written into `out[offset .. offset + finalLayerDim)`: w2 rows by class,
 * then b2. Returns the sample loss. `out` may be a Float32Array (values are
 * rounded on store) or a Float64Array (exact, used by tests).
 */
export function finalLayerGradient(
  model: Mlp,
  x: Float64Array,
  label: number,
  out: Float32Array | Float64Array,
  offset: number,
): number {
  const { hiddenDim, classCount } = model.spec;
  const h = model.hidden(x);
  const z = model.logitsFromHidden(h);
  const { loss, probs } = softmaxLoss(z, label);
  probs[label] -= 1;
  for (let c = 0; c < classCount; c++) {
    const g = probs[c];
    const row = offset + c * hiddenDim;
    for (let j = 0; j < hiddenDim; j++) out[row + j] = g * h[j];
    out[offset + classCount * hiddenDim + c] = g;
  }
  return loss;
}
