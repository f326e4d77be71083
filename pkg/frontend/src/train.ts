/**
 * Warm-up training: minibatch SGD over the full training set, snapshotting
 * the model at a fixed step cadence. The snapshots — not the final model —
 * are the product here: per-sample gradients extracted at each of them form
 * the trajectory handed to the selection toolkit.
 */

import { ToyDataset } from "./dataset.js";
import { GradBuffers, Mlp, ModelSpec, accumulateBackward, applySgdStep, validateModelSpec } from "./model.js";
import { Rng } from "./rng.js";

export interface WarmupConfig {
  warmupSteps: number;
  /** Snapshot cadence; must divide warmupSteps exactly. */
  checkpointInterval: number;
  learningRate: number;
  batchSize: number;
  seed: number;
}

export interface Checkpoint {
  step: number;
  /** Stable string tag, e.g. "step-0030"; strictly increasing with step. */
  tag: string;
  model: Mlp;
  /** Mean batch loss observed at this step. */
  loss: number;
}

export class DivergenceError extends Error {
  readonly step: number;
  readonly loss: number;

  constructor(step: number, loss: number, learningRate: number) {
    super(
      `training diverged at step ${step}: mean batch loss is ${loss} ` +
        `(learning rate ${learningRate}); lower the rate or reseed`,
    );
    this.name = "DivergenceError";
    this.step = step;
    this.loss = loss;
  }
}

export function validateWarmupConfig(cfg: WarmupConfig, datasetSize: number): string[] {
  const violations: string[] = [];
  if (!Number.isInteger(cfg.warmupSteps) || cfg.warmupSteps < 1) {
    violations.push(`warmupSteps must be >= 1, got ${cfg.warmupSteps}`);
  }
  if (!Number.isInteger(cfg.checkpointInterval) || cfg.checkpointInterval < 1) {
    violations.push(`checkpointInterval must be >= 1, got ${cfg.checkpointInterval}`);
  } else if (Number.isInteger(cfg.warmupSteps) && cfg.warmupSteps % cfg.checkpointInterval !== 0) {
    violations.push(
      `checkpointInterval ${cfg.checkpointInterval} does not divide warmupSteps ${cfg.warmupSteps}`,
    );
  }
  if (!(cfg.learningRate > 0) || !Number.isFinite(cfg.learningRate)) {
    violations.push(`learningRate must be positive and finite, got ${cfg.learningRate}`);
  }
  if (!Number.isInteger(cfg.batchSize) || cfg.batchSize < 1) {
    violations.push(`batchSize must be >= 1, got ${cfg.batchSize}`);
  } else if (cfg.batchSize > datasetSize) {
    violations.push(`batchSize ${cfg.batchSize} exceeds the ${datasetSize} training samples`);
  }
  if (!Number.isInteger(cfg.seed)) {
    violations.push(`seed must be an integer, got ${cfg.seed}`);
  }
  return violations;
}

/**
 * Train from a fresh seeded init and return warmupSteps / checkpointInterval
 * snapshots with strictly increasing step tags. Fully deterministic per seed.
 * A non-finite batch loss aborts with a DivergenceError naming the step.
 */
export function warmupTrain(
  dataset: ToyDataset,
  modelSpec: ModelSpec,
  cfg: WarmupConfig,
): Checkpoint[] {
  const specViolations = validateModelSpec(modelSpec);
  if (specViolations.length > 0) {
    throw new Error(`invalid model spec: ${specViolations.join("; ")}`);
  }
  const violations = validateWarmupConfig(cfg, dataset.inputs.length);
  if (violations.length > 0) {
    throw new Error(`invalid warmup config: ${violations.join("; ")}`);
  }
  if (dataset.inputs.length === 0) {
    throw new Error("training dataset is empty");
  }

  const model = Mlp.init(modelSpec, new Rng(cfg.seed, 1));
  const batchRng = new Rng(cfg.seed, 2);
  const gb = new GradBuffers(modelSpec);
  const checkpoints: Checkpoint[] = [];

  for (let step = 1; step <= cfg.warmupSteps; step++) {
    gb.zero();
    let lossSum = 0;
    for (let b = 0; b < cfg.batchSize; b++) {
      const i = batchRng.int(dataset.inputs.length);
      lossSum += accumulateBackward(model, dataset.inputs[i], dataset.labels[i], gb);
    }
    const meanLoss = lossSum / cfg.batchSize;
    if (!Number.isFinite(meanLoss)) {
      throw new DivergenceError(step, meanLoss, cfg.learningRate);
    }
    applySgdStep(model, gb, cfg.learningRate, cfg.batchSize);
    if (step % cfg.checkpointInterval === 0) {
      checkpoints.push({
        step,
        tag: `step-${String(step).padStart(4, "0")}`,
        model: model.clone(),
        loss: meanLoss,
      });
    }
  }
  return checkpoints;
}
