/**
 * One config object describes a full toy experiment: the redundancy-injected
 * dataset, the model, the warm-up run whose checkpoints gradients are taken
 * at, and the retraining comparison. Everything downstream is a deterministic
 * function of this object, so persisting it (experiment.json) is enough to
 * rebuild the exact datasets later for retraining.
 */

import * as fs from "node:fs";

import { DatasetSpec, datasetSize, validateDatasetSpec } from "./dataset.js";
import { ModelSpec, validateModelSpec } from "./model.js";
import { WarmupConfig, validateWarmupConfig } from "./train.js";

export interface RetrainSpec {
  steps: number;
  learningRate: number;
  seeds: number[];
}

export interface ToyExperimentConfig {
  dataset: DatasetSpec;
  /** Balanced evaluation draws per class (also the target-role samples). */
  evalPerClass: number;
  evalSeed: number;
  model: ModelSpec;
  warmup: WarmupConfig;
  retrain: RetrainSpec;
  budgets: number[];
}

export function defaultConfig(): ToyExperimentConfig {
  const dataset: DatasetSpec = {
    inputDim: 10,
    classCount: 4,
    uniquePerClass: 9,
    duplicateGroups: 14,
    copiesPerGroup: 6,
    duplicateClass: 0,
    clusterScale: 3.0,
    sampleNoise: 0.6,
    seed: 7,
  };
  return {
    dataset,
    evalPerClass: 10,
    evalSeed: 99,
    model: { inputDim: 10, hiddenDim: 24, classCount: 4 },
    warmup: {
      warmupSteps: 60,
      checkpointInterval: 10,
      learningRate: 0.2,
      batchSize: 32,
      seed: 7,
    },
    retrain: { steps: 150, learningRate: 0.3, seeds: [0, 1, 2, 3, 4] },
    budgets: [12, 120],
  };
}

/** Return a list of invariant violations; empty means the config is usable. */
export function validateConfig(cfg: ToyExperimentConfig): string[] {
  const violations: string[] = [];
  violations.push(...validateDatasetSpec(cfg.dataset));
  violations.push(...validateModelSpec(cfg.model));
  if (violations.length === 0) {
    violations.push(...validateWarmupConfig(cfg.warmup, datasetSize(cfg.dataset)));
    if (cfg.model.inputDim !== cfg.dataset.inputDim) {
      violations.push(
        `model inputDim ${cfg.model.inputDim} != dataset inputDim ${cfg.dataset.inputDim}`,
      );
    }
    if (cfg.model.classCount !== cfg.dataset.classCount) {
      violations.push(
        `model classCount ${cfg.model.classCount} != dataset classCount ${cfg.dataset.classCount}`,
      );
    }
    const n = datasetSize(cfg.dataset);
    for (const budget of cfg.budgets) {
      if (!Number.isInteger(budget) || budget < 1 || budget > n) {
        violations.push(`budget ${budget} outside [1, ${n}]`);
      }
    }
  }
  if (!Number.isInteger(cfg.evalPerClass) || cfg.evalPerClass < 1) {
    violations.push(`evalPerClass must be >= 1, got ${cfg.evalPerClass}`);
  }
  if (!Number.isInteger(cfg.evalSeed)) {
    violations.push(`evalSeed must be an integer, got ${cfg.evalSeed}`);
  }
  if (cfg.budgets.length === 0) {
    violations.push("budgets must be non-empty");
  }
  if (
    cfg.retrain.seeds.length === 0 ||
    !cfg.retrain.seeds.every((s) => Number.isInteger(s))
  ) {
    violations.push("retrain.seeds must be a non-empty integer array");
  }
  if (!Number.isInteger(cfg.retrain.steps) || cfg.retrain.steps < 1) {
    violations.push(`retrain.steps must be >= 1, got ${cfg.retrain.steps}`);
  }
  if (!(cfg.retrain.learningRate > 0) || !Number.isFinite(cfg.retrain.learningRate)) {
    violations.push(`retrain.learningRate must be positive and finite, got ${cfg.retrain.learningRate}`);
  }
  return violations;
}

export function writeExperimentConfig(filePath: string, cfg: ToyExperimentConfig): void {
  fs.writeFileSync(filePath, JSON.stringify(cfg, null, 2) + "\n");
}

export function readExperimentConfig(filePath: string): ToyExperimentConfig {
  const cfg = JSON.parse(fs.readFileSync(filePath, "utf-8")) as ToyExperimentConfig;
  const violations = validateConfig(cfg);
  if (violations.length > 0) {
    throw new Error(`invalid experiment config ${filePath}: ${violations.join("; ")}`);
  }
  return cfg;
}
