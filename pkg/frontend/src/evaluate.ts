/**
 * Retraining harness: given selections produced by the selection toolkit,
 * train one fresh model per selection per seed under identical hyperparameters
 * and report final loss / accuracy on a held-out evaluation set.
 *
 * The model init depends only on the seed — never on the selection — and the
 * subset is trained full-batch in sorted index order, so two selections with
 * the same index set produce bit-identical metrics.
 */

import * as fs from "node:fs";

import { ToyDataset } from "./dataset.js";
import { GradBuffers, Mlp, ModelSpec, accumulateBackward, applySgdStep } from "./model.js";
import { Rng } from "./rng.js";
import { DivergenceError } from "./train.js";

export const METRICS_SCHEMA_VERSION = 1;

export interface SelectionReport {
  algorithm: string;
  budget: number;
  indices: number[];
  sampleIds: string[] | null;
  weights: number[];
}

export interface RetrainConfig {
  steps: number;
  learningRate: number;
  seeds: number[];
  modelSpec: ModelSpec;
}

export interface AlgorithmMetrics {
  algorithm: string;
  losses: number[];
  accuracies: number[];
  meanLoss: number;
  stdLoss: number;
  meanAccuracy: number;
}

export interface MetricsReport {
  schemaVersion: number;
  budget: number;
  seeds: number[];
  config: {
    steps: number;
    learningRate: number;
    model: ModelSpec;
  };
  perAlgorithm: AlgorithmMetrics[];
}

export class MissingIdsError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "MissingIdsError";
  }
}

/**
 * Accept either the selection toolkit's `select` output (selection nested
 * under "selection") or a bare selection object.
 */
export function parseSelectionReport(obj: unknown): SelectionReport {
  if (typeof obj !== "object" || obj === null) {
    throw new Error("selection report is not a JSON object");
  }
  const root = obj as Record<string, unknown>;
  const sel = (typeof root.selection === "object" && root.selection !== null
    ? root.selection
    : root) as Record<string, unknown>;
  const problems: string[] = [];
  if (typeof sel.algorithm !== "string") problems.push("algorithm must be a string");
  if (!Number.isInteger(sel.budget)) problems.push("budget must be an integer");
  if (!Array.isArray(sel.indices) || !sel.indices.every((i) => Number.isInteger(i))) {
    problems.push("indices must be an integer array");
  }
  if (!Array.isArray(sel.weights) || !sel.weights.every((w) => typeof w === "number")) {
    problems.push("weights must be a number array");
  }
  const ids = sel.sample_ids ?? sel.sampleIds ?? null;
  if (ids !== null && (!Array.isArray(ids) || !ids.every((s) => typeof s === "string"))) {
    problems.push("sample ids must be a string array or null");
  }
  if (problems.length > 0) {
    throw new Error(`malformed selection report: ${problems.join("; ")}`);
  }
  return {
    algorithm: sel.algorithm as string,
    budget: sel.budget as number,
    indices: (sel.indices as number[]).map((i) => i),
    sampleIds: ids as string[] | null,
    weights: (sel.weights as number[]).map((w) => w),
  };
}

export function readSelectionReport(filePath: string): SelectionReport {
  return parseSelectionReport(JSON.parse(fs.readFileSync(filePath, "utf-8")));
}

/** Check a selection against the dataset it will be retrained on. */
function checkSelection(name: string, sel: SelectionReport, dataset: ToyDataset, budget: number): void {
  if (sel.indices.length !== budget) {
    throw new Error(
      `selection "${name}" has ${sel.indices.length} indices, expected budget ${budget}`,
    );
  }
  if (new Set(sel.indices).size !== sel.indices.length) {
    throw new Error(`selection "${name}" repeats indices`);
  }
  const n = dataset.inputs.length;
  const out = sel.indices.filter((i) => i < 0 || i >= n);
  if (out.length > 0) {
    throw new MissingIdsError(
      `selection "${name}" references samples outside the dataset of ${n}: ${out.join(", ")}`,
    );
  }
  if (sel.sampleIds !== null) {
    const mismatched = sel.indices
      .map((idx, k) => [idx, sel.sampleIds![k]] as const)
      .filter(([idx, id]) => dataset.sampleIds[idx] !== id)
      .map(([idx, id]) => `${id} (index ${idx} is ${dataset.sampleIds[idx]})`);
    if (mismatched.length > 0) {
      throw new MissingIdsError(
        `selection "${name}" ids not found at their indices: ${mismatched.join("; ")}`,
      );
    }
  }
}

/** Full-batch SGD on a fixed subset from a seed-only init. */
function trainSubset(
  dataset: ToyDataset,
  indices: number[],
  cfg: RetrainConfig,
  seed: number,
): Mlp {
  const model = Mlp.init(cfg.modelSpec, new Rng(seed, 1));
  const gb = new GradBuffers(cfg.modelSpec);
  const sorted = [...indices].sort((a, b) => a - b);
  for (let step = 1; step <= cfg.steps; step++) {
    gb.zero();
    let lossSum = 0;
    for (const i of sorted) {
      lossSum += accumulateBackward(model, dataset.inputs[i], dataset.labels[i], gb);
    }
    const meanLoss = lossSum / sorted.length;
    if (!Number.isFinite(meanLoss)) {
      throw new DivergenceError(step, meanLoss, cfg.learningRate);
    }
    applySgdStep(model, gb, cfg.learningRate, sorted.length);
  }
  return model;
}

export function evaluateModel(model: Mlp, dataset: ToyDataset): { meanLoss: number; accuracy: number } {
  let lossSum = 0;
  let correct = 0;
  const n = dataset.inputs.length;
  for (let i = 0; i < n; i++) {
    lossSum += model.lossOn(dataset.inputs[i], dataset.labels[i]);
    if (model.predict(dataset.inputs[i]) === dataset.labels[i]) correct += 1;
  }
  return { meanLoss: lossSum / n, accuracy: correct / n };
}

function mean(xs: number[]): number {
  return xs.reduce((a, b) => a + b, 0) / xs.length;
}

function sampleStd(xs: number[]): number {
  if (xs.length < 2) return 0;
  const m = mean(xs);
  return Math.sqrt(xs.reduce((a, b) => a + (b - m) * (b - m), 0) / (xs.length - 1));
}

export function validateRetrainConfig(cfg: RetrainConfig): string[] {
  const violations: string[] = [];
  if (!Number.isInteger(cfg.steps) || cfg.steps < 1) {
    violations.push(`steps must be >= 1, got ${cfg.steps}`);
  }
  if (!(cfg.learningRate > 0) || !Number.isFinite(cfg.learningRate)) {
    violations.push(`learningRate must be positive and finite, got ${cfg.learningRate}`);
  }
  if (cfg.seeds.length === 0 || !cfg.seeds.every((s) => Number.isInteger(s))) {
    violations.push("seeds must be a non-empty integer array");
  }
  return violations;
}

/**
 * Retrain-and-evaluate every named selection over every seed. The selections
 * must all carry exactly `budget` distinct in-range indices; ids, when
 * present, must match the dataset's ids at those indices.
 */
export function retrainEval(
  selections: { name: string; report: SelectionReport }[],
  trainSet: ToyDataset,
  evalSet: ToyDataset,
  budget: number,
  cfg: RetrainConfig,
): MetricsReport {
  const violations = validateRetrainConfig(cfg);
  if (violations.length > 0) {
    throw new Error(`invalid retrain config: ${violations.join("; ")}`);
  }
  if (selections.length === 0) {
    throw new Error("no selections to evaluate");
  }
  if (!Number.isInteger(budget) || budget < 1 || budget > trainSet.inputs.length) {
    throw new Error(`budget must be in [1, ${trainSet.inputs.length}], got ${budget}`);
  }
  for (const { name, report } of selections) {
    checkSelection(name, report, trainSet, budget);
  }

  const perAlgorithm: AlgorithmMetrics[] = selections.map(({ name, report }) => {
    const losses: number[] = [];
    const accuracies: number[] = [];
    for (const seed of cfg.seeds) {
      const model = trainSubset(trainSet, report.indices, cfg, seed);
      const scores = evaluateModel(model, evalSet);
      losses.push(scores.meanLoss);
      accuracies.push(scores.accuracy);
    }
    return {
      algorithm: name,
      losses,
      accuracies,
      meanLoss: mean(losses),
      stdLoss: sampleStd(losses),
      meanAccuracy: mean(accuracies),
    };
  });

  return {
    schemaVersion: METRICS_SCHEMA_VERSION,
    budget,
    seeds: [...cfg.seeds],
    config: {
      steps: cfg.steps,
      learningRate: cfg.learningRate,
      model: { ...cfg.modelSpec },
    },
    perAlgorithm,
  };
}

/** JSON image of a metrics report (snake_case keys, schema-stable). */
export function metricsToJson(report: MetricsReport): string {
  const doc = {
    schema_version: report.schemaVersion,
    command: "retrain-eval",
    budget: report.budget,
    seeds: report.seeds,
    config: {
      steps: report.config.steps,
      learning_rate: report.config.learningRate,
      model: {
        input_dim: report.config.model.inputDim,
        hidden_dim: report.config.model.hiddenDim,
        class_count: report.config.model.classCount,
      },
    },
    per_algorithm: report.perAlgorithm.map((a) => ({
      algorithm: a.algorithm,
      losses: a.losses,
      accuracies: a.accuracies,
      mean_loss: a.meanLoss,
      std_loss: a.stdLoss,
      mean_accuracy: a.meanAccuracy,
    })),
  };
  return JSON.stringify(doc, null, 2) + "\n";
}

function asObject(value: unknown, context: string): Record<string, unknown> {
  if (typeof value !== "object" || value === null || Array.isArray(value)) {
    throw new Error(`${context} must be an object`);
  }
  return value as Record<string, unknown>;
}

function asNumberArray(value: unknown, context: string): number[] {
  if (!Array.isArray(value) || !value.every((x) => typeof x === "number" && Number.isFinite(x))) {
    throw new Error(`${context} must be an array of finite numbers`);
  }
  return value.map((x) => x);
}

function asInt(value: unknown, context: string): number {
  if (!Number.isInteger(value)) throw new Error(`${context} must be an integer`);
  return value as number;
}

function asFiniteNumber(value: unknown, context: string): number {
  if (typeof value !== "number" || !Number.isFinite(value)) {
    throw new Error(`${context} must be a finite number`);
  }
  return value;
}

/** Parse and validate a metrics JSON document; inverse of metricsToJson. */
export function parseMetricsReport(text: string): MetricsReport {
  const doc = asObject(JSON.parse(text), "metrics document");
  if (doc.schema_version !== METRICS_SCHEMA_VERSION) {
    throw new Error(
      `unsupported metrics schema_version ${doc.schema_version}, expected ${METRICS_SCHEMA_VERSION}`,
    );
  }
  const config = asObject(doc.config, "config");
  const model = asObject(config.model, "config.model");
  const perAlgorithm = doc.per_algorithm;
  if (!Array.isArray(perAlgorithm) || perAlgorithm.length === 0) {
    throw new Error("per_algorithm must be a non-empty array");
  }
  return {
    schemaVersion: METRICS_SCHEMA_VERSION,
    budget: asInt(doc.budget, "budget"),
    seeds: asNumberArray(doc.seeds, "seeds"),
    config: {
      steps: asInt(config.steps, "config.steps"),
      learningRate: asFiniteNumber(config.learning_rate, "config.learning_rate"),
      model: {
        inputDim: asInt(model.input_dim, "config.model.input_dim"),
        hiddenDim: asInt(model.hidden_dim, "config.model.hidden_dim"),
        classCount: asInt(model.class_count, "config.model.class_count"),
      },
    },
    perAlgorithm: perAlgorithm.map((entry, k) => {
      const a = asObject(entry, `per_algorithm[${k}]`);
      if (typeof a.algorithm !== "string") {
        throw new Error(`per_algorithm[${k}].algorithm must be a string`);
      }
      return {
        algorithm: a.algorithm,
        losses: asNumberArray(a.losses, `per_algorithm[${k}].losses`),
        accuracies: asNumberArray(a.accuracies, `per_algorithm[${k}].accuracies`),
        meanLoss: asFiniteNumber(a.mean_loss, `per_algorithm[${k}].mean_loss`),
        stdLoss: asFiniteNumber(a.std_loss, `per_algorithm[${k}].std_loss`),
        meanAccuracy: asFiniteNumber(a.mean_accuracy, `per_algorithm[${k}].mean_accuracy`),
      };
    }),
  };
}

export function writeMetrics(filePath: string, report: MetricsReport): void {
  fs.writeFileSync(filePath, metricsToJson(report));
}

export function readMetrics(filePath: string): MetricsReport {
  return parseMetricsReport(fs.readFileSync(filePath, "utf-8"));
}
