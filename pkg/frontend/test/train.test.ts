import { describe, expect, it } from "vitest";

import { makeTrainDataset } from "../src/dataset.js";
import { DivergenceError, validateWarmupConfig, warmupTrain } from "../src/train.js";
import { WarmupConfig } from "../src/train.js";
import { smallDatasetSpec, smallModelSpec } from "./helpers.js";

const dataset = makeTrainDataset(smallDatasetSpec());
const modelSpec = smallModelSpec();

function cfg(overrides: Partial<WarmupConfig> = {}): WarmupConfig {
  return { warmupSteps: 20, checkpointInterval: 5, learningRate: 0.1, batchSize: 8, seed: 3, ...overrides };
}

describe("warmupTrain", () => {
  it("returns warmupSteps / checkpointInterval checkpoints with increasing tags", () => {
    const checkpoints = warmupTrain(dataset, modelSpec, cfg());
    expect(checkpoints.length).toBe(4);
    expect(checkpoints.map((c) => c.step)).toEqual([5, 10, 15, 20]);
    expect(checkpoints.map((c) => c.tag)).toEqual([
      "step-0005",
      "step-0010",
      "step-0015",
      "step-0020",
    ]);
    const tags = checkpoints.map((c) => c.tag);
    expect([...tags].sort()).toEqual(tags);
  });

  it("collapses to a single checkpoint when the interval equals the step count", () => {
    const checkpoints = warmupTrain(dataset, modelSpec, cfg({ checkpointInterval: 20 }));
    expect(checkpoints.length).toBe(1);
    expect(checkpoints[0].step).toBe(20);
  });

  it("reproduces the run exactly for a fixed seed", () => {
    const a = warmupTrain(dataset, modelSpec, cfg());
    const b = warmupTrain(dataset, modelSpec, cfg());
    const lastA = a[a.length - 1];
    const lastB = b[b.length - 1];
    expect(Math.abs(lastA.loss - lastB.loss)).toBeLessThanOrEqual(1e-6);
    expect(lastA.model.w2).toEqual(lastB.model.w2);
    expect(lastA.model.w1).toEqual(lastB.model.w1);
  });

  it("actually learns and differs across seeds", () => {
    const a = warmupTrain(dataset, modelSpec, cfg({ warmupSteps: 60, checkpointInterval: 10 }));
    expect(a[a.length - 1].loss).toBeLessThan(a[0].loss);
    const b = warmupTrain(dataset, modelSpec, cfg({ seed: 4 }));
    expect(b[b.length - 1].loss).not.toBe(a[a.length - 1].loss);
  });

  it("snapshots are decoupled from later training", () => {
    const checkpoints = warmupTrain(dataset, modelSpec, cfg());
    // Earlier snapshots would be corrupted if clone() shared storage.
    expect(checkpoints[0].model.w2).not.toEqual(checkpoints[3].model.w2);
  });

  it("aborts with step diagnostics when the loss goes non-finite", () => {
    const poisoned = makeTrainDataset(smallDatasetSpec());
    for (const x of poisoned.inputs) x[0] = Number.NaN;
    let caught: unknown;
    try {
      warmupTrain(poisoned, modelSpec, cfg());
    } catch (err) {
      caught = err;
    }
    expect(caught).toBeInstanceOf(DivergenceError);
    const err = caught as DivergenceError;
    expect(err.step).toBe(1);
    expect(err.message).toMatch(/diverged at step 1/);
    expect(err.message).toMatch(/learning rate 0.1/);
  });
});

describe("validateWarmupConfig", () => {
  it("accepts the fixture config", () => {
    expect(validateWarmupConfig(cfg(), dataset.inputs.length)).toEqual([]);
  });

  it("rejects an interval that does not divide the steps", () => {
    const violations = validateWarmupConfig(cfg({ checkpointInterval: 7 }), dataset.inputs.length);
    expect(violations.join("; ")).toMatch(/does not divide/);
  });

  it("rejects a batch larger than the dataset", () => {
    const violations = validateWarmupConfig(cfg({ batchSize: 999 }), dataset.inputs.length);
    expect(violations.join("; ")).toMatch(/exceeds the 18 training samples/);
  });

  it.each([
    [{ warmupSteps: 0 }, /warmupSteps/],
    [{ checkpointInterval: 0 }, /checkpointInterval/],
    [{ learningRate: 0 }, /learningRate/],
    [{ learningRate: Number.POSITIVE_INFINITY }, /learningRate/],
    [{ batchSize: 0 }, /batchSize/],
    [{ seed: 1.5 }, /seed/],
  ] as const)("flags %j", (patch, pattern) => {
    const violations = validateWarmupConfig(cfg(patch), dataset.inputs.length);
    expect(violations.join("; ")).toMatch(pattern);
  });

  it("warmupTrain refuses an invalid config outright", () => {
    expect(() => warmupTrain(dataset, modelSpec, cfg({ checkpointInterval: 3 }))).toThrow(
      /invalid warmup config/,
    );
  });
});
