import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { DatasetSpec } from "../src/dataset.js";
import { ModelSpec } from "../src/model.js";
import { Rng } from "../src/rng.js";
import { TrajectoryData, Role } from "../src/trajfile.js";

export function makeTmpDir(prefix: string): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), prefix));
}

export function removeDir(dir: string): void {
  fs.rmSync(dir, { recursive: true, force: true });
}

/** Small random trajectory for format tests. */
export function makeTrajectory(
  opts: { nSamples?: number; nTimesteps?: number; gradDim?: number; role?: Role; seed?: number } = {},
): TrajectoryData {
  const nSamples = opts.nSamples ?? 5;
  const nTimesteps = opts.nTimesteps ?? 3;
  const gradDim = opts.gradDim ?? 7;
  const rng = new Rng(opts.seed ?? 0, 9);
  const blocks = new Float32Array(nTimesteps * nSamples * gradDim);
  for (let i = 0; i < blocks.length; i++) blocks[i] = rng.gaussian();
  return {
    role: opts.role ?? "train",
    nSamples,
    nTimesteps,
    gradDim,
    sampleIds: Array.from({ length: nSamples }, (_, i) => `sample-${String(i).padStart(3, "0")}`),
    checkpointTags: Array.from({ length: nTimesteps }, (_, t) => `step-${String((t + 1) * 10).padStart(4, "0")}`),
    blocks,
  };
}

/** Compact dataset spec used across the training-side tests. */
export function smallDatasetSpec(overrides: Partial<DatasetSpec> = {}): DatasetSpec {
  return {
    inputDim: 6,
    classCount: 3,
    uniquePerClass: 4,
    duplicateGroups: 2,
    copiesPerGroup: 3,
    duplicateClass: 0,
    clusterScale: 2.5,
    sampleNoise: 0.5,
    seed: 3,
    ...overrides,
  };
}

export function smallModelSpec(overrides: Partial<ModelSpec> = {}): ModelSpec {
  return { inputDim: 6, hiddenDim: 8, classCount: 3, ...overrides };
}
