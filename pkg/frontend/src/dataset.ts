/**
 * Synthetic classification data with explicit redundancy groups.
 *
 * The training set mixes unique samples spread over every class with groups
 * of bit-identical copies concentrated in one class, so a budgeted selection
 * has something real to de-duplicate: picking two copies from the same group
 * buys no new information. The evaluation set is balanced and duplicate-free.
 */

import { Rng } from "./rng.js";

export interface DatasetSpec {
  inputDim: number;
  classCount: number;
  /** Unique (non-duplicated) samples generated per class. */
  uniquePerClass: number;
  /** Number of duplicate groups; each group is copies of one sample. */
  duplicateGroups: number;
  copiesPerGroup: number;
  /** Class whose cluster the duplicate mass is drawn from. */
  duplicateClass: number;
  /** Scale of the class-center cloud; larger separates classes further. */
  clusterScale: number;
  /** Within-class spread around the center. */
  sampleNoise: number;
  seed: number;
}

export interface ToyDataset {
  inputs: Float64Array[];
  labels: Int32Array;
  sampleIds: string[];
  /** Duplicate-group index per sample, -1 for unique samples. */
  groupOf: Int32Array;
}

export function datasetSize(spec: DatasetSpec): number {
  return spec.classCount * spec.uniquePerClass + spec.duplicateGroups * spec.copiesPerGroup;
}

/** Return a list of invariant violations; empty means the dataset shape is usable. */
export function validateDatasetSpec(spec: DatasetSpec): string[] {
  const violations: string[] = [];
  if (!Number.isInteger(spec.inputDim) || spec.inputDim < 1) {
    violations.push(`inputDim must be >= 1, got ${spec.inputDim}`);
  }
  if (!Number.isInteger(spec.classCount) || spec.classCount < 2) {
    violations.push(`classCount must be >= 2, got ${spec.classCount}`);
  }
  if (!Number.isInteger(spec.uniquePerClass) || spec.uniquePerClass < 1) {
    violations.push(`uniquePerClass must be >= 1, got ${spec.uniquePerClass}`);
  }
  if (!Number.isInteger(spec.duplicateGroups) || spec.duplicateGroups < 0) {
    violations.push(`duplicateGroups must be >= 0, got ${spec.duplicateGroups}`);
  }
  if (spec.duplicateGroups > 0 && (!Number.isInteger(spec.copiesPerGroup) || spec.copiesPerGroup < 2)) {
    violations.push(`copiesPerGroup must be >= 2 when groups exist, got ${spec.copiesPerGroup}`);
  }
  if (
    !Number.isInteger(spec.duplicateClass) ||
    spec.duplicateClass < 0 ||
    (Number.isInteger(spec.classCount) && spec.duplicateClass >= spec.classCount)
  ) {
    violations.push(`duplicateClass must be in [0, classCount), got ${spec.duplicateClass}`);
  }
  if (!(spec.clusterScale > 0) || !Number.isFinite(spec.clusterScale)) {
    violations.push(`clusterScale must be positive and finite, got ${spec.clusterScale}`);
  }
  if (!(spec.sampleNoise >= 0) || !Number.isFinite(spec.sampleNoise)) {
    violations.push(`sampleNoise must be non-negative and finite, got ${spec.sampleNoise}`);
  }
  if (!Number.isInteger(spec.seed)) {
    violations.push(`seed must be an integer, got ${spec.seed}`);
  }
  return violations;
}

function requireValid(spec: DatasetSpec): void {
  const violations = validateDatasetSpec(spec);
  if (violations.length > 0) {
    throw new Error(`invalid dataset spec: ${violations.join("; ")}`);
  }
}

/** Class centers depend only on (seed, inputDim, classCount, clusterScale). */
export function classCenters(spec: DatasetSpec): Float64Array[] {
  const rng = new Rng(spec.seed, 0);
  const centers: Float64Array[] = [];
  for (let c = 0; c < spec.classCount; c++) {
    centers.push(rng.gaussianVector(spec.inputDim, spec.clusterScale));
  }
  return centers;
}

function drawAround(center: Float64Array, noise: number, rng: Rng): Float64Array {
  const x = new Float64Array(center.length);
  for (let i = 0; i < x.length; i++) x[i] = center[i] + rng.gaussian() * noise;
  return x;
}

function pad(value: number, width: number): string {
  return String(value).padStart(width, "0");
}

/**
 * Training set: unique samples (class-major) followed by duplicate groups.
 * Copies within a group are exact value-for-value repeats of one draw.
 */
export function makeTrainDataset(spec: DatasetSpec): ToyDataset {
  requireValid(spec);
  const centers = classCenters(spec);
  const uniqueRng = new Rng(spec.seed, 1);
  const groupRng = new Rng(spec.seed, 2);

  const inputs: Float64Array[] = [];
  const labels: number[] = [];
  const sampleIds: string[] = [];
  const groupOf: number[] = [];

  for (let c = 0; c < spec.classCount; c++) {
    for (let i = 0; i < spec.uniquePerClass; i++) {
      inputs.push(drawAround(centers[c], spec.sampleNoise, uniqueRng));
      labels.push(c);
      sampleIds.push(`uni-c${c}-${pad(i, 2)}`);
      groupOf.push(-1);
    }
  }
  for (let g = 0; g < spec.duplicateGroups; g++) {
    const prototype = drawAround(centers[spec.duplicateClass], spec.sampleNoise, groupRng);
    for (let k = 0; k < spec.copiesPerGroup; k++) {
      inputs.push(Float64Array.from(prototype));
      labels.push(spec.duplicateClass);
      sampleIds.push(`dup-g${pad(g, 2)}-${pad(k, 2)}`);
      groupOf.push(g);
    }
  }
  return {
    inputs,
    labels: Int32Array.from(labels),
    sampleIds,
    groupOf: Int32Array.from(groupOf),
  };
}

/** Balanced, duplicate-free draws from the same class centers. */
export function makeEvalDataset(spec: DatasetSpec, perClass: number, seed: number): ToyDataset {
  requireValid(spec);
  if (!Number.isInteger(perClass) || perClass < 1) {
    throw new Error(`perClass must be >= 1, got ${perClass}`);
  }
  const centers = classCenters(spec);
  const rng = new Rng(seed, 3);
  const inputs: Float64Array[] = [];
  const labels: number[] = [];
  const sampleIds: string[] = [];
  for (let c = 0; c < spec.classCount; c++) {
    for (let i = 0; i < perClass; i++) {
      inputs.push(drawAround(centers[c], spec.sampleNoise, rng));
      labels.push(c);
      sampleIds.push(`eval-c${c}-${pad(i, 2)}`);
    }
  }
  return {
    inputs,
    labels: Int32Array.from(labels),
    sampleIds,
    groupOf: new Int32Array(inputs.length).fill(-1),
  };
}
