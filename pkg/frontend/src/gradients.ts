/**
 * Per-sample gradient extraction: one flattened final-layer gradient row per
 * sample per checkpoint, assembled into a trajectory ready for export.
 * Identical inputs yield identical rows at every timestep — the forward and
 * backward passes are deterministic functions of (checkpoint, sample).
 */

import { ToyDataset } from "./dataset.js";
import { finalLayerDim, finalLayerGradient } from "./model.js";
import { Checkpoint } from "./train.js";
import { Role, TrajectoryData } from "./trajfile.js";

export class ShapeDriftError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ShapeDriftError";
  }
}

/**
 * Gradients of every dataset sample at every checkpoint, flattened over the
 * final-layer block (dimension finalLayerDim(model.spec)), stored float32.
 */
export function extractGradients(
  checkpoints: Checkpoint[],
  dataset: ToyDataset,
  role: Role,
): TrajectoryData {
  if (checkpoints.length === 0) {
    throw new Error("no checkpoints to extract from");
  }
  if (dataset.inputs.length === 0) {
    throw new Error("dataset is empty");
  }
  const spec = checkpoints[0].model.spec;
  for (const cp of checkpoints) {
    const s = cp.model.spec;
    if (
      s.inputDim !== spec.inputDim ||
      s.hiddenDim !== spec.hiddenDim ||
      s.classCount !== spec.classCount
    ) {
      throw new ShapeDriftError(
        `checkpoint ${cp.tag} has model dims ` +
          `(${s.inputDim}, ${s.hiddenDim}, ${s.classCount}), ` +
          `expected (${spec.inputDim}, ${spec.hiddenDim}, ${spec.classCount})`,
      );
    }
  }
  if (dataset.inputs[0].length !== spec.inputDim) {
    throw new Error(
      `dataset features have ${dataset.inputs[0].length} dims, model expects ${spec.inputDim}`,
    );
  }

  const nTimesteps = checkpoints.length;
  const nSamples = dataset.inputs.length;
  const gradDim = finalLayerDim(spec);
  const blocks = new Float32Array(nTimesteps * nSamples * gradDim);
  for (let t = 0; t < nTimesteps; t++) {
    const model = checkpoints[t].model;
    for (let i = 0; i < nSamples; i++) {
      finalLayerGradient(
        model,
        dataset.inputs[i],
        dataset.labels[i],
        blocks,
        (t * nSamples + i) * gradDim,
      );
    }
  }
  return {
    role,
    nSamples,
    nTimesteps,
    gradDim,
    sampleIds: [...dataset.sampleIds],
    checkpointTags: checkpoints.map((cp) => cp.tag),
    blocks,
  };
}
