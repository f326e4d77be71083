export { Rng } from "./rng.js";
export {
  classCenters,
  datasetSize,
  makeEvalDataset,
  makeTrainDataset,
  validateDatasetSpec,
} from "./dataset.js";
export type { DatasetSpec, ToyDataset } from "./dataset.js";
export {
  GradBuffers,
  Mlp,
  accumulateBackward,
  applySgdStep,
  finalLayerDim,
  finalLayerGradient,
  softmaxLoss,
  validateModelSpec,
} from "./model.js";
export type { ModelSpec } from "./model.js";
export { DivergenceError, validateWarmupConfig, warmupTrain } from "./train.js";
export type { Checkpoint, WarmupConfig } from "./train.js";
export { ShapeDriftError, extractGradients } from "./gradients.js";
export {
  BadMagicError,
  FORMAT_VERSION,
  MAGIC,
  ShapeInconsistencyError,
  TrajectoryFormatError,
  TruncatedPayloadError,
  VersionMismatchError,
  encodeTrajectory,
  expectedFileSize,
  readTrajectory,
  validateTrajectory,
  writeTrajectory,
} from "./trajfile.js";
export type { Role, TrajectoryData } from "./trajfile.js";
export {
  METRICS_SCHEMA_VERSION,
  MissingIdsError,
  evaluateModel,
  metricsToJson,
  parseMetricsReport,
  parseSelectionReport,
  readMetrics,
  readSelectionReport,
  retrainEval,
  validateRetrainConfig,
  writeMetrics,
} from "./evaluate.js";
export type {
  AlgorithmMetrics,
  MetricsReport,
  RetrainConfig,
  SelectionReport,
} from "./evaluate.js";
export {
  defaultConfig,
  readExperimentConfig,
  validateConfig,
  writeExperimentConfig,
} from "./config.js";
export type { RetrainSpec, ToyExperimentConfig } from "./config.js";
export { main } from "./cli.js";
