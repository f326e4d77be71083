#!/usr/bin/env node
/**
 * Command-line entry points.
 *
 *   grad-exporter export  --out-dir DIR [--config exp.json]
 *       Warm-up train, extract per-sample gradients, and write
 *       train.trjgrads / target.trjgrads plus experiment.json.
 *
 *   grad-exporter retrain --experiment exp.json --budget M \
 *                         --selection name=selection.json ... --out metrics.json
 *       Retrain a fresh model per selection per seed and write metrics JSON.
 *
 * Exit codes: 0 success, 2 validation or file-format problems, 1 runtime
 * failures (e.g. training divergence).
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { parseArgs } from "node:util";
import { pathToFileURL } from "node:url";

import { defaultConfig, readExperimentConfig, validateConfig, writeExperimentConfig } from "./config.js";
import { datasetSize, makeEvalDataset, makeTrainDataset } from "./dataset.js";
import { readSelectionReport, retrainEval, writeMetrics } from "./evaluate.js";
import { extractGradients } from "./gradients.js";
import { DivergenceError, warmupTrain } from "./train.js";
import { writeTrajectory } from "./trajfile.js";

const EXIT_OK = 0;
const EXIT_RUNTIME = 1;
const EXIT_VALIDATION = 2;

const USAGE = `usage:
  grad-exporter export  --out-dir DIR [--config exp.json]
  grad-exporter retrain --experiment exp.json --budget M --selection name=sel.json [...] --out metrics.json
`;

function log(message: string): void {
  process.stderr.write(message + "\n");
}

function cmdExport(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      "out-dir": { type: "string" },
      config: { type: "string" },
    },
  });
  const outDir = values["out-dir"];
  if (!outDir) {
    log("export: --out-dir is required");
    return EXIT_VALIDATION;
  }
  const cfg = values.config ? readExperimentConfig(values.config) : defaultConfig();
  const violations = validateConfig(cfg);
  if (violations.length > 0) {
    log(`export: invalid config: ${violations.join("; ")}`);
    return EXIT_VALIDATION;
  }
  fs.mkdirSync(outDir, { recursive: true });

  const trainSet = makeTrainDataset(cfg.dataset);
  const evalSet = makeEvalDataset(cfg.dataset, cfg.evalPerClass, cfg.evalSeed);
  const checkpoints = warmupTrain(trainSet, cfg.model, cfg.warmup);
  log(
    `warm-up done: ${checkpoints.length} checkpoints over ${cfg.warmup.warmupSteps} steps, ` +
      `final batch loss ${checkpoints[checkpoints.length - 1].loss.toFixed(6)}`,
  );

  const trainTraj = extractGradients(checkpoints, trainSet, "train");
  const targetTraj = extractGradients(checkpoints, evalSet, "target");
  const trainPath = path.join(outDir, "train.trjgrads");
  const targetPath = path.join(outDir, "target.trjgrads");
  writeTrajectory(trainPath, trainTraj);
  writeTrajectory(targetPath, targetTraj);
  writeExperimentConfig(path.join(outDir, "experiment.json"), cfg);
  log(
    `wrote ${trainPath} (N=${trainTraj.nSamples}, T=${trainTraj.nTimesteps}, d=${trainTraj.gradDim}) ` +
      `and ${targetPath} (N=${targetTraj.nSamples})`,
  );
  return EXIT_OK;
}

function cmdRetrain(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      experiment: { type: "string" },
      budget: { type: "string" },
      selection: { type: "string", multiple: true },
      out: { type: "string" },
    },
  });
  if (!values.experiment || !values.budget || !values.out || !values.selection?.length) {
    log("retrain: --experiment, --budget, --selection, and --out are all required");
    return EXIT_VALIDATION;
  }
  const budget = Number(values.budget);
  if (!Number.isInteger(budget)) {
    log(`retrain: --budget must be an integer, got ${values.budget}`);
    return EXIT_VALIDATION;
  }
  const cfg = readExperimentConfig(values.experiment);
  const selections = values.selection.map((pair) => {
    const eq = pair.indexOf("=");
    if (eq <= 0) {
      throw new Error(`--selection expects name=path, got ${JSON.stringify(pair)}`);
    }
    const name = pair.slice(0, eq);
    const file = pair.slice(eq + 1);
    return { name, report: readSelectionReport(file) };
  });

  const trainSet = makeTrainDataset(cfg.dataset);
  const evalSet = makeEvalDataset(cfg.dataset, cfg.evalPerClass, cfg.evalSeed);
  const report = retrainEval(selections, trainSet, evalSet, budget, {
    steps: cfg.retrain.steps,
    learningRate: cfg.retrain.learningRate,
    seeds: cfg.retrain.seeds,
    modelSpec: cfg.model,
  });
  writeMetrics(values.out, report);
  for (const a of report.perAlgorithm) {
    log(
      `${a.algorithm}: mean loss ${a.meanLoss.toFixed(6)} ± ${a.stdLoss.toFixed(6)}, ` +
        `mean accuracy ${(100 * a.meanAccuracy).toFixed(1)}%`,
    );
  }
  log(`wrote ${values.out} (budget ${budget} of ${datasetSize(cfg.dataset)})`);
  return EXIT_OK;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    switch (command) {
      case "export":
        return cmdExport(rest);
      case "retrain":
        return cmdRetrain(rest);
      case undefined:
      case "--help":
      case "-h":
        process.stdout.write(USAGE);
        return command === undefined ? EXIT_VALIDATION : EXIT_OK;
      default:
        log(`unknown command ${JSON.stringify(command)}`);
        process.stdout.write(USAGE);
        return EXIT_VALIDATION;
    }
  } catch (err) {
    if (err instanceof DivergenceError) {
      log(String(err.message));
      return EXIT_RUNTIME;
    }
    log(err instanceof Error ? err.message : String(err));
    return EXIT_VALIDATION;
  }
}

const invokedDirectly =
  typeof process.argv[1] === "string" &&
  import.meta.url === pathToFileURL(process.argv[1]).href;

if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
