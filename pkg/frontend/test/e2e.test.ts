/**
 * Cross-language contract: trajectories exported here must be accepted by the
 * Python selection toolkit byte-for-byte, and its selections must retrain at
 * least as well as random picks on the redundancy-injected toy dataset.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { fileURLToPath } from "node:url";
import { spawnSync } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { defaultConfig } from "../src/config.js";
import { datasetSize, makeEvalDataset, makeTrainDataset, ToyDataset } from "../src/dataset.js";
import { readMetrics, readSelectionReport, retrainEval, writeMetrics, SelectionReport } from "../src/evaluate.js";
import { extractGradients } from "../src/gradients.js";
import { warmupTrain } from "../src/train.js";
import { writeTrajectory } from "../src/trajfile.js";
import { makeTmpDir, removeDir } from "./helpers.js";

const PYTHON = process.env.TRAJSELECT_PYTHON ?? "python3";
const tmp = makeTmpDir("toy-e2e-");
afterAll(() => removeDir(tmp));

function runToolkit(args: string[]): void {
  const res = spawnSync(PYTHON, ["-m", "trajselect.cli", ...args], { encoding: "utf-8" });
  if (res.status !== 0) {
    throw new Error(
      `trajselect ${args[0]} exited with ${res.status}:\n${res.stderr || res.stdout}`,
    );
  }
}

const cfg = defaultConfig();
let trainSet: ToyDataset;
let evalSet: ToyDataset;
const files = {
  train: path.join(tmp, "train.trjgrads"),
  target: path.join(tmp, "target.trjgrads"),
  basis: path.join(tmp, "basis.subbasis"),
  design: path.join(tmp, "design.designab"),
  gtp: path.join(tmp, "gtp.json"),
  random: path.join(tmp, "random.json"),
  topk: path.join(tmp, "topk.json"),
  gtpFull: path.join(tmp, "gtp-full.json"),
  randomFull: path.join(tmp, "random-full.json"),
};

beforeAll(() => {
  const probe = spawnSync(PYTHON, ["-m", "trajselect.cli", "--version"], { encoding: "utf-8" });
  if (probe.status !== 0) {
    throw new Error(
      `the selection toolkit is not importable via ${PYTHON} -m trajselect.cli ` +
        `(install the Python package first): ${probe.stderr}`,
    );
  }

  trainSet = makeTrainDataset(cfg.dataset);
  evalSet = makeEvalDataset(cfg.dataset, cfg.evalPerClass, cfg.evalSeed);
  const checkpoints = warmupTrain(trainSet, cfg.model, cfg.warmup);
  writeTrajectory(files.train, extractGradients(checkpoints, trainSet, "train"));
  writeTrajectory(files.target, extractGradients(checkpoints, evalSet, "target"));

  runToolkit([
    "fit-subspace",
    "--train", files.train,
    "--out", files.basis,
    "--subspace-dim", "8",
    "--seed", "0",
  ]);
  runToolkit([
    "assemble",
    "--train", files.train,
    "--target", files.target,
    "--basis", files.basis,
    "--out", files.design,
  ]);
});

describe("exported files drive the selection toolkit", () => {
  const budget = 12; // 10% of the 120-sample training set

  beforeAll(() => {
    runToolkit([
      "select",
      "--design", files.design,
      "--out", files.gtp,
      "--algorithm", "gtp",
      "--budget", String(budget),
      "--iterations", "10",
    ]);
    runToolkit([
      "select",
      "--design", files.design,
      "--out", files.random,
      "--algorithm", "random",
      "--budget", String(budget),
      "--seed", "0",
    ]);
    runToolkit([
      "select",
      "--design", files.design,
      "--out", files.topk,
      "--algorithm", "topk",
      "--budget", String(budget),
    ]);
  });

  it("accepts both roles end to end (validation happens on read)", () => {
    // fit-subspace and assemble already consumed both files; their outputs
    // existing with nonzero size is the cross-language format contract.
    expect(fs.statSync(files.basis).size).toBeGreaterThan(0);
    expect(fs.statSync(files.design).size).toBeGreaterThan(0);
  });

  it("returns well-formed selections whose ids echo the exported ones", () => {
    for (const file of [files.gtp, files.random, files.topk]) {
      const sel = readSelectionReport(file);
      expect(sel.indices.length).toBe(budget);
      expect(new Set(sel.indices).size).toBe(budget);
      expect(sel.sampleIds).not.toBeNull();
      for (const [k, idx] of sel.indices.entries()) {
        expect(sel.sampleIds![k]).toBe(trainSet.sampleIds[idx]);
      }
    }
  });

  it("never spends two picks on the same duplicate group", () => {
    const sel = readSelectionReport(files.gtp);
    const groups = sel.sampleIds!
      .filter((id) => id.startsWith("dup-g"))
      .map((id) => id.slice(0, "dup-gXX".length));
    expect(new Set(groups).size).toBe(groups.length);
  });

  it("retrains at least as well as random at the 10% budget", () => {
    const selections = [
      { name: "gtp", report: readSelectionReport(files.gtp) },
      { name: "random", report: readSelectionReport(files.random) },
    ];
    const report = retrainEval(selections, trainSet, evalSet, budget, {
      steps: cfg.retrain.steps,
      learningRate: cfg.retrain.learningRate,
      seeds: cfg.retrain.seeds,
      modelSpec: cfg.model,
    });
    const gtp = report.perAlgorithm.find((a) => a.algorithm === "gtp")!;
    const random = report.perAlgorithm.find((a) => a.algorithm === "random")!;
    expect(report.seeds.length).toBeGreaterThanOrEqual(5);
    expect(gtp.meanLoss).toBeLessThanOrEqual(random.meanLoss);
    console.log(
      `[toy-e2e] PASS: mean eval loss over ${report.seeds.length} seeds — ` +
        `gtp ${gtp.meanLoss.toFixed(4)} <= random ${random.meanLoss.toFixed(4)} ` +
        `(accuracy ${(100 * gtp.meanAccuracy).toFixed(1)}% vs ${(100 * random.meanAccuracy).toFixed(1)}%)`,
    );

    const metricsPath = path.join(tmp, "metrics.json");
    writeMetrics(metricsPath, report);
    expect(readMetrics(metricsPath)).toEqual(report);
  });
});

describe("full-budget degenerate case", () => {
  const full = datasetSize(defaultConfig().dataset);

  beforeAll(() => {
    runToolkit([
      "select",
      "--design", files.design,
      "--out", files.gtpFull,
      "--algorithm", "gtp",
      "--budget", String(full),
      "--iterations", "3",
    ]);
    runToolkit([
      "select",
      "--design", files.design,
      "--out", files.randomFull,
      "--algorithm", "random",
      "--budget", String(full),
      "--seed", "0",
    ]);
  });

  it("every algorithm selects everything, and retraining cannot tell them apart", () => {
    const gtpFull = readSelectionReport(files.gtpFull);
    const randomFull = readSelectionReport(files.randomFull);
    expect([...gtpFull.indices].sort((a, b) => a - b)).toEqual([...Array(full).keys()]);
    expect([...randomFull.indices].sort((a, b) => a - b)).toEqual([...Array(full).keys()]);

    const report = retrainEval(
      [
        { name: "gtp", report: gtpFull },
        { name: "random", report: randomFull },
      ],
      trainSet,
      evalSet,
      full,
      {
        steps: cfg.retrain.steps,
        learningRate: cfg.retrain.learningRate,
        seeds: [0, 1],
        modelSpec: cfg.model,
      },
    );
    expect(report.perAlgorithm[0].losses).toEqual(report.perAlgorithm[1].losses);
    expect(report.perAlgorithm[0].accuracies).toEqual(report.perAlgorithm[1].accuracies);
  });
});

describe("command-line interface", () => {
  const cliPath = fileURLToPath(new URL("../dist/cli.js", import.meta.url));
  const cliDir = path.join(tmp, "cli-run");

  it("exports and retrains through the packaged commands", () => {
    if (!fs.existsSync(cliPath)) {
      throw new Error(`dist/cli.js missing — run "npm run build" before the tests`);
    }
    const exp = spawnSync("node", [cliPath, "export", "--out-dir", cliDir], { encoding: "utf-8" });
    expect(exp.status, exp.stderr).toBe(0);
    for (const name of ["train.trjgrads", "target.trjgrads", "experiment.json"]) {
      expect(fs.existsSync(path.join(cliDir, name))).toBe(true);
    }

    const metricsPath = path.join(cliDir, "metrics.json");
    const ret = spawnSync(
      "node",
      [
        cliPath,
        "retrain",
        "--experiment", path.join(cliDir, "experiment.json"),
        "--budget", "12",
        "--selection", `gtp=${files.gtp}`,
        "--selection", `random=${files.random}`,
        "--out", metricsPath,
      ],
      { encoding: "utf-8" },
    );
    expect(ret.status, ret.stderr).toBe(0);
    const metrics = readMetrics(metricsPath);
    expect(metrics.perAlgorithm.map((a) => a.algorithm)).toEqual(["gtp", "random"]);
    expect(metrics.budget).toBe(12);
  });

  it("fails with a validation exit code on a missing selection file", () => {
    const res = spawnSync(
      "node",
      [
        cliPath,
        "retrain",
        "--experiment", path.join(cliDir, "experiment.json"),
        "--budget", "12",
        "--selection", "gtp=/nonexistent/sel.json",
        "--out", path.join(cliDir, "unused.json"),
      ],
      { encoding: "utf-8" },
    );
    expect(res.status).toBe(2);
  });
});
