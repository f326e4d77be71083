import * as fs from "node:fs";
import * as path from "node:path";
import { afterAll, describe, expect, it } from "vitest";

import {
  BadMagicError,
  ShapeInconsistencyError,
  TruncatedPayloadError,
  VersionMismatchError,
  encodeTrajectory,
  expectedFileSize,
  readTrajectory,
  validateTrajectory,
  writeTrajectory,
} from "../src/trajfile.js";
import { makeTmpDir, makeTrajectory, removeDir } from "./helpers.js";

const tmp = makeTmpDir("trajfile-");
afterAll(() => removeDir(tmp));

function writeRaw(name: string, payload: Buffer): string {
  const p = path.join(tmp, name);
  fs.writeFileSync(p, payload);
  return p;
}

describe("binary layout", () => {
  it("encodes a minimal trajectory to the exact documented bytes", () => {
    const traj = makeTrajectory({ nSamples: 1, nTimesteps: 1, gradDim: 2, role: "target" });
    traj.sampleIds = ["a"];
    traj.checkpointTags = ["s"];
    traj.blocks = Float32Array.from([1.5, -2.0]);
    const expected = [
      "54524a4752414453", // magic "TRJGRADS"
      "01", // format version
      "01", // role: target
      "0100000000000000", // nSamples = 1 (u64 LE)
      "0100000000000000", // nTimesteps = 1
      "0200000000000000", // gradDim = 2
      "01000000", // sample id count
      "01000000", // id byte length
      "61", // "a"
      "01000000", // checkpoint tag count
      "01000000", // tag byte length
      "73", // "s"
      "0000c03f", // 1.5f LE
      "000000c0", // -2.0f LE
    ].join("");
    expect(encodeTrajectory(traj).toString("hex")).toBe(expected);
  });

  it("writes files of exactly the predicted size", () => {
    const traj = makeTrajectory({ nSamples: 4, nTimesteps: 2, gradDim: 3 });
    const p = path.join(tmp, "sized.trjgrads");
    writeTrajectory(p, traj);
    expect(fs.statSync(p).size).toBe(expectedFileSize(traj));
  });

  it("round-trips every field and every float exactly", () => {
    const traj = makeTrajectory({ nSamples: 5, nTimesteps: 3, gradDim: 7, role: "train", seed: 4 });
    const p = path.join(tmp, "roundtrip.trjgrads");
    writeTrajectory(p, traj);
    const back = readTrajectory(p);
    expect(back.role).toBe("train");
    expect(back.nSamples).toBe(5);
    expect(back.nTimesteps).toBe(3);
    expect(back.gradDim).toBe(7);
    expect(back.sampleIds).toEqual(traj.sampleIds);
    expect(back.checkpointTags).toEqual(traj.checkpointTags);
    expect(back.blocks).toEqual(traj.blocks);
  });

  it("writes a manifest sidecar mirroring the header", () => {
    const traj = makeTrajectory({ nSamples: 2, nTimesteps: 2, gradDim: 3, role: "target" });
    const p = path.join(tmp, "sidecar.trjgrads");
    writeTrajectory(p, traj);
    const manifest = JSON.parse(fs.readFileSync(`${p}.manifest.json`, "utf-8"));
    expect(manifest.n_samples).toBe(2);
    expect(manifest.n_timesteps).toBe(2);
    expect(manifest.grad_dim).toBe(3);
    expect(manifest.role).toBe("target");
    expect(manifest.sample_ids).toEqual(traj.sampleIds);
    expect(manifest.checkpoint_tags).toEqual(traj.checkpointTags);
    expect(manifest.dtype).toBe("float32");
  });

  it("refuses to write an invalid trajectory and leaves no file behind", () => {
    const traj = makeTrajectory({ nSamples: 2 });
    traj.sampleIds = ["same", "same"];
    const p = path.join(tmp, "never-written.trjgrads");
    expect(() => writeTrajectory(p, traj)).toThrow(/invalid trajectory: .*not unique/);
    expect(fs.existsSync(p)).toBe(false);
  });
});

describe("malformed files", () => {
  const valid = encodeTrajectory(makeTrajectory({ nSamples: 3, nTimesteps: 2, gradDim: 4 }));

  it("rejects a wrong magic", () => {
    const bad = Buffer.from(valid);
    bad[0] = 0x58;
    expect(() => readTrajectory(writeRaw("magic.bin", bad))).toThrow(BadMagicError);
  });

  it("rejects an unsupported version", () => {
    const bad = Buffer.from(valid);
    bad[8] = 2;
    expect(() => readTrajectory(writeRaw("version.bin", bad))).toThrow(VersionMismatchError);
  });

  it("rejects an unknown role byte", () => {
    const bad = Buffer.from(valid);
    bad[9] = 7;
    expect(() => readTrajectory(writeRaw("role.bin", bad))).toThrow(ShapeInconsistencyError);
  });

  it("rejects a file shorter than the header", () => {
    expect(() => readTrajectory(writeRaw("stub.bin", valid.subarray(0, 10)))).toThrow(
      /shorter than the header/,
    );
  });

  it("names the first incomplete timestep on a truncated payload", () => {
    // Cut five bytes into the second 3x4 float block.
    const blockBytes = 3 * 4 * 4;
    const cut = valid.subarray(0, valid.length - blockBytes - 5);
    expect(() => readTrajectory(writeRaw("truncated.bin", cut))).toThrow(
      /timestep 0 of 2 is incomplete/,
    );
    const cutLater = valid.subarray(0, valid.length - 5);
    expect(() => readTrajectory(writeRaw("truncated2.bin", cutLater))).toThrow(
      /timestep 1 of 2 is incomplete/,
    );
  });

  it("rejects a truncated id table", () => {
    expect(() => readTrajectory(writeRaw("idcut.bin", valid.subarray(0, 40)))).toThrow(
      TruncatedPayloadError,
    );
  });

  it("rejects trailing bytes beyond the declared shape", () => {
    const padded = Buffer.concat([valid, Buffer.from([0, 0, 0, 0])]);
    expect(() => readTrajectory(writeRaw("trailing.bin", padded))).toThrow(/trailing bytes/);
  });
});

describe("validateTrajectory", () => {
  it("accepts a well-formed value", () => {
    expect(validateTrajectory(makeTrajectory())).toEqual([]);
  });

  it("flags duplicate sample ids", () => {
    const traj = makeTrajectory({ nSamples: 2 });
    traj.sampleIds = ["x", "x"];
    expect(validateTrajectory(traj).join("; ")).toMatch(/not unique/);
  });

  it("flags tag-count mismatches", () => {
    const traj = makeTrajectory({ nTimesteps: 3 });
    traj.checkpointTags = traj.checkpointTags.slice(0, 2);
    expect(validateTrajectory(traj).join("; ")).toMatch(/checkpointTags length 2 != nTimesteps 3/);
  });

  it("flags non-finite entries with the offending timestep", () => {
    const traj = makeTrajectory({ nSamples: 2, nTimesteps: 3, gradDim: 2 });
    traj.blocks[2 * 2 + 1] = Number.NaN; // timestep 1, first sample
    expect(validateTrajectory(traj).join("; ")).toMatch(/non-finite entries in timestep block 1/);
  });

  it("flags a block-length mismatch", () => {
    const traj = makeTrajectory();
    traj.blocks = traj.blocks.slice(0, traj.blocks.length - 1);
    expect(validateTrajectory(traj).join("; ")).toMatch(/blocks length/);
  });
});
