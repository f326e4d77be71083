/**
 * Binary gradient-trajectory files, byte-compatible with the Python
 * selection toolkit's reader:
 *
 *     offset  size          field
 *     0       8             magic "TRJGRADS"
 *     8       1             format version (currently 1)
 *     9       1             role: 0 = train, 1 = target
 *     10      8             nSamples   (u64 LE)
 *     18      8             nTimesteps (u64 LE)
 *     26      8             gradDim    (u64 LE)
 *     34      ...           sample id table   (u32 count, then u32 len + UTF-8 each)
 *     ...     ...           checkpoint tag table (same encoding)
 *     ...     T*N*d*4       T contiguous row-major N x d float32 blocks (LE)
 *
 * A sidecar `<path>.manifest.json` mirrors the manifest for human inspection;
 * it is written alongside but never read back.
 */

import * as fs from "node:fs";
import * as path from "node:path";

export const MAGIC = "TRJGRADS";
export const FORMAT_VERSION = 1;
const ROLES = ["train", "target"] as const;
const HEADER_SIZE = 8 + 1 + 1 + 8 + 8 + 8;

export type Role = (typeof ROLES)[number];

export interface TrajectoryData {
  role: Role;
  nSamples: number;
  nTimesteps: number;
  gradDim: number;
  sampleIds: string[];
  checkpointTags: string[];
  /** Row-major (timestep, sample, coordinate), length T*N*d. */
  blocks: Float32Array;
}

export class TrajectoryFormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = new.target.name;
  }
}

export class BadMagicError extends TrajectoryFormatError {}
export class VersionMismatchError extends TrajectoryFormatError {}
export class TruncatedPayloadError extends TrajectoryFormatError {}
export class ShapeInconsistencyError extends TrajectoryFormatError {}

/** Return a list of invariant violations; empty means the value is well formed. */
export function validateTrajectory(traj: TrajectoryData): string[] {
  const violations: string[] = [];
  if (!Number.isInteger(traj.nSamples) || traj.nSamples < 1) {
    violations.push(`nSamples must be >= 1, got ${traj.nSamples}`);
  }
  if (!Number.isInteger(traj.nTimesteps) || traj.nTimesteps < 1) {
    violations.push(`nTimesteps must be >= 1, got ${traj.nTimesteps}`);
  }
  if (!Number.isInteger(traj.gradDim) || traj.gradDim < 1) {
    violations.push(`gradDim must be >= 1, got ${traj.gradDim}`);
  }
  if (!ROLES.includes(traj.role)) {
    violations.push(`role must be one of ${JSON.stringify(ROLES)}, got ${JSON.stringify(traj.role)}`);
  }
  if (traj.sampleIds.length !== traj.nSamples) {
    violations.push(`sampleIds length ${traj.sampleIds.length} != nSamples ${traj.nSamples}`);
  }
  if (new Set(traj.sampleIds).size !== traj.sampleIds.length) {
    violations.push("sampleIds are not unique");
  }
  if (traj.checkpointTags.length !== traj.nTimesteps) {
    violations.push(
      `checkpointTags length ${traj.checkpointTags.length} != nTimesteps ${traj.nTimesteps}`,
    );
  }
  const expected = traj.nTimesteps * traj.nSamples * traj.gradDim;
  if (!(traj.blocks instanceof Float32Array) || traj.blocks.length !== expected) {
    violations.push(`blocks length ${traj.blocks?.length} != T*N*d = ${expected}`);
    return violations;
  }
  for (let t = 0; t < traj.nTimesteps; t++) {
    const stride = traj.nSamples * traj.gradDim;
    let finite = true;
    for (let i = t * stride; i < (t + 1) * stride; i++) {
      if (!Number.isFinite(traj.blocks[i])) {
        finite = false;
        break;
      }
    }
    if (!finite) {
      violations.push(`non-finite entries in timestep block ${t}`);
    }
  }
  return violations;
}

function stringTableSize(strings: string[]): number {
  let size = 4;
  for (const s of strings) size += 4 + Buffer.byteLength(s, "utf-8");
  return size;
}

/** Exact byte size a trajectory file must have for these dimensions. */
export function expectedFileSize(traj: TrajectoryData): number {
  return (
    HEADER_SIZE +
    stringTableSize(traj.sampleIds) +
    stringTableSize(traj.checkpointTags) +
    traj.nTimesteps * traj.nSamples * traj.gradDim * 4
  );
}

function writeStringTable(buf: Buffer, offset: number, strings: string[]): number {
  offset = buf.writeUInt32LE(strings.length, offset);
  for (const s of strings) {
    const raw = Buffer.from(s, "utf-8");
    offset = buf.writeUInt32LE(raw.length, offset);
    offset += raw.copy(buf, offset);
  }
  return offset;
}

function readStringTable(buf: Buffer, offset: number): { strings: string[]; offset: number } {
  if (offset + 4 > buf.length) {
    throw new TruncatedPayloadError("truncated id table: count is cut off");
  }
  const count = buf.readUInt32LE(offset);
  offset += 4;
  const strings: string[] = [];
  for (let i = 0; i < count; i++) {
    if (offset + 4 > buf.length) {
      throw new TruncatedPayloadError(`truncated id table: entry ${i} length is cut off`);
    }
    const len = buf.readUInt32LE(offset);
    offset += 4;
    if (offset + len > buf.length) {
      throw new TruncatedPayloadError(`truncated id table: entry ${i} body is cut off`);
    }
    strings.push(buf.toString("utf-8", offset, offset + len));
    offset += len;
  }
  return { strings, offset };
}

/** Serialize a validated trajectory to its exact binary image. */
export function encodeTrajectory(traj: TrajectoryData): Buffer {
  const violations = validateTrajectory(traj);
  if (violations.length > 0) {
    throw new Error(`invalid trajectory: ${violations.join("; ")}`);
  }
  const buf = Buffer.alloc(expectedFileSize(traj));
  let offset = buf.write(MAGIC, 0, "ascii");
  offset = buf.writeUInt8(FORMAT_VERSION, offset);
  offset = buf.writeUInt8(ROLES.indexOf(traj.role), offset);
  offset = buf.writeBigUInt64LE(BigInt(traj.nSamples), offset);
  offset = buf.writeBigUInt64LE(BigInt(traj.nTimesteps), offset);
  offset = buf.writeBigUInt64LE(BigInt(traj.gradDim), offset);
  offset = writeStringTable(buf, offset, traj.sampleIds);
  offset = writeStringTable(buf, offset, traj.checkpointTags);
  for (let i = 0; i < traj.blocks.length; i++) {
    offset = buf.writeFloatLE(traj.blocks[i], offset);
  }
  if (offset !== buf.length) {
    throw new Error(`encoder wrote ${offset} of ${buf.length} planned bytes`);
  }
  return buf;
}

function manifestDict(traj: TrajectoryData): Record<string, unknown> {
  return {
    n_samples: traj.nSamples,
    n_timesteps: traj.nTimesteps,
    grad_dim: traj.gradDim,
    role: traj.role,
    sample_ids: traj.sampleIds,
    checkpoint_tags: traj.checkpointTags,
    dtype: "float32",
  };
}

let tmpCounter = 0;

function atomicWrite(filePath: string, payload: Buffer | string): void {
  const dir = path.dirname(path.resolve(filePath));
  const tmp = path.join(dir, `.tmp-${process.pid}-${tmpCounter++}.part`);
  try {
    fs.writeFileSync(tmp, payload);
    fs.renameSync(tmp, filePath);
  } catch (err) {
    fs.rmSync(tmp, { force: true });
    throw err;
  }
}

/** Persist a trajectory plus its `.manifest.json` sidecar, atomically. */
export function writeTrajectory(filePath: string, traj: TrajectoryData): void {
  atomicWrite(filePath, encodeTrajectory(traj));
  atomicWrite(`${filePath}.manifest.json`, JSON.stringify(manifestDict(traj), null, 2) + "\n");
}

/**
 * Load a trajectory file, reporting malformed inputs distinctly: bad magic,
 * unsupported version, truncation (naming the first incomplete timestep),
 * or shape inconsistencies.
 */
export function readTrajectory(filePath: string): TrajectoryData {
  const raw = fs.readFileSync(filePath);
  if (raw.length < HEADER_SIZE) {
    throw new TruncatedPayloadError(`file is ${raw.length} bytes, shorter than the header`);
  }
  const magic = raw.toString("ascii", 0, 8);
  if (magic !== MAGIC) {
    throw new BadMagicError(`bad magic ${JSON.stringify(magic)}, expected ${JSON.stringify(MAGIC)}`);
  }
  const version = raw.readUInt8(8);
  if (version !== FORMAT_VERSION) {
    throw new VersionMismatchError(`unsupported version ${version}, expected ${FORMAT_VERSION}`);
  }
  const roleByte = raw.readUInt8(9);
  if (roleByte >= ROLES.length) {
    throw new ShapeInconsistencyError(`unknown role byte ${roleByte}`);
  }
  const nSamples = Number(raw.readBigUInt64LE(10));
  const nTimesteps = Number(raw.readBigUInt64LE(18));
  const gradDim = Number(raw.readBigUInt64LE(26));

  const ids = readStringTable(raw, HEADER_SIZE);
  const tags = readStringTable(raw, ids.offset);
  let offset = tags.offset;

  const blockBytes = nSamples * gradDim * 4;
  const remaining = raw.length - offset;
  if (remaining < nTimesteps * blockBytes) {
    const complete = blockBytes > 0 ? Math.floor(remaining / blockBytes) : 0;
    throw new TruncatedPayloadError(
      `truncated payload: timestep ${complete} of ${nTimesteps} is incomplete ` +
        `(${remaining} bytes left, need ${nTimesteps * blockBytes})`,
    );
  }
  if (remaining > nTimesteps * blockBytes) {
    throw new ShapeInconsistencyError(
      `${remaining - nTimesteps * blockBytes} trailing bytes beyond declared shape`,
    );
  }
  const blocks = new Float32Array(nTimesteps * nSamples * gradDim);
  for (let i = 0; i < blocks.length; i++) {
    blocks[i] = raw.readFloatLE(offset);
    offset += 4;
  }
  const traj: TrajectoryData = {
    role: ROLES[roleByte],
    nSamples,
    nTimesteps,
    gradDim,
    sampleIds: ids.strings,
    checkpointTags: tags.strings,
    blocks,
  };
  const violations = validateTrajectory(traj);
  if (violations.length > 0) {
    throw new ShapeInconsistencyError(`file decodes to invalid value: ${violations.join("; ")}`);
  }
  return traj;
}
