/**
 * Binary embedding file, shared with the search backend.
 *
 * Layout (little-endian):
 *   magic "EMB1" | u32 version=1 | u32 dim | u64 count
 *   per record: u16 id byte length | id (UTF-8) | dim float32 values
 */
import { readFileSync, writeFileSync } from "node:fs";

export const MAGIC = "EMB1";
export const VERSION = 1;

const HEADER_BYTES = 4 + 4 + 4 + 8;

export interface EmbRecord {
  id: string;
  vec: Float32Array;
}

export class EmbFormatError extends Error {}

export function writeEmbFile(path: string, dim: number, records: EmbRecord[]): void {
  if (!Number.isInteger(dim) || dim < 1) {
    throw new EmbFormatError(`dimension must be a positive integer, got ${dim}`);
  }
  const chunks: Buffer[] = [];
  const header = Buffer.alloc(HEADER_BYTES);
  header.write(MAGIC, 0, "ascii");
  header.writeUInt32LE(VERSION, 4);
  header.writeUInt32LE(dim, 8);
  header.writeBigUInt64LE(BigInt(records.length), 12);
  chunks.push(header);
  for (const { id, vec } of records) {
    if (vec.length !== dim) {
      throw new EmbFormatError(`id ${id}: vector has ${vec.length} values, expected ${dim}`);
    }
    const idBytes = Buffer.from(id, "utf-8");
    if (idBytes.length === 0 || idBytes.length > 0xffff) {
      throw new EmbFormatError(`id ${JSON.stringify(id)}: encoded length out of range`);
    }
    const record = Buffer.alloc(2 + idBytes.length + dim * 4);
    record.writeUInt16LE(idBytes.length, 0);
    idBytes.copy(record, 2);
    for (let i = 0; i < dim; i++) {
      record.writeFloatLE(vec[i], 2 + idBytes.length + i * 4);
    }
    chunks.push(record);
  }
  writeFileSync(path, Buffer.concat(chunks));
}

export interface EmbFileContents {
  dim: number;
  records: EmbRecord[];
}

export function readEmbFile(path: string): EmbFileContents {
  const data = readFileSync(path);
  if (data.length < HEADER_BYTES) {
    throw new EmbFormatError("file too short for a header");
  }
  const magic = data.toString("ascii", 0, 4);
  if (magic !== MAGIC) {
    throw new EmbFormatError(`bad magic ${JSON.stringify(magic)}, expected ${MAGIC}`);
  }
  const version = data.readUInt32LE(4);
  if (version !== VERSION) {
    throw new EmbFormatError(`unsupported version ${version}, expected ${VERSION}`);
  }
  const dim = data.readUInt32LE(8);
  if (dim < 1) {
    throw new EmbFormatError(`dimension must be >= 1, got ${dim}`);
  }
  const count = data.readBigUInt64LE(12);
  const records: EmbRecord[] = [];
  let offset = HEADER_BYTES;
  for (let record = 0n; record < count; record++) {
    if (offset + 2 > data.length) {
      throw new EmbFormatError(
        `truncated at byte offset ${offset}: expected record ${record} of ${count}`,
      );
    }
    const idLen = data.readUInt16LE(offset);
    const end = offset + 2 + idLen + dim * 4;
    if (end > data.length) {
      throw new EmbFormatError(`truncated at byte offset ${offset}: record ${record} is incomplete`);
    }
    const id = data.toString("utf-8", offset + 2, offset + 2 + idLen);
    const vec = new Float32Array(dim);
    for (let i = 0; i < dim; i++) {
      vec[i] = data.readFloatLE(offset + 2 + idLen + i * 4);
    }
    records.push({ id, vec });
    offset = end;
  }
  if (offset !== data.length) {
    throw new EmbFormatError(
      `trailing data at byte offset ${offset}: header promised ${count} records`,
    );
  }
  return { dim, records };
}

/** L2-normalize in float64, return float32; throws on a zero vector. */
export function normalized(id: string, values: ArrayLike<number>): Float32Array {
  let sumSquares = 0;
  for (let i = 0; i < values.length; i++) {
    sumSquares += values[i] * values[i];
  }
  const norm = Math.sqrt(sumSquares);
  if (norm === 0) {
    throw new EmbFormatError(`zero vector for id ${id}`);
  }
  const out = new Float32Array(values.length);
  for (let i = 0; i < values.length; i++) {
    out[i] = values[i] / norm;
  }
  return out;
}
