import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, describe, expect, it } from "vitest";

import {
  EmbFormatError,
  EmbRecord,
  normalized,
  readEmbFile,
  writeEmbFile,
} from "../src/embFile.js";

const dir = mkdtempSync(join(tmpdir(), "embfile-"));
afterAll(() => rmSync(dir, { recursive: true, force: true }));

let fileSeq = 0;
function tempPath(): string {
  return join(dir, `f${fileSeq++}.emb`);
}

function sampleRecords(): EmbRecord[] {
  return [
    { id: "doc-a", vec: Float32Array.from([0.25, -1.5, 3.75]) },
    { id: "émoji🙂", vec: Float32Array.from([1e-8, 2 ** 20, -0.0]) },
    { id: "doc-c", vec: Float32Array.from([0, 0, 1]) },
  ];
}

describe("round trips", () => {
  it("preserves ids and float32 values exactly", () => {
    const path = tempPath();
    writeEmbFile(path, 3, sampleRecords());
    const { dim, records } = readEmbFile(path);
    expect(dim).toBe(3);
    expect(records.map((r) => r.id)).toEqual(["doc-a", "émoji🙂", "doc-c"]);
    for (const [i, record] of records.entries()) {
      expect(Array.from(record.vec)).toEqual(Array.from(sampleRecords()[i].vec));
    }
  });

  it("write-read-write is byte stable", () => {
    const first = tempPath();
    const second = tempPath();
    writeEmbFile(first, 3, sampleRecords());
    const { dim, records } = readEmbFile(first);
    writeEmbFile(second, dim, records);
    expect(readFileSync(second).equals(readFileSync(first))).toBe(true);
  });

  it("handles an empty record list", () => {
    const path = tempPath();
    writeEmbFile(path, 5, []);
    const { dim, records } = readEmbFile(path);
    expect(dim).toBe(5);
    expect(records).toEqual([]);
  });
});

describe("binary layout", () => {
  it("matches the frozen byte layout", () => {
    const path = tempPath();
    writeEmbFile(path, 2, [{ id: "ab", vec: Float32Array.from([1, 0]) }]);
    const bytes = readFileSync(path);
    const expected = Buffer.concat([
      Buffer.from("EMB1", "ascii"),
      Buffer.from([1, 0, 0, 0]), // version u32 LE
      Buffer.from([2, 0, 0, 0]), // dim u32 LE
      Buffer.from([1, 0, 0, 0, 0, 0, 0, 0]), // count u64 LE
      Buffer.from([2, 0]), // id length u16 LE
      Buffer.from("ab", "utf-8"),
      Buffer.from([0x00, 0x00, 0x80, 0x3f]), // 1.0f
      Buffer.from([0x00, 0x00, 0x00, 0x00]), // 0.0f
    ]);
    expect(bytes.equals(expected)).toBe(true);
  });
});

describe("write validation", () => {
  it.each([0, -1, 2.5])("rejects dimension %s", (dim) => {
    expect(() => writeEmbFile(tempPath(), dim as number, [])).toThrow(
      /dimension must be a positive integer/,
    );
  });

  it("rejects a vector whose length disagrees with dim", () => {
    const records = [{ id: "x", vec: Float32Array.from([1, 2]) }];
    expect(() => writeEmbFile(tempPath(), 3, records)).toThrow(/has 2 values, expected 3/);
  });

  it("rejects an empty id", () => {
    const records = [{ id: "", vec: Float32Array.from([1]) }];
    expect(() => writeEmbFile(tempPath(), 1, records)).toThrow(/length out of range/);
  });
});

describe("read validation", () => {
  function writtenBytes(): Buffer {
    const path = tempPath();
    writeEmbFile(path, 2, [{ id: "ab", vec: Float32Array.from([1, 0]) }]);
    return readFileSync(path);
  }

  function readBytes(bytes: Buffer): void {
    const path = tempPath();
    writeFileSync(path, bytes);
    readEmbFile(path);
  }

  it("rejects a file shorter than the header", () => {
    expect(() => readBytes(Buffer.from("EMB1"))).toThrow(/too short for a header/);
  });

  it("rejects a bad magic", () => {
    const bytes = writtenBytes();
    bytes.write("JUNK", 0, "ascii");
    expect(() => readBytes(bytes)).toThrow(/bad magic "JUNK"/);
  });

  it("rejects an unknown version", () => {
    const bytes = writtenBytes();
    bytes.writeUInt32LE(2, 4);
    expect(() => readBytes(bytes)).toThrow(/unsupported version 2/);
  });

  it("rejects a zero dimension", () => {
    const bytes = writtenBytes();
    bytes.writeUInt32LE(0, 8);
    expect(() => readBytes(bytes)).toThrow(/dimension must be >= 1/);
  });

  it("reports truncation inside a record with the byte offset", () => {
    const bytes = writtenBytes();
    expect(() => readBytes(bytes.subarray(0, bytes.length - 3))).toThrow(
      /truncated at byte offset 20: record 0 is incomplete/,
    );
  });

  it("reports a missing record when the count overpromises", () => {
    const bytes = writtenBytes();
    bytes.writeBigUInt64LE(2n, 12);
    expect(() => readBytes(bytes)).toThrow(
      /truncated at byte offset 32: expected record 1 of 2/,
    );
  });

  it("rejects trailing bytes after the promised records", () => {
    const bytes = Buffer.concat([writtenBytes(), Buffer.from([7])]);
    expect(() => readBytes(bytes)).toThrow(/trailing data at byte offset 32/);
  });

  it("raises the dedicated error type", () => {
    expect(() => readBytes(Buffer.from("EMB1"))).toThrow(EmbFormatError);
  });
});

describe("normalized", () => {
  it("scales a (3, 4) vector to (0.6, 0.8)", () => {
    const out = normalized("v", [3, 4]);
    expect(out[0]).toBeCloseTo(0.6, 7);
    expect(out[1]).toBeCloseTo(0.8, 7);
  });

  it("leaves the result within float32 rounding of unit norm", () => {
    const values = Array.from({ length: 17 }, (_, i) => Math.sin(i + 1) * 10);
    const out = normalized("v", values);
    let sumSq = 0;
    for (const value of out) sumSq += value * value;
    expect(Math.abs(Math.sqrt(sumSq) - 1)).toBeLessThan(1e-6);
  });

  it("names the offending id for a zero vector", () => {
    expect(() => normalized("bad-doc", [0, 0, 0])).toThrow(/zero vector for id bad-doc/);
  });
});
