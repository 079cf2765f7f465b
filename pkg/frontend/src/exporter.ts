/**
 * Turn an id -> text table into a unit-normalized embedding file, and
 * check existing files against the same rules.
 */
import type { Encoder } from "./encoder.js";
import { EmbRecord, normalized, readEmbFile, writeEmbFile } from "./embFile.js";

export interface ExportReport {
  count: number;
  dim: number;
  skipped: string[];
}

export interface VerifyReport {
  ok: boolean;
  count: number;
  dim: number;
  problems: string[];
}

const NORM_SLACK = 1e-5;

/** Encode every non-empty text and write the records in input order. */
export async function exportEmbeddings(
  texts: Map<string, string>,
  encoder: Encoder,
  outPath: string,
): Promise<ExportReport> {
  const ids: string[] = [];
  const bodies: string[] = [];
  const skipped: string[] = [];
  for (const [id, text] of texts) {
    if (text.trim() === "") {
      skipped.push(id);
    } else {
      ids.push(id);
      bodies.push(text);
    }
  }
  if (ids.length === 0) {
    throw new Error("no non-empty texts to encode");
  }

  const vectors = await encoder.encode(bodies);
  if (vectors.length !== ids.length) {
    throw new Error(`encoder returned ${vectors.length} vectors for ${ids.length} texts`);
  }
  const dim = vectors[0].length;
  const records: EmbRecord[] = ids.map((id, i) => {
    if (vectors[i].length !== dim) {
      throw new Error(`vector for ${id} has dim ${vectors[i].length}, expected ${dim}`);
    }
    return { id, vec: normalized(id, vectors[i]) };
  });
  writeEmbFile(outPath, dim, records);
  return { count: records.length, dim, skipped };
}

/** Re-read a written file and report anything a consumer would reject. */
export function verifyFile(path: string): VerifyReport {
  let dim: number;
  let records: EmbRecord[];
  try {
    ({ dim, records } = readEmbFile(path));
  } catch (error) {
    const message = error instanceof Error ? error.message : String(error);
    return { ok: false, count: 0, dim: 0, problems: [message] };
  }

  const problems: string[] = [];
  const seen = new Set<string>();
  for (const record of records) {
    if (seen.has(record.id)) {
      problems.push(`duplicate id ${record.id}`);
    }
    seen.add(record.id);
    let sumSq = 0;
    for (const value of record.vec) {
      sumSq += value * value;
    }
    const norm = Math.sqrt(sumSq);
    if (Math.abs(norm - 1) > NORM_SLACK) {
      problems.push(`id ${record.id} has norm ${norm.toFixed(8)}`);
    }
  }
  return { ok: problems.length === 0, count: records.length, dim, problems };
}
