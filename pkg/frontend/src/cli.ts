#!/usr/bin/env node
/**
 * embed-exporter: encode an id<TAB>text table into the binary
 * embedding format, or verify an existing file.
 */
import { parseArgs } from "node:util";
import type { Encoder, Pooling } from "./encoder.js";
import { exportEmbeddings, verifyFile } from "./exporter.js";
import { parseTextsFile } from "./textsFile.js";
import { TINY_DEFAULT_DIM, TinyEncoder } from "./tinyEncoder.js";
import { TransformerEncoder } from "./transformerEncoder.js";

const USAGE = `usage:
  embed-exporter export --in texts.tsv --out vecs.emb [options]
  embed-exporter verify <file.emb>

export options:
  --model <id>        pretrained model id (default sentence-transformers/all-MiniLM-L6-v2)
  --pooling <mode>    mean or cls (default mean)
  --tiny              offline hashed-feature encoder, no model download
  --dim <n>           tiny encoder dimension (default ${TINY_DEFAULT_DIM})
  --seed <n>          tiny encoder seed (default 0)
  --batch-size <n>    texts per encoder call (default 32)
  --max-length <n>    token truncation length (default 512)
  --label <name>      run tag recorded in logs (default encoder-specific)`;

const EXIT_OK = 0;
const EXIT_USAGE = 1;
const EXIT_DATA = 2;

function intFlag(raw: string | undefined, name: string, fallback: number): number {
  if (raw === undefined) {
    return fallback;
  }
  const value = Number(raw);
  if (!Number.isInteger(value) || value <= 0) {
    throw new UsageError(`${name} must be a positive integer, got ${raw}`);
  }
  return value;
}

class UsageError extends Error {}

async function runExport(argv: string[]): Promise<number> {
  const { values } = parseArgs({
    args: argv,
    options: {
      in: { type: "string" },
      out: { type: "string" },
      model: { type: "string", default: "sentence-transformers/all-MiniLM-L6-v2" },
      pooling: { type: "string", default: "mean" },
      tiny: { type: "boolean", default: false },
      dim: { type: "string" },
      seed: { type: "string" },
      "batch-size": { type: "string" },
      "max-length": { type: "string" },
      label: { type: "string" },
    },
  });
  if (!values.in || !values.out) {
    throw new UsageError("export needs both --in and --out");
  }
  if (values.pooling !== "mean" && values.pooling !== "cls") {
    throw new UsageError(`pooling must be mean or cls, got ${values.pooling}`);
  }
  const maxLength = intFlag(values["max-length"], "--max-length", 512);

  let encoder: Encoder;
  if (values.tiny) {
    const dim = intFlag(values.dim, "--dim", TINY_DEFAULT_DIM);
    const seed = values.seed === undefined ? 0 : Number(values.seed);
    if (!Number.isInteger(seed) || seed < 0) {
      throw new UsageError(`--seed must be a non-negative integer, got ${values.seed}`);
    }
    encoder = new TinyEncoder(dim, seed, maxLength);
  } else {
    if (values.dim !== undefined || values.seed !== undefined) {
      throw new UsageError("--dim and --seed only apply to --tiny");
    }
    encoder = new TransformerEncoder({
      label: values.label ?? values.model,
      model: values.model,
      pooling: values.pooling as Pooling,
      batchSize: intFlag(values["batch-size"], "--batch-size", 32),
      maxLength,
    });
  }

  const texts = parseTextsFile(values.in);
  const report = await exportEmbeddings(texts, encoder, values.out);
  console.log(
    `wrote ${values.out}: ${report.count} records, dim ${report.dim} (${encoder.label})`,
  );
  for (const id of report.skipped) {
    console.log(`skipped ${id}: empty text`);
  }
  return EXIT_OK;
}

function runVerify(argv: string[]): number {
  if (argv.length !== 1) {
    throw new UsageError("verify takes exactly one file argument");
  }
  const report = verifyFile(argv[0]);
  if (report.ok) {
    console.log(`OK, ${report.count} records, dim ${report.dim}`);
    return EXIT_OK;
  }
  for (const problem of report.problems) {
    console.error(problem);
  }
  return EXIT_DATA;
}

async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  try {
    if (command === "export") {
      return await runExport(rest);
    }
    if (command === "verify") {
      return runVerify(rest);
    }
    throw new UsageError(USAGE);
  } catch (error) {
    if (error instanceof UsageError) {
      console.error(error.message);
      return EXIT_USAGE;
    }
    console.error(error instanceof Error ? error.message : String(error));
    return EXIT_DATA;
  }
}

main(process.argv.slice(2)).then((code) => {
  process.exitCode = code;
});
