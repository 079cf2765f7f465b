/**
 * Miniature offline encoder for CI and format conformance.
 *
 * Every token gets a fixed pseudo-random embedding derived from
 * sha256(seed, token), and a sentence is the mean of its token
 * embeddings — a random-weight bag-of-words model.  No model files,
 * no network, bit-stable across runs and platforms.
 */
import { createHash } from "node:crypto";

import type { Encoder } from "./encoder.js";

export const TINY_DEFAULT_DIM = 64;

const TOKEN_RE = /[a-z0-9']+/g;

function hashedValues(seed: number, token: string, dim: number): Float64Array {
  const out = new Float64Array(dim);
  let filled = 0;
  for (let block = 0; filled < dim; block++) {
    const digest = createHash("sha256")
      .update(`${seed}\0${token}\0${block}`)
      .digest();
    for (let i = 0; i + 1 < digest.length && filled < dim; i += 2) {
      // two bytes -> uniform in [-1, 1)
      out[filled++] = digest.readUInt16LE(i) / 32768 - 1;
    }
  }
  return out;
}

export class TinyEncoder implements Encoder {
  readonly label: string;
  readonly dim: number;
  readonly seed: number;
  readonly maxLength: number;

  constructor(dim: number = TINY_DEFAULT_DIM, seed = 0, maxLength = 512) {
    if (!Number.isInteger(dim) || dim < 1) {
      throw new Error(`tiny encoder dimension must be a positive integer, got ${dim}`);
    }
    this.label = "tiny";
    this.dim = dim;
    this.seed = seed;
    this.maxLength = maxLength;
  }

  async encode(texts: string[]): Promise<Float32Array[]> {
    return texts.map((text) => this.encodeOne(text));
  }

  private encodeOne(text: string): Float32Array {
    let tokens: string[] = text.toLowerCase().match(TOKEN_RE) ?? [];
    if (tokens.length === 0) {
      // punctuation-only input still deserves a stable vector
      tokens = [text];
    }
    tokens = tokens.slice(0, this.maxLength);
    const sum = new Float64Array(this.dim);
    for (const token of tokens) {
      const values = hashedValues(this.seed, token, this.dim);
      for (let i = 0; i < this.dim; i++) {
        sum[i] += values[i];
      }
    }
    const out = new Float32Array(this.dim);
    for (let i = 0; i < this.dim; i++) {
      out[i] = sum[i] / tokens.length;
    }
    return out;
  }
}
