/**
 * Pretrained sentence encoders via transformers.js, loaded lazily so
 * the package (and its model downloads) stay optional: offline use
 * goes through TinyEncoder instead.
 *
 * Models without a sentence head (for example mental-health RoBERTa
 * variants) get mean pooling over the attention-masked token states,
 * which is what `pooling: "mean"` does here.
 */
import type { Encoder, EncoderSpec } from "./encoder.js";

const TRANSFORMERS_MODULE = "@huggingface/transformers";

let pipePromise: Promise<any> | null = null;
let pipeModel: string | null = null;

async function loadPipeline(model: string): Promise<any> {
  if (pipePromise && pipeModel === model) {
    return pipePromise;
  }
  pipeModel = model;
  pipePromise = (async () => {
    let mod: any;
    try {
      mod = await import(TRANSFORMERS_MODULE);
    } catch {
      throw new Error(
        `transformer models need the optional dependency: npm install ${TRANSFORMERS_MODULE} ` +
          "(or pass --tiny for the offline encoder)",
      );
    }
    console.log(`loading encoder ${model}...`);
    return mod.pipeline("feature-extraction", model);
  })();
  return pipePromise;
}

function looksLikeMemoryError(error: unknown): boolean {
  return error instanceof Error && /memory|alloc/i.test(error.message);
}

export class TransformerEncoder implements Encoder {
  readonly label: string;
  private readonly spec: EncoderSpec;

  constructor(spec: EncoderSpec) {
    this.label = spec.label;
    this.spec = spec;
  }

  async encode(texts: string[]): Promise<Float32Array[]> {
    const pipe = await loadPipeline(this.spec.model);
    const out: Float32Array[] = [];
    let batchSize = Math.max(1, this.spec.batchSize);
    let start = 0;
    while (start < texts.length) {
      const batch = texts.slice(start, start + batchSize);
      try {
        const result = await pipe(batch, {
          pooling: this.spec.pooling,
          normalize: false,
          truncation: true,
          max_length: this.spec.maxLength,
        });
        const dim = result.dims[result.dims.length - 1];
        const data: Float32Array = result.data;
        for (let row = 0; row < batch.length; row++) {
          out.push(data.slice(row * dim, (row + 1) * dim));
        }
        start += batch.length;
      } catch (error) {
        if (looksLikeMemoryError(error) && batchSize > 1) {
          batchSize = Math.floor(batchSize / 2);
          console.log(`encoder ran out of memory, retrying with batch size ${batchSize}`);
          continue;
        }
        throw error;
      }
    }
    return out;
  }
}
