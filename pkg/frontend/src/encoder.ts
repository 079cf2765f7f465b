/** Common encoder contract: texts in, raw (unnormalized) vectors out. */

export interface Encoder {
  readonly label: string;
  encode(texts: string[]): Promise<Float32Array[]>;
}

export type Pooling = "mean" | "cls";

export interface EncoderSpec {
  label: string;
  model: string;
  pooling: Pooling;
  batchSize: number;
  maxLength: number;
}
