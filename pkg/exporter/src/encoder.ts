/**
 * Text encoders. The transformer backend returns per-token embeddings and
 * pooling happens here (mean of tokens by default, CLS by flag), so the
 * pooling path is the same for every backend and unit-testable offline.
 */

export type Pooling = 'mean' | 'cls';

export interface EncoderInfo {
  model: string;
  dim: number;
}

export interface Encoder {
  info(): EncoderInfo;
  /** Token-level embeddings for each text: one [tokens x dim] matrix per input. */
  encodeTokens(texts: string[]): Promise<number[][][]>;
}

export function poolTokens(tokens: number[][], pooling: Pooling): number[] {
  if (tokens.length === 0) {
    throw new Error('cannot pool an empty token matrix');
  }
  if (pooling === 'cls') {
    return tokens[0].slice();
  }
  const dim = tokens[0].length;
  const out = new Array<number>(dim).fill(0);
  for (const row of tokens) {
    for (let k = 0; k < dim; k++) out[k] += row[k];
  }
  for (let k = 0; k < dim; k++) out[k] /= tokens.length;
  return out;
}

export const DEFAULT_MODEL = 'Xenova/bert-base-uncased';
export const OFFLINE_HINT =
  'encoder unavailable (model download failed or no network): ' +
  'fall back to the consumer package\'s built-in provider ' +
  '(`hcf embed --provider hashed_bow`) for offline runs';

/** Pretrained transformer backend (110M-parameter uncased base model by
 * default, 768-dim output). Loads lazily; failure raises with offline
 * guidance. */
export class TransformersEncoder implements Encoder {
  private pipe: ((texts: string[], opts: object) => Promise<{ tolist(): number[][][] }>) | null = null;

  constructor(private model: string = DEFAULT_MODEL,
              private maxLen: number = 512,
              private dim: number = 768) {
    if (maxLen < 1) throw new Error('max length must be positive');
  }

  info(): EncoderInfo {
    return { model: this.model, dim: this.dim };
  }

  private async load() {
    if (this.pipe) return;
    try {
      const { pipeline } = await import('@huggingface/transformers');
      this.pipe = (await pipeline('feature-extraction', this.model)) as never;
    } catch (err) {
      throw new Error(`${OFFLINE_HINT}\ncause: ${(err as Error).message}`);
    }
  }

  async encodeTokens(texts: string[]): Promise<number[][][]> {
    await this.load();
    const out: number[][][] = [];
    for (const text of texts) {
      // pooling happens downstream; request raw token states
      const tensor = await this.pipe!([text], {
        pooling: 'none',
        truncation: true,
        max_length: this.maxLen,
      });
      const batches = tensor.tolist();
      out.push(batches[0]);
    }
    return out;
  }
}
