/**
 * Batch export: read corpus, encode non-empty texts, pool, write HCFE.
 * Empty texts become zero vectors (the consumer re-initializes them).
 */

import { readCorpus } from './corpus.js';
import { Encoder, Pooling, poolTokens } from './encoder.js';
import { EmbeddingRecord, writeHcfe } from './hcfe.js';

export interface ExportOptions {
  pooling?: Pooling;
  batchSize?: number;
}

export interface ExportSummary {
  records: number;
  dim: number;
  emptyTexts: number;
  model: string;
  outPath: string;
}

export async function exportCorpus(corpusPath: string, outPath: string,
                                   encoder: Encoder,
                                   options: ExportOptions = {}): Promise<ExportSummary> {
  const pooling = options.pooling ?? 'mean';
  const batchSize = options.batchSize ?? 16;
  if (batchSize < 1) throw new Error('batch size must be positive');

  const corpus = readCorpus(corpusPath);
  const { dim, model } = encoder.info();
  const vectors = new Map<string, number[]>();
  let emptyTexts = 0;

  const pending: { id: string; text: string }[] = [];
  for (const record of corpus) {
    if (record.text.trim() === '') {
      vectors.set(record.id, new Array<number>(dim).fill(0));
      emptyTexts += 1;
    } else {
      pending.push(record);
    }
  }

  for (let lo = 0; lo < pending.length; lo += batchSize) {
    const batch = pending.slice(lo, lo + batchSize);
    const tokenMatrices = await encoder.encodeTokens(batch.map((r) => r.text));
    if (tokenMatrices.length !== batch.length) {
      throw new Error(`encoder returned ${tokenMatrices.length} results for ` +
                      `${batch.length} inputs`);
    }
    batch.forEach((record, k) => {
      const pooled = poolTokens(tokenMatrices[k], pooling);
      if (pooled.length !== dim) {
        throw new Error(`encoder produced dim ${pooled.length} for ${record.id}, ` +
                        `expected ${dim}`);
      }
      vectors.set(record.id, pooled);
    });
  }

  // ids copied verbatim, in corpus order
  const records: EmbeddingRecord[] = corpus.map((r) => ({
    id: r.id,
    vector: vectors.get(r.id)!,
  }));
  writeHcfe(outPath, records, dim);
  return { records: records.length, dim, emptyTexts, model, outPath };
}
