/**
 * HCFE embedding file writing: the contract shared with the consumer side.
 *
 * Format (version 1):
 *   line 1:  `HCFE <version> <dim>`
 *   rest:    `<id>\t<f_1> <f_2> ... <f_dim>` with decimal float literals
 * UTF-8, LF line endings. Values are stored at float32 precision.
 */

import { writeFileSync } from 'node:fs';

export const HCFE_VERSION = 1;

export interface EmbeddingRecord {
  id: string;
  vector: number[];
}

export function formatValue(v: number): string {
  if (!Number.isFinite(v)) {
    throw new Error(`non-finite embedding value: ${v}`);
  }
  // shortest decimal that round-trips the float32 value
  return String(Math.fround(v));
}

export function renderHcfe(records: EmbeddingRecord[], dim: number): string {
  if (!Number.isInteger(dim) || dim < 1) {
    throw new Error(`dim must be a positive integer, got ${dim}`);
  }
  const lines = [`HCFE ${HCFE_VERSION} ${dim}`];
  const seen = new Set<string>();
  for (const { id, vector } of records) {
    if (seen.has(id)) {
      throw new Error(`duplicate id in export: ${id}`);
    }
    seen.add(id);
    if (vector.length !== dim) {
      throw new Error(`vector for ${id} has ${vector.length} values, expected ${dim}`);
    }
    lines.push(`${id}\t${vector.map(formatValue).join(' ')}`);
  }
  return lines.join('\n') + '\n';
}

export function writeHcfe(path: string, records: EmbeddingRecord[], dim: number): void {
  writeFileSync(path, renderHcfe(records, dim), { encoding: 'utf-8' });
}
