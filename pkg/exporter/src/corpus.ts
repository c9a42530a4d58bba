/**
 * Corpus reading: UTF-8 JSON-lines, one object per line with string
 * fields `id` and `text` (the consumer side's ingestion format).
 */

import { readFileSync } from 'node:fs';

export interface CorpusRecord {
  id: string;
  text: string;
}

export function readCorpus(path: string): CorpusRecord[] {
  const raw = readFileSync(path, 'utf-8');
  const records: CorpusRecord[] = [];
  const seen = new Set<string>();
  const lines = raw.split('\n');
  for (let lineno = 1; lineno <= lines.length; lineno++) {
    const line = lines[lineno - 1].trim();
    if (!line) continue;
    let obj: unknown;
    try {
      obj = JSON.parse(line);
    } catch (err) {
      throw new Error(`${path}:${lineno}: invalid JSON (${(err as Error).message})`);
    }
    if (typeof obj !== 'object' || obj === null ||
        typeof (obj as Record<string, unknown>).id === 'undefined' ||
        typeof (obj as Record<string, unknown>).text === 'undefined') {
      throw new Error(`${path}:${lineno}: expected object with 'id' and 'text'`);
    }
    const id = String((obj as Record<string, unknown>).id);
    const text = String((obj as Record<string, unknown>).text);
    if (seen.has(id)) {
      throw new Error(`${path}:${lineno}: duplicate corpus id ${id}`);
    }
    seen.add(id);
    records.push({ id, text });
  }
  if (records.length === 0) {
    throw new Error(`${path}: corpus is empty`);
  }
  return records;
}
