import { execFileSync } from 'node:child_process';
import { mkdtempSync, readFileSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { describe, expect, it } from 'vitest';

import { OFFLINE_HINT, poolTokens } from '../src/encoder.js';
import { exportCorpus } from '../src/export.js';
import { FakeEncoder } from './fake_encoder.js';

function writeCorpus(lines: object[]): string {
  const dir = mkdtempSync(join(tmpdir(), 'hcfe-exp-'));
  const path = join(dir, 'corpus.jsonl');
  writeFileSync(path, lines.map((o) => JSON.stringify(o)).join('\n') + '\n');
  return path;
}

const THREE_RECORDS = [
  { id: 'acme', text: 'cloud infrastructure and container tooling' },
  { id: 'globex', text: 'retail analytics platform' },
  { id: 'initech', text: '' },
];

describe('exportCorpus', () => {
  it('writes a 768-dim header for a 3-record corpus', async () => {
    const corpus = writeCorpus(THREE_RECORDS);
    const out = join(corpus, '..', 'emb.hcfe');
    const summary = await exportCorpus(corpus, out, new FakeEncoder());
    expect(summary.records).toBe(3);
    expect(summary.dim).toBe(768);
    const lines = readFileSync(out, 'utf-8').split('\n');
    expect(lines[0]).toBe('HCFE 1 768');
    expect(lines[1].split('\t')[0]).toBe('acme');
    expect(lines[1].split('\t')[1].split(' ')).toHaveLength(768);
  });

  it('keeps corpus order and copies ids verbatim', async () => {
    const corpus = writeCorpus(THREE_RECORDS);
    const out = join(corpus, '..', 'order.hcfe');
    await exportCorpus(corpus, out, new FakeEncoder(4));
    const ids = readFileSync(out, 'utf-8').trim().split('\n').slice(1)
      .map((l) => l.split('\t')[0]);
    expect(ids).toEqual(['acme', 'globex', 'initech']);
  });

  it('maps empty text to a zero vector', async () => {
    const corpus = writeCorpus(THREE_RECORDS);
    const out = join(corpus, '..', 'zero.hcfe');
    const summary = await exportCorpus(corpus, out, new FakeEncoder(8));
    expect(summary.emptyTexts).toBe(1);
    const row = readFileSync(out, 'utf-8').trim().split('\n')
      .find((l) => l.startsWith('initech\t'))!;
    expect(row.split('\t')[1].split(' ').every((v) => Number(v) === 0)).toBe(true);
  });

  it('is deterministic for identical text', async () => {
    const corpus = writeCorpus([
      { id: 'a', text: 'same words here' },
      { id: 'b', text: 'same words here' },
    ]);
    const out = join(corpus, '..', 'dup.hcfe');
    await exportCorpus(corpus, out, new FakeEncoder(16));
    const rows = readFileSync(out, 'utf-8').trim().split('\n').slice(1)
      .map((l) => l.split('\t')[1]);
    expect(rows[0]).toBe(rows[1]);
  });

  it('mean and cls pooling agree with the pooling primitive', async () => {
    const encoder = new FakeEncoder(6);
    const tokens = (await encoder.encodeTokens(['alpha beta']))[0];
    const corpus = writeCorpus([{ id: 'a', text: 'alpha beta' }]);
    for (const pooling of ['mean', 'cls'] as const) {
      const out = join(corpus, '..', `${pooling}.hcfe`);
      await exportCorpus(corpus, out, encoder, { pooling });
      const got = readFileSync(out, 'utf-8').trim().split('\n')[1]
        .split('\t')[1].split(' ').map(Number);
      const want = poolTokens(tokens, pooling).map((v) => Math.fround(v));
      got.forEach((v, k) => expect(Math.abs(v - want[k])).toBeLessThan(1e-6));
    }
  });

  it('round-trips through the consumer parser', async () => {
    const corpus = writeCorpus(THREE_RECORDS);
    const out = join(corpus, '..', 'roundtrip.hcfe');
    await exportCorpus(corpus, out, new FakeEncoder());
    let pythonOut: string;
    try {
      pythonOut = execFileSync('python3', ['-c', `
from hcfkit.textembed import load_embedding_file
emb = load_embedding_file(${JSON.stringify(out)})
print(emb.dim, len(emb.rows), sorted(emb.rows)[0])
`], { encoding: 'utf-8' });
    } catch {
      return; // consumer package not installed in this environment
    }
    expect(pythonOut.trim()).toBe('768 3 acme');
  });
});

describe('pooling primitive', () => {
  it('mean averages token rows', () => {
    expect(poolTokens([[1, 3], [3, 5]], 'mean')).toEqual([2, 4]);
  });

  it('cls takes the first row', () => {
    expect(poolTokens([[1, 3], [3, 5]], 'cls')).toEqual([1, 3]);
  });

  it('rejects empty matrices', () => {
    expect(() => poolTokens([], 'mean')).toThrow(/empty/);
  });
});

describe('offline guidance', () => {
  it('names the built-in fallback provider', () => {
    expect(OFFLINE_HINT).toMatch(/hashed_bow/);
    expect(OFFLINE_HINT).toMatch(/encoder unavailable/);
  });
});
