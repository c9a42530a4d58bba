import { mkdtempSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { describe, expect, it, vi } from 'vitest';

import { main } from '../src/cli.js';

function corpusFile(): string {
  const dir = mkdtempSync(join(tmpdir(), 'hcfe-cli-'));
  const path = join(dir, 'c.jsonl');
  writeFileSync(path, '{"id": "a", "text": "words"}\n');
  return path;
}

describe('cli', () => {
  it('help exits 0', async () => {
    const log = vi.spyOn(console, 'log').mockImplementation(() => {});
    expect(await main(['--help'])).toBe(0);
    log.mockRestore();
  });

  it('missing required flags exit 2', async () => {
    const err = vi.spyOn(console, 'error').mockImplementation(() => {});
    expect(await main(['export'])).toBe(2);
    expect(await main(['export', '--corpus', 'x'])).toBe(2);
    err.mockRestore();
  });

  it('bad pooling choice exits 2', async () => {
    const err = vi.spyOn(console, 'error').mockImplementation(() => {});
    const code = await main(['export', '--corpus', corpusFile(),
                             '--out', '/tmp/x.hcfe', '--pooling', 'max']);
    expect(code).toBe(2);
    err.mockRestore();
  });

  it('unavailable encoder exits 1 with fallback guidance', async () => {
    const messages: string[] = [];
    const err = vi.spyOn(console, 'error')
      .mockImplementation((msg: unknown) => { messages.push(String(msg)); });
    const code = await main(['export', '--corpus', corpusFile(),
                             '--out', join(tmpdir(), 'never.hcfe')]);
    err.mockRestore();
    if (code === 0) {
      return; // a cached/installed encoder actually ran; nothing to assert offline
    }
    expect(code).toBe(1);
    expect(messages.join('\n')).toMatch(/hashed_bow/);
  });
});
