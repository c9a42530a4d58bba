#!/usr/bin/env node
/**
 * CLI: `hcfe-export export --corpus <path> --out <path> [--pooling mean|cls]
 * [--max-len 512] [--model <name>] [--batch-size 16]`
 */

import { parseArgs } from 'node:util';

import { DEFAULT_MODEL, Pooling, TransformersEncoder } from './encoder.js';
import { exportCorpus } from './export.js';

const USAGE = `usage: hcfe-export export --corpus <path> --out <path>
                          [--pooling mean|cls] [--max-len 512]
                          [--model <name>] [--batch-size 16]`;

export async function main(argv: string[]): Promise<number> {
  if (argv[0] !== 'export') {
    console.error(USAGE);
    return argv[0] === '--help' || argv[0] === 'help' ? 0 : 2;
  }
  let values;
  try {
    ({ values } = parseArgs({
      args: argv.slice(1),
      options: {
        corpus: { type: 'string' },
        out: { type: 'string' },
        pooling: { type: 'string', default: 'mean' },
        'max-len': { type: 'string', default: '512' },
        model: { type: 'string', default: DEFAULT_MODEL },
        'batch-size': { type: 'string', default: '16' },
        help: { type: 'boolean', default: false },
      },
      strict: true,
    }));
  } catch (err) {
    console.error(`error: ${(err as Error).message}\n${USAGE}`);
    return 2;
  }
  if (values.help) {
    console.log(USAGE);
    return 0;
  }
  if (!values.corpus || !values.out) {
    console.error(`error: --corpus and --out are required\n${USAGE}`);
    return 2;
  }
  if (values.pooling !== 'mean' && values.pooling !== 'cls') {
    console.error(`error: --pooling must be 'mean' or 'cls'\n${USAGE}`);
    return 2;
  }
  const maxLen = Number.parseInt(values['max-len'], 10);
  const batchSize = Number.parseInt(values['batch-size'], 10);
  if (!Number.isInteger(maxLen) || maxLen < 1 ||
      !Number.isInteger(batchSize) || batchSize < 1) {
    console.error(`error: --max-len and --batch-size must be positive integers`);
    return 2;
  }
  try {
    const encoder = new TransformersEncoder(values.model, maxLen);
    const summary = await exportCorpus(values.corpus, values.out, encoder, {
      pooling: values.pooling as Pooling,
      batchSize,
    });
    console.log(`wrote ${summary.outPath}: ${summary.records} vectors, ` +
                `dim ${summary.dim}, ${summary.emptyTexts} empty texts, ` +
                `model ${summary.model}`);
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

if (process.argv[1] && import.meta.url.endsWith('cli.js')) {
  void main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
