#!/usr/bin/env node
/**
 * Scorer adapter CLI.
 *
 *   itm-scorer-adapter --image-root DIR [--model dummy] [--http PORT] [--device HINT]
 *
 * Default mode speaks the line protocol on stdin/stdout; --http serves the
 * same protocol over HTTP instead (exactly one mode at a time).
 */

import { parseArgs } from 'node:util';
import { serve } from './adapter.js';

async function main(): Promise<void> {
  const { values } = parseArgs({
    options: {
      model: { type: 'string', default: 'dummy' },
      'image-root': { type: 'string', default: '.' },
      http: { type: 'string' },
      device: { type: 'string' },
    },
  });
  const subprocessMode = values.http === undefined;
  await serve({
    model: values.model as string,
    imageRoot: values['image-root'] as string,
    mode: subprocessMode ? 'subprocess' : { httpPort: parseInt(values.http as string, 10) },
    deviceHint: values.device as string | undefined,
  });
  // After bye/EOF the loop is done; release stdin so the event loop drains.
  if (subprocessMode) process.stdin.destroy();
}

main().catch((err) => {
  process.stderr.write(`fatal: ${(err as Error).message}\n`);
  process.exitCode = 1;
});
