/**
 * Long-running protocol endpoints: subprocess (line protocol over
 * stdin/stdout) and HTTP (GET /hello, POST /score). A single loop processes
 * requests in arrival order; HTTP batches are scored sequentially and the
 * response array preserves request order.
 */

import { createInterface } from 'node:readline';
import { createServer, type Server } from 'node:http';
import type { Readable, Writable } from 'node:stream';
import { loadModel } from './model.js';
import {
  encodeLine,
  handleLine,
  handleScore,
  helloResponse,
  type AdapterState,
  type WireMessage,
} from './protocol.js';

export interface AdapterConfig {
  model: string;
  imageRoot: string;
  /** Exactly one protocol mode: 'subprocess', or an HTTP port. */
  mode: 'subprocess' | { httpPort: number };
  deviceHint?: string;
  warn?: (message: string) => void;
}

export async function buildState(config: AdapterConfig): Promise<AdapterState> {
  const model = await loadModel(config.model, config.imageRoot);
  return {
    model,
    imageRoot: config.imageRoot,
    warn: config.warn ?? ((message) => process.stderr.write(message + '\n')),
  };
}

/** Drive the line protocol over arbitrary streams until bye or EOF. */
export async function serveStream(
  state: AdapterState,
  input: Readable,
  output: Writable,
): Promise<void> {
  const lines = createInterface({ input, crlfDelay: Infinity });
  try {
    for await (const line of lines) {
      const { responses, done } = handleLine(state, line);
      for (const response of responses) output.write(encodeLine(response));
      if (done) break;
    }
  } finally {
    lines.close();
  }
}

export function serveHttp(state: AdapterState, port: number): Promise<Server> {
  const server = createServer((request, response) => {
    if (request.method === 'GET' && request.url === '/hello') {
      response.writeHead(200, { 'Content-Type': 'application/json' });
      response.end(JSON.stringify(helloResponse()));
      return;
    }
    if (request.method === 'POST' && request.url === '/score') {
      const chunks: Buffer[] = [];
      request.on('data', (chunk) => chunks.push(chunk));
      request.on('end', () => {
        try {
          const payload = JSON.parse(Buffer.concat(chunks).toString('utf-8'));
          const requests: WireMessage[] = payload.requests ?? [];
          const responses = requests.map((message) => handleScore(state, message));
          const failed = responses.filter((r) => r.op === 'error');
          if (failed.length > 0) {
            // 200 only on full success
            response.writeHead(500, { 'Content-Type': 'application/json' });
            response.end(JSON.stringify({ responses }));
            return;
          }
          response.writeHead(200, { 'Content-Type': 'application/json' });
          response.end(JSON.stringify({ responses }));
        } catch (err) {
          response.writeHead(400, { 'Content-Type': 'application/json' });
          response.end(JSON.stringify({ error: (err as Error).message }));
        }
      });
      return;
    }
    response.writeHead(404);
    response.end();
  });
  return new Promise((resolve) => server.listen(port, '127.0.0.1', () => resolve(server)));
}

/** Start the configured endpoint; resolves when a subprocess loop finishes. */
export async function serve(config: AdapterConfig): Promise<Server | void> {
  const state = await buildState(config);
  if (config.mode === 'subprocess') {
    return serveStream(state, process.stdin, process.stdout);
  }
  return serveHttp(state, config.mode.httpPort);
}
