/**
 * Wire protocol (version "1"), one JSON object per line:
 *
 *   in : {"op":"hello","version":"1"}
 *   out: {"op":"hello","version":"1","supports_crop":true}
 *   in : {"op":"score","rid":"...","image_uri":"...","crop":[x,y,w,h]|null,"text":"..."}
 *   out: {"op":"score","rid":"...","score":<finite number>}  or
 *        {"op":"error","rid":"...","reason":"..."}
 *   in : {"op":"bye"}
 *
 * Error responses keep the process alive; the harness treats them as a
 * missing response and retries. Crops outside the image clamp with a warning;
 * crops that clamp to zero area are errors.
 */

import { join } from 'node:path';
import { cropImage, loadImage, rectWasClamped, type CropRect, type PixelImage } from './image.js';
import type { ScorerModel } from './model.js';

export const PROTOCOL_VERSION = '1';

export interface AdapterState {
  model: ScorerModel;
  imageRoot: string;
  /** Receives clamp warnings and parse diagnostics (stderr in production). */
  warn: (message: string) => void;
}

export type WireMessage = Record<string, unknown>;

export function helloResponse(): WireMessage {
  return { op: 'hello', version: PROTOCOL_VERSION, supports_crop: true };
}

function parseCrop(raw: unknown): CropRect | null {
  if (raw === null || raw === undefined) return null;
  if (!Array.isArray(raw) || raw.length !== 4 || raw.some((v) => typeof v !== 'number')) {
    throw new Error(`malformed crop ${JSON.stringify(raw)}`);
  }
  const [x, y, w, h] = raw as number[];
  return { x, y, w, h };
}

/** Score one request; never throws, always answers with score or error. */
export function handleScore(state: AdapterState, message: WireMessage): WireMessage {
  const rid = typeof message.rid === 'string' ? message.rid : null;
  try {
    if (rid === null) throw new Error('score request has no rid');
    const imageUri = message.image_uri;
    const text = message.text;
    if (typeof imageUri !== 'string' || typeof text !== 'string') {
      throw new Error('score request needs string image_uri and text');
    }
    const crop = parseCrop(message.crop);
    let image: PixelImage | null = loadImage(join(state.imageRoot, imageUri));
    if (crop !== null) {
      if (rectWasClamped(image, crop)) {
        state.warn(`rid ${rid}: crop [${crop.x}, ${crop.y}, ${crop.w}, ${crop.h}] clamped to image bounds`);
      }
      image = cropImage(image, crop);
    }
    const score = state.model.score({ imageUri, image, text });
    if (!Number.isFinite(score)) throw new Error(`model returned non-finite score ${score}`);
    return { op: 'score', rid, score };
  } catch (err) {
    return { op: 'error', rid, reason: (err as Error).message };
  }
}

export interface HandleResult {
  responses: WireMessage[];
  done: boolean;
}

/** Process one input line; malformed lines produce an error response and keep going. */
export function handleLine(state: AdapterState, line: string): HandleResult {
  const trimmed = line.trim();
  if (!trimmed) return { responses: [], done: false };
  let message: WireMessage;
  try {
    const parsed = JSON.parse(trimmed);
    if (typeof parsed !== 'object' || parsed === null || Array.isArray(parsed)) {
      throw new Error('not a JSON object');
    }
    message = parsed as WireMessage;
  } catch (err) {
    state.warn(`malformed request line: ${(err as Error).message}`);
    return {
      responses: [{ op: 'error', rid: null, reason: `malformed request line: ${(err as Error).message}` }],
      done: false,
    };
  }
  switch (message.op) {
    case 'hello':
      return { responses: [helloResponse()], done: false };
    case 'score':
      return { responses: [handleScore(state, message)], done: false };
    case 'bye':
      return { responses: [], done: true };
    default:
      return {
        responses: [{ op: 'error', rid: message.rid ?? null, reason: `unknown op ${JSON.stringify(message.op)}` }],
        done: false,
      };
  }
}

export function encodeLine(message: WireMessage): string {
  return JSON.stringify(message) + '\n';
}
