/**
 * Scorer models. The dummy model scores a text by token-set overlap with the
 * image's sidecar caption file ("<image_uri>.txt" under the image root) and
 * ignores pixels entirely, which makes adapter behavior reproducible without
 * weights. Real models load through a plugin module exporting createScorer().
 */

import { readFileSync } from 'node:fs';
import { join } from 'node:path';
import type { PixelImage } from './image.js';

export interface ScoreContext {
  imageUri: string;
  /** The possibly cropped image; null when the file could not be decoded. */
  image: PixelImage | null;
  text: string;
}

export interface ScorerModel {
  name: string;
  /** Must return a finite number. */
  score(context: ScoreContext): number;
}

export class ModelError extends Error {}

export function tokenOverlap(reference: string, text: string): number {
  const refTokens = new Set(reference.toLowerCase().split(/\s+/).filter(Boolean));
  if (refTokens.size === 0) throw new ModelError('reference caption is empty');
  const textTokens = new Set(text.toLowerCase().split(/\s+/).filter(Boolean));
  let shared = 0;
  for (const token of refTokens) if (textTokens.has(token)) shared++;
  return shared / refTokens.size;
}

export function createDummyModel(imageRoot: string): ScorerModel {
  const captions = new Map<string, string>();
  return {
    name: 'dummy',
    score({ imageUri, text }) {
      let caption = captions.get(imageUri);
      if (caption === undefined) {
        const sidecar = join(imageRoot, `${imageUri}.txt`);
        try {
          caption = readFileSync(sidecar, 'utf-8').trim();
        } catch (err) {
          throw new ModelError(
            `no sidecar caption for ${imageUri}: ${(err as Error).message}`,
          );
        }
        captions.set(imageUri, caption);
      }
      return tokenOverlap(caption, text);
    },
  };
}

export async function loadModel(name: string, imageRoot: string): Promise<ScorerModel> {
  if (name === 'dummy') return createDummyModel(imageRoot);
  // Plugin entry point: a module exporting createScorer(imageRoot) -> ScorerModel.
  const plugin = await import(name);
  const factory = plugin.createScorer ?? plugin.default;
  if (typeof factory !== 'function') {
    throw new ModelError(`plugin ${name} does not export createScorer()`);
  }
  return factory(imageRoot);
}
