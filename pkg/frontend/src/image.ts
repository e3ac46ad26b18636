/**
 * Minimal image handling for the scorer adapter: netpbm (PGM/PPM) decoding
 * and pixel cropping. Netpbm keeps the adapter dependency-free and the test
 * fixtures human-readable; real-model plugins are free to decode richer
 * formats themselves.
 */

import { readFileSync } from 'node:fs';

export interface PixelImage {
  width: number;
  height: number;
  channels: number;
  /** Row-major, `width * height * channels` samples. */
  pixels: Uint8Array;
}

export interface CropRect {
  x: number;
  y: number;
  w: number;
  h: number;
}

export class ImageError extends Error {}

/** Decode P2/P3 (ASCII) and P5/P6 (binary) netpbm images. */
export function decodeNetpbm(data: Buffer): PixelImage {
  const magic = data.subarray(0, 2).toString('ascii');
  const channels = magic === 'P3' || magic === 'P6' ? 3 : 1;
  if (!['P2', 'P3', 'P5', 'P6'].includes(magic)) {
    throw new ImageError(`unsupported image magic ${JSON.stringify(magic)}`);
  }

  // Header: magic, width, height, maxval — whitespace separated, # comments.
  let offset = 2;
  const fields: number[] = [];
  while (fields.length < 3) {
    const ch = data[offset];
    if (ch === undefined) throw new ImageError('truncated netpbm header');
    if (ch === 0x23) {
      while (offset < data.length && data[offset] !== 0x0a) offset++;
    } else if (ch === 0x20 || ch === 0x09 || ch === 0x0a || ch === 0x0d) {
      offset++;
    } else {
      let start = offset;
      while (offset < data.length && data[offset] >= 0x30 && data[offset] <= 0x39) offset++;
      if (offset === start) throw new ImageError('malformed netpbm header');
      fields.push(parseInt(data.subarray(start, offset).toString('ascii'), 10));
    }
  }
  const [width, height, maxval] = fields;
  if (width < 1 || height < 1 || maxval < 1 || maxval > 255) {
    throw new ImageError(`invalid netpbm dimensions ${width}x${height} maxval ${maxval}`);
  }
  const count = width * height * channels;
  const pixels = new Uint8Array(count);

  if (magic === 'P5' || magic === 'P6') {
    offset += 1; // single whitespace after maxval
    if (data.length - offset < count) throw new ImageError('truncated netpbm pixel data');
    pixels.set(data.subarray(offset, offset + count));
  } else {
    const text = data.subarray(offset).toString('ascii');
    const values = text
      .split('\n')
      .map((line) => line.replace(/#.*$/, ''))
      .join(' ')
      .trim()
      .split(/\s+/);
    if (values.length < count) throw new ImageError('truncated netpbm pixel data');
    for (let i = 0; i < count; i++) pixels[i] = parseInt(values[i], 10);
  }
  return { width, height, channels, pixels };
}

export function loadImage(path: string): PixelImage {
  let data: Buffer;
  try {
    data = readFileSync(path);
  } catch (err) {
    throw new ImageError(`cannot read image ${path}: ${(err as Error).message}`);
  }
  return decodeNetpbm(data);
}

/** Clamp a crop rectangle to the image bounds. */
export function clampRect(image: PixelImage, rect: CropRect): CropRect {
  const x0 = Math.max(0, Math.floor(rect.x));
  const y0 = Math.max(0, Math.floor(rect.y));
  const x1 = Math.min(image.width, Math.ceil(rect.x + rect.w));
  const y1 = Math.min(image.height, Math.ceil(rect.y + rect.h));
  return { x: x0, y: y0, w: Math.max(0, x1 - x0), h: Math.max(0, y1 - y0) };
}

/**
 * Pixel crop of the [x, x+w) x [y, y+h) region after clamping to the image.
 * A rectangle that clamps to zero area is an error.
 */
export function cropImage(image: PixelImage, rect: CropRect): PixelImage {
  const clamped = clampRect(image, rect);
  if (clamped.w === 0 || clamped.h === 0) {
    throw new ImageError(
      `crop [${rect.x}, ${rect.y}, ${rect.w}, ${rect.h}] has zero area after clamping`,
    );
  }
  const { channels } = image;
  const pixels = new Uint8Array(clamped.w * clamped.h * channels);
  for (let row = 0; row < clamped.h; row++) {
    const srcStart = ((clamped.y + row) * image.width + clamped.x) * channels;
    const srcEnd = srcStart + clamped.w * channels;
    pixels.set(image.pixels.subarray(srcStart, srcEnd), row * clamped.w * channels);
  }
  return { width: clamped.w, height: clamped.h, channels, pixels };
}

/** True when the rectangle was altered by clamping (used for warnings). */
export function rectWasClamped(image: PixelImage, rect: CropRect): boolean {
  const clamped = clampRect(image, rect);
  return (
    clamped.x !== rect.x || clamped.y !== rect.y || clamped.w !== rect.w || clamped.h !== rect.h
  );
}
