/**
 * Frame decoding and nearest-neighbor upscaling.
 *
 * Frames arrive as base64 RGBA (and optionally RGB gene view) at grid
 * resolution; the canvas is an integer multiple larger. Scaling is done here
 * in plain buffers so it works — and is testable — without a DOM canvas.
 */

import type { FrameMessage } from "./protocol";

export function decodeBase64(data: string): Uint8ClampedArray {
  if (typeof atob === "function") {
    const binary = atob(data);
    const bytes = new Uint8ClampedArray(binary.length);
    for (let i = 0; i < binary.length; i++) bytes[i] = binary.charCodeAt(i);
    return bytes;
  }
  return new Uint8ClampedArray(Buffer.from(data, "base64"));
}

/** RGB bytes -> opaque RGBA bytes. */
export function rgbToRgba(rgb: Uint8ClampedArray): Uint8ClampedArray {
  const pixels = rgb.length / 3;
  const out = new Uint8ClampedArray(pixels * 4);
  for (let i = 0; i < pixels; i++) {
    out[i * 4] = rgb[i * 3];
    out[i * 4 + 1] = rgb[i * 3 + 1];
    out[i * 4 + 2] = rgb[i * 3 + 2];
    out[i * 4 + 3] = 255;
  }
  return out;
}

/** Nearest-neighbor upscale of an RGBA buffer by an integer cell size. */
export function scaleNearest(
  src: Uint8ClampedArray,
  width: number,
  height: number,
  cellSize: number,
): Uint8ClampedArray {
  if (src.length !== width * height * 4) {
    throw new Error(`rgba buffer is ${src.length} bytes, expected ${width * height * 4}`);
  }
  const outW = width * cellSize;
  const out = new Uint8ClampedArray(outW * height * cellSize * 4);
  for (let y = 0; y < height * cellSize; y++) {
    const srcRow = Math.floor(y / cellSize) * width;
    for (let x = 0; x < outW; x++) {
      const s = (srcRow + Math.floor(x / cellSize)) * 4;
      const d = (y * outW + x) * 4;
      out[d] = src[s];
      out[d + 1] = src[s + 1];
      out[d + 2] = src[s + 2];
      out[d + 3] = src[s + 3];
    }
  }
  return out;
}

/** Integer cell size that fits the grid inside maxPixels (at least 1). */
export function fitCellSize(width: number, height: number, maxPixels: number): number {
  return Math.max(1, Math.floor(maxPixels / Math.max(width, height)));
}

export interface RenderedFrame {
  width: number;
  height: number;
  cellSize: number;
  rgba: Uint8ClampedArray;
  geneRgba: Uint8ClampedArray | null;
}

/** Decode a frame message into upscaled buffers ready for putImageData. */
export function renderFrame(frame: FrameMessage, maxPixels = 480): RenderedFrame {
  const cellSize = fitCellSize(frame.width, frame.height, maxPixels);
  const rgba = scaleNearest(decodeBase64(frame.rgba), frame.width, frame.height, cellSize);
  const geneRgba = frame.gene_rgb
    ? scaleNearest(rgbToRgba(decodeBase64(frame.gene_rgb)), frame.width, frame.height, cellSize)
    : null;
  return { width: frame.width, height: frame.height, cellSize, rgba, geneRgba };
}

/** Paint a rendered buffer onto a 2d canvas, resizing it to fit. */
export function paintBuffer(
  canvas: HTMLCanvasElement,
  buffer: Uint8ClampedArray,
  width: number,
  height: number,
  cellSize: number,
): void {
  canvas.width = width * cellSize;
  canvas.height = height * cellSize;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  // Copy into a fresh ArrayBuffer-backed array: ImageData rejects views that
  // could be backed by a SharedArrayBuffer.
  const pixels = new Uint8ClampedArray(buffer);
  ctx.putImageData(new ImageData(pixels, canvas.width, canvas.height), 0, 0);
}

/** Canvas click position -> grid cell coordinates. */
export function canvasToCell(
  offsetX: number,
  offsetY: number,
  cellSize: number,
  width: number,
  height: number,
): { x: number; y: number } {
  const clamp = (v: number, hi: number) => Math.min(Math.max(v, 0), hi - 1);
  return {
    x: clamp(Math.floor(offsetX / cellSize), width),
    y: clamp(Math.floor(offsetY / cellSize), height),
  };
}
