import { readFileSync } from "node:fs";
import { PNG } from "pngjs";
import jpeg from "jpeg-js";

/** Decoded image: RGBA bytes, row-major. */
export interface RawImage {
  width: number;
  height: number;
  data: Uint8Array; // RGBA
}

export function decodeImage(path: string): RawImage {
  const bytes = readFileSync(path);
  if (bytes.length >= 8 && bytes[0] === 0x89 && bytes[1] === 0x50) {
    const png = PNG.sync.read(bytes);
    return { width: png.width, height: png.height, data: new Uint8Array(png.data) };
  }
  if (bytes.length >= 2 && bytes[0] === 0xff && bytes[1] === 0xd8) {
    const img = jpeg.decode(bytes, { useTArray: true, maxMemoryUsageInMB: 64 });
    return { width: img.width, height: img.height, data: new Uint8Array(img.data) };
  }
  throw new Error(`${path}: not a PNG or JPEG file`);
}

/** Grayscale intensity in [0,1] at pixel (x, y). */
export function intensityAt(img: RawImage, x: number, y: number): number {
  const i = 4 * (y * img.width + x);
  return (0.299 * img.data[i] + 0.587 * img.data[i + 1] + 0.114 * img.data[i + 2]) / 255;
}
