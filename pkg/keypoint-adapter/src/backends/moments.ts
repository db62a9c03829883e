import type { RawImage } from "../image.js";
import { intensityAt } from "../image.js";
import { NUM_KEYPOINTS, type Point } from "../schema.js";
import type { Detection, HandKeypointBackend } from "./types.js";

/**
 * Deterministic geometric backend: places the 21-point hand scheme from the
 * image's intensity moments (centroid, spread, principal axis). It is not a
 * trained detector — it exists so the extraction pipeline can run and be
 * tested end-to-end on machines without the pretrained model. Confidence is
 * the fraction of image mass above the background level.
 */
export class MomentsBackend implements HandKeypointBackend {
  readonly name = "moments";
  readonly version = "1";

  constructor(private readonly threshold = 0.05) {}

  async detect(img: RawImage): Promise<Detection | null> {
    let mass = 0;
    let mx = 0;
    let my = 0;
    for (let y = 0; y < img.height; y++) {
      for (let x = 0; x < img.width; x++) {
        const v = intensityAt(img, x, y);
        if (v <= this.threshold) continue;
        mass += v;
        mx += v * x;
        my += v * y;
      }
    }
    if (mass < 1e-6) return null;

    const cx = mx / mass;
    const cy = my / mass;
    let sxx = 0;
    let syy = 0;
    let sxy = 0;
    let active = 0;
    for (let y = 0; y < img.height; y++) {
      for (let x = 0; x < img.width; x++) {
        const v = intensityAt(img, x, y);
        if (v <= this.threshold) continue;
        active += 1;
        sxx += v * (x - cx) * (x - cx);
        syy += v * (y - cy) * (y - cy);
        sxy += v * (x - cx) * (y - cy);
      }
    }
    sxx /= mass;
    syy /= mass;
    sxy /= mass;
    const spread = Math.sqrt(Math.max(sxx + syy, 1));
    const axis = 0.5 * Math.atan2(2 * sxy, sxx - syy);

    // wrist below the centroid along the principal axis, fingers fanned above
    const points: Point[] = new Array(NUM_KEYPOINTS);
    const wx = cx - spread * Math.cos(axis);
    const wy = cy - spread * Math.sin(axis);
    points[0] = this.norm(img, wx, wy);
    const fingers = 5;
    for (let f = 0; f < fingers; f++) {
      const angle = axis + ((f - (fingers - 1) / 2) * Math.PI) / 6;
      for (let j = 1; j <= 4; j++) {
        const r = spread * (0.4 + 0.35 * j);
        const px = cx + r * Math.cos(angle);
        const py = cy + r * Math.sin(angle);
        points[4 * f + j] = this.norm(img, px, py);
      }
    }
    const confidence = Math.min(1, active / (img.width * img.height) / 0.01);
    return { points, confidence };
  }

  private norm(img: RawImage, x: number, y: number): Point {
    const clamp = (v: number) => Math.min(1, Math.max(0, v));
    return [clamp(x / (img.width - 1)), clamp(y / (img.height - 1))];
  }
}
