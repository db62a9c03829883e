import type { RawImage } from "../image.js";
import type { Point } from "../schema.js";

/** One hand detection: 21 normalized points plus a mean confidence. */
export interface Detection {
  points: Point[];
  confidence: number;
}

/** A pluggable 21-point hand-keypoint detector. */
export interface HandKeypointBackend {
  readonly name: string;
  readonly version: string;
  /** null when no hand is found in the image. */
  detect(image: RawImage): Promise<Detection | null>;
}

/** Raised when a requested backend cannot run in this environment. */
export class BackendUnavailableError extends Error {
  constructor(message: string, public readonly installHint: string) {
    super(`${message}\n  hint: ${installHint}`);
    this.name = "BackendUnavailableError";
  }
}
