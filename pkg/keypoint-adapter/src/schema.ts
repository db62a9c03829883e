import { z } from "zod";

/** Sidecar schema version understood by the training pipeline. */
export const SIDECAR_VERSION = 1;
export const NUM_KEYPOINTS = 21;

/** Canonical 21-point hand scheme: wrist, then four joints per finger. */
export const KEYPOINT_NAMES = [
  "wrist",
  "thumb_cmc", "thumb_mcp", "thumb_ip", "thumb_tip",
  "index_mcp", "index_pip", "index_dip", "index_tip",
  "middle_mcp", "middle_pip", "middle_dip", "middle_tip",
  "ring_mcp", "ring_pip", "ring_dip", "ring_tip",
  "pinky_mcp", "pinky_pip", "pinky_dip", "pinky_tip",
] as const;

export type Point = [number, number];

export interface Sidecar {
  version: typeof SIDECAR_VERSION;
  detected: boolean;
  points: Point[];
}

const point = z.tuple([z.number().min(0).max(1), z.number().min(0).max(1)]);

export const sidecarSchema = z
  .object({
    version: z.literal(SIDECAR_VERSION),
    detected: z.boolean(),
    points: z.array(point),
  })
  .refine((doc) => !doc.detected || doc.points.length === NUM_KEYPOINTS, {
    message: `detected sidecars need exactly ${NUM_KEYPOINTS} points`,
  });

const clamp01 = (v: number) => Math.min(1, Math.max(0, v));

/** Build a schema-valid sidecar, clamping coordinates into [0,1]. */
export function makeSidecar(points: Point[] | null): Sidecar {
  if (points === null) {
    return { version: SIDECAR_VERSION, detected: false, points: [] };
  }
  if (points.length !== NUM_KEYPOINTS) {
    throw new Error(`expected ${NUM_KEYPOINTS} points, got ${points.length}`);
  }
  return {
    version: SIDECAR_VERSION,
    detected: true,
    points: points.map(([x, y]) => [clamp01(x), clamp01(y)] as Point),
  };
}
