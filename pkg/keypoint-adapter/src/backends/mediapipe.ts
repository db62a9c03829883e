import { existsSync } from "node:fs";
import type { RawImage } from "../image.js";
import { NUM_KEYPOINTS, type Point } from "../schema.js";
import { BackendUnavailableError, type Detection, type HandKeypointBackend } from "./types.js";

const INSTALL_HINT =
  "npm install @mediapipe/tasks-vision, download hand_landmarker.task " +
  "(https://storage.googleapis.com/mediapipe-models/hand_landmarker/hand_landmarker/float16/1/hand_landmarker.task) " +
  "and pass --model <path> [--wasm <tasks-vision wasm dir>]";

/**
 * Pretrained 21-point hand landmarker via @mediapipe/tasks-vision. The
 * package and the .task model file are resolved at runtime; when either is
 * missing the backend reports itself unavailable with an install hint.
 */
export class MediaPipeBackend implements HandKeypointBackend {
  readonly name = "mediapipe";
  version = "unknown";
  private landmarker: any = null;

  constructor(private readonly modelPath?: string, private readonly wasmDir?: string) {}

  async init(): Promise<void> {
    if (!this.modelPath) {
      throw new BackendUnavailableError("mediapipe backend needs --model", INSTALL_HINT);
    }
    if (!existsSync(this.modelPath)) {
      throw new BackendUnavailableError(
        `model file not found: ${this.modelPath}`, INSTALL_HINT);
    }
    let vision: any;
    try {
      // resolved at runtime only; the package is optional
      const specifier = "@mediapipe/tasks-vision";
      vision = await import(specifier);
    } catch {
      throw new BackendUnavailableError(
        "@mediapipe/tasks-vision is not installed", INSTALL_HINT);
    }
    const fileset = await vision.FilesetResolver.forVisionTasks(
      this.wasmDir ?? "node_modules/@mediapipe/tasks-vision/wasm");
    this.landmarker = await vision.HandLandmarker.createFromOptions(fileset, {
      baseOptions: { modelAssetPath: this.modelPath, delegate: "CPU" },
      runningMode: "IMAGE",
      numHands: 1,
    });
    this.version = "tasks-vision";
  }

  async detect(img: RawImage): Promise<Detection | null> {
    if (!this.landmarker) await this.init();
    const frame = {
      data: new Uint8ClampedArray(img.data),
      width: img.width,
      height: img.height,
    };
    const result = this.landmarker.detect(frame);
    if (!result.landmarks || result.landmarks.length === 0) return null;
    const hand = result.landmarks[0];
    if (hand.length !== NUM_KEYPOINTS) return null;
    const points = hand.map((lm: { x: number; y: number }) => [lm.x, lm.y] as Point);
    const confidence =
      result.handedness?.[0]?.[0]?.score ?? result.handednesses?.[0]?.[0]?.score ?? 1.0;
    return { points, confidence };
  }
}
