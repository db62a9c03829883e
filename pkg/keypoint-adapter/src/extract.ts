import { mkdirSync, readdirSync, statSync, writeFileSync } from "node:fs";
import { basename, dirname, extname, join, relative } from "node:path";
import { decodeImage } from "./image.js";
import { makeSidecar, type Sidecar } from "./schema.js";
import { BackendUnavailableError, type HandKeypointBackend } from "./backends/types.js";

const IMAGE_EXTENSIONS = new Set([".png", ".jpg", ".jpeg"]);

export interface ExtractSummary {
  backend: string;
  backendVersion: string;
  images: number;
  sidecars: number;
  detected: number;
  undetected: number;
  skipped: string[];
}

export function listImages(root: string): string[] {
  const out: string[] = [];
  const walk = (dir: string) => {
    for (const name of readdirSync(dir).sort()) {
      const path = join(dir, name);
      if (statSync(path).isDirectory()) walk(path);
      else if (IMAGE_EXTENSIONS.has(extname(name).toLowerCase())) out.push(path);
    }
  };
  walk(root);
  return out;
}

export function sidecarPathFor(inRoot: string, outRoot: string, imagePath: string): string {
  const rel = relative(inRoot, imagePath);
  const stem = basename(rel, extname(rel));
  return join(outRoot, dirname(rel), `${stem}.kp.json`);
}

/** Run the backend over every image under inRoot, mirroring the directory
 * structure into outRoot with one .kp.json per image. */
export async function extract(
  backend: HandKeypointBackend,
  inRoot: string,
  outRoot: string,
  minConfidence = 0.0,
): Promise<ExtractSummary> {
  const summary: ExtractSummary = {
    backend: backend.name,
    backendVersion: backend.version,
    images: 0,
    sidecars: 0,
    detected: 0,
    undetected: 0,
    skipped: [],
  };
  for (const imagePath of listImages(inRoot)) {
    summary.images += 1;
    let sidecar: Sidecar;
    try {
      const image = decodeImage(imagePath);
      const detection = await backend.detect(image);
      if (detection === null || detection.confidence < minConfidence) {
        sidecar = makeSidecar(null);
        summary.undetected += 1;
      } else {
        sidecar = makeSidecar(detection.points);
        summary.detected += 1;
      }
    } catch (err) {
      if (err instanceof BackendUnavailableError) throw err;
      console.warn(`skipping ${imagePath}: ${(err as Error).message}`);
      summary.skipped.push(imagePath);
      continue;
    }
    const outPath = sidecarPathFor(inRoot, outRoot, imagePath);
    mkdirSync(dirname(outPath), { recursive: true });
    writeFileSync(outPath, JSON.stringify(sidecar));
    summary.sidecars += 1;
  }
  summary.backendVersion = backend.version;
  return summary;
}
