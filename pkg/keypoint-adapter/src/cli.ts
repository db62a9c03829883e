#!/usr/bin/env node
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { MediaPipeBackend } from "./backends/mediapipe.js";
import { MomentsBackend } from "./backends/moments.js";
import { BackendUnavailableError, type HandKeypointBackend } from "./backends/types.js";
import { extract } from "./extract.js";

const argv = await yargs(hideBin(process.argv))
  .command("extract", "emit one keypoint sidecar per image", (y) =>
    y
      .option("in", { type: "string", demandOption: true, describe: "input image tree" })
      .option("out", { type: "string", demandOption: true, describe: "sidecar output root" })
      .option("min-confidence", {
        type: "number",
        default: 0.0,
        describe: "below this mean confidence a hand counts as undetected",
      })
      .option("backend", {
        type: "string",
        choices: ["mediapipe", "moments"] as const,
        default: "mediapipe",
        describe: "detector backend (moments is a deterministic geometric stand-in)",
      })
      .option("model", { type: "string", describe: "hand_landmarker.task path (mediapipe)" })
      .option("wasm", { type: "string", describe: "tasks-vision wasm directory (mediapipe)" }),
  )
  .demandCommand(1)
  .strict()
  .parse();

let backend: HandKeypointBackend;
if (argv.backend === "moments") {
  backend = new MomentsBackend();
} else {
  backend = new MediaPipeBackend(argv.model as string | undefined,
    argv.wasm as string | undefined);
}

try {
  const summary = await extract(backend, argv.in as string, argv.out as string,
    argv["min-confidence"] as number);
  console.log(
    `backend=${summary.backend}/${summary.backendVersion} images=${summary.images} ` +
    `sidecars=${summary.sidecars} detected=${summary.detected} ` +
    `undetected=${summary.undetected} skipped=${summary.skipped.length}`,
  );
  if (summary.skipped.length > 0) {
    console.log("skipped files:");
    for (const f of summary.skipped) console.log(`  ${f}`);
  }
} catch (err) {
  if (err instanceof BackendUnavailableError) {
    console.error(`environment error: ${err.message}`);
    process.exit(4);
  }
  throw err;
}
