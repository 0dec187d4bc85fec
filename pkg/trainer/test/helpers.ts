import { ChildProcess, spawn } from "node:child_process";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

import { Rng } from "../src/rng.js";

export const REPO_ROOT = path.resolve(
  path.dirname(fileURLToPath(import.meta.url)), "..", "..",
);

export interface EngineService {
  baseUrl: string;
  stop: () => void;
}

/** Spawn the engine's HTTP service and wait for it to come up. */
export async function startEngineService(): Promise<EngineService> {
  const port = 8600 + Math.floor(Math.random() * 2000);
  const proc: ChildProcess = spawn(
    "python3",
    [
      "-m", "uvicorn", "evoarch.service:app",
      "--port", String(port), "--log-level", "warning",
    ],
    { cwd: REPO_ROOT, stdio: ["ignore", "ignore", "inherit"] },
  );
  const baseUrl = `http://127.0.0.1:${port}`;
  for (let attempt = 0; attempt < 120; attempt++) {
    try {
      const response = await fetch(`${baseUrl}/health`);
      if (response.ok) {
        return { baseUrl, stop: () => proc.kill() };
      }
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
  proc.kill();
  throw new Error("engine service did not come up");
}

export function randomGenome(rng: Rng, length = 98): string {
  let out = "";
  for (let i = 0; i < length; i++) out += rng() < 0.5 ? "0" : "1";
  return out;
}

/** The engine's export of the all-zeros genome at default settings. */
export function degenerateIrDocument() {
  const block = (label: string) => ({
    label,
    op_id: 0,
    op_units: ["conv3x3", "relu"],
    active_nodes: [] as number[],
    edges: [] as [number, number][],
    input_targets: [] as number[],
    output_sources: [] as number[],
  });
  return {
    format: "evoarch-ir",
    version: 1,
    channels: 20,
    stages: 4,
    in_channels: 3,
    out_channels: 1,
    downsample: "maxpool2x2",
    upsample: "tconv2x2",
    fusion: "add",
    skip_stages: [0, 1, 2],
    stem: { adapts: [3, 20] },
    head: { kernel_size: 1, out_channels: 1, activation: "sigmoid" },
    blocks: ["e0", "e1", "e2", "e3", "d0", "d1", "d2"].map(block),
  };
}
