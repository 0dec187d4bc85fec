import { ChildProcess, spawn } from "node:child_process";
import * as path from "node:path";
import * as readline from "node:readline";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { initBackend } from "../src/backend.js";
import { syntheticSamples } from "../src/data.js";
import { parseIr } from "../src/ir.js";
import { trainForFitness } from "../src/train.js";
import { REPO_ROOT, degenerateIrDocument } from "./helpers.js";

const WORKER = path.join(REPO_ROOT, "trainer", "dist", "worker.js");

const SMOKE_EVAL_CONFIG = {
  epochs: 5,
  validate_after: 0,
  seed: 3,
  dataset: { kind: "synthetic", size: 24, train: 2, val: 1, seed: 11 },
};

class WorkerHarness {
  private proc: ChildProcess;
  private lines: string[] = [];
  private waiters: ((line: string) => void)[] = [];

  constructor() {
    this.proc = spawn("node", [WORKER], {
      stdio: ["pipe", "pipe", "ignore"],
    });
    const rl = readline.createInterface({ input: this.proc.stdout! });
    rl.on("line", (line) => {
      const waiter = this.waiters.shift();
      if (waiter) waiter(line);
      else this.lines.push(line);
    });
  }

  send(message: unknown): void {
    this.proc.stdin!.write(JSON.stringify(message) + "\n");
  }

  nextLine(): Promise<string> {
    const queued = this.lines.shift();
    if (queued !== undefined) return Promise.resolve(queued);
    return new Promise((resolve) => this.waiters.push(resolve));
  }

  exitCode(): Promise<number | null> {
    return new Promise((resolve) => this.proc.on("exit", resolve));
  }

  kill(): void {
    this.proc.kill();
  }
}

describe("training loop", () => {
  beforeAll(async () => {
    await initBackend();
  });

  it("drives the loss down over a 5-epoch smoke run", () => {
    const ir = parseIr(degenerateIrDocument());
    const samples = syntheticSamples(3, 24, 3, 11);
    const outcome = trainForFitness(ir, samples.slice(0, 2), samples.slice(2), {
      epochs: 5,
      validateAfter: 0,
      learningRate: 0.001,
      alpha: 0.5,
      omega: 2,
      lookaheadAlpha: 0.5,
      lookaheadK: 6,
      seed: 3,
      crop: null,
    });
    expect(outcome.epochLosses).toHaveLength(5);
    expect(outcome.epochLosses[4]).toBeLessThan(outcome.epochLosses[0]);
    expect(outcome.fitness).toBeGreaterThanOrEqual(0);
    expect(outcome.fitness).toBeLessThanOrEqual(1);
    expect(outcome.validation?.withinFov).toBe(false);
  });

  it("rejects impossible validation schedules", () => {
    const ir = parseIr(degenerateIrDocument());
    const samples = syntheticSamples(2, 16, 3, 1);
    expect(() =>
      trainForFitness(ir, [samples[0]], [samples[1]], {
        epochs: 3,
        validateAfter: 3,
        learningRate: 0.001,
        alpha: 0.5,
        omega: 2,
        lookaheadAlpha: 0.5,
        lookaheadK: 6,
        seed: 0,
        crop: null,
      }),
    ).toThrow(/validate_after/);
  });
});

describe("fitness worker protocol", () => {
  let worker: WorkerHarness;

  beforeAll(async () => {
    worker = new WorkerHarness();
  });

  afterAll(() => {
    worker?.kill();
  });

  it("answers a smoke request with a valid response", async () => {
    worker.send({
      version: 1,
      request_id: 41,
      genome: "0".repeat(98),
      arch_ir: degenerateIrDocument(),
      eval_config: SMOKE_EVAL_CONFIG,
    });
    const response = JSON.parse(await worker.nextLine());
    expect(response.request_id).toBe(41);
    expect(response.status).toBe("ok");
    expect(response.fitness).toBeGreaterThanOrEqual(0);
    expect(response.fitness).toBeLessThanOrEqual(1);
    expect(response.metrics.F1).toBe(response.fitness);
    expect(response.metrics.epoch_of_best).toBeGreaterThanOrEqual(1);
    expect(response.metrics.loss_last_epoch).toBeLessThan(
      response.metrics.loss_first_epoch,
    );
  });

  it("repeats identically for the same seed", async () => {
    const request = {
      version: 1,
      request_id: 42,
      genome: "0".repeat(98),
      arch_ir: degenerateIrDocument(),
      eval_config: SMOKE_EVAL_CONFIG,
    };
    worker.send(request);
    const first = JSON.parse(await worker.nextLine());
    worker.send({ ...request, request_id: 43 });
    const second = JSON.parse(await worker.nextLine());
    expect(first.fitness).toBe(second.fitness);
  });

  it("reports malformed architectures as errors and stays alive", async () => {
    worker.send({
      version: 1,
      request_id: 44,
      genome: "0".repeat(98),
      arch_ir: { format: "something-else" },
      eval_config: SMOKE_EVAL_CONFIG,
    });
    const errorResponse = JSON.parse(await worker.nextLine());
    expect(errorResponse.request_id).toBe(44);
    expect(errorResponse.status).toBe("error");
    expect(errorResponse.error).toMatch(/bad IR/);

    worker.send({
      version: 1,
      request_id: 45,
      genome: "0".repeat(98),
      arch_ir: degenerateIrDocument(),
      eval_config: { ...SMOKE_EVAL_CONFIG, epochs: 1 },
    });
    const recovered = JSON.parse(await worker.nextLine());
    expect(recovered.status).toBe("ok");
  });

  it("exits cleanly on the shutdown message", async () => {
    const finalWorker = new WorkerHarness();
    finalWorker.send({ version: 1, shutdown: true });
    expect(await finalWorker.exitCode()).toBe(0);
  });
});
