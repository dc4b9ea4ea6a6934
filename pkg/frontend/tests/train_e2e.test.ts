import { spawn } from "node:child_process";
import { readFileSync } from "node:fs";
import * as path from "node:path";
import { describe, expect, it } from "vitest";
import { loadSamples } from "../src/data.js";
import { TheoremPredictor } from "../src/model.js";
import { serve } from "../src/server.js";
import { evalTpa, trainModel } from "../src/train.js";
import { Vocabulary } from "../src/vocab.js";

const SYSTEM_PATH = path.resolve(__dirname, "../../corpus/mini/system.json");
const CORPUS_DIR = path.resolve(__dirname, "../../corpus/mini");

function theoremNames(): string[] {
  return JSON.parse(readFileSync(SYSTEM_PATH, "utf-8")).theorems.map((t: any) => String(t.name));
}

const TRAIN = { epochs: 20, lr: 1e-3, batchSize: 16, pretrainEpochs: 3, pretrainLr: 1e-3, seed: 7 };

describe("toy overfit and end-to-end predict-apply", () => {
  const vocab = Vocabulary.fromFile(path.resolve(__dirname, "../testdata/vocab.json"));
  const samples = loadSamples(path.resolve(__dirname, "../testdata/samples.ndjson"));
  let model: TheoremPredictor;

  it("stays within the toy training budget", () => {
    expect(samples.length).toBeLessThanOrEqual(100);
    expect(TRAIN.epochs).toBeLessThanOrEqual(200);
  });

  it("overfits the training set: TPA@1 >= 90%, non-decreasing in k", () => {
    model = new TheoremPredictor(vocab, theoremNames());
    const reports = trainModel(model, samples, TRAIN);
    expect(reports[reports.length - 1].loss).toBeLessThan(reports[0].loss * 0.5);
    const tpa1 = evalTpa(model, samples, 1);
    const tpa3 = evalTpa(model, samples, 3);
    const tpa5 = evalTpa(model, samples, 5);
    expect(tpa1).toBeGreaterThanOrEqual(90);
    expect(tpa3).toBeGreaterThanOrEqual(tpa1);
    expect(tpa5).toBeGreaterThanOrEqual(tpa3);
  });

  it("keeps hypergraph structure useful: full TPA >= no-hypergraph TPA", () => {
    const ablated = new TheoremPredictor(vocab, theoremNames(), undefined, {
      noPretrain: false,
      noSe: false,
      noHypergraph: true,
    });
    trainModel(ablated, samples, TRAIN);
    for (const k of [1, 3, 5]) {
      expect(evalTpa(model, samples, k)).toBeGreaterThanOrEqual(evalTpa(ablated, samples, k));
    }
  });

  it("round-trips through a checkpoint", () => {
    const blob = JSON.parse(JSON.stringify(model.checkpoint()));
    const reloaded = TheoremPredictor.fromCheckpoint(blob, vocab);
    const sample = samples[0];
    const a = model.scores(sample);
    const b = reloaded.scores(sample);
    for (let i = 0; i < a.length; i++) expect(b[i]).toBeCloseTo(a[i], 12);
    expect(() =>
      TheoremPredictor.fromCheckpoint(blob, new Vocabulary([
        "[PAD]", "[UNK]", "[SOS]", "[EOS]", "[EMPTY]",
      ])),
    ).toThrow(/vocabulary/);
  });

  it("served model lets the engine solve >= 80% with greedy beam k=3", async () => {
    const handle = await serve(model, "127.0.0.1", 0);
    try {
      // async spawn: the in-process server must stay responsive
      const run = await new Promise<{ status: number | null; stdout: string; stderr: string }>(
        (resolve, reject) => {
          const child = spawn("python3", [
            "-m", "geosolver.cli", "eval", "pssr", CORPUS_DIR,
            "--predictor", `remote:${handle.addr}`,
            "--strategy", "gb", "--beam-size", "3", "--timeout", "60",
          ]);
          let stdout = "";
          let stderr = "";
          child.stdout.on("data", (d) => (stdout += d));
          child.stderr.on("data", (d) => (stderr += d));
          child.on("error", reject);
          child.on("close", (status) => resolve({ status, stdout, stderr }));
        },
      );
      expect(run.status, run.stderr).toBe(0);
      const match = run.stdout.match(/PSSR ([0-9.]+)%/);
      expect(match, run.stdout).not.toBeNull();
      expect(parseFloat(match![1])).toBeGreaterThanOrEqual(80);
    } finally {
      await handle.close();
    }
  }, 600_000);
});
