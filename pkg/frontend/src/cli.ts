/** train / serve entry points. */

import { readFileSync, writeFileSync } from "node:fs";
import { parseArgs } from "node:util";
import { loadSamples } from "./data.js";
import { DESK_CONFIG, PAPER_CONFIG } from "./encoder.js";
import { TheoremPredictor } from "./model.js";
import { serve } from "./server.js";
import { PAPER_TRAIN, evalTpa, trainModel } from "./train.js";
import { Vocabulary } from "./vocab.js";

function readTheoremNames(systemPath: string): string[] {
  const doc = JSON.parse(readFileSync(systemPath, "utf-8"));
  return (doc.theorems ?? []).map((t: any) => String(t.name));
}

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2);
  if (command === "train") {
    const { values } = parseArgs({
      args: rest,
      options: {
        data: { type: "string" },
        vocab: { type: "string" },
        system: { type: "string" },
        out: { type: "string" },
        preset: { type: "string", default: "desk" },
        epochs: { type: "string" },
        lr: { type: "string" },
        batch: { type: "string" },
        "pretrain-epochs": { type: "string" },
        seed: { type: "string", default: "7" },
        "no-pretrain": { type: "boolean", default: false },
        "no-se": { type: "boolean", default: false },
        "no-hypergraph": { type: "boolean", default: false },
      },
    });
    if (!values.data || !values.vocab || !values.system || !values.out) {
      console.error("usage: train --data samples.ndjson --vocab vocab.json --system system.json --out model.json");
      return 2;
    }
    const vocab = Vocabulary.fromFile(values.vocab);
    const theorems = readTheoremNames(values.system);
    const config = values.preset === "paper" ? PAPER_CONFIG : DESK_CONFIG;
    const flags = {
      noPretrain: values["no-pretrain"]!,
      noSe: values["no-se"]!,
      noHypergraph: values["no-hypergraph"]!,
    };
    const model = new TheoremPredictor(vocab, theorems, config, flags, Number(values.seed));
    const samples = loadSamples(values.data);
    const train = {
      ...PAPER_TRAIN,
      epochs: values.epochs ? Number(values.epochs) : PAPER_TRAIN.epochs,
      lr: values.lr ? Number(values.lr) : PAPER_TRAIN.lr,
      batchSize: values.batch ? Number(values.batch) : PAPER_TRAIN.batchSize,
      pretrainEpochs: values["pretrain-epochs"]
        ? Number(values["pretrain-epochs"])
        : PAPER_TRAIN.pretrainEpochs,
      seed: Number(values.seed),
    };
    trainModel(model, samples, train, (r) => {
      console.log(`epoch ${r.epoch + 1}/${train.epochs} loss ${r.loss.toFixed(4)} TPA@1 ${r.tpa1.toFixed(1)}%`);
    });
    console.log(`final TPA@1 ${evalTpa(model, samples, 1).toFixed(1)}% on ${samples.length} samples`);
    writeFileSync(values.out, JSON.stringify(model.checkpoint()));
    console.log(`wrote ${values.out}`);
    return 0;
  }
  if (command === "serve") {
    const { values } = parseArgs({
      args: rest,
      options: {
        model: { type: "string" },
        vocab: { type: "string" },
        addr: { type: "string", default: "127.0.0.1:9099" },
      },
    });
    if (!values.model || !values.vocab) {
      console.error("usage: serve --model model.json --vocab vocab.json [--addr host:port]");
      return 2;
    }
    const vocab = Vocabulary.fromFile(values.vocab);
    const blob = JSON.parse(readFileSync(values.model, "utf-8"));
    const model = TheoremPredictor.fromCheckpoint(blob, vocab);
    const [host, port] = values.addr!.split(":");
    const handle = await serve(model, host, Number(port));
    console.log(`listening on ${handle.addr}`);
    await new Promise(() => undefined); // run until killed
    return 0;
  }
  console.error("usage: <train|serve> ...");
  return 2;
}

main().then((code) => {
  if (code !== 0) process.exit(code);
});
