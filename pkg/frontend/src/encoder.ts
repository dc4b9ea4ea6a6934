/**
 * Hypernode encoder: turns a condition token list and its compressed
 * incident-edge row into one fixed-length vector.
 *
 * Each half is a transformer encoding that is mean-pooled over positions:
 * condition tokens get token + position embeddings, edge tokens get
 * token + position + structure embeddings (structure indexed by the
 * original 1-based adjacency column, clipped to the table). The two
 * pooled halves are concatenated and projected back down. A learned
 * vector stands in for an empty edge row.
 *
 * Pretraining reconstructs the inputs: a mirrored causal decoder gets the
 * pooled sentence vector added at every position (teacher forcing) and
 * predicts each token.
 */

import {
  Tensor,
  add,
  gatherRows,
  meanPoolSegments,
  softmaxCrossEntropy,
  startTape,
  backward,
} from "./tensor.js";
import { Adam, Linear, ParamRegistry, TransformerStack, mulberry32 } from "./nn.js";
import { SOS, Vocabulary } from "./vocab.js";

export interface EncoderConfig {
  dModel: number;
  layers: number;
  heads: number;
  dff: number;
  maxTokens: number; // position table size
  seTable: number; // structure table size
}

export const DESK_CONFIG: EncoderConfig = {
  dModel: 64,
  layers: 2,
  heads: 2,
  dff: 128,
  maxTokens: 64,
  seTable: 512,
};

export const PAPER_CONFIG: EncoderConfig = {
  dModel: 256,
  layers: 4,
  heads: 4,
  dff: 1024,
  maxTokens: 64,
  seTable: 512,
};

export interface TokenSequence {
  ids: number[];
  positions: number[]; // 1-based
  structure?: number[]; // 1-based; same length as ids when present
}

export class HypernodeEncoder {
  tokEmb: Tensor;
  posEmb: Tensor;
  structEmb: Tensor;
  emptyEdge: Tensor;
  stack: TransformerStack;
  decoderStack: TransformerStack;
  outProj: Linear; // decoder head for reconstruction
  pairProj: Linear; // 2d -> d after concatenating the two halves
  structureClips = 0;

  constructor(
    public reg: ParamRegistry,
    public vocab: Vocabulary,
    public config: EncoderConfig,
  ) {
    const d = config.dModel;
    if (d % config.heads !== 0) throw new Error("dModel must divide heads");
    this.tokEmb = reg.create("he.tok", vocab.size, d, "weight");
    this.posEmb = reg.create("he.pos", config.maxTokens, d, "weight");
    this.structEmb = reg.create("he.struct", config.seTable, d, "weight");
    this.emptyEdge = reg.create("he.empty", 1, d, "weight");
    this.stack = new TransformerStack(reg, "he.enc", config.layers, d, config.heads, config.dff);
    this.decoderStack = new TransformerStack(reg, "he.dec", config.layers, d, config.heads, config.dff);
    this.outProj = new Linear(reg, "he.out", d, vocab.size);
    this.pairProj = new Linear(reg, "he.proj", 2 * d, d);
  }

  private clipPos(p: number): number {
    return Math.min(Math.max(p, 1), this.config.maxTokens) - 1;
  }

  private clipStruct(s: number): number {
    const idx = Math.min(Math.max(s, 1), this.config.seTable) - 1;
    if (s > this.config.seTable) this.structureClips += 1;
    return idx;
  }

  /** Encode sequences in one batch; returns one mean-pooled row each. */
  encodePooled(seqs: TokenSequence[], useStructure: boolean): Tensor {
    const tokenIds: number[] = [];
    const posIds: number[] = [];
    const structIds: number[] = [];
    const segments: Array<[number, number]> = [];
    let at = 0;
    for (const seq of seqs) {
      if (seq.ids.length === 0) throw new Error("cannot encode an empty sequence");
      segments.push([at, at + seq.ids.length]);
      at += seq.ids.length;
      tokenIds.push(...seq.ids);
      posIds.push(...seq.positions.map((p) => this.clipPos(p)));
      if (seq.structure) structIds.push(...seq.structure.map((s) => this.clipStruct(s)));
      else structIds.push(...seq.ids.map(() => 0));
    }
    let x = add(gatherRows(this.tokEmb, tokenIds), gatherRows(this.posEmb, posIds));
    if (useStructure) {
      x = add(x, gatherRows(this.structEmb, structIds));
    }
    const encoded = this.stack.apply(x, segments);
    return meanPoolSegments(encoded, segments);
  }

  /**
   * Reconstruction loss for pretraining: the decoder sees the previous
   * true tokens plus the pooled sentence vector and predicts each token.
   * Returns the loss tensor and the count of correctly argmaxed tokens.
   */
  reconstructionLoss(seqs: TokenSequence[], useStructure: boolean): { loss: Tensor; correct: number; total: number } {
    const pooled = this.encodePooled(seqs, useStructure);
    const sosId = this.vocab.encodeToken(SOS)[0];
    const inputIds: number[] = [];
    const posIds: number[] = [];
    const targets: number[] = [];
    const segments: Array<[number, number]> = [];
    const sentenceOf: number[] = [];
    let at = 0;
    seqs.forEach((seq, si) => {
      const shifted = [sosId, ...seq.ids.slice(0, -1)];
      segments.push([at, at + shifted.length]);
      at += shifted.length;
      inputIds.push(...shifted);
      posIds.push(...seq.ids.map((_, i) => this.clipPos(i + 1)));
      targets.push(...seq.ids);
      sentenceOf.push(...seq.ids.map(() => si));
    });
    let x = add(gatherRows(this.tokEmb, inputIds), gatherRows(this.posEmb, posIds));
    x = add(x, gatherRows(pooled, sentenceOf));
    const decoded = this.decoderStack.apply(x, segments, true);
    const logits = this.outProj.apply(decoded);
    const loss = softmaxCrossEntropy(logits, targets);
    let correct = 0;
    for (let i = 0; i < targets.length; i++) {
      let best = 0;
      for (let j = 1; j < logits.cols; j++) {
        if (logits.data[i * logits.cols + j] > logits.data[i * logits.cols + best]) best = j;
      }
      if (best === targets[i]) correct += 1;
    }
    return { loss, correct, total: targets.length };
  }
}

export interface PretrainReport {
  epoch: number;
  loss: number;
  accuracy: number;
}

/** Reconstruction token accuracy over a corpus with frozen weights. */
export function reconstructionAccuracy(
  encoder: HypernodeEncoder,
  sentences: TokenSequence[],
  batchSize = 16,
): number {
  let correct = 0;
  let total = 0;
  for (let start = 0; start < sentences.length; start += batchSize) {
    startTape();
    const r = encoder.reconstructionLoss(sentences.slice(start, start + batchSize), false);
    correct += r.correct;
    total += r.total;
  }
  startTape(); // drop the evaluation tape
  return total ? correct / total : 0;
}

/** Self-supervised pretraining over node token lists. */
export function pretrainEncoder(
  encoder: HypernodeEncoder,
  sentences: TokenSequence[],
  epochs: number,
  lr = 1e-3,
  batchSize = 16,
  seed = 7,
  log?: (r: PretrainReport) => void,
): PretrainReport[] {
  const reports: PretrainReport[] = [];
  if (epochs <= 0 || sentences.length === 0) return reports;
  const adam = new Adam(encoder.reg, lr);
  const rng = mulberry32(seed);
  const order = sentences.map((_, i) => i);
  for (let epoch = 0; epoch < epochs; epoch++) {
    // Fisher-Yates with the seeded generator
    for (let i = order.length - 1; i > 0; i--) {
      const j = Math.floor(rng() * (i + 1));
      [order[i], order[j]] = [order[j], order[i]];
    }
    let totalLoss = 0;
    let correct = 0;
    let total = 0;
    for (let start = 0; start < order.length; start += batchSize) {
      const batch = order.slice(start, start + batchSize).map((i) => sentences[i]);
      startTape();
      const { loss, correct: c, total: t } = encoder.reconstructionLoss(batch, false);
      backward(loss);
      adam.step();
      encoder.reg.zeroGrads();
      totalLoss += loss.data[0] * batch.length;
      correct += c;
      total += t;
    }
    const report = {
      epoch,
      loss: totalLoss / sentences.length,
      accuracy: correct / Math.max(total, 1),
    };
    reports.push(report);
    log?.(report);
  }
  return reports;
}
