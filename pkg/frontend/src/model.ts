/**
 * The theorem predictor: hypernode encoder -> set-transformer encoder ->
 * task-specific attention decoder -> M independent logits.
 *
 * Node embeddings carry the hypergraph structure through their edge-row
 * halves, so the encoder layers use no inter-node positional encoding
 * (the node set is order-free). The goal is embedded like a hypernode
 * with an empty edge row and drives the decoder as the attention query.
 */

import {
  Tensor,
  add,
  attention,
  bceWithLogits,
  concatCols,
  concatRows,
  gatherRows,
  relu,
  sigmoid,
} from "./tensor.js";
import { Linear, Norm, ParamRegistry, TransformerStack } from "./nn.js";
import { DESK_CONFIG, EncoderConfig, HypernodeEncoder, TokenSequence } from "./encoder.js";
import { GraphPayload } from "./data.js";
import { Vocabulary } from "./vocab.js";

export interface AblationFlags {
  noPretrain: boolean;
  noSe: boolean;
  noHypergraph: boolean;
}

export const NO_ABLATIONS: AblationFlags = {
  noPretrain: false,
  noSe: false,
  noHypergraph: false,
};

export class TheoremPredictor {
  reg: ParamRegistry;
  encoder: HypernodeEncoder;
  graphStack: TransformerStack;
  wq: Linear;
  wk: Linear;
  wv: Linear;
  wo: Linear;
  ln1: Norm;
  ff1: Linear;
  ff2: Linear;
  ln2: Norm;
  out: Linear;

  constructor(
    public vocab: Vocabulary,
    public theorems: string[],
    public config: EncoderConfig = DESK_CONFIG,
    public flags: AblationFlags = NO_ABLATIONS,
    seed = 42,
  ) {
    const d = config.dModel;
    this.reg = new ParamRegistry(seed);
    this.encoder = new HypernodeEncoder(this.reg, vocab, config);
    this.graphStack = new TransformerStack(this.reg, "net.enc", config.layers, d, config.heads, config.dff);
    this.wq = new Linear(this.reg, "net.tsa.wq", d, d);
    this.wk = new Linear(this.reg, "net.tsa.wk", d, d);
    this.wv = new Linear(this.reg, "net.tsa.wv", d, d);
    this.wo = new Linear(this.reg, "net.tsa.wo", d, d);
    this.ln1 = new Norm(this.reg, "net.tsa.ln1", d);
    this.ff1 = new Linear(this.reg, "net.tsa.ff1", d, config.dff);
    this.ff2 = new Linear(this.reg, "net.tsa.ff2", config.dff, d);
    this.ln2 = new Norm(this.reg, "net.tsa.ln2", d);
    this.out = new Linear(this.reg, "net.out", d, theorems.length);
  }

  get m(): number {
    return this.theorems.length;
  }

  /**
   * Eq.-style node embedding: encoder over condition tokens, encoder over
   * the edge row (token+pe+se), halves concatenated then projected. The
   * goal rides along as the final "node" with an empty edge row.
   */
  private embedNodes(graph: GraphPayload): Tensor {
    const n = graph.nodes.length;
    const condSeqs: TokenSequence[] = [];
    const edgeSeqs: TokenSequence[] = [];
    const edgeSlot: number[] = []; // -1 = learned empty-edge vector
    for (let i = 0; i < n; i++) {
      const ids = this.vocab.encode(graph.nodes[i]);
      condSeqs.push({ ids, positions: ids.map((_, p) => p + 1) });
      const row = this.flags.noHypergraph ? { values: [], pe: [], se: [] } : graph.edges[i];
      if (!row || row.values.length === 0) {
        edgeSlot.push(-1);
      } else {
        edgeSlot.push(edgeSeqs.length);
        const ids2: number[] = [];
        const pe: number[] = [];
        const se: number[] = [];
        row.values.forEach((token, j) => {
          for (const id of this.vocab.encodeToken(token)) {
            ids2.push(id);
            pe.push(row.pe[j]);
            se.push(row.se[j]);
          }
        });
        edgeSeqs.push({ ids: ids2, positions: pe, structure: se });
      }
    }
    // goal as an extra node with the empty edge row
    const goalIds = this.vocab.encode(graph.goal);
    condSeqs.push({ ids: goalIds, positions: goalIds.map((_, p) => p + 1) });
    edgeSlot.push(-1);

    const condPooled = this.encoder.encodePooled(condSeqs, false);
    const edgePooled = edgeSeqs.length > 0
      ? this.encoder.encodePooled(edgeSeqs, !this.flags.noSe)
      : null;
    const parts: Tensor[] = [];
    for (let i = 0; i < n + 1; i++) {
      const cond = gatherRows(condPooled, [i]);
      const edge = edgeSlot[i] >= 0
        ? gatherRows(edgePooled!, [edgeSlot[i]])
        : this.encoder.emptyEdge;
      parts.push(this.encoder.pairProj.apply(concatCols(cond, edge)));
    }
    return concatRows(parts);
  }

  /** Forward pass to M logits for one serialized graph. */
  forward(graph: GraphPayload): Tensor {
    if (graph.nodes.length < 1) throw new Error("graph must have at least one node");
    const embedded = this.embedNodes(graph);
    const n = graph.nodes.length;
    const encoded = this.graphStack.apply(embedded, [[0, n + 1]]);
    const goal = gatherRows(encoded, [n]);
    const tsa = this.wo.apply(
      attention(
        this.wq.apply(goal),
        this.wk.apply(encoded),
        this.wv.apply(encoded),
        [{ q: [0, 1], kv: [0, n] }],
        this.config.heads,
      ),
    );
    const mid = this.ln1.apply(add(goal, tsa));
    const ff = this.ff2.apply(relu(this.ff1.apply(mid)));
    const fused = this.ln2.apply(add(mid, ff));
    return this.out.apply(fused);
  }

  loss(graph: GraphPayload, targets: number[]): Tensor {
    return bceWithLogits(this.forward(graph), targets);
  }

  /** Sigmoid scores in (0,1), sanitized for the wire. */
  scores(graph: GraphPayload): number[] {
    const logits = this.forward(graph);
    const out: number[] = [];
    for (let i = 0; i < logits.data.length; i++) {
      const s = sigmoid(logits.data[i]);
      out.push(Number.isFinite(s) ? Math.min(Math.max(s, 0), 1) : 0);
    }
    return out;
  }

  checkpoint(): object {
    return {
      manifest: {
        vocab_hash: this.vocab.hash(),
        m: this.config.dModel,
        M: this.m,
        flags: this.flags,
        config: this.config,
        theorems: this.theorems,
      },
      weights: this.reg.toJSON(),
    };
  }

  static fromCheckpoint(blob: any, vocab: Vocabulary): TheoremPredictor {
    const manifest = blob.manifest;
    if (manifest.vocab_hash !== vocab.hash()) {
      throw new Error("checkpoint was trained with a different vocabulary");
    }
    const model = new TheoremPredictor(vocab, manifest.theorems, manifest.config, manifest.flags);
    model.reg.loadJSON(blob.weights);
    return model;
  }
}

export function topK(scores: number[], k: number): number[] {
  return scores
    .map((s, i) => [s, i] as [number, number])
    .sort((a, b) => (b[0] - a[0]) || (a[1] - b[1]))
    .slice(0, k)
    .map(([, i]) => i);
}
