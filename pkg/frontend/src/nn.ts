/** Parameter registry, layers, and the Adam optimizer. */

import {
  Tensor,
  add,
  addBias,
  attention,
  layerNorm,
  matmul,
  relu,
} from "./tensor.js";

export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export class ParamRegistry {
  params = new Map<string, Tensor>();
  private rng: () => number;

  constructor(seed = 42) {
    this.rng = mulberry32(seed);
  }

  /** Gaussian-ish init scaled by fan-in; zeros for biases and norms. */
  create(name: string, rows: number, cols: number, kind: "weight" | "zero" | "one"): Tensor {
    if (this.params.has(name)) throw new Error(`duplicate parameter ${name}`);
    const t = new Tensor(rows, cols);
    if (kind === "weight") {
      const std = 1 / Math.sqrt(cols);
      for (let i = 0; i < t.data.length; i++) {
        // sum of uniforms approximates a normal well enough for init
        t.data[i] = (this.rng() + this.rng() + this.rng() - 1.5) * 2 * std;
      }
    } else if (kind === "one") {
      t.data.fill(1);
    }
    this.params.set(name, t);
    return t;
  }

  zeroGrads(): void {
    for (const p of this.params.values()) p.zeroGrad();
  }

  toJSON(): Record<string, { rows: number; cols: number; data: number[] }> {
    const out: Record<string, { rows: number; cols: number; data: number[] }> = {};
    for (const [name, p] of this.params) {
      out[name] = { rows: p.rows, cols: p.cols, data: Array.from(p.data) };
    }
    return out;
  }

  loadJSON(blob: Record<string, { rows: number; cols: number; data: number[] }>): void {
    for (const [name, p] of this.params) {
      const saved = blob[name];
      if (!saved) throw new Error(`checkpoint missing parameter ${name}`);
      if (saved.rows !== p.rows || saved.cols !== p.cols) {
        throw new Error(`checkpoint shape mismatch for ${name}`);
      }
      p.data.set(saved.data);
    }
  }
}

export class Linear {
  w: Tensor;
  b: Tensor;

  constructor(reg: ParamRegistry, name: string, dIn: number, dOut: number) {
    this.w = reg.create(`${name}.w`, dIn, dOut, "weight");
    this.b = reg.create(`${name}.b`, 1, dOut, "zero");
  }

  apply(x: Tensor): Tensor {
    return addBias(matmul(x, this.w), this.b);
  }
}

export class Norm {
  gain: Tensor;
  bias: Tensor;

  constructor(reg: ParamRegistry, name: string, d: number) {
    this.gain = reg.create(`${name}.gain`, 1, d, "one");
    this.bias = reg.create(`${name}.bias`, 1, d, "zero");
  }

  apply(x: Tensor): Tensor {
    return layerNorm(x, this.gain, this.bias);
  }
}

export type SegmentPair = { q: [number, number]; kv: [number, number] };

/** Post-norm transformer encoder layer: self-attention + FFN. */
export class TransformerLayer {
  wq: Linear;
  wk: Linear;
  wv: Linear;
  wo: Linear;
  ln1: Norm;
  ff1: Linear;
  ff2: Linear;
  ln2: Norm;
  heads: number;

  constructor(reg: ParamRegistry, name: string, d: number, heads: number, dff: number) {
    this.heads = heads;
    this.wq = new Linear(reg, `${name}.wq`, d, d);
    this.wk = new Linear(reg, `${name}.wk`, d, d);
    this.wv = new Linear(reg, `${name}.wv`, d, d);
    this.wo = new Linear(reg, `${name}.wo`, d, d);
    this.ln1 = new Norm(reg, `${name}.ln1`, d);
    this.ff1 = new Linear(reg, `${name}.ff1`, d, dff);
    this.ff2 = new Linear(reg, `${name}.ff2`, dff, d);
    this.ln2 = new Norm(reg, `${name}.ln2`, d);
  }

  apply(x: Tensor, segments: Array<[number, number]>, causal = false): Tensor {
    const pairs: SegmentPair[] = segments.map(([s, e]) => ({ q: [s, e], kv: [s, e] }));
    const attnOut = this.wo.apply(
      attention(this.wq.apply(x), this.wk.apply(x), this.wv.apply(x), pairs, this.heads, causal),
    );
    const mid = this.ln1.apply(add(x, attnOut));
    const ff = this.ff2.apply(relu(this.ff1.apply(mid)));
    return this.ln2.apply(add(mid, ff));
  }
}

export class TransformerStack {
  layers: TransformerLayer[];

  constructor(reg: ParamRegistry, name: string, n: number, d: number, heads: number, dff: number) {
    this.layers = [];
    for (let i = 0; i < n; i++) {
      this.layers.push(new TransformerLayer(reg, `${name}.${i}`, d, heads, dff));
    }
  }

  apply(x: Tensor, segments: Array<[number, number]>, causal = false): Tensor {
    let h = x;
    for (const layer of this.layers) h = layer.apply(h, segments, causal);
    return h;
  }
}

export class Adam {
  private m = new Map<string, Float64Array>();
  private v = new Map<string, Float64Array>();
  private t = 0;

  constructor(
    private reg: ParamRegistry,
    public lr = 1e-5,
    private beta1 = 0.9,
    private beta2 = 0.999,
    private eps = 1e-8,
  ) {
    for (const [name, p] of reg.params) {
      this.m.set(name, new Float64Array(p.data.length));
      this.v.set(name, new Float64Array(p.data.length));
    }
  }

  step(): void {
    this.t += 1;
    const c1 = 1 - Math.pow(this.beta1, this.t);
    const c2 = 1 - Math.pow(this.beta2, this.t);
    for (const [name, p] of this.reg.params) {
      const m = this.m.get(name)!;
      const v = this.v.get(name)!;
      for (let i = 0; i < p.data.length; i++) {
        const g = p.grad[i];
        m[i] = this.beta1 * m[i] + (1 - this.beta1) * g;
        v[i] = this.beta2 * v[i] + (1 - this.beta2) * g * g;
        p.data[i] -= (this.lr * (m[i] / c1)) / (Math.sqrt(v[i] / c2) + this.eps);
      }
    }
  }
}
