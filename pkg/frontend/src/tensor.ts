/**
 * Minimal tape-based autograd over dense 2-D Float64 tensors.
 *
 * Every op computes its forward result eagerly and pushes a backward
 * closure onto the active tape; `backward(loss)` replays the tape in
 * reverse. Attention, layer norm, and the two losses are fused ops with
 * hand-derived gradients, which keeps the tape short and fast enough for
 * desk-scale training in plain JavaScript.
 */

export class Tensor {
  readonly rows: number;
  readonly cols: number;
  data: Float64Array;
  grad: Float64Array;

  constructor(rows: number, cols: number, data?: Float64Array) {
    this.rows = rows;
    this.cols = cols;
    this.data = data ?? new Float64Array(rows * cols);
    this.grad = new Float64Array(rows * cols);
  }

  static zeros(rows: number, cols: number): Tensor {
    return new Tensor(rows, cols);
  }

  static fromArray(rows: number, cols: number, values: number[]): Tensor {
    if (values.length !== rows * cols) throw new Error("shape mismatch");
    return new Tensor(rows, cols, Float64Array.from(values));
  }

  get(i: number, j: number): number {
    return this.data[i * this.cols + j];
  }

  zeroGrad(): void {
    this.grad.fill(0);
  }
}

let tape: Array<() => void> = [];

export function startTape(): void {
  tape = [];
}

export function backward(loss: Tensor): void {
  if (loss.rows !== 1 || loss.cols !== 1) throw new Error("backward expects a scalar");
  loss.grad[0] = 1;
  for (let i = tape.length - 1; i >= 0; i--) tape[i]();
  tape = [];
}

function push(fn: () => void): void {
  tape.push(fn);
}

// ---------------------------------------------------------------------------
// Core ops
// ---------------------------------------------------------------------------

export function matmul(a: Tensor, b: Tensor): Tensor {
  if (a.cols !== b.rows) throw new Error(`matmul ${a.rows}x${a.cols} @ ${b.rows}x${b.cols}`);
  const out = new Tensor(a.rows, b.cols);
  const n = a.rows, k = a.cols, m = b.cols;
  const ad = a.data, bd = b.data, od = out.data;
  for (let i = 0; i < n; i++) {
    const arow = i * k;
    const orow = i * m;
    for (let p = 0; p < k; p++) {
      const av = ad[arow + p];
      if (av === 0) continue;
      const brow = p * m;
      for (let j = 0; j < m; j++) od[orow + j] += av * bd[brow + j];
    }
  }
  push(() => {
    const og = out.grad, ag = a.grad, bg = b.grad;
    for (let i = 0; i < n; i++) {
      const arow = i * k;
      const orow = i * m;
      for (let p = 0; p < k; p++) {
        const brow = p * m;
        let acc = 0;
        const av = ad[arow + p];
        for (let j = 0; j < m; j++) {
          const g = og[orow + j];
          acc += g * bd[brow + j];
          bg[brow + j] += av * g;
        }
        ag[arow + p] += acc;
      }
    }
  });
  return out;
}

export function add(a: Tensor, b: Tensor): Tensor {
  if (a.rows !== b.rows || a.cols !== b.cols) throw new Error("add shape mismatch");
  const out = new Tensor(a.rows, a.cols);
  for (let i = 0; i < out.data.length; i++) out.data[i] = a.data[i] + b.data[i];
  push(() => {
    for (let i = 0; i < out.data.length; i++) {
      a.grad[i] += out.grad[i];
      b.grad[i] += out.grad[i];
    }
  });
  return out;
}

/** Add a 1xC bias row to every row of a. */
export function addBias(a: Tensor, bias: Tensor): Tensor {
  if (bias.rows !== 1 || bias.cols !== a.cols) throw new Error("bias shape mismatch");
  const out = new Tensor(a.rows, a.cols);
  for (let i = 0; i < a.rows; i++) {
    for (let j = 0; j < a.cols; j++) {
      out.data[i * a.cols + j] = a.data[i * a.cols + j] + bias.data[j];
    }
  }
  push(() => {
    for (let i = 0; i < a.rows; i++) {
      for (let j = 0; j < a.cols; j++) {
        const g = out.grad[i * a.cols + j];
        a.grad[i * a.cols + j] += g;
        bias.grad[j] += g;
      }
    }
  });
  return out;
}

export function scale(a: Tensor, s: number): Tensor {
  const out = new Tensor(a.rows, a.cols);
  for (let i = 0; i < out.data.length; i++) out.data[i] = a.data[i] * s;
  push(() => {
    for (let i = 0; i < out.data.length; i++) a.grad[i] += out.grad[i] * s;
  });
  return out;
}

export function relu(a: Tensor): Tensor {
  const out = new Tensor(a.rows, a.cols);
  for (let i = 0; i < out.data.length; i++) out.data[i] = a.data[i] > 0 ? a.data[i] : 0;
  push(() => {
    for (let i = 0; i < out.data.length; i++) {
      if (a.data[i] > 0) a.grad[i] += out.grad[i];
    }
  });
  return out;
}

export function concatCols(a: Tensor, b: Tensor): Tensor {
  if (a.rows !== b.rows) throw new Error("concatCols row mismatch");
  const out = new Tensor(a.rows, a.cols + b.cols);
  for (let i = 0; i < a.rows; i++) {
    out.data.set(a.data.subarray(i * a.cols, (i + 1) * a.cols), i * out.cols);
    out.data.set(b.data.subarray(i * b.cols, (i + 1) * b.cols), i * out.cols + a.cols);
  }
  push(() => {
    for (let i = 0; i < a.rows; i++) {
      for (let j = 0; j < a.cols; j++) a.grad[i * a.cols + j] += out.grad[i * out.cols + j];
      for (let j = 0; j < b.cols; j++) b.grad[i * b.cols + j] += out.grad[i * out.cols + a.cols + j];
    }
  });
  return out;
}

export function concatRows(parts: Tensor[]): Tensor {
  const cols = parts[0].cols;
  const rows = parts.reduce((acc, p) => acc + p.rows, 0);
  const out = new Tensor(rows, cols);
  let offset = 0;
  for (const p of parts) {
    out.data.set(p.data, offset * cols);
    offset += p.rows;
  }
  push(() => {
    let at = 0;
    for (const p of parts) {
      for (let i = 0; i < p.data.length; i++) p.grad[i] += out.grad[at * cols + i];
      at += p.rows;
    }
  });
  return out;
}

/** Look up embedding rows; gradients scatter-add into the table. */
export function gatherRows(table: Tensor, indices: number[]): Tensor {
  const out = new Tensor(indices.length, table.cols);
  for (let i = 0; i < indices.length; i++) {
    const r = indices[i];
    if (r < 0 || r >= table.rows) throw new Error(`gather index ${r} out of range`);
    out.data.set(table.data.subarray(r * table.cols, (r + 1) * table.cols), i * table.cols);
  }
  push(() => {
    for (let i = 0; i < indices.length; i++) {
      const r = indices[i];
      for (let j = 0; j < table.cols; j++) {
        table.grad[r * table.cols + j] += out.grad[i * table.cols + j];
      }
    }
  });
  return out;
}

/** Mean over row segments [start, end): one pooled row per segment. */
export function meanPoolSegments(x: Tensor, segments: Array<[number, number]>): Tensor {
  const out = new Tensor(segments.length, x.cols);
  segments.forEach(([s, e], i) => {
    const n = e - s;
    if (n <= 0) throw new Error("empty pool segment");
    for (let r = s; r < e; r++) {
      for (let j = 0; j < x.cols; j++) out.data[i * x.cols + j] += x.data[r * x.cols + j];
    }
    for (let j = 0; j < x.cols; j++) out.data[i * x.cols + j] /= n;
  });
  push(() => {
    segments.forEach(([s, e], i) => {
      const n = e - s;
      for (let r = s; r < e; r++) {
        for (let j = 0; j < x.cols; j++) {
          x.grad[r * x.cols + j] += out.grad[i * x.cols + j] / n;
        }
      }
    });
  });
  return out;
}

/** Broadcast a 1xC row to every row of a tall tensor and add. */
export function addRowBroadcast(a: Tensor, row: Tensor): Tensor {
  return addBias(a, row);
}

const LN_EPS = 1e-5;

export function layerNorm(x: Tensor, gain: Tensor, bias: Tensor): Tensor {
  const d = x.cols;
  const out = new Tensor(x.rows, d);
  const means = new Float64Array(x.rows);
  const invstd = new Float64Array(x.rows);
  const xhat = new Float64Array(x.rows * d);
  for (let i = 0; i < x.rows; i++) {
    let mu = 0;
    for (let j = 0; j < d; j++) mu += x.data[i * d + j];
    mu /= d;
    let v = 0;
    for (let j = 0; j < d; j++) {
      const c = x.data[i * d + j] - mu;
      v += c * c;
    }
    const inv = 1 / Math.sqrt(v / d + LN_EPS);
    means[i] = mu;
    invstd[i] = inv;
    for (let j = 0; j < d; j++) {
      const h = (x.data[i * d + j] - mu) * inv;
      xhat[i * d + j] = h;
      out.data[i * d + j] = h * gain.data[j] + bias.data[j];
    }
  }
  push(() => {
    for (let i = 0; i < x.rows; i++) {
      let sumG = 0;
      let sumGX = 0;
      for (let j = 0; j < d; j++) {
        const g = out.grad[i * d + j];
        gain.grad[j] += g * xhat[i * d + j];
        bias.grad[j] += g;
        const gh = g * gain.data[j];
        sumG += gh;
        sumGX += gh * xhat[i * d + j];
      }
      for (let j = 0; j < d; j++) {
        const gh = out.grad[i * d + j] * gain.data[j];
        x.grad[i * d + j] += invstd[i] * (gh - sumG / d - xhat[i * d + j] * sumGX / d);
      }
    }
  });
  return out;
}

/**
 * Multi-head scaled dot-product attention within row segments.
 *
 * q has one row per query position; k and v share rows. `segments` pairs
 * [queryRange, keyRange] that attend to each other; ranges never overlap
 * across pairs. With `causal`, query t within a segment sees keys 0..t.
 */
export function attention(
  q: Tensor,
  k: Tensor,
  v: Tensor,
  pairs: Array<{ q: [number, number]; kv: [number, number] }>,
  heads: number,
  causal = false,
): Tensor {
  const d = q.cols;
  if (d % heads !== 0) throw new Error("cols must divide heads");
  const dk = d / heads;
  const invSqrt = 1 / Math.sqrt(dk);
  const out = new Tensor(q.rows, d);
  // keep softmax weights for the backward pass
  const saved: Array<{ qi: number; ks: number; ke: number; h: number; p: Float64Array }> = [];
  for (const pair of pairs) {
    const [qs, qe] = pair.q;
    const [ks, ke] = pair.kv;
    for (let h = 0; h < heads; h++) {
      const off = h * dk;
      for (let qi = qs; qi < qe; qi++) {
        const kEnd = causal ? ks + (qi - qs) + 1 : ke;
        const n = kEnd - ks;
        const scores = new Float64Array(n);
        let maxS = -Infinity;
        for (let t = 0; t < n; t++) {
          let s = 0;
          for (let j = 0; j < dk; j++) {
            s += q.data[qi * d + off + j] * k.data[(ks + t) * d + off + j];
          }
          s *= invSqrt;
          scores[t] = s;
          if (s > maxS) maxS = s;
        }
        let z = 0;
        for (let t = 0; t < n; t++) {
          scores[t] = Math.exp(scores[t] - maxS);
          z += scores[t];
        }
        for (let t = 0; t < n; t++) scores[t] /= z;
        for (let t = 0; t < n; t++) {
          const p = scores[t];
          for (let j = 0; j < dk; j++) {
            out.data[qi * d + off + j] += p * v.data[(ks + t) * d + off + j];
          }
        }
        saved.push({ qi, ks, ke: kEnd, h, p: scores });
      }
    }
  }
  push(() => {
    for (const { qi, ks, ke, h, p } of saved) {
      const off = h * dk;
      const n = ke - ks;
      // dP and the softmax jacobian contraction
      const dp = new Float64Array(n);
      for (let t = 0; t < n; t++) {
        let acc = 0;
        for (let j = 0; j < dk; j++) {
          acc += out.grad[qi * d + off + j] * v.data[(ks + t) * d + off + j];
        }
        dp[t] = acc;
      }
      let dot = 0;
      for (let t = 0; t < n; t++) dot += dp[t] * p[t];
      for (let t = 0; t < n; t++) {
        const ds = p[t] * (dp[t] - dot) * invSqrt;
        for (let j = 0; j < dk; j++) {
          q.grad[qi * d + off + j] += ds * k.data[(ks + t) * d + off + j];
          k.grad[(ks + t) * d + off + j] += ds * q.data[qi * d + off + j];
          v.grad[(ks + t) * d + off + j] += p[t] * out.grad[qi * d + off + j];
        }
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

export function sigmoid(x: number): number {
  return x >= 0 ? 1 / (1 + Math.exp(-x)) : Math.exp(x) / (1 + Math.exp(x));
}

/**
 * Mean binary cross-entropy over independent logits:
 * L = -(1/M) sum[ y log sigma(x) + (1-y) log(1 - sigma(x)) ].
 */
export function bceWithLogits(logits: Tensor, targets: number[]): Tensor {
  const m = logits.data.length;
  if (targets.length !== m) throw new Error("target length mismatch");
  let total = 0;
  for (let i = 0; i < m; i++) {
    const x = logits.data[i];
    const y = targets[i];
    // numerically stable: max(x,0) - x*y + log(1+exp(-|x|))
    total += Math.max(x, 0) - x * y + Math.log1p(Math.exp(-Math.abs(x)));
  }
  const out = new Tensor(1, 1, Float64Array.of(total / m));
  push(() => {
    const g = out.grad[0] / m;
    for (let i = 0; i < m; i++) {
      logits.grad[i] += g * (sigmoid(logits.data[i]) - targets[i]);
    }
  });
  return out;
}

/** Mean softmax cross-entropy over rows against integer targets. */
export function softmaxCrossEntropy(logits: Tensor, targets: number[]): Tensor {
  const n = logits.rows, c = logits.cols;
  if (targets.length !== n) throw new Error("target length mismatch");
  const probs = new Float64Array(n * c);
  let total = 0;
  for (let i = 0; i < n; i++) {
    let maxV = -Infinity;
    for (let j = 0; j < c; j++) maxV = Math.max(maxV, logits.data[i * c + j]);
    let z = 0;
    for (let j = 0; j < c; j++) {
      const e = Math.exp(logits.data[i * c + j] - maxV);
      probs[i * c + j] = e;
      z += e;
    }
    for (let j = 0; j < c; j++) probs[i * c + j] /= z;
    total += -Math.log(probs[i * c + targets[i]] + 1e-12);
  }
  const out = new Tensor(1, 1, Float64Array.of(total / n));
  push(() => {
    const g = out.grad[0] / n;
    for (let i = 0; i < n; i++) {
      for (let j = 0; j < c; j++) {
        logits.grad[i * c + j] += g * (probs[i * c + j] - (j === targets[i] ? 1 : 0));
      }
    }
  });
  return out;
}

export function addScalars(losses: Tensor[]): Tensor {
  let total = 0;
  for (const l of losses) total += l.data[0];
  const out = new Tensor(1, 1, Float64Array.of(total));
  push(() => {
    for (const l of losses) l.grad[0] += out.grad[0];
  });
  return out;
}

export function scaleScalar(loss: Tensor, s: number): Tensor {
  return scale(loss, s);
}
