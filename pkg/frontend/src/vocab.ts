/** Token vocabulary shared with the engine's gen-vocab output. */

import { createHash } from "node:crypto";
import { readFileSync } from "node:fs";

export const PAD = "[PAD]";
export const UNK = "[UNK]";
export const SOS = "[SOS]";
export const EOS = "[EOS]";
export const EMPTY = "[EMPTY]";

const NUMERAL_RE = /^-?[0-9]+(\.[0-9]+)?$/;

export class Vocabulary {
  readonly tokens: string[];
  private index = new Map<string, number>();

  constructor(tokens: string[]) {
    this.tokens = tokens;
    tokens.forEach((t, i) => this.index.set(t, i));
    for (const required of [PAD, UNK, SOS, EOS, EMPTY]) {
      if (!this.index.has(required)) {
        throw new Error(`vocabulary is missing the ${required} token`);
      }
    }
  }

  static fromFile(path: string): Vocabulary {
    const doc = JSON.parse(readFileSync(path, "utf-8"));
    return new Vocabulary(doc.tokens);
  }

  get size(): number {
    return this.tokens.length;
  }

  get unkId(): number {
    return this.index.get(UNK)!;
  }

  /**
   * Map one surface token to ids. A numeral outside the closed vocabulary
   * splits into a sign token followed by digit/dot tokens so unseen
   * numbers never widen the embedding table.
   */
  encodeToken(token: string): number[] {
    const direct = this.index.get(token);
    if (direct !== undefined) return [direct];
    if (NUMERAL_RE.test(token)) {
      const sign = token.startsWith("-") ? "-" : "+";
      const digits = token.replace(/^-/, "");
      const ids = [this.lookup(sign)];
      for (const ch of digits) ids.push(this.lookup(ch));
      return ids;
    }
    return [this.unkId];
  }

  encode(tokens: string[]): number[] {
    const out: number[] = [];
    for (const t of tokens) out.push(...this.encodeToken(t));
    return out;
  }

  private lookup(token: string): number {
    return this.index.get(token) ?? this.unkId;
  }

  hash(): string {
    return createHash("sha256").update(JSON.stringify(this.tokens)).digest("hex").slice(0, 16);
  }
}
