/** Step-sample records as produced by the engine's gen-data command. */

import { readFileSync } from "node:fs";

export interface EdgeRow {
  values: string[];
  pe: number[];
  se: number[];
}

export interface GraphPayload {
  nodes: string[][];
  edges: EdgeRow[];
  goal: string[];
}

export interface StepSample extends GraphPayload {
  problem_id: string;
  step: number;
  truth: string[];
}

export function loadSamples(path: string): StepSample[] {
  const out: StepSample[] = [];
  for (const line of readFileSync(path, "utf-8").split("\n")) {
    if (!line.trim()) continue;
    const row = JSON.parse(line);
    out.push({
      problem_id: String(row.problem_id ?? ""),
      step: Number(row.step ?? 0),
      nodes: row.nodes,
      edges: row.edges,
      goal: row.goal,
      truth: row.truth ?? [],
    });
  }
  return out;
}

export function truthVector(sample: StepSample, theoremIndex: Map<string, number>): number[] {
  const y = new Array(theoremIndex.size).fill(0);
  for (const name of sample.truth) {
    const idx = theoremIndex.get(name);
    if (idx !== undefined) y[idx] = 1;
  }
  return y;
}
