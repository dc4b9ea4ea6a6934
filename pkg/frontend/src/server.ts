/** NDJSON prediction server speaking the engine's wire protocol. */

import * as net from "node:net";
import { TheoremPredictor } from "./model.js";

export interface ServerHandle {
  server: net.Server;
  addr: string;
  close: () => Promise<void>;
}

function sameVocabulary(a: string[], b: string[]): boolean {
  return a.length === b.length && a.every((t, i) => t === b[i]);
}

export function serve(model: TheoremPredictor, host: string, port: number): Promise<ServerHandle> {
  const server = net.createServer((socket) => {
    let buffer = "";
    let ready = false;
    const send = (obj: object) => socket.write(JSON.stringify(obj) + "\n");
    socket.on("data", (chunk) => {
      buffer += chunk.toString("utf-8");
      let nl: number;
      while ((nl = buffer.indexOf("\n")) >= 0) {
        const line = buffer.slice(0, nl);
        buffer = buffer.slice(nl + 1);
        if (!line.trim()) continue;
        let message: any;
        try {
          message = JSON.parse(line);
        } catch {
          send({ type: "error", message: "malformed JSON line" });
          socket.end();
          return;
        }
        if (message.type === "hello") {
          const theorems = (message.theorems ?? []).map(String);
          if (!sameVocabulary(theorems, model.theorems)) {
            send({ type: "error", message: "theorem vocabulary mismatch" });
            socket.end();
            return;
          }
          ready = true;
          send({ type: "ready", m: model.m });
        } else if (message.type === "predict") {
          if (!ready) {
            send({ type: "error", message: "hello required first" });
            socket.end();
            return;
          }
          const scores = model.scores({
            nodes: message.nodes ?? [],
            edges: message.edges ?? [],
            goal: message.goal ?? [],
          });
          send({ type: "scores", id: message.id, scores });
        } else {
          send({ type: "error", message: `unknown type ${message.type}` });
          socket.end();
          return;
        }
      }
    });
    socket.on("error", () => socket.destroy());
  });
  return new Promise((resolve, reject) => {
    server.once("error", reject);
    server.listen(port, host, () => {
      const bound = server.address() as net.AddressInfo;
      resolve({
        server,
        addr: `${host}:${bound.port}`,
        close: () =>
          new Promise<void>((done) => {
            server.close(() => done());
          }),
      });
    });
  });
}
