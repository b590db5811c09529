/**
 * Predictor-protocol server: wraps a trained map-completion model behind
 * newline-delimited JSON over TCP so the exploration engine's remote
 * predictor can call it.
 */
import * as net from "node:net";
import * as tf from "@tensorflow/tfjs";
import { predictProbabilities } from "./predictorModel.js";

export interface PredictRequest {
  type: "predict";
  width: number;
  height: number;
  cells: string;
}

export type PredictFn = (cells: Uint8Array, width: number, height: number) => Float32Array;

export function modelPredictFn(model: tf.LayersModel): PredictFn {
  return (cells, width, height) => predictProbabilities(model, cells, height, width);
}

function handleLine(line: string, predict: PredictFn): string {
  let request: PredictRequest;
  try {
    request = JSON.parse(line);
  } catch (err) {
    return JSON.stringify({ type: "error", message: `bad JSON: ${err}` });
  }
  if (!request || request.type !== "predict") {
    return JSON.stringify({ type: "error", message: "expected a predict request" });
  }
  const { width, height } = request;
  if (!Number.isInteger(width) || !Number.isInteger(height) || width < 1 || height < 1) {
    return JSON.stringify({ type: "error", message: "bad dimensions" });
  }
  const cells = Uint8Array.from(Buffer.from(request.cells ?? "", "base64"));
  if (cells.length !== width * height) {
    return JSON.stringify({
      type: "error",
      message: `expected ${width * height} cells, got ${cells.length}`,
    });
  }
  for (const value of cells) {
    if (value > 2) {
      return JSON.stringify({ type: "error", message: `bad cell value ${value}` });
    }
  }
  const started = Date.now();
  const probabilities = predict(cells, width, height);
  const values = Buffer.from(
    probabilities.buffer.slice(
      probabilities.byteOffset,
      probabilities.byteOffset + probabilities.byteLength,
    ),
  ).toString("base64");
  const reply = JSON.stringify({ type: "probabilities", values });
  const elapsed = Date.now() - started;
  if (process.env.PREDICTOR_LOG_LATENCY) {
    console.error(`predict ${width}x${height} in ${elapsed} ms`);
  }
  return reply;
}

export class PredictorServer {
  private server: net.Server | null = null;

  constructor(private readonly predict: PredictFn) {}

  async listen(host: string, port: number): Promise<number> {
    return new Promise((resolve, reject) => {
      const server = net.createServer((socket) => {
        let buffer = "";
        socket.on("data", (chunk) => {
          buffer += chunk.toString("utf-8");
          let index;
          while ((index = buffer.indexOf("\n")) >= 0) {
            const line = buffer.slice(0, index);
            buffer = buffer.slice(index + 1);
            if (line.trim().length === 0) continue;
            socket.write(handleLine(line, this.predict) + "\n");
          }
        });
        socket.on("error", () => socket.destroy());
      });
      server.once("error", reject);
      server.listen(port, host, () => {
        this.server = server;
        const address = server.address() as net.AddressInfo;
        resolve(address.port);
      });
    });
  }

  close(): void {
    this.server?.close();
    this.server = null;
  }
}
