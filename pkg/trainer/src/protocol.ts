/**
 * Newline-delimited JSON wire protocol shared with the exploration engine:
 * the environment protocol (reset/step/render/close) and the predictor
 * protocol (predict -> probabilities). One request in flight per connection.
 */
import * as net from "node:net";

export interface ObservationReply {
  type: "observation";
  observation: string; // base64, row-major uint8
  shape: [number, number]; // [height, width]
  step: number;
  coverage: number;
  done: boolean;
  success: boolean;
  reward?: number;
}

export interface ErrorReply {
  type: "error";
  message: string;
}

export type EnvReply = ObservationReply | ErrorReply | { type: "closed" };

export interface ResetRequest {
  map_id: string;
  seed?: number;
  coverage_target?: number;
  max_steps?: number;
  predictor?: string;
  delta_free?: number;
  delta_obstacle?: number;
  start?: [number, number];
  agent_centered?: boolean;
}

/** Decode a base64 observation payload into bytes plus dimensions. */
export function decodeObservation(reply: ObservationReply): {
  data: Uint8Array;
  height: number;
  width: number;
} {
  const data = Uint8Array.from(Buffer.from(reply.observation, "base64"));
  const [height, width] = reply.shape;
  if (data.length !== height * width) {
    throw new Error(`observation payload is ${data.length} bytes, expected ${height * width}`);
  }
  return { data, height, width };
}

/** Line-oriented JSON request/reply socket. Strictly serialized. */
export class JsonLineClient {
  private socket: net.Socket | null = null;
  private buffer = "";
  private waiters: Array<(line: string) => void> = [];
  private pendingError: Error | null = null;

  constructor(
    private readonly host: string,
    private readonly port: number,
  ) {}

  async connect(): Promise<void> {
    if (this.socket) return;
    await new Promise<void>((resolve, reject) => {
      const socket = net.createConnection({ host: this.host, port: this.port });
      socket.setNoDelay(true);
      socket.once("connect", () => {
        this.socket = socket;
        resolve();
      });
      socket.once("error", (err) => {
        if (!this.socket) reject(err);
        else this.failAll(err);
      });
      socket.on("data", (chunk) => this.onData(chunk));
      socket.on("close", () => this.failAll(new Error("connection closed")));
    });
  }

  private onData(chunk: Buffer): void {
    this.buffer += chunk.toString("utf-8");
    let index;
    while ((index = this.buffer.indexOf("\n")) >= 0) {
      const line = this.buffer.slice(0, index);
      this.buffer = this.buffer.slice(index + 1);
      const waiter = this.waiters.shift();
      if (waiter) waiter(line);
    }
  }

  private failAll(err: Error): void {
    this.pendingError = err;
    for (const waiter of this.waiters.splice(0)) waiter("");
  }

  async call<T>(request: object): Promise<T> {
    await this.connect();
    if (!this.socket) throw this.pendingError ?? new Error("not connected");
    const line = await new Promise<string>((resolve) => {
      this.waiters.push(resolve);
      this.socket!.write(JSON.stringify(request) + "\n");
    });
    if (!line) throw this.pendingError ?? new Error("connection closed");
    return JSON.parse(line) as T;
  }

  close(): void {
    this.socket?.end();
    this.socket?.destroy();
    this.socket = null;
  }
}

/** One environment session: a connection holding one live episode. */
export class EnvSession {
  private readonly client: JsonLineClient;

  constructor(host: string, port: number) {
    this.client = new JsonLineClient(host, port);
  }

  private expectObservation(reply: EnvReply): ObservationReply {
    if (reply.type === "error") throw new Error(`environment error: ${reply.message}`);
    if (reply.type !== "observation") throw new Error(`unexpected reply ${reply.type}`);
    return reply;
  }

  async reset(request: ResetRequest): Promise<ObservationReply> {
    return this.expectObservation(await this.client.call<EnvReply>({ cmd: "reset", ...request }));
  }

  async step(action: number): Promise<ObservationReply> {
    return this.expectObservation(await this.client.call<EnvReply>({ cmd: "step", action }));
  }

  async render(): Promise<ObservationReply> {
    return this.expectObservation(await this.client.call<EnvReply>({ cmd: "render" }));
  }

  async close(): Promise<void> {
    try {
      await this.client.call<EnvReply>({ cmd: "close" });
    } catch {
      // the server may close the socket before the reply is read
    }
    this.client.close();
  }

  /** Close the socket without the protocol goodbye. */
  dispose(): void {
    this.client.close();
  }
}

/** Cell byte values of the predictor protocol (and observation grids). */
export const CELL_FREE = 0;
export const CELL_OBSTACLE = 1;
export const CELL_UNKNOWN = 2;

/** Client side of the predictor protocol, for round-trip tests. */
export class PredictorClient {
  private readonly client: JsonLineClient;

  constructor(host: string, port: number) {
    this.client = new JsonLineClient(host, port);
  }

  async predict(cells: Uint8Array, width: number, height: number): Promise<Float32Array> {
    const reply = await this.client.call<{
      type: string;
      values?: string;
      message?: string;
    }>({
      type: "predict",
      width,
      height,
      cells: Buffer.from(cells).toString("base64"),
    });
    if (reply.type !== "probabilities" || !reply.values) {
      throw new Error(`predictor error: ${reply.message ?? reply.type}`);
    }
    const raw = Buffer.from(reply.values, "base64");
    return new Float32Array(raw.buffer, raw.byteOffset, raw.byteLength / 4);
  }

  close(): void {
    this.client.close();
  }
}
