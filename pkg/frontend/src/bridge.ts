/**
 * Line-delimited JSON client for the Python bridge process.
 *
 * The bridge hosts the primary library: every call here delegates to it, no
 * transport logic lives on this side. Requests may overlap freely; the
 * bridge runs one thread per request, so a blocking wait does not stall
 * other calls on the same connection.
 */

import { spawn, type ChildProcessByStdio } from "node:child_process";
import { createInterface } from "node:readline";
import { fileURLToPath } from "node:url";
import path from "node:path";
import type { Readable, Writable } from "node:stream";

import { BridgeError, VersionMismatchError, errorFromPayload } from "./errors.js";

/** Must match the primary library's segment wire version. */
export const SEGMENT_VERSION = 1;

const HERE = path.dirname(fileURLToPath(import.meta.url));
const DEFAULT_BRIDGE = path.resolve(HERE, "..", "bridge", "synchro80_bridge.py");

interface Pending {
  resolve: (value: unknown) => void;
  reject: (err: Error) => void;
}

export interface BridgeOptions {
  python?: string;
  bridgeScript?: string;
}

type BridgeChild = ChildProcessByStdio<Writable, Readable, null>;

export class Bridge {
  private child: BridgeChild;
  private pending = new Map<number, Pending>();
  private nextId = 1;
  private closed = false;

  private constructor(child: BridgeChild) {
    this.child = child;
    const lines = createInterface({ input: child.stdout });
    lines.on("line", (line) => this.dispatch(line));
    child.on("exit", () => this.failAll(new BridgeError("bridge process exited")));
  }

  static async connect(options: BridgeOptions = {}): Promise<Bridge> {
    const python = options.python ?? "python3";
    const script = options.bridgeScript ?? DEFAULT_BRIDGE;
    const child = spawn(python, ["-u", script], { stdio: ["pipe", "pipe", "inherit"] });
    const bridge = new Bridge(child);
    const hello = (await bridge.call("hello", {})) as {
      package_version: string;
      segment_version: number;
    };
    if (hello.segment_version !== SEGMENT_VERSION) {
      await bridge.close();
      throw new VersionMismatchError(
        `bridge speaks segment version ${hello.segment_version}, bindings expect ${SEGMENT_VERSION}`,
      );
    }
    return bridge;
  }

  call(method: string, params: Record<string, unknown>): Promise<unknown> {
    if (this.closed) {
      return Promise.reject(new BridgeError("bridge is closed"));
    }
    const id = this.nextId++;
    const line = JSON.stringify({ id, method, params }) + "\n";
    return new Promise((resolve, reject) => {
      this.pending.set(id, { resolve, reject });
      this.child.stdin.write(line);
    });
  }

  private dispatch(line: string): void {
    let message: { id?: number; result?: unknown; error?: never | any };
    try {
      message = JSON.parse(line);
    } catch {
      return; // stray output, not ours
    }
    if (message.id === undefined || message.id === null) {
      return;
    }
    const pending = this.pending.get(message.id);
    if (!pending) {
      return;
    }
    this.pending.delete(message.id);
    if (message.error) {
      pending.reject(errorFromPayload(message.error));
    } else {
      pending.resolve(message.result);
    }
  }

  private failAll(err: Error): void {
    this.closed = true;
    for (const pending of this.pending.values()) {
      pending.reject(err);
    }
    this.pending.clear();
  }

  async close(): Promise<void> {
    if (this.closed) {
      return;
    }
    this.closed = true;
    try {
      this.child.stdin.end(); // EOF triggers bridge-side cleanup of segments
    } catch {
      // already gone
    }
    await new Promise<void>((resolve) => {
      const timer = setTimeout(() => {
        this.child.kill("SIGKILL");
        resolve();
      }, 10_000);
      this.child.once("exit", () => {
        clearTimeout(timer);
        resolve();
      });
    });
    this.failAll(new BridgeError("bridge closed"));
  }
}
