import type { Bridge } from "./bridge.js";
import type { QueueTicket } from "./errors.js";
import type {
  InterpolationMode,
  Observation,
  QueuePolicy,
  SegmentInfo,
} from "./types.js";

/**
 * Client session on one segment: stage commands, send them, read history.
 * Mirrors the primary frontend surface; every method delegates to it.
 */
export class FrontendSession {
  private constructor(
    private readonly bridge: Bridge,
    private readonly handle: number,
    readonly info: SegmentInfo,
  ) {}

  static async attach(bridge: Bridge, segmentId: string): Promise<FrontendSession> {
    const raw = (await bridge.call("attach", { segment_id: segmentId })) as SegmentInfo & {
      session: number;
    };
    const { session, ...info } = raw;
    return new FrontendSession(bridge, session, info);
  }

  /** Stage a command locally; nothing is sent until pulse(). */
  async addCommand(
    dof: number,
    target: number,
    mode: InterpolationMode,
    policy: QueuePolicy = "append",
  ): Promise<void> {
    await this.bridge.call("add_command", { session: this.handle, dof, target, mode, policy });
  }

  /** Push all staged commands; rejects with RingFullError on a full ring. */
  async pulse(): Promise<QueueTicket[]> {
    return (await this.bridge.call("pulse", { session: this.handle })) as QueueTicket[];
  }

  /** Send staged commands and block until every pending one completed. */
  async pulseAndWait(timeout?: number): Promise<void> {
    await this.bridge.call("pulse_and_wait", { session: this.handle, timeout });
  }

  async latest(): Promise<Observation> {
    return (await this.bridge.call("latest", { session: this.handle })) as Observation;
  }

  async read(iteration: number): Promise<Observation> {
    return (await this.bridge.call("read", { session: this.handle, iteration })) as Observation;
  }

  /** Block until the given iteration exists, then return it. */
  async waitForIteration(iteration: number, timeout?: number): Promise<Observation> {
    return (await this.bridge.call("wait_for_iteration", {
      session: this.handle,
      iteration,
      timeout,
    })) as Observation;
  }

  /** Ask a bursting backend to run n iterations, optionally waiting for them. */
  async burst(n: number, blocking = true, timeout?: number): Promise<void> {
    await this.bridge.call("burst", { session: this.handle, n, blocking, timeout });
  }

  /** Count of completed backend iterations. */
  async iteration(): Promise<number> {
    return (await this.bridge.call("iteration", { session: this.handle })) as number;
  }

  async close(): Promise<void> {
    await this.bridge.call("close_session", { session: this.handle });
  }
}
