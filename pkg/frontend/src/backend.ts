import type { Bridge } from "./bridge.js";
import type { BackendConfigInit, DriverSpec, HysrOptions, HysrResult } from "./types.js";

/**
 * A backend hosted inside the bridge process. `step(n)` runs iterations
 * synchronously; `serveStart()` spawns the bridge-side loop that serves
 * burst requests (or paces a normal-mode backend) until stopped.
 */
export class EmbeddedBackend {
  private constructor(
    private readonly bridge: Bridge,
    private readonly handle: number,
    readonly segmentId: string,
  ) {}

  static async create(
    bridge: Bridge,
    config: BackendConfigInit,
    driver: DriverSpec = { name: "integrator" },
  ): Promise<EmbeddedBackend> {
    const raw = (await bridge.call("embed", { config, driver })) as {
      backend: number;
      segment_id: string;
    };
    return new EmbeddedBackend(bridge, raw.backend, raw.segment_id);
  }

  async step(n: number): Promise<void> {
    await this.bridge.call("step", { backend: this.handle, n });
  }

  async serveStart(): Promise<void> {
    await this.bridge.call("serve_start", { backend: this.handle });
  }

  async iteration(): Promise<number> {
    return (await this.bridge.call("backend_iteration", { backend: this.handle })) as number;
  }

  async stop(): Promise<void> {
    await this.bridge.call("backend_stop", { backend: this.handle });
  }

  async destroy(): Promise<void> {
    await this.bridge.call("backend_destroy", { backend: this.handle });
  }
}

/** Run the hybrid sim-and-real demo inside the bridge process. */
export async function runHysrDemo(bridge: Bridge, options: HysrOptions): Promise<HysrResult> {
  return (await bridge.call("run_hysr_demo", { ...options })) as HysrResult;
}
