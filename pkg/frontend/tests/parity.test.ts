/**
 * Binding parity: the scripted round trips must pass against backends built
 * and launched by the primary package, with no primary-side changes.
 */

import { spawn, type ChildProcessWithoutNullStreams } from "node:child_process";
import { mkdtempSync, writeFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import path from "node:path";
import { randomBytes } from "node:crypto";
import { afterAll, beforeAll, describe, expect, test } from "vitest";

import {
  Bridge,
  EmbeddedBackend,
  FrontendSession,
  NotFoundError,
  NotBurstingModeError,
  RingFullError,
  direct,
  iteration as iterationMode,
} from "../src/index.js";

const PYTHON = process.env.SYNCHRO80_PYTHON ?? "python3";

function uniqueId(prefix: string): string {
  return `${prefix}-${randomBytes(4).toString("hex")}`;
}

async function sleep(ms: number): Promise<void> {
  await new Promise((resolve) => setTimeout(resolve, ms));
}

/** Launch a backend through the primary CLI and wait until it is attachable. */
async function launchCliBackend(
  bridge: Bridge,
  segmentId: string,
  frequencyHz: number,
): Promise<{ child: ChildProcessWithoutNullStreams; dir: string }> {
  const dir = mkdtempSync(path.join(tmpdir(), "s80-"));
  const configPath = path.join(dir, "backend.cfg");
  writeFileSync(
    configPath,
    [
      `segment_id = ${segmentId}`,
      "ndof = 2",
      `frequency_hz = ${frequencyHz}`,
      "mode = normal",
      "history_capacity = 4096",
      "command_ring_capacity = 64",
      "driver = integrator",
      "",
    ].join("\n"),
  );
  const child = spawn(PYTHON, ["-m", "synchro80", "launch", configPath], {
    stdio: ["ignore", "ignore", "inherit"],
  });
  const deadline = Date.now() + 30_000;
  for (;;) {
    try {
      const probe = await FrontendSession.attach(bridge, segmentId);
      await probe.close();
      return { child, dir };
    } catch (err) {
      if (!(err instanceof NotFoundError) || Date.now() > deadline) {
        child.kill("SIGTERM");
        throw err;
      }
      await sleep(50);
    }
  }
}

async function stopCliBackend(child: ChildProcessWithoutNullStreams, dir: string): Promise<void> {
  const exited = new Promise<void>((resolve) => child.once("exit", () => resolve()));
  child.kill("SIGINT");
  await exited;
  rmSync(dir, { recursive: true, force: true });
}

describe("binding parity against primary-built backends", () => {
  let bridge: Bridge;

  beforeAll(async () => {
    bridge = await Bridge.connect({ python: PYTHON });
  });

  afterAll(async () => {
    await bridge.close();
  });

  test("direct command round trip via a cmd_launch backend", async () => {
    const segmentId = uniqueId("ts-direct");
    const { child, dir } = await launchCliBackend(bridge, segmentId, 500);
    try {
      const session = await FrontendSession.attach(bridge, segmentId);
      expect(session.info.ndof).toBe(2);
      const target = 0.1 + 0.2; // not a round float: checks bit-exact delivery
      await session.addCommand(0, target, direct());
      await session.pulseAndWait(30);
      const obs = await session.latest();
      expect(obs.desired[0]).toBe(target);
      await session.close();
    } finally {
      await stopCliBackend(child, dir);
    }
  });

  test("burst exactness: 100 requested, exactly 100 run", async () => {
    const backend = await EmbeddedBackend.create(bridge, {
      segment_id: uniqueId("ts-burst"),
      ndof: 1,
      frequency_hz: 500,
      mode: "bursting",
      history_capacity: 256,
      command_ring_capacity: 16,
    });
    try {
      await backend.serveStart();
      const session = await FrontendSession.attach(bridge, backend.segmentId);
      expect(await backend.iteration()).toBe(0);
      await session.burst(100, true, 30);
      expect(await backend.iteration()).toBe(100);
      await sleep(100); // no free-running iterations while idle
      expect(await backend.iteration()).toBe(100);
      await session.close();
    } finally {
      await backend.destroy();
    }
  });

  test("lossless tailing of 1000 iterations at 500 Hz", async () => {
    const segmentId = uniqueId("ts-tail");
    const { child, dir } = await launchCliBackend(bridge, segmentId, 500);
    try {
      const session = await FrontendSession.attach(bridge, segmentId);
      const seen: number[] = [];
      let next = 0;
      while (seen.length < 1000) {
        const obs = await session.waitForIteration(next, 30);
        seen.push(obs.iteration);
        next = obs.iteration + 1;
      }
      expect(seen).toEqual(Array.from({ length: 1000 }, (_, i) => i));
      await session.close();
    } finally {
      await stopCliBackend(child, dir);
    }
  });

  test("ring overflow surfaces as RingFullError with the unsent count", async () => {
    const backend = await EmbeddedBackend.create(bridge, {
      segment_id: uniqueId("ts-full"),
      ndof: 1,
      frequency_hz: 500,
      mode: "bursting", // idle: nothing drains the ring
      history_capacity: 16,
      command_ring_capacity: 8,
    });
    try {
      const session = await FrontendSession.attach(bridge, backend.segmentId);
      for (let i = 0; i < 12; i++) {
        await session.addCommand(0, i, iterationMode(5));
      }
      const err = await session.pulse().then(
        () => null,
        (e) => e,
      );
      expect(err).toBeInstanceOf(RingFullError);
      expect((err as RingFullError).unsent).toBe(4);
      expect((err as RingFullError).sentTickets).toHaveLength(8);
      await session.close();
    } finally {
      await backend.destroy();
    }
  });

  test("burst on a normal-mode segment raises the typed error", async () => {
    const segmentId = uniqueId("ts-mode");
    const { child, dir } = await launchCliBackend(bridge, segmentId, 500);
    try {
      const session = await FrontendSession.attach(bridge, segmentId);
      await expect(session.burst(1)).rejects.toBeInstanceOf(NotBurstingModeError);
      await session.close();
    } finally {
      await stopCliBackend(child, dir);
    }
  });
});
