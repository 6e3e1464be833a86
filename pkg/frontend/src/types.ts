/** Wire-facing value types shared by the session and backend wrappers. */

export type InterpolationMode =
  | { kind: "direct" }
  | { kind: "duration"; duration_us: number }
  | { kind: "speed"; speed: number }
  | { kind: "iteration"; count: number };

export const direct = (): InterpolationMode => ({ kind: "direct" });
export const duration = (durationUs: number): InterpolationMode => ({
  kind: "duration",
  duration_us: durationUs,
});
export const speed = (unitsPerSecond: number): InterpolationMode => ({
  kind: "speed",
  speed: unitsPerSecond,
});
export const iteration = (count: number): InterpolationMode => ({ kind: "iteration", count });

export type QueuePolicy = "append" | "overwrite";

export interface Observation {
  iteration: number;
  timestamp_ns: number;
  logical_time_ns: number;
  observed: number[];
  desired: number[];
  payload_hex: string;
  measured_period_ns: number;
}

export interface SegmentInfo {
  ndof: number;
  frequency_hz: number;
  mode: "normal" | "bursting";
  history_capacity: number;
  payload_capacity: number;
  command_ring_capacity: number;
}

export interface BackendConfigInit {
  segment_id: string;
  ndof: number;
  frequency_hz: number;
  mode?: "normal" | "bursting";
  history_capacity?: number;
  payload_capacity?: number;
  command_ring_capacity?: number;
}

export interface DriverSpec {
  name: "integrator" | "muscle" | "mirror_sim";
  params?: Record<string, string | number>;
}

export interface HysrOptions {
  duration_s: number;
  real_hz?: number;
  env_hz?: number;
  sim_steps_per_env_step?: number;
  ndof?: number;
  enable_sim?: boolean;
  lockstep?: boolean;
}

export interface HysrResult {
  summary: string;
  stats: Record<string, string>;
}
