export { Bridge, SEGMENT_VERSION, type BridgeOptions } from "./bridge.js";
export { FrontendSession } from "./session.js";
export { EmbeddedBackend, runHysrDemo } from "./backend.js";
export * from "./errors.js";
export * from "./types.js";
