/** Typed errors mirroring the primary library's error cases one to one. */

export class Synchro80Error extends Error {
  constructor(message: string) {
    super(message);
    this.name = new.target.name;
  }
}

export class BadDofError extends Synchro80Error {}
export class BadTargetError extends Synchro80Error {}
export class BadModeError extends Synchro80Error {}
export class AlreadyExistsError extends Synchro80Error {}
export class NotFoundError extends Synchro80Error {}
export class VersionMismatchError extends Synchro80Error {}
export class CorruptHeaderError extends Synchro80Error {}
export class ResourceFailureError extends Synchro80Error {}
export class EvictedError extends Synchro80Error {}
export class NotYetError extends Synchro80Error {}
export class NoObservationYetError extends Synchro80Error {}
export class NotBurstingModeError extends Synchro80Error {}
export class WaitTimeoutError extends Synchro80Error {}
export class PeerStoppedError extends Synchro80Error {}
export class DriverFailureError extends Synchro80Error {}
export class TrajectoryTooLongError extends Synchro80Error {}
export class BadConfigError extends Synchro80Error {}
export class FormatError extends Synchro80Error {}
export class BridgeError extends Synchro80Error {}

export interface QueueTicket {
  dof: number;
  position: number;
}

export class RingFullError extends Synchro80Error {
  /** Commands that made it into the ring before it filled up. */
  readonly sentTickets: QueueTicket[];
  /** Number of staged commands that were not sent. */
  readonly unsent: number;

  constructor(message: string, sentTickets: QueueTicket[] = [], unsent = 0) {
    super(message);
    this.sentTickets = sentTickets;
    this.unsent = unsent;
  }
}

interface ErrorPayload {
  type: string;
  message: string;
  data?: { unsent?: number; sent_tickets?: QueueTicket[] };
}

const plainConstructors: Record<string, new (message: string) => Synchro80Error> = {
  BadDof: BadDofError,
  BadTarget: BadTargetError,
  BadMode: BadModeError,
  AlreadyExists: AlreadyExistsError,
  NotFound: NotFoundError,
  VersionMismatch: VersionMismatchError,
  CorruptHeader: CorruptHeaderError,
  ResourceFailure: ResourceFailureError,
  Evicted: EvictedError,
  NotYet: NotYetError,
  NoObservationYet: NoObservationYetError,
  NotBurstingMode: NotBurstingModeError,
  WaitTimeout: WaitTimeoutError,
  PeerStopped: PeerStoppedError,
  DriverFailure: DriverFailureError,
  TrajectoryTooLong: TrajectoryTooLongError,
  BadConfig: BadConfigError,
  FormatError: FormatError,
};

export function errorFromPayload(payload: ErrorPayload): Synchro80Error {
  if (payload.type === "RingFull") {
    return new RingFullError(
      payload.message,
      payload.data?.sent_tickets ?? [],
      payload.data?.unsent ?? 0,
    );
  }
  const ctor = plainConstructors[payload.type];
  if (ctor) {
    return new ctor(payload.message);
  }
  return new BridgeError(`${payload.type}: ${payload.message}`);
}
