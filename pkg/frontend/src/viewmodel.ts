/** Console state: everything the renderer and panel read, nothing they own.
 *
 * One object, mutated only by ingest/notify methods so the message flow is
 * replayable in tests. Rendering reads `latest` (state stream coalesced to
 * the newest tick; out-of-order frames are counted and dropped) while the
 * event ticker and annotation history see every message.
 */

import {
  AnnotationKind,
  EpisodeEndMsg,
  PROTOCOL_VERSION,
  SceneGeometry,
  ServerMsg,
  StateMsg,
} from "./protocol.js";

export type ConnStatus = "idle" | "connecting" | "open" | "blocked" | "closed";

export interface Annotation {
  seq: number;
  tick: number;
  kind: AnnotationKind;
  status: "pending" | "acked" | "rejected";
  reason?: string;
}

export interface TickerEntry {
  tick: number;
  kind: string;
}

const TRAIL_CAP = 4000;
const TICKER_CAP = 200;
const FLASH_MS = 400;

export class ConsoleModel {
  status: ConnStatus = "idle";
  blockReason = "";
  banner = ""; // transient warning (malformed line, server error)
  scene: SceneGeometry | null = null;
  latest: StateMsg | null = null;
  episodeId = "";
  recording = false;
  lastEnd: EpisodeEndMsg | null = null;
  annotations: Annotation[] = [];
  ticker: TickerEntry[] = [];
  trail: [number, number][] = [];
  flashUntil = 0; // ms timestamp; collision flash while now < flashUntil
  serverVersion: number | null = null;

  counters = {
    statesReceived: 0,
    staleStates: 0,
    framesDrawn: 0,
    inputsSent: 0,
    malformed: 0,
    eventsSeen: 0,
  };

  private annotationSeq = 0;

  ingest(msg: ServerMsg, now: number): void {
    switch (msg.verb) {
      case "hello":
        this.serverVersion = msg.format_version;
        if (msg.format_version !== PROTOCOL_VERSION) {
          this.status = "blocked";
          this.blockReason =
            `protocol version mismatch: server speaks v${msg.format_version}, ` +
            `this console speaks v${PROTOCOL_VERSION}`;
        }
        break;
      case "state":
        this.counters.statesReceived += 1;
        for (const [tick, kind] of msg.events) {
          this.counters.eventsSeen += 1;
          this.ticker.unshift({ tick, kind });
          if (kind === "collision") this.flashUntil = now + FLASH_MS;
        }
        if (this.ticker.length > TICKER_CAP) this.ticker.length = TICKER_CAP;
        if (this.latest && msg.tick <= this.latest.tick) {
          this.counters.staleStates += 1;
          return;
        }
        this.latest = msg;
        this.trail.push([msg.agent[0], msg.agent[1]]);
        if (this.trail.length > TRAIL_CAP) this.trail.splice(0, this.trail.length - TRAIL_CAP);
        break;
      case "ack":
        if (msg.for === "episode_begin") {
          this.episodeId = msg.episode_id ?? "";
          this.scene = msg.scene ?? this.scene;
          this.recording = true;
          this.lastEnd = null;
          this.latest = null;
          this.trail = [];
          this.annotations = [];
          this.ticker = [];
        } else if (msg.for === "annotate") {
          this.resolveAnnotation(msg.ok === true, msg.tick, msg.kind, msg.reason);
        }
        break;
      case "error":
        if (msg.reason === "version-mismatch") {
          this.status = "blocked";
          this.blockReason = `server refused the handshake (server v${msg.server}, console v${msg.client})`;
        } else {
          this.banner = msg.reason;
        }
        break;
      case "episode_end":
        this.recording = false;
        this.lastEnd = msg;
        break;
    }
  }

  /** Record a line the decoder refused; the last good frame stays up. */
  malformed(reason: string): void {
    this.counters.malformed += 1;
    this.banner = `malformed message: ${reason}`;
  }

  /** Call when the console sends `annotate`; renders as pending until acked. */
  annotationSent(kind: AnnotationKind, tick: number): Annotation {
    const a: Annotation = { seq: this.annotationSeq++, tick, kind, status: "pending" };
    this.annotations.unshift(a);
    return a;
  }

  private resolveAnnotation(ok: boolean, tick?: number, kind?: string, reason?: string): void {
    // acks come back in send order; resolve the oldest pending entry that
    // matches, falling back to the oldest pending of any shape
    const pending = [...this.annotations].reverse().find(
      (a) => a.status === "pending" && (tick === undefined || a.tick === tick) && (kind === undefined || a.kind === kind),
    ) ?? [...this.annotations].reverse().find((a) => a.status === "pending");
    if (!pending) return;
    pending.status = ok ? "acked" : "rejected";
    if (!ok) pending.reason = reason ?? "rejected";
  }

  get currentTick(): number {
    return this.latest?.tick ?? 0;
  }

  flashing(now: number): boolean {
    return now < this.flashUntil;
  }
}
