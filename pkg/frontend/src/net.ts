/** Connection lifecycle + handshake against the session server.
 *
 * Owns one socket at a time. All inbound traffic lands in the ConsoleModel;
 * outbound helpers enforce the handshake order (nothing before the server's
 * hello checks out). Socket construction is injected so tests can drive the
 * whole state machine with a scripted fake.
 */

import { AnnotationKind, ClientMsg, decodeMsg, encodeMsg, PROTOCOL_VERSION } from "./protocol.js";
import { ConsoleModel } from "./viewmodel.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export class TeleopLink {
  private sock: SocketLike | null = null;
  private helloDone = false;

  constructor(
    private model: ConsoleModel,
    private makeSocket: SocketFactory,
    private now: () => number = () => Date.now(),
  ) {}

  connect(url: string): void {
    this.disconnect();
    this.model.status = "connecting";
    this.model.blockReason = "";
    this.model.banner = "";
    this.helloDone = false;
    let sock: SocketLike;
    try {
      sock = this.makeSocket(url);
    } catch (e) {
      this.model.status = "closed";
      this.model.banner = `connect failed: ${e}`;
      return;
    }
    this.sock = sock;
    sock.onopen = () => {
      if (this.model.status === "connecting") this.model.status = "open";
    };
    sock.onmessage = (ev) => this.onLine(String(ev.data));
    sock.onclose = () => {
      if (this.model.status !== "blocked") {
        this.model.status = "closed";
        this.model.banner = "disconnected — input disabled, reconnect to continue";
      }
      this.model.recording = false;
      this.sock = null;
    };
    sock.onerror = () => {
      this.model.banner = "socket error";
    };
  }

  disconnect(): void {
    const s = this.sock;
    this.sock = null;
    if (s) s.close();
  }

  private onLine(line: string): void {
    let msg;
    try {
      msg = decodeMsg(line);
    } catch (e) {
      this.model.malformed(e instanceof Error ? e.message : String(e));
      return;
    }
    this.model.ingest(msg, this.now());
    if (msg.verb === "hello" && this.model.status !== "blocked" && !this.helloDone) {
      this.helloDone = true;
      this.send({ verb: "hello", format_version: PROTOCOL_VERSION });
    }
  }

  get ready(): boolean {
    return this.sock !== null && this.helloDone && this.model.status === "open";
  }

  send(msg: ClientMsg): boolean {
    if (!this.sock || this.model.status === "blocked") return false;
    try {
      this.sock.send(encodeMsg(msg));
    } catch {
      return false;
    }
    return true;
  }

  beginEpisode(seed?: number): void {
    if (!this.ready || this.model.recording) return;
    this.send({ verb: "episode_begin", ...(seed !== undefined ? { seed } : {}) });
  }

  endEpisode(): void {
    if (!this.ready || !this.model.recording) return;
    this.send({ verb: "episode_end", reason: "user" });
  }

  sendControl(v: number, omega: number): void {
    if (!this.ready || !this.model.recording) return;
    if (this.send({ verb: "control", v, omega })) this.model.counters.inputsSent += 1;
  }

  annotate(kind: AnnotationKind): void {
    if (!this.ready || !this.model.recording) return;
    const tick = this.model.currentTick;
    if (this.send({ verb: "annotate", kind, tick })) this.model.annotationSent(kind, tick);
  }
}
