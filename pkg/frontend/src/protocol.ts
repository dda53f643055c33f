/** Wire protocol for the teleop session server.
 *
 * Messages are single lines: a verb, one space, a JSON object (omitted when
 * empty). The server speaks `hello | state | ack | error | episode_end`,
 * the console sends `hello | episode_begin | control | annotate | episode_end`.
 */

export const PROTOCOL_VERSION = 1;

export type AnnotationKind = "collision" | "deviation" | "clear";

export interface Roadbook {
  waypoints: [number, number][]; // agent frame, +x forward
  cue: [number, number]; // [direction (-1 left / 0 straight / +1 right), distance m]
}

export interface SceneGeometry {
  ref: string;
  walkable: [number, number][][];
  circles: [number, number, number][]; // cx, cy, r
  boxes: [number, number, number, number][]; // xmin, ymin, xmax, ymax
  route: [number, number][];
  goal: [number, number];
  goal_radius: number;
  bounds: [number, number, number, number];
}

export interface StateMsg {
  verb: "state";
  tick: number;
  agent: [number, number, number]; // x, y, theta
  speed: number;
  pedestrians: [number, number][];
  rays_digest: string;
  roadbook: Roadbook;
  reward_terms: [number, number, number]; // d_completion, collision, deviation
  events: [number, string][]; // [tick, kind]
  terminal: string | null;
}

export interface HelloMsg {
  verb: "hello";
  format_version: number;
}

export interface AckMsg {
  verb: "ack";
  for: string;
  // episode_begin acks
  episode_id?: string;
  scene?: SceneGeometry;
  // annotate acks
  ok?: boolean;
  tick?: number;
  kind?: string;
  reason?: string;
}

export interface ErrorMsg {
  verb: "error";
  reason: string;
  server?: number;
  client?: number;
}

export interface EpisodeEndMsg {
  verb: "episode_end";
  reason: string;
  terminal: string;
  episode_id: string;
}

export type ServerMsg = HelloMsg | StateMsg | AckMsg | ErrorMsg | EpisodeEndMsg;

export type ClientMsg =
  | { verb: "hello"; format_version: number }
  | { verb: "episode_begin"; scene_ref?: string; seed?: number }
  | { verb: "control"; v: number; omega: number }
  | { verb: "annotate"; kind: AnnotationKind; tick: number }
  | { verb: "episode_end"; reason: string };

const SERVER_VERBS = new Set(["hello", "state", "ack", "error", "episode_end"]);

export function encodeMsg(msg: ClientMsg): string {
  const { verb, ...payload } = msg;
  return `${verb} ${JSON.stringify(payload)}`;
}

/** Parse one server line. Throws on anything that is not a known verb plus
 *  a JSON object — callers surface that as a banner, never as a crash. */
export function decodeMsg(line: string): ServerMsg {
  const trimmed = line.trim();
  if (!trimmed) throw new Error("empty message");
  const sp = trimmed.indexOf(" ");
  const verb = sp < 0 ? trimmed : trimmed.slice(0, sp);
  const body = sp < 0 ? "" : trimmed.slice(sp + 1);
  if (!SERVER_VERBS.has(verb)) throw new Error(`unknown verb ${JSON.stringify(verb)}`);
  let payload: unknown = {};
  if (body) payload = JSON.parse(body);
  if (typeof payload !== "object" || payload === null || Array.isArray(payload)) {
    throw new Error("payload must be an object");
  }
  return { verb, ...(payload as Record<string, unknown>) } as ServerMsg;
}
