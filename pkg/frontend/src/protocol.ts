/**
 * Message types and builders for the playground websocket protocol.
 *
 * The canonical machine-readable definition is vendored at
 * src/schema/ws_protocol.schema.json; the test suite validates every builder
 * in this file against it, so the types below cannot drift silently.
 */

export interface PlaceSeedEvent {
  type: "place_seed";
  x: number;
  y: number;
  bits: string;
  meta?: string;
}

export interface DamageEvent {
  type: "damage";
  x: number;
  y: number;
  r: number;
}

export interface TogglePropEvent {
  type: "toggle_prop";
  enabled: boolean;
}

export interface SetRateEvent {
  type: "set_rate";
  gene_every: number;
  prop_every: number;
}

export interface StepEvent {
  type: "step";
  n: number;
}

export interface ResetEvent {
  type: "reset";
}

export interface SetSpeedEvent {
  type: "set_speed";
  value: number;
}

export type InterventionEvent =
  | PlaceSeedEvent
  | DamageEvent
  | TogglePropEvent
  | SetRateEvent
  | StepEvent
  | ResetEvent
  | SetSpeedEvent;

export interface InterveneMessage {
  type: "intervene";
  event: InterventionEvent;
}

export interface PlayMessage {
  type: "play";
}

export interface PauseMessage {
  type: "pause";
}

export type ClientMessage = InterveneMessage | PlayMessage | PauseMessage;

export interface FrameMessage {
  type: "frame";
  step: number;
  width: number;
  height: number;
  rgba: string;
  gene_rgb?: string;
  alive_count: number;
}

export interface ErrorMessage {
  type: "error";
  code: string;
  message: string;
}

export type ServerMessage = FrameMessage | ErrorMessage;

const BITS = /^[01]*$/;

function checkBits(bits: string, what: string): string {
  if (!BITS.test(bits)) throw new Error(`${what} must be a 0/1 string, got "${bits}"`);
  return bits;
}

export function placeSeed(x: number, y: number, bits: string, meta?: string): InterveneMessage {
  const event: PlaceSeedEvent = { type: "place_seed", x, y, bits: checkBits(bits, "bits") };
  if (meta !== undefined && meta !== "") event.meta = checkBits(meta, "meta");
  return { type: "intervene", event };
}

export function damage(x: number, y: number, r: number): InterveneMessage {
  return { type: "intervene", event: { type: "damage", x, y, r } };
}

export function toggleProp(enabled: boolean): InterveneMessage {
  return { type: "intervene", event: { type: "toggle_prop", enabled } };
}

export function setRate(geneEvery: number, propEvery: number): InterveneMessage {
  return {
    type: "intervene",
    event: { type: "set_rate", gene_every: geneEvery, prop_every: propEvery },
  };
}

export function step(n: number): InterveneMessage {
  return { type: "intervene", event: { type: "step", n } };
}

export function reset(): InterveneMessage {
  return { type: "intervene", event: { type: "reset" } };
}

export function setSpeed(value: number): InterveneMessage {
  return { type: "intervene", event: { type: "set_speed", value } };
}

export function play(): PlayMessage {
  return { type: "play" };
}

export function pause(): PauseMessage {
  return { type: "pause" };
}

export function parseServerMessage(data: string): ServerMessage {
  const message = JSON.parse(data) as ServerMessage;
  if (message.type !== "frame" && message.type !== "error") {
    throw new Error(`unexpected server message type "${(message as { type: string }).type}"`);
  }
  return message;
}
