/**
 * HTTP + websocket client for the playground service.
 *
 * The websocket constructor is injectable so tests can drive the client with
 * a scripted fake; the browser entry point passes the real WebSocket.
 */

import type { ClientMessage, FrameMessage, ErrorMessage, InterveneMessage } from "./protocol";
import { parseServerMessage } from "./protocol";

export interface CheckpointEntry {
  path: string;
  role: string;
  layout: { n_total: number; n_hidden: number; n_gene: number; n_meta: number };
  hidden_units: number;
  config_digest: string | null;
}

export interface SessionInfo {
  id: string;
  width: number;
  height: number;
  layout: { n_total: number; n_hidden: number; n_gene: number; n_meta: number };
  has_prop: boolean;
  rng_seed: number;
}

export interface CreateSessionRequest {
  checkpoint: string;
  prop_checkpoint?: string;
  grid?: { h: number; w: number };
  rng_seed?: number;
  gene_every?: number;
  prop_every?: number;
}

export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((event: { data: string }) => void) | null;
  onclose: (() => void) | null;
}

export type WebSocketFactory = (url: string) => WebSocketLike;

export async function fetchCheckpoints(baseUrl: string): Promise<CheckpointEntry[]> {
  const response = await fetch(`${baseUrl}/checkpoints`);
  if (!response.ok) throw new Error(`listing checkpoints failed: ${response.status}`);
  const body = (await response.json()) as { checkpoints: CheckpointEntry[] };
  return body.checkpoints;
}

export async function createSession(
  baseUrl: string,
  request: CreateSessionRequest,
): Promise<SessionInfo> {
  const response = await fetch(`${baseUrl}/sessions`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(request),
  });
  if (!response.ok) {
    throw new Error(`creating session failed: ${response.status} ${await response.text()}`);
  }
  return (await response.json()) as SessionInfo;
}

export interface SessionSocketHandlers {
  onFrame: (frame: FrameMessage) => void;
  onError?: (error: ErrorMessage) => void;
  onClose?: () => void;
}

export class SessionSocket {
  private ws: WebSocketLike;
  private sent: ClientMessage[] = [];

  constructor(url: string, handlers: SessionSocketHandlers, factory: WebSocketFactory) {
    this.ws = factory(url);
    this.ws.onmessage = (event) => {
      const message = parseServerMessage(event.data);
      if (message.type === "frame") handlers.onFrame(message);
      else handlers.onError?.(message);
    };
    this.ws.onclose = () => handlers.onClose?.();
  }

  /** Every control funnels through here; tests assert on sentLog(). */
  send(message: ClientMessage): void {
    this.sent.push(message);
    this.ws.send(JSON.stringify(message));
  }

  intervene(message: InterveneMessage): void {
    this.send(message);
  }

  sentLog(): readonly ClientMessage[] {
    return this.sent;
  }

  close(): void {
    this.ws.close();
  }
}

export function sessionSocketUrl(baseUrl: string, sessionId: string): string {
  return `${baseUrl.replace(/^http/, "ws")}/ws/session/${sessionId}`;
}
