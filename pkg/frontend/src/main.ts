/**
 * Playground entry point: session setup panel, live canvas, and controls.
 *
 * Everything stateful lives on the server; this file only wires DOM inputs to
 * protocol builders and paints the frames that come back.
 */

import {
  fetchCheckpoints,
  createSession,
  sessionSocketUrl,
  SessionSocket,
  type CheckpointEntry,
  type SessionInfo,
  type WebSocketLike,
} from "./client";
import {
  damage,
  pause,
  placeSeed,
  play,
  reset,
  setRate,
  setSpeed,
  step,
  toggleProp,
  type FrameMessage,
} from "./protocol";
import { canvasToCell, paintBuffer, renderFrame } from "./render";

const BASE_URL = (import.meta as { env?: Record<string, string> }).env?.VITE_API_URL
  ?? `${location.protocol}//${location.host}`;

type Tool = "seed" | "damage";

interface AppState {
  socket: SessionSocket | null;
  session: SessionInfo | null;
  lastFrame: FrameMessage | null;
  cellSize: number;
  tool: Tool;
  showGenes: boolean;
}

const state: AppState = {
  socket: null,
  session: null,
  lastFrame: null,
  cellSize: 16,
  tool: "seed",
  showGenes: false,
};

/** Adapt the browser WebSocket to the injectable interface the client uses. */
function browserSocket(url: string): WebSocketLike {
  const ws = new WebSocket(url);
  const like: WebSocketLike = {
    send: (data) => ws.send(data),
    close: () => ws.close(),
    onmessage: null,
    onclose: null,
  };
  ws.onmessage = (event) => like.onmessage?.({ data: String(event.data) });
  ws.onclose = () => like.onclose?.();
  return like;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function selectedBits(container: HTMLElement): string {
  const boxes = container.querySelectorAll<HTMLInputElement>("input[type=checkbox]");
  let bits = "";
  boxes.forEach((box) => {
    bits += box.checked ? "1" : "0";
  });
  return bits;
}

function buildBitBoxes(container: HTMLElement, count: number, label: string): void {
  container.innerHTML = "";
  if (count === 0) return;
  const caption = document.createElement("span");
  caption.textContent = label;
  container.appendChild(caption);
  for (let i = 0; i < count; i++) {
    const box = document.createElement("input");
    box.type = "checkbox";
    box.title = `${label} bit ${i}`;
    if (label === "genes" && i === 0) box.checked = true;
    container.appendChild(box);
  }
}

function drawFrame(frame: FrameMessage): void {
  state.lastFrame = frame;
  const rendered = renderFrame(frame);
  state.cellSize = rendered.cellSize;
  const canvas = el<HTMLCanvasElement>("grid");
  const buffer = state.showGenes && rendered.geneRgba ? rendered.geneRgba : rendered.rgba;
  paintBuffer(canvas, buffer, rendered.width, rendered.height, rendered.cellSize);
  el<HTMLSpanElement>("status").textContent =
    `step ${frame.step} — ${frame.alive_count} alive cells`;
}

function showError(text: string): void {
  el<HTMLSpanElement>("error").textContent = text;
  if (text) setTimeout(() => (el<HTMLSpanElement>("error").textContent = ""), 4000);
}

async function populateCheckpoints(): Promise<CheckpointEntry[]> {
  const entries = await fetchCheckpoints(BASE_URL);
  const geneSelect = el<HTMLSelectElement>("gene-checkpoint");
  const propSelect = el<HTMLSelectElement>("prop-checkpoint");
  geneSelect.innerHTML = "";
  propSelect.innerHTML = "<option value=''>(none)</option>";
  for (const entry of entries) {
    const option = document.createElement("option");
    option.value = entry.path;
    option.textContent = `${entry.path} (${entry.role}, ${entry.hidden_units}u)`;
    if (entry.role === "gene_ca") geneSelect.appendChild(option);
    if (entry.role === "gene_prop_ca") propSelect.appendChild(option.cloneNode(true));
  }
  return entries;
}

async function startSession(): Promise<void> {
  const size = Number(el<HTMLSelectElement>("grid-size").value);
  const propPath = el<HTMLSelectElement>("prop-checkpoint").value;
  const session = await createSession(BASE_URL, {
    checkpoint: el<HTMLSelectElement>("gene-checkpoint").value,
    prop_checkpoint: propPath || undefined,
    grid: { h: size, w: size },
    rng_seed: Number(el<HTMLInputElement>("rng-seed").value) || 0,
  });
  state.session = session;
  state.socket?.close();
  state.socket = new SessionSocket(
    sessionSocketUrl(BASE_URL, session.id),
    {
      onFrame: drawFrame,
      onError: (error) => showError(`${error.code}: ${error.message}`),
      onClose: () => showError("connection closed"),
    },
    browserSocket,
  );
  buildBitBoxes(el("gene-bits"), session.layout.n_gene, "genes");
  buildBitBoxes(el("meta-bits"), session.layout.n_meta, "meta");
  el<HTMLInputElement>("prop-enabled").disabled = !session.has_prop;
  el<HTMLInputElement>("prop-enabled").checked = session.has_prop;
}

function onCanvasClick(event: MouseEvent): void {
  if (!state.socket || !state.session) return;
  const { x, y } = canvasToCell(
    event.offsetX,
    event.offsetY,
    state.cellSize,
    state.session.width,
    state.session.height,
  );
  if (state.tool === "seed") {
    const meta = selectedBits(el("meta-bits"));
    state.socket.intervene(placeSeed(x, y, selectedBits(el("gene-bits")), meta || undefined));
  } else {
    state.socket.intervene(damage(x, y, Number(el<HTMLInputElement>("brush-radius").value)));
  }
}

function wireControls(): void {
  el<HTMLButtonElement>("new-session").onclick = () => {
    startSession().catch((error) => showError(String(error)));
  };
  el<HTMLCanvasElement>("grid").onclick = onCanvasClick;
  el<HTMLInputElement>("tool-seed").onchange = () => (state.tool = "seed");
  el<HTMLInputElement>("tool-damage").onchange = () => (state.tool = "damage");
  el<HTMLButtonElement>("play").onclick = () => state.socket?.send(play());
  el<HTMLButtonElement>("pause").onclick = () => state.socket?.send(pause());
  el<HTMLButtonElement>("step-1").onclick = () => state.socket?.intervene(step(1));
  el<HTMLButtonElement>("step-10").onclick = () => state.socket?.intervene(step(10));
  el<HTMLButtonElement>("reset").onclick = () => state.socket?.intervene(reset());
  el<HTMLInputElement>("prop-enabled").onchange = (event) =>
    state.socket?.intervene(toggleProp((event.target as HTMLInputElement).checked));
  const sendRates = () =>
    state.socket?.intervene(
      setRate(
        Number(el<HTMLInputElement>("gene-every").value),
        Number(el<HTMLInputElement>("prop-every").value),
      ),
    );
  el<HTMLInputElement>("gene-every").onchange = sendRates;
  el<HTMLInputElement>("prop-every").onchange = sendRates;
  el<HTMLInputElement>("speed").onchange = (event) =>
    state.socket?.intervene(setSpeed(Number((event.target as HTMLInputElement).value)));
  el<HTMLInputElement>("show-genes").onchange = (event) => {
    state.showGenes = (event.target as HTMLInputElement).checked;
    if (state.lastFrame) drawFrame(state.lastFrame);
  };
}

export async function boot(): Promise<void> {
  wireControls();
  await populateCheckpoints();
}

if (typeof document !== "undefined" && document.getElementById("grid")) {
  boot().catch((error) => showError(String(error)));
}
