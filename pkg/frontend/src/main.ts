/** DOM bootstrap: canvas, panel, keyboard, and the 10 Hz control loop. */

import { Camera } from "./camera.js";
import { ControlRamp, emptyKeys, keyAxis } from "./input.js";
import { TeleopLink } from "./net.js";
import { drawFrame } from "./render.js";
import { ConsoleModel } from "./viewmodel.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
};

const canvas = $<HTMLCanvasElement>("view");
const ctx = canvas.getContext("2d")!;
const model = new ConsoleModel();
const camera = new Camera();
const link = new TeleopLink(model, (url) => new WebSocket(url) as unknown as import("./net.js").SocketLike);
const keys = emptyKeys();
const ramp = new ControlRamp();

let fittedScene = ""; // refit the camera once per scene

// -- layout -------------------------------------------------------------------

function resize(): void {
  const rect = canvas.parentElement!.getBoundingClientRect();
  canvas.width = rect.width;
  canvas.height = rect.height;
}
window.addEventListener("resize", resize);
resize();

// -- input --------------------------------------------------------------------

window.addEventListener("keydown", (e) => {
  if (document.activeElement instanceof HTMLInputElement) return;
  const axis = keyAxis(e.key);
  if (axis) {
    keys[axis] = true;
    e.preventDefault();
    return;
  }
  if (e.repeat) return;
  if (e.key === "c" || e.key === "C") link.annotate("collision");
  else if (e.key === "v" || e.key === "V") link.annotate("deviation");
  else if (e.key === "x" || e.key === "X") link.annotate("clear");
});
window.addEventListener("keyup", (e) => {
  const axis = keyAxis(e.key);
  if (axis) keys[axis] = false;
});
window.addEventListener("blur", () => {
  keys.forward = keys.back = keys.left = keys.right = false;
});

// camera: drag pans, wheel zooms about the cursor
let dragging = false;
let lastX = 0;
let lastY = 0;
canvas.addEventListener("mousedown", (e) => {
  dragging = true;
  lastX = e.offsetX;
  lastY = e.offsetY;
});
window.addEventListener("mouseup", () => (dragging = false));
canvas.addEventListener("mousemove", (e) => {
  if (!dragging) return;
  camera.panByPixels(e.offsetX - lastX, e.offsetY - lastY);
  lastX = e.offsetX;
  lastY = e.offsetY;
});
canvas.addEventListener("wheel", (e) => {
  e.preventDefault();
  camera.zoomAt(e.deltaY < 0 ? 1.15 : 1 / 1.15, e.offsetX, e.offsetY, canvas.width, canvas.height);
});

// -- control loop: fixed 10 Hz, zero-order hold server-side -------------------

setInterval(() => {
  const { v, omega } = ramp.step(keys, 0.1);
  link.sendControl(v, omega);
}, 100);

// -- render loop --------------------------------------------------------------

function frame(): void {
  if (model.scene && model.scene.ref !== fittedScene) {
    fittedScene = model.scene.ref;
    camera.fit(model.scene.bounds, canvas.width, canvas.height);
  }
  drawFrame(ctx, model, camera, canvas.width, canvas.height, performance.now());
  requestAnimationFrame(frame);
}
requestAnimationFrame(frame);

// -- panel --------------------------------------------------------------------

const statusEl = $("status");
const bannerEl = $("banner");
const blockEl = $("block-screen");
const blockText = $("block-reason");
const tickerEl = $("ticker");
const annosEl = $("annotations");
const countersEl = $("counters");
const beginBtn = $<HTMLButtonElement>("begin");
const endBtn = $<HTMLButtonElement>("end");

$("connect").addEventListener("click", () => {
  link.connect(($<HTMLInputElement>("url")).value.trim());
});
beginBtn.addEventListener("click", () => link.beginEpisode());
endBtn.addEventListener("click", () => link.endEpisode());
$("ann-collision").addEventListener("click", () => link.annotate("collision"));
$("ann-deviation").addEventListener("click", () => link.annotate("deviation"));
$("ann-clear").addEventListener("click", () => link.annotate("clear"));

function refreshPanel(): void {
  statusEl.textContent = model.status + (model.recording ? " · recording" : "");
  statusEl.className = `pill ${model.status}${model.recording ? " rec" : ""}`;
  bannerEl.textContent = model.banner;
  bannerEl.style.display = model.banner ? "block" : "none";

  blockEl.style.display = model.status === "blocked" ? "flex" : "none";
  blockText.textContent = model.blockReason;

  beginBtn.disabled = !link.ready || model.recording;
  endBtn.disabled = !link.ready || !model.recording;

  const st = model.latest;
  $("episode").textContent = model.episodeId || "—";
  $("tick").textContent = st ? String(st.tick) : "—";
  $("speed").textContent = st ? `${st.speed.toFixed(2)} m/s` : "—";
  $("reward").textContent = st
    ? `Δroute ${st.reward_terms[0].toFixed(3)} · coll ${st.reward_terms[1]} · dev ${st.reward_terms[2]}`
    : "—";
  if (st) {
    const [dir, dist] = st.roadbook.cue;
    const arrow = dir < 0 ? "left" : dir > 0 ? "right" : "straight";
    $("cue").textContent = `${arrow} in ${dist.toFixed(1)} m`;
  } else {
    $("cue").textContent = "—";
  }
  $("terminal").textContent = model.lastEnd
    ? `${model.lastEnd.terminal} (${model.lastEnd.reason})`
    : st?.terminal ?? "—";

  tickerEl.innerHTML = model.ticker
    .slice(0, 12)
    .map((t) => `<li class="ev-${t.kind}">t${t.tick} ${t.kind}</li>`)
    .join("");
  annosEl.innerHTML = model.annotations
    .slice(0, 12)
    .map((a) => `<li class="ann-${a.status}">t${a.tick} ${a.kind} — ${a.status}${a.reason ? `: ${a.reason}` : ""}</li>`)
    .join("");

  const c = model.counters;
  countersEl.textContent =
    `states ${c.statesReceived} (stale ${c.staleStates}) · frames ${c.framesDrawn} · ` +
    `inputs ${c.inputsSent} · events ${c.eventsSeen} · malformed ${c.malformed}`;
}
setInterval(refreshPanel, 250);
refreshPanel();
