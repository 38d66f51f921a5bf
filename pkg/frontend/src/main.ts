// DOM wiring for the annotation loop: draw labeled disks, save, train,
// inspect per-block saliency overlays, review validation scores.

import { ApiClient } from "./api.js";
import { AppStore } from "./store.js";
import {
  Viewport,
  fit,
  imageToScreen,
  pan,
  pickPixel,
  zoomStep,
} from "./view.js";

const api = new ApiClient("");
const store = new AppStore(api);

const canvas = document.getElementById("canvas") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
let viewport: Viewport = { zoom: 1, panX: 0, panY: 0 };
let baseImage: HTMLImageElement | null = null;
let overlayImage: HTMLImageElement | null = null;
let overlayStale = false;

function el<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

const statusLine = el<HTMLSpanElement>("status");
const staleBadge = el<HTMLSpanElement>("stale-badge");
const imageList = el<HTMLUListElement>("image-list");
const scoreTable = el<HTMLTableSectionElement>("score-body");
const suggestionBox = el<HTMLDivElement>("suggestion");
const blockSelect = el<HTMLSelectElement>("overlay-block");

function setStatus(text: string) {
  statusLine.textContent = text;
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

function render() {
  ctx.save();
  ctx.fillStyle = "#20232a";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  if (baseImage && store.activeImage) {
    ctx.imageSmoothingEnabled = viewport.zoom < 1;
    const [ox, oy] = imageToScreen(viewport, 0, 0);
    const w = store.activeImage.width * viewport.zoom;
    const h = store.activeImage.height * viewport.zoom;
    ctx.drawImage(baseImage, ox, oy, w, h);
    if (overlayImage && store.overlay.kind !== "none") {
      ctx.globalAlpha = store.overlayOpacity;
      // same transform as the base image: 1:1 pixel alignment at any zoom
      ctx.drawImage(overlayImage, ox, oy, w, h);
      ctx.globalAlpha = 1.0;
    }
    for (const m of store.markers) {
      const [cx, cy] = imageToScreen(viewport, m.x + 0.5, m.y + 0.5);
      ctx.beginPath();
      ctx.arc(cx, cy, m.radius * viewport.zoom, 0, 2 * Math.PI);
      ctx.fillStyle = m.label === "foreground"
        ? "rgba(220, 40, 40, 0.55)"
        : "rgba(255, 255, 255, 0.55)";
      ctx.fill();
      ctx.strokeStyle = m.label === "foreground" ? "#dc2828" : "#ffffff";
      ctx.lineWidth = 1.5;
      ctx.stroke();
    }
  }
  ctx.restore();
  staleBadge.style.display = store.modelStale || overlayStale ? "inline" : "none";
  el<HTMLButtonElement>("save").disabled = !store.dirty;
}

function resizeCanvas() {
  const rect = canvas.parentElement!.getBoundingClientRect();
  canvas.width = rect.width;
  canvas.height = rect.height;
  if (store.activeImage) {
    viewport = fit(store.activeImage.width, store.activeImage.height,
                   canvas.width, canvas.height);
  }
  render();
}

async function loadBaseImage(id: string) {
  baseImage = await loadImage(api.imageUrl(id));
  resizeCanvas();
}

function loadImage(url: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error(`failed to load ${url}`));
    img.src = url;
  });
}

async function refreshOverlay() {
  if (store.overlay.kind === "none" || !store.activeImage || store.modelDepth === 0) {
    overlayImage = null;
    render();
    return;
  }
  try {
    const { bytes, stale } = await api.fetchOverlayBytes(
      store.activeImage.id, store.overlay);
    overlayStale = stale;
    const blob = new Blob([bytes], { type: "image/png" });
    const url = URL.createObjectURL(blob);
    overlayImage = await loadImage(url);
    URL.revokeObjectURL(url);
  } catch {
    overlayImage = null;
    setStatus("no saliency for this selection yet");
  }
  render();
}

// ---------------------------------------------------------------------------
// side panel
// ---------------------------------------------------------------------------

function renderImageList() {
  imageList.innerHTML = "";
  for (const info of store.images) {
    const item = document.createElement("li");
    item.textContent = info.id;
    if (info.marked) item.textContent += " ✎";
    if (info.is_training) item.classList.add("training");
    if (info.id === store.activeImage?.id) item.classList.add("active");
    if (info.id === store.suggestion) item.classList.add("suggested");
    item.onclick = () => void openImage(info.id);
    imageList.appendChild(item);
  }
}

function renderScores() {
  scoreTable.innerHTML = "";
  for (const row of store.scoreRows()) {
    const tr = document.createElement("tr");
    tr.innerHTML =
      `<td>${row.id}</td><td>${row.f_beta.toFixed(3)}</td>` +
      `<td>${row.mae.toFixed(4)}</td>`;
    tr.onclick = () => void openImage(row.id); // low scorers open for marking
    scoreTable.appendChild(tr);
  }
  suggestionBox.textContent = store.suggestion
    ? `suggested next training image: ${store.suggestion}`
    : "";
}

function renderBlockOptions() {
  blockSelect.innerHTML = "";
  for (let b = 1; b <= Math.max(store.modelDepth, 1); b++) {
    const option = document.createElement("option");
    option.value = `${b}`;
    option.textContent = `block ${b}`;
    blockSelect.appendChild(option);
  }
  blockSelect.value = `${store.overlay.block}`;
}

async function openImage(id: string) {
  await store.openImage(id);
  await loadBaseImage(id);
  renderImageList();
  setStatus(`${id}: ${store.markers.length} markers`);
  await refreshOverlay();
}

// ---------------------------------------------------------------------------
// interaction
// ---------------------------------------------------------------------------

let panning = false;
let lastPointer: [number, number] = [0, 0];

canvas.addEventListener("pointerdown", (event) => {
  const sx = event.offsetX;
  const sy = event.offsetY;
  if (event.button === 1 || event.shiftKey) {
    panning = true;
    lastPointer = [sx, sy];
    return;
  }
  const [x, y] = pickPixel(viewport, sx, sy);
  if (event.button === 2 || event.altKey) {
    store.erase(x, y);
  } else {
    store.draw(x, y);
  }
  setStatus(`${store.activeImage?.id ?? ""}: ${store.markers.length} markers` +
            (store.dirty ? " (unsaved)" : ""));
  render();
});

canvas.addEventListener("pointermove", (event) => {
  if (!panning) return;
  viewport = pan(viewport, event.offsetX - lastPointer[0],
                 event.offsetY - lastPointer[1]);
  lastPointer = [event.offsetX, event.offsetY];
  render();
});

window.addEventListener("pointerup", () => {
  panning = false;
});

canvas.addEventListener("contextmenu", (event) => event.preventDefault());

canvas.addEventListener("wheel", (event) => {
  event.preventDefault();
  viewport = zoomStep(viewport, event.offsetX, event.offsetY,
                      event.deltaY < 0 ? 1 : -1);
  render();
});

el<HTMLButtonElement>("brush-toggle").onclick = () => {
  store.toggleBrushLabel();
  const button = el<HTMLButtonElement>("brush-toggle");
  button.textContent = store.brush.label;
  button.className = store.brush.label;
};

el<HTMLInputElement>("brush-radius").oninput = (event) => {
  store.brush.radius = parseFloat((event.target as HTMLInputElement).value);
  el<HTMLSpanElement>("radius-value").textContent =
    store.brush.radius.toFixed(1);
};

el<HTMLButtonElement>("save").onclick = async () => {
  try {
    await store.save();
    setStatus("markers saved");
    renderImageList();
  } catch (error) {
    setStatus(`save failed: ${(error as Error).message}`);
  }
  render();
};

el<HTMLButtonElement>("train").onclick = async () => {
  if (store.dirty) {
    setStatus("save markers before training");
    return;
  }
  const mode = el<HTMLSelectElement>("train-mode").value;
  const blocks = parseInt(el<HTMLSelectElement>("train-blocks").value, 10);
  setStatus(`training (${mode}, ${blocks} blocks)...`);
  el<HTMLButtonElement>("train").disabled = true;
  try {
    const status = await store.trainAndRefresh({
      mode,
      blockspecs: Array.from({ length: blocks }, () => ({
        kernels_per_marker: 2,
      })),
    });
    if (status.status === "failed") {
      setStatus(`training failed: ${status.error}`);
    } else {
      const seconds = Object.values(status.stages)
        .reduce((a, b) => a + b, 0).toFixed(1);
      setStatus(`trained ${status.model_depth} blocks in ${seconds}s`);
      renderBlockOptions();
      renderScores();
      renderImageList();
      await refreshOverlay();
    }
  } catch (error) {
    setStatus(`training error: ${(error as Error).message}`);
  } finally {
    el<HTMLButtonElement>("train").disabled = false;
  }
  render();
};

el<HTMLSelectElement>("overlay-kind").onchange = async (event) => {
  const kind = (event.target as HTMLSelectElement).value as
    "none" | "saliency" | "refined";
  store.selectOverlay(kind);
  await refreshOverlay();
};

blockSelect.onchange = async (event) => {
  store.selectOverlay(store.overlay.kind,
                      parseInt((event.target as HTMLSelectElement).value, 10));
  await refreshOverlay();
};

el<HTMLInputElement>("overlay-opacity").oninput = (event) => {
  store.overlayOpacity = parseFloat((event.target as HTMLInputElement).value);
  render();
};

window.addEventListener("resize", resizeCanvas);

// ---------------------------------------------------------------------------
// boot
// ---------------------------------------------------------------------------

async function boot() {
  await store.refreshImages();
  renderImageList();
  renderBlockOptions();
  const status = await api.trainStatus();
  store.modelDepth = status.model_depth;
  store.modelStale = status.model_stale;
  if (status.status === "done") {
    await store.reviewValidation();
    renderScores();
    renderBlockOptions();
  }
  if (store.images.length) await openImage(store.images[0].id);
  setStatus("ready");
}

void boot();
