import { ApiClient } from "./api.js";
import { HitTester } from "./hit.js";
import { LabelSession } from "./state.js";
import { ViewTransform } from "./transform.js";
import type { SegmentsDoc, TileInfo } from "./types.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const tileSelect = document.getElementById("tile") as HTMLSelectElement;
const posCount = document.getElementById("pos-count")!;
const negCount = document.getElementById("neg-count")!;
const statusLine = document.getElementById("status")!;
const toastBox = document.getElementById("toast")!;

const api = new ApiClient("");
const view = new ViewTransform();

let session: LabelSession | null = null;
let doc: SegmentsDoc | null = null;
let hit: HitTester | null = null;
let image: HTMLImageElement | null = null;
let hovered: number | null = null;

function resizeCanvas(): void {
  canvas.width = canvas.clientWidth * devicePixelRatio;
  canvas.height = canvas.clientHeight * devicePixelRatio;
  draw();
}

function drawRing(ring: [number, number][]): void {
  ring.forEach(([x, y], i) => {
    const [sx, sy] = view.imageToScreen(x, y);
    if (i === 0) ctx.moveTo(sx, sy);
    else ctx.lineTo(sx, sy);
  });
  ctx.closePath();
}

function tracePolygon(id: number): void {
  if (!doc) return;
  const poly = doc.polygons.find((p) => p.id === id);
  if (!poly) return;
  ctx.beginPath();
  drawRing(poly.ring);
  for (const hole of poly.holes) drawRing(hole);
}

function draw(): void {
  if (!doc || !image || !session) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.imageSmoothingEnabled = view.scale < devicePixelRatio;
  const [ox, oy] = view.imageToScreen(0, 0);
  ctx.drawImage(image, ox, oy, doc.width * view.scale, doc.height * view.scale);

  ctx.lineWidth = 1;
  ctx.strokeStyle = "rgba(255, 255, 0, 0.75)";
  for (const poly of doc.polygons) {
    ctx.beginPath();
    drawRing(poly.ring);
    for (const hole of poly.holes) drawRing(hole);
    ctx.stroke();
  }

  if (session.first !== null && session.pair === null) {
    ctx.fillStyle = "rgba(64, 160, 255, 0.25)";
    for (const nb of session.adjacentTo(session.first)) {
      tracePolygon(nb);
      ctx.fill("evenodd");
    }
  }
  const emphasis: [number | null, string][] = [
    [hovered, "rgba(255, 255, 255, 0.2)"],
    [session.first, "rgba(40, 120, 255, 0.45)"],
    [session.pair ? session.pair[1] : null, "rgba(255, 120, 40, 0.45)"],
  ];
  for (const [id, fill] of emphasis) {
    if (id === null) continue;
    ctx.fillStyle = fill;
    tracePolygon(id);
    ctx.fill("evenodd");
  }

  posCount.textContent = String(session.counts.positive);
  negCount.textContent = String(session.counts.negative);
  const sel =
    session.pair !== null
      ? `pair ${session.pair[0]}-${session.pair[1]} ready: press P or N`
      : session.first !== null
        ? `segment ${session.first} anchored: click an adjacent segment`
        : "click a segment";
  statusLine.textContent = `${sel}  |  hover: ${hovered ?? "-"}`;
  toastBox.textContent = session.toast ?? "";
  toastBox.classList.toggle("visible", session.toast !== null);
}

async function loadTile(info: TileInfo): Promise<void> {
  doc = await api.segments(info.id);
  hit = new HitTester(doc.polygons);
  session = new LabelSession(api, info.id, doc, draw);
  image = new Image();
  image.src = api.imageUrl(info.id);
  await image.decode();
  view.fit(doc.width, doc.height, canvas.width, canvas.height);
  await session.init();
  draw();
}

function canvasPoint(ev: MouseEvent): [number, number] {
  const rect = canvas.getBoundingClientRect();
  return [(ev.clientX - rect.left) * devicePixelRatio, (ev.clientY - rect.top) * devicePixelRatio];
}

let dragging = false;
let moved = false;
let lastX = 0;
let lastY = 0;

canvas.addEventListener("mousedown", (ev) => {
  dragging = true;
  moved = false;
  [lastX, lastY] = canvasPoint(ev);
});

window.addEventListener("mouseup", (ev) => {
  if (!dragging) return;
  dragging = false;
  if (!moved && session && hit) {
    const [sx, sy] = canvasPoint(ev as MouseEvent);
    const [ix, iy] = view.screenToImage(sx, sy);
    session.clickSegment(hit.segmentAt(ix, iy));
  }
});

canvas.addEventListener("mousemove", (ev) => {
  const [sx, sy] = canvasPoint(ev);
  if (dragging) {
    view.pan(sx - lastX, sy - lastY);
    moved = moved || Math.abs(sx - lastX) + Math.abs(sy - lastY) > 3;
    [lastX, lastY] = [sx, sy];
    draw();
    return;
  }
  if (hit) {
    const [ix, iy] = view.screenToImage(sx, sy);
    const id = hit.segmentAt(ix, iy);
    if (id !== hovered) {
      hovered = id;
      draw();
    }
  }
});

canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  const [sx, sy] = canvasPoint(ev);
  view.zoomAt(ev.deltaY < 0 ? 1.2 : 1 / 1.2, sx, sy);
  draw();
});

window.addEventListener("keydown", (ev) => {
  if (!session) return;
  const key = ev.key.toLowerCase();
  if (key === "p" || key === "n" || key === "u") {
    void session.pressKey(key);
  } else if (key === "escape") {
    session.clickSegment(null);
  }
});

window.addEventListener("resize", resizeCanvas);

async function boot(): Promise<void> {
  resizeCanvas();
  try {
    const tiles = await api.tiles();
    for (const t of tiles) {
      const opt = document.createElement("option");
      opt.value = t.id;
      opt.textContent = `${t.id} (${t.segments} segments)`;
      tileSelect.appendChild(opt);
    }
    tileSelect.addEventListener("change", () => {
      const info = tiles.find((t) => t.id === tileSelect.value);
      if (info) void loadTile(info);
    });
    if (tiles.length > 0) await loadTile(tiles[0]);
  } catch (err) {
    toastBox.textContent = `service unreachable: ${err}`;
    toastBox.classList.add("visible", "error");
  }
}

void boot();
