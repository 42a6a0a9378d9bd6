import init, { fitCurve, priorSurface, dynamicsEnsemble } from "./pkg/hiergp_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function timed(statusId, f) {
  const t0 = performance.now();
  try {
    f();
    $(statusId).textContent = `done in ${((performance.now() - t0) / 1000).toFixed(2)} s`;
  } catch (e) {
    $(statusId).textContent = `error: ${e.message ?? e}`;
  }
}

// ---- 1-D emulation

const curve = $("curve");
const cctx = curve.getContext("2d");
let obs = [];
let fit = null;
const yRange = [-2.5, 2.5];

function seedData() {
  obs = [];
  for (let i = 0; i < 25; i++) {
    const x = (i + 0.5) / 25;
    obs.push([x, Math.sin(2 * Math.PI * x) + 0.5 * Math.sin(6 * Math.PI * x) + 0.1 * (Math.random() - 0.5)]);
  }
  fit = null;
}

const toPx = (x, y) => [x * curve.width, curve.height * (1 - (y - yRange[0]) / (yRange[1] - yRange[0]))];
const fromPx = (px, py) => [px / curve.width, yRange[0] + (1 - py / curve.height) * (yRange[1] - yRange[0])];

function drawCurve() {
  cctx.clearRect(0, 0, curve.width, curve.height);
  if (fit) {
    cctx.fillStyle = "rgba(70,130,180,0.25)";
    cctx.beginPath();
    for (let i = 0; i < fit.length; i += 4) cctx.lineTo(...toPx(fit[i], fit[i + 3]));
    for (let i = fit.length - 4; i >= 0; i -= 4) cctx.lineTo(...toPx(fit[i], fit[i + 2]));
    cctx.fill();
    cctx.strokeStyle = "steelblue";
    cctx.lineWidth = 2;
    cctx.beginPath();
    for (let i = 0; i < fit.length; i += 4) cctx.lineTo(...toPx(fit[i], fit[i + 1]));
    cctx.stroke();
  }
  cctx.fillStyle = "#222";
  for (const [x, y] of obs) {
    const [px, py] = toPx(x, y);
    cctx.beginPath();
    cctx.arc(px, py, 3, 0, 2 * Math.PI);
    cctx.fill();
  }
}

curve.addEventListener("click", (ev) => {
  const r = curve.getBoundingClientRect();
  const [x, y] = fromPx(ev.clientX - r.left, ev.clientY - r.top);
  if (ev.shiftKey && obs.length) {
    let best = 0;
    obs.forEach((o, i) => { if (Math.abs(o[0] - x) < Math.abs(obs[best][0] - x)) best = i; });
    obs.splice(best, 1);
  } else {
    obs.push([x, y]);
  }
  drawCurve();
});

$("curve-fit").onclick = () => timed("curve-status", () => {
  const xs = new Float64Array(obs.map((o) => o[0]));
  const ys = new Float64Array(obs.map((o) => o[1]));
  fit = fitCurve(xs, ys, num("curve-k"), num("curve-iter"), (Math.random() * 2 ** 32) >>> 0, $("curve-hs").checked);
  drawCurve();
});
$("curve-reset").onclick = () => { seedData(); drawCurve(); };

// ---- prior surface

const prior = $("prior");
const pctx = prior.getContext("2d");

function color(t) {
  // blue to white to red
  const a = Math.max(0, Math.min(1, t));
  const r = a < 0.5 ? 2 * a : 1;
  const b = a < 0.5 ? 1 : 2 * (1 - a);
  const g = 1 - Math.abs(2 * a - 1);
  return [255 * r, 255 * (0.3 + 0.7 * g), 255 * b];
}

$("prior-draw").onclick = () => timed("prior-status", () => {
  const grid = 90;
  const v = priorSurface(num("prior-k"), num("prior-alpha"), grid, (Math.random() * 2 ** 32) >>> 0);
  const m = Math.max(...v.map(Math.abs)) || 1;
  const img = pctx.createImageData(grid, grid);
  for (let i = 0; i < grid; i++) {
    for (let j = 0; j < grid; j++) {
      // x1 left to right, x2 bottom to top
      const [r, g, b] = color(0.5 + 0.5 * v[j * grid + i] / m);
      const p = 4 * ((grid - 1 - i) * grid + j);
      img.data.set([r, g, b, 255], p);
    }
  }
  const tmp = new OffscreenCanvas(grid, grid);
  tmp.getContext("2d").putImageData(img, 0, 0);
  pctx.imageSmoothingEnabled = false;
  pctx.drawImage(tmp, 0, 0, prior.width, prior.height);
});

// ---- dynamics ensemble

const dyn = $("dyn");
const dctx = dyn.getContext("2d");

$("dyn-run").onclick = () => timed("dyn-status", () => {
  const system = $("dyn-system").value;
  const q = system === "lorenz" ? 3 : 2;
  const steps = num("dyn-steps");
  const count = num("dyn-count");
  const flat = dynamicsEnsemble(system, 0.01, 2000, count, steps, (Math.random() * 2 ** 32) >>> 0);
  const stride = (steps + 1) * q;
  const paths = [];
  for (let s = 0; s <= count; s++) paths.push(flat.subarray(s * stride, (s + 1) * stride));
  // first coordinate against time
  const finite = Array.from(flat).filter((v, i) => i % q === 0 && Number.isFinite(v));
  const lo = Math.min(...finite), hi = Math.max(...finite);
  const px = (i) => (i / steps) * dyn.width;
  const py = (v) => dyn.height * (1 - (v - lo) / (hi - lo || 1));
  dctx.clearRect(0, 0, dyn.width, dyn.height);
  paths.forEach((p, s) => {
    dctx.strokeStyle = s === 0 ? "#111" : "rgba(200,60,40,0.35)";
    dctx.lineWidth = s === 0 ? 2 : 1;
    dctx.beginPath();
    for (let i = 0; i <= steps; i++) {
      const v = p[i * q];
      if (!Number.isFinite(v)) break;
      dctx.lineTo(px(i), py(v));
    }
    dctx.stroke();
  });
});

await init();
seedData();
drawCurve();
$("prior-draw").click();
