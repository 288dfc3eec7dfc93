// Plain-canvas charting for the demo page; no framework, no build step
// beyond wasm-pack. Build the module with
//   wasm-pack build crates/wasm --target web --out-dir www/pkg
// then serve crates/wasm/www with any static file server.

import init, { drift_panel, online_run, stopping_trace } from "./pkg/oes_wasm.js";

const BLUE = "#0b6e99";
const RED = "#c94f2e";
const GRAY = "#888";
const GOLD = "#b58900";

function sized(canvas) {
  const dpr = window.devicePixelRatio || 1;
  const cssW = canvas.clientWidth || canvas.width;
  const cssH = canvas.clientHeight || canvas.height;
  canvas.width = cssW * dpr;
  canvas.height = cssH * dpr;
  const ctx = canvas.getContext("2d");
  ctx.setTransform(dpr, 0, 0, dpr, 0, 0);
  return { ctx, w: cssW, h: cssH };
}

function extent(arrays) {
  let lo = Infinity, hi = -Infinity;
  for (const a of arrays) for (const v of a) {
    if (Number.isFinite(v)) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  }
  if (!(hi > lo)) { lo -= 1; hi += 1; }
  const pad = (hi - lo) * 0.06;
  return [lo - pad, hi + pad];
}

function lineChart(canvas, series, opts = {}) {
  const { ctx, w, h } = sized(canvas);
  const mL = 44, mR = 8, mT = 8, mB = 20;
  ctx.clearRect(0, 0, w, h);
  const n = Math.max(...series.map(s => s.y.length), 2);
  const [lo, hi] = opts.extent || extent(series.map(s => s.y));
  const px = i => mL + (w - mL - mR) * (i / (n - 1));
  const py = v => mT + (h - mT - mB) * (1 - (v - lo) / (hi - lo));

  ctx.strokeStyle = "#e4e4e4";
  ctx.fillStyle = "#999";
  ctx.font = "11px system-ui";
  const ticks = 4;
  for (let k = 0; k <= ticks; k++) {
    const v = lo + (hi - lo) * k / ticks;
    ctx.beginPath();
    ctx.moveTo(mL, py(v));
    ctx.lineTo(w - mR, py(v));
    ctx.stroke();
    ctx.fillText(v.toFixed(2), 4, py(v) + 3);
  }
  if (lo < 0 && hi > 0) {
    ctx.strokeStyle = "#bbb";
    ctx.beginPath();
    ctx.moveTo(mL, py(0));
    ctx.lineTo(w - mR, py(0));
    ctx.stroke();
  }

  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = s.width || 1.5;
    ctx.globalAlpha = s.alpha ?? 1;
    ctx.beginPath();
    s.y.forEach((v, i) => {
      if (i === 0) ctx.moveTo(px(i), py(v));
      else ctx.lineTo(px(i), py(v));
    });
    ctx.stroke();
    ctx.globalAlpha = 1;
  }

  if (opts.markerX != null) {
    ctx.strokeStyle = "#444";
    ctx.setLineDash([4, 3]);
    ctx.beginPath();
    ctx.moveTo(px(opts.markerX), mT);
    ctx.lineTo(px(opts.markerX), h - mB);
    ctx.stroke();
    ctx.setLineDash([]);
  }
}

const $ = id => document.getElementById(id);
const num = id => Number($(id).value);

function bind(ids, fn) {
  for (const id of ids) $(id).addEventListener("input", fn);
  fn();
}

function showVal(id, fmt = v => v) {
  $(`${id}-v`).textContent = fmt(num(id));
}

function redrawDrift() {
  showVal("d-pers", v => v.toFixed(2));
  showVal("d-innov", v => v.toFixed(2));
  showVal("d-t");
  const data = JSON.parse(drift_panel(BigInt(num("d-seed")), num("d-t"), 6, num("d-pers"), num("d-innov")));
  if (data.error) { console.error(data.error); return; }
  const paths = [];
  const m = data.psi[0].length;
  for (let j = 0; j < m; j++) {
    paths.push({
      y: data.psi.map(row => row[j]),
      color: `hsl(${200 + j * 40} 60% 45%)`,
      width: 1.3,
    });
  }
  lineChart($("drift-chart"), paths);
}

function redrawStop() {
  showVal("s-gap");
  showVal("s-innov", v => v.toFixed(2));
  const eta = Math.pow(10, num("s-eta"));
  $("s-eta-v").textContent = eta.toFixed(3);
  const data = JSON.parse(stopping_trace(BigInt(num("s-seed")), 60, 8, eta, num("s-gap"), num("s-innov")));
  if (data.error) { console.error(data.error); return; }
  lineChart($("stop-chart"), [
    { y: data.val_loss, color: BLUE, width: 2 },
    { y: data.train_loss, color: RED, width: 1.2, alpha: 0.8 },
  ], { markerX: Math.max(data.tau_best - 1, 0) });
  $("s-tau").textContent = data.tau_best;
  $("s-stop").textContent = data.stopped_at;
}

function redrawOnline() {
  showVal("o-t");
  showVal("o-innov", v => v.toFixed(2));
  const eta = Math.pow(10, num("o-eta"));
  $("o-eta-v").textContent = eta.toFixed(3);
  const data = JSON.parse(online_run(BigInt(num("o-seed")), num("o-t"), 60, 8, eta, 1e-4, num("o-innov")));
  if (data.error) { console.error(data.error); return; }
  lineChart($("online-chart"), [
    { y: data.ic_online, color: BLUE, width: 2 },
    { y: data.ic_frozen, color: RED, width: 1.4 },
  ], { extent: [-1, 1] });
  lineChart($("tau-chart"), [
    { y: data.tau_prime.map(Number), color: GRAY, width: 1.2 },
    { y: data.passes.map(Number), color: GOLD, width: 2 },
  ]);
  $("o-mean-on").textContent = data.mean_ic_online.toFixed(3);
  $("o-mean-fr").textContent = data.mean_ic_frozen.toFixed(3);
}

async function main() {
  await init();
  document.getElementById("loading").remove();
  bind(["d-pers", "d-innov", "d-t", "d-seed"], redrawDrift);
  bind(["s-gap", "s-eta", "s-innov", "s-seed"], redrawStop);
  bind(["o-t", "o-eta", "o-innov", "o-seed"], redrawOnline);
}

main();
