// Build with: wasm-pack build crates/wasm-demo --target web --out-dir www/pkg
import init, { Demo } from "./pkg/chaoslab_wasm.js";

const $ = (id) => document.getElementById(id);
let demo = null;

function plot(canvas, series, colors, bars = false) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  let lo = Infinity, hi = -Infinity;
  for (const s of series) for (const v of s) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  if (bars) lo = 0;
  if (hi === lo) hi = lo + 1;
  const y = (v) => h - 4 - ((v - lo) / (hi - lo)) * (h - 8);
  series.forEach((s, k) => {
    ctx.strokeStyle = ctx.fillStyle = colors[k];
    if (bars) {
      const bw = w / s.length;
      s.forEach((v, i) => ctx.fillRect(i * bw, y(v), Math.max(bw - 1, 1), h - 4 - y(v)));
      return;
    }
    ctx.beginPath();
    s.forEach((v, i) => {
      const x = (i / (s.length - 1)) * w;
      i ? ctx.lineTo(x, y(v)) : ctx.moveTo(x, y(v));
    });
    ctx.stroke();
  });
}

function drawField() {
  const nfreq = +$("nfreq").value, level = +$("level").value;
  $("nfreq-v").textContent = nfreq;
  $("level-v").textContent = level;
  const pts = 860;
  plot($("field"), [demo.series(nfreq, pts), demo.tree_walk(level, pts)], ["#888", "#c0392b"]);
  const [count, widest] = demo.level_info(level);
  $("info").textContent = `level ${level}: ${count} intervals, widest ${widest.toExponential(3)}`;
}

function drawMass() {
  const gamma = +$("gamma").value, level = +$("level").value, bins = +$("bins").value;
  $("gamma-v").textContent = gamma.toFixed(2);
  const m = demo.masses(gamma, level, bins);
  plot($("mass"), [Array.from(m.slice(0, bins))], ["#2c3e50"], true);
  $("total").textContent = `total mass ${m[bins].toFixed(4)}`;
}

function resample() {
  demo = new Demo($("law").value, +$("seed").value);
  drawField();
  drawMass();
}

await init();
$("law").onchange = $("seed").onchange = resample;
$("nfreq").oninput = drawField;
$("level").onchange = () => { drawField(); drawMass(); };
$("gamma").onchange = $("bins").onchange = drawMass;
resample();
