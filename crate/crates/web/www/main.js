import init, { Demo, sweep } from "./pkg/obilc_web.js";

const $ = (id) => document.getElementById(id);
const MAGNIFY = 20;
const SWEEP_C = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

let stopRequested = false;

function options() {
  return {
    surrogate: $("surrogate").value,
    c: Number($("c").value),
    eta0: Number($("eta0").value),
    noise: Number($("noise").value),
    samples: Math.round(Number($("samples").value)),
    iterations: Math.round(Number($("iterations").value)),
  };
}

function busy(on) {
  $("run").disabled = on;
  $("sweep").disabled = on;
  $("stop").disabled = !on;
  stopRequested = false;
}

const frame = () => new Promise((r) => requestAnimationFrame(r));

// Plot box with margins; maps data to pixels.
function axes(canvas, xr, yr, logY) {
  const ctx = canvas.getContext("2d");
  const m = { l: 52, r: 12, t: 12, b: 30 };
  const w = canvas.width - m.l - m.r;
  const h = canvas.height - m.t - m.b;
  const fy = logY ? Math.log10 : (v) => v;
  const [y0, y1] = [fy(yr[0]), fy(yr[1])];
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(m.l, m.t, w, h);
  return {
    ctx,
    x: (v) => m.l + ((v - xr[0]) / (xr[1] - xr[0] || 1)) * w,
    y: (v) => m.t + h - ((fy(v) - y0) / (y1 - y0 || 1)) * h,
    m, w, h,
  };
}

function label(p, text, x, y, align = "center") {
  p.ctx.fillStyle = "#444";
  p.ctx.font = "11px system-ui";
  p.ctx.textAlign = align;
  p.ctx.fillText(text, x, y);
}

function polyline(p, xs, ys, color, dots = false) {
  const { ctx } = p;
  ctx.strokeStyle = color;
  ctx.fillStyle = color;
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(p.x(x), p.y(ys[i])) : ctx.moveTo(p.x(x), p.y(ys[i]))));
  ctx.stroke();
  if (dots) xs.forEach((x, i) => ctx.fillRect(p.x(x) - 2, p.y(ys[i]) - 2, 4, 4));
}

function logRange(values) {
  const lo = Math.min(...values), hi = Math.max(...values);
  return [10 ** Math.floor(Math.log10(lo)), 10 ** Math.ceil(Math.log10(hi))];
}

function logTicks(p, yr) {
  for (let e = Math.log10(yr[0]); e <= Math.log10(yr[1]); e++) {
    label(p, String(10 ** e), p.m.l - 6, p.y(10 ** e) + 4, "right");
  }
}

function drawConvergence(rms) {
  const ks = rms.map((_, i) => i + 1);
  const yr = logRange(rms);
  const p = axes($("convergence"), [1, Math.max(2, rms.length)], yr, true);
  logTicks(p, yr);
  label(p, "1", p.x(1), p.m.t + p.h + 16);
  label(p, String(Math.max(2, rms.length)), p.x(Math.max(2, rms.length)), p.m.t + p.h + 16);
  label(p, "trial", p.m.l + p.w / 2, p.m.t + p.h + 16);
  polyline(p, ks, rms, "#1f77b4", true);
}

function drawXy(xy) {
  const canvas = $("xy");
  const t = xy.target;
  const xs = t.map((q) => q[0]), ys = t.map((q) => q[1]);
  const pad = 0.6e-3;
  let xr = [Math.min(...xs) - pad, Math.max(...xs) + pad];
  let yr = [Math.min(...ys) - pad, Math.max(...ys) + pad];
  // Equal scaling on both axes.
  const aspect = (canvas.width - 64) / (canvas.height - 42);
  const span = Math.max(xr[1] - xr[0], (yr[1] - yr[0]) * aspect);
  const cx = (xr[0] + xr[1]) / 2, cy = (yr[0] + yr[1]) / 2;
  xr = [cx - span / 2, cx + span / 2];
  yr = [cy - span / aspect / 2, cy + span / aspect / 2];
  const p = axes(canvas, xr, yr, false);
  const enlarged = (path) => path.map((q, i) => [t[i][0] + MAGNIFY * (q[0] - t[i][0]), t[i][1] + MAGNIFY * (q[1] - t[i][1])]);
  const draw = (path, color) => polyline(p, path.map((q) => q[0]), path.map((q) => q[1]), color);
  draw(t, "#aaa");
  draw(enlarged(xy.initial), "#ff7f0e");
  draw(enlarged(xy.latest), "#1f77b4");
  label(p, "1 mm", p.x(xr[0] + 0.5e-3), p.m.t + p.h + 16);
  p.ctx.strokeStyle = "#444";
  p.ctx.beginPath();
  p.ctx.moveTo(p.x(xr[0]), p.m.t + p.h + 4);
  p.ctx.lineTo(p.x(xr[0] + 1e-3), p.m.t + p.h + 4);
  p.ctx.stroke();
}

function drawSweep(points, last) {
  const all = points.flatMap((q) => [q.r10, q.rLast]).filter((v) => v > 0);
  if (!all.length) return;
  const yr = logRange(all);
  const p = axes($("sweepplot"), [0, 1], yr, true);
  logTicks(p, yr);
  for (const c of [0, 0.5, 1]) label(p, String(c), p.x(c), p.m.t + p.h + 16);
  label(p, "c", p.x(0.25), p.m.t + p.h + 16);
  const cs = points.map((q) => q.c);
  polyline(p, cs, points.map((q) => q.r10), "#ff7f0e", true);
  polyline(p, cs, points.map((q) => q.rLast), "#1f77b4", true);
  label(p, `after ${last}`, p.m.l + p.w - 4, p.m.t + 14, "right");
}

async function run() {
  const o = options();
  busy(true);
  try {
    const demo = new Demo(o.samples, o.surrogate, o.noise, o.eta0, o.c);
    const rms = [];
    for (let i = 0; i < o.iterations && !stopRequested; i++) {
      const r = JSON.parse(demo.step());
      rms.push(r.rms_um);
      $("status").textContent =
        `trial ${r.k}: rms ${r.rms_um.toFixed(2)} µm, η ${r.eta.toFixed(3)}, ‖Δz‖ ${r.step_norm.toExponential(2)}, max violation ${r.max_violation.toExponential(1)}`;
      drawConvergence(rms);
      drawXy(JSON.parse(demo.xy()));
      await frame();
    }
    demo.free();
  } catch (e) {
    $("status").textContent = `error: ${e.message ?? e}`;
  }
  busy(false);
}

async function runSweep() {
  const o = options();
  busy(true);
  const points = [];
  try {
    for (const c of SWEEP_C) {
      if (stopRequested) break;
      $("status").textContent = `sweep: c = ${c}`;
      await frame();
      const [curve] = JSON.parse(sweep(o.samples, [c], o.iterations));
      const r = curve.rms_um;
      points.push({ c, r10: r[Math.min(9, r.length - 1)], rLast: r[r.length - 1] });
      drawSweep(points, o.iterations);
    }
    const best = points.reduce((a, b) => (b.rLast < a.rLast ? b : a));
    $("status").textContent = `sweep done: lowest rms after ${o.iterations} trials at c = ${best.c} (${best.rLast.toFixed(2)} µm)`;
  } catch (e) {
    $("status").textContent = `error: ${e.message ?? e}`;
  }
  busy(false);
}

await init();
$("run").addEventListener("click", run);
$("sweep").addEventListener("click", runSweep);
$("stop").addEventListener("click", () => (stopRequested = true));
$("status").textContent = "ready";
