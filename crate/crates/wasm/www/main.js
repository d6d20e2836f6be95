import init, { fit_paths, impulse_responses, stability_test } from "./pkg/tvvar_wasm.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf", "#7f7f7f"];

function field(sec, name) {
  const el = sec.querySelector(`[name=${name}]`);
  if (el.type === "checkbox") return el.checked;
  if (el.tagName === "SELECT") return el.value;
  return Number(el.value);
}

function status(sec, msg, err = false) {
  const s = sec.querySelector(".status");
  s.textContent = msg;
  s.className = err ? "status err" : "status";
}

function frame(ctx, box, xr, yr) {
  const sx = (x) => box.x + ((x - xr[0]) / (xr[1] - xr[0])) * box.w;
  const sy = (y) => box.y + box.h - ((y - yr[0]) / (yr[1] - yr[0])) * box.h;
  ctx.strokeStyle = "#999";
  ctx.lineWidth = 1;
  ctx.strokeRect(box.x, box.y, box.w, box.h);
  if (yr[0] < 0 && yr[1] > 0) {
    ctx.beginPath();
    ctx.moveTo(box.x, sy(0));
    ctx.lineTo(box.x + box.w, sy(0));
    ctx.stroke();
  }
  return { sx, sy };
}

function line(ctx, xs, ys, map, color, dash = []) {
  ctx.strokeStyle = color;
  ctx.setLineDash(dash);
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(map.sx(x), map.sy(ys[i])) : ctx.moveTo(map.sx(x), map.sy(ys[i]))));
  ctx.stroke();
  ctx.setLineDash([]);
}

function band(ctx, xs, lo, hi, map, color) {
  ctx.fillStyle = color + "33";
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(map.sx(x), map.sy(hi[i])) : ctx.moveTo(map.sx(x), map.sy(hi[i]))));
  for (let i = xs.length - 1; i >= 0; i--) ctx.lineTo(map.sx(xs[i]), map.sy(lo[i]));
  ctx.fill();
}

function range(arrays) {
  const v = arrays.flat().filter(Number.isFinite);
  const lo = Math.min(...v), hi = Math.max(...v);
  const pad = 0.05 * (hi - lo || 1);
  return [lo - pad, hi + pad];
}

function drawFit(canvas, view) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const yr = range(view.paths.flatMap((p) => [p.lower, p.upper, p.truth]));
  const box = { x: 40, y: 10, w: canvas.width - 60, h: canvas.height - 30 };
  const map = frame(ctx, box, [0, 1], yr);
  ctx.fillStyle = "#444";
  ctx.fillText(yr[1].toFixed(2), 2, box.y + 10);
  ctx.fillText(yr[0].toFixed(2), 2, box.y + box.h);
  view.paths.forEach((p, k) => {
    const c = COLORS[k % COLORS.length];
    band(ctx, view.tau, p.lower, p.upper, map, c);
    line(ctx, view.tau, p.estimate, map, c);
    line(ctx, view.tau, p.truth, map, c, [5, 4]);
    ctx.fillStyle = c;
    ctx.fillText(`A1[${p.row + 1},${p.col + 1}]`, box.x + 8 + 70 * k, box.y + 14);
  });
}

function drawIrf(canvas, view) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const d = view.estimate.length;
  const cw = canvas.width / d, ch = canvas.height / d;
  for (let r = 0; r < d; r++) {
    for (let c = 0; c < d; c++) {
      const est = view.estimate[r][c], se = view.se[r][c], tr = view.truth[r][c];
      const hs = est.map((_, j) => j);
      const lo = est.map((v, j) => v - 1.96 * se[j]);
      const hi = est.map((v, j) => v + 1.96 * se[j]);
      const box = { x: c * cw + 8, y: r * ch + 16, w: cw - 16, h: ch - 26 };
      const map = frame(ctx, box, [0, Math.max(1, hs.length - 1)], range([lo, hi, tr]));
      band(ctx, hs, lo, hi, map, COLORS[0]);
      line(ctx, hs, est, map, COLORS[0]);
      line(ctx, hs, tr, map, "#000", [4, 3]);
      ctx.fillStyle = "#444";
      ctx.fillText(`variable ${r + 1}, shock ${c + 1}`, box.x, box.y - 4);
    }
  }
}

function drawNull(canvas, report) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const stats = report.bootstrap_stats;
  const xr = range([stats, [report.q_hat]]);
  const bins = 30;
  const counts = new Array(bins).fill(0);
  stats.forEach((v) => counts[Math.min(bins - 1, Math.floor(((v - xr[0]) / (xr[1] - xr[0])) * bins))]++);
  const box = { x: 10, y: 10, w: canvas.width - 20, h: canvas.height - 30 };
  const map = frame(ctx, box, xr, [0, Math.max(...counts)]);
  ctx.fillStyle = "#1f77b488";
  counts.forEach((n, i) => {
    const x0 = xr[0] + (i / bins) * (xr[1] - xr[0]);
    const x1 = xr[0] + ((i + 1) / bins) * (xr[1] - xr[0]);
    ctx.fillRect(map.sx(x0), map.sy(n), map.sx(x1) - map.sx(x0) - 1, map.sy(0) - map.sy(n));
  });
  ctx.strokeStyle = "#d62728";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(map.sx(report.q_hat), box.y);
  ctx.lineTo(map.sx(report.q_hat), box.y + box.h);
  ctx.stroke();
  ctx.lineWidth = 1;
  ctx.fillStyle = "#d62728";
  ctx.fillText("observed", map.sx(report.q_hat) + 4, box.y + 12);
}

function run(sec, task) {
  status(sec, "running...");
  // let the status paint before the synchronous call blocks
  setTimeout(() => {
    const t0 = performance.now();
    try {
      task();
      status(sec, `done in ${(performance.now() - t0).toFixed(0)} ms`);
    } catch (e) {
      status(sec, String(e), true);
    }
  }, 10);
}

await init();

const fitSec = document.getElementById("fit");
const doFit = () =>
  run(fitSec, () => {
    const view = JSON.parse(
      fit_paths(field(fitSec, "process"), field(fitSec, "t"), field(fitSec, "seed"), field(fitSec, "h"), 60)
    );
    drawFit(fitSec.querySelector("canvas"), view);
  });
fitSec.querySelector("button").addEventListener("click", doFit);

const irfSec = document.getElementById("irf");
const doIrf = () =>
  run(irfSec, () => {
    const view = JSON.parse(
      impulse_responses(
        field(irfSec, "process"),
        field(irfSec, "t"),
        field(irfSec, "seed"),
        field(irfSec, "h"),
        field(irfSec, "tau"),
        field(irfSec, "horizons"),
        field(irfSec, "longrun")
      )
    );
    drawIrf(irfSec.querySelector("canvas"), view);
  });
irfSec.querySelectorAll("input, select").forEach((el) => el.addEventListener("change", doIrf));

const testSec = document.getElementById("test");
testSec.querySelector("button").addEventListener("click", () =>
  run(testSec, () => {
    const report = JSON.parse(
      stability_test(field(testSec, "b"), field(testSec, "t"), field(testSec, "seed"), field(testSec, "hs"), field(testSec, "reps"))
    );
    drawNull(testSec.querySelector("canvas"), report);
    const lv = report.levels
      .map((l) => `  ${(100 * l.alpha).toFixed(0)}%: critical ${l.critical_value === null ? "-" : l.critical_value.toFixed(5)}  ${l.reject ? "reject" : "keep"}`)
      .join("\n");
    testSec.querySelector("pre").textContent =
      `Q = ${report.q_hat.toFixed(6)}   standardized = ${report.q_star.toFixed(3)}   p-value = ${report.p_value.toFixed(3)}\n${lv}`;
  })
);

doFit();
doIrf();
