import init, { manipulationCurve, audit, simulate, exampleScenarios } from "./pkg/rideshare_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);

function drawCurve() {
  const note = $("curve-note");
  let data;
  try {
    data = JSON.parse(manipulationCurve($("curve-mech").value, num("alpha"), num("beta"), num("gate"), num("pd"), num("pr"), 201));
  } catch (e) {
    note.className = "err";
    note.textContent = String(e);
    return;
  }
  note.className = "";
  const canvas = $("plot");
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 40;
  const ys = data.curve.map((c) => c.utility).concat([data.truthful_utility, 0]);
  let lo = Math.min(...ys), hi = Math.max(...ys);
  if (hi - lo < 1e-9) { lo -= 1; hi += 1; }
  const x = (p) => pad + p * (w - 2 * pad);
  const y = (u) => h - pad - ((u - lo) / (hi - lo)) * (h - 2 * pad);
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(pad, y(0)); ctx.lineTo(w - pad, y(0));
  ctx.moveTo(pad, pad); ctx.lineTo(pad, h - pad);
  ctx.stroke();
  ctx.fillStyle = "#333";
  ctx.fillText(hi.toFixed(2), 4, y(hi) + 4);
  ctx.fillText(lo.toFixed(2), 4, y(lo));
  ctx.fillText("reported p = 0", pad, h - pad + 16);
  ctx.fillText("1", w - pad - 4, h - pad + 16);
  ctx.setLineDash([4, 4]);
  ctx.strokeStyle = "#2a7";
  ctx.beginPath();
  ctx.moveTo(pad, y(data.truthful_utility)); ctx.lineTo(w - pad, y(data.truthful_utility));
  ctx.stroke();
  ctx.setLineDash([]);
  ctx.strokeStyle = "#c33";
  ctx.lineWidth = 2;
  ctx.beginPath();
  data.curve.forEach((c, i) => (i ? ctx.lineTo : ctx.moveTo).call(ctx, x(c.p_hat), y(c.utility)));
  ctx.stroke();
  ctx.lineWidth = 1;
  const best = data.curve.reduce((a, b) => (b.utility > a.utility ? b : a));
  const gain = best.utility - data.truthful_utility;
  note.textContent = gain > 1e-9
    ? `Reporting ${best.p_hat.toFixed(3)} gains ${gain.toFixed(4)} over the truth (dashed line).`
    : "No report beats the truth (dashed line).";
}

function run(out, f) {
  try {
    out.className = "";
    out.textContent = JSON.stringify(JSON.parse(f()), null, 2);
  } catch (e) {
    out.className = "err";
    out.textContent = String(e);
  }
}

await init();
const examples = JSON.parse(exampleScenarios());
for (const name of Object.keys(examples)) {
  const opt = document.createElement("option");
  opt.textContent = name;
  $("example").appendChild(opt);
}
$("example").value = "threshold-pair";
$("scenario").value = examples["threshold-pair"];
$("example").onchange = () => { $("scenario").value = examples[$("example").value]; };

for (const id of ["curve-mech", "alpha", "beta", "gate", "pd", "pr"]) $(id).oninput = drawCurve;
drawCurve();

$("run-audit").onclick = () =>
  run($("audit-out"), () => audit($("scenario").value, $("audit-mech").value, $("notion").value, parseInt($("grid").value, 10)));
$("run-sim").onclick = () =>
  run($("sim-out"), () => simulate($("scenario").value, $("sim-mech").value, parseInt($("trials").value, 10), parseInt($("seed").value, 10)));
