import init, { Demo } from "./pkg/spectral_attr_wasm.js";

const $ = (id) => document.getElementById(id);
const METHODS = ["sig", "ig", "gxi", "blur", "dct", "laplacian"];
const FRAMES = 9;

function drawImage(canvas, values, side, colormap) {
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(side, side);
  for (let i = 0; i < side * side; i++) {
    const v = Math.max(0, Math.min(1, values[i]));
    const [r, g, b] = colormap ? colormap(v) : [v * 255, v * 255, v * 255];
    img.data.set([r, g, b, 255], 4 * i);
  }
  ctx.putImageData(img, 0, 0);
}

const heat = (v) => [255 * Math.min(1, 2 * v), 255 * Math.max(0, 2 * v - 1), 64 * (1 - v)];

function figure(label, side, colormap, values) {
  const fig = document.createElement("figure");
  const c = document.createElement("canvas");
  c.className = "img";
  c.width = c.height = side;
  drawImage(c, values, side, colormap);
  fig.append(c, document.createElement("br"), label);
  return fig;
}

function plotLines(canvas, lines, yMax) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#eee";
  ctx.strokeRect(30, 10, w - 40, h - 30);
  ctx.fillStyle = "#666";
  ctx.fillText("0", 18, h - 18);
  ctx.fillText(yMax.toPrecision(2), 2, 18);
  ctx.fillText("α = 0", 30, h - 4);
  ctx.fillText("1", w - 14, h - 4);
  for (const { ys, color } of lines) {
    ctx.strokeStyle = color;
    ctx.beginPath();
    ys.forEach((y, i) => {
      const px = 30 + (i / (ys.length - 1)) * (w - 40);
      const py = h - 20 - (y / yMax) * (h - 30);
      i ? ctx.lineTo(px, py) : ctx.moveTo(px, py);
    });
    ctx.stroke();
  }
}

function render(demo) {
  const omega = Number($("omega").value);
  const schedule = $("schedule").value;
  $("omega-value").textContent = omega.toFixed(2);
  const side = demo.side();
  const n = side * side;

  const frames = demo.pathFrames(omega, schedule, FRAMES);
  $("frames").replaceChildren(
    ...Array.from({ length: FRAMES }, (_, k) =>
      figure(`α=${(k / (FRAMES - 1)).toFixed(3)}`, side, null, frames.subarray(k * n, (k + 1) * n)))
  );

  const sig = demo.frequencyTrace("spectral", omega, schedule, 50);
  const lin = demo.frequencyTrace("linear", omega, schedule, 50);
  const yMax = Math.max(1e-6, ...sig, ...lin);
  plotLines($("trace"), [{ ys: Array.from(lin), color: "#999" }, { ys: Array.from(sig), color: "#1f5fbf" }], yMax);

  const samples = 101;
  const curves = demo.gateCurves(omega, schedule, samples);
  const r = curves.length / (samples + 1);
  const lines = [];
  for (let c = 0; c < r; c++) {
    const shade = Math.round(200 * (1 - curves[c]));
    lines.push({ ys: Array.from(curves.subarray(r + c * samples, r + (c + 1) * samples)), color: `rgb(${shade},${shade},${shade})` });
  }
  plotLines($("gates"), lines.reverse(), 1);

  const steps = Math.max(1, Math.min(2000, Number($("steps").value) || 100));
  $("heatmaps").replaceChildren(
    ...METHODS.map((m) => {
      const h = demo.heatmap(m, omega, steps);
      const residual = h[n];
      return figure(`${m} (residual ${residual.toExponential(1)})`, side, heat, h.subarray(0, n));
    })
  );
}

async function main() {
  await init();
  const demo = new Demo(7);
  const update = () => {
    try {
      render(demo);
      $("status").textContent = "";
    } catch (e) {
      $("status").textContent = String(e);
    }
  };
  for (const id of ["omega", "schedule", "steps"]) $(id).addEventListener("input", update);
  update();
}

main().catch((e) => ($("status").textContent = `Failed to load: ${e}`));
