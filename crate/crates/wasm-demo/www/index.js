import init, { hue_shift, jpeg_recompress, band_thresholds, color_report } from "./pkg/patchaudit_wasm.js";

const MAX_SIDE = 256;
const $ = (id) => document.getElementById(id);

let image = null; // { rgba: Uint8ClampedArray, width, height }

function draw(canvas, rgba, width, height) {
  canvas.width = width;
  canvas.height = height;
  canvas.getContext("2d").putImageData(new ImageData(new Uint8ClampedArray(rgba), width, height), 0, 0);
}

function fmt(v) {
  return Number.isNaN(v) ? "n/a" : v.toFixed(3);
}

function sample() {
  const w = 128, h = 128;
  const rgba = new Uint8ClampedArray(w * h * 4);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      const i = (y * w + x) * 4;
      const wave = 30 * Math.sin(x * 0.21 + y * 0.07) + 20 * Math.sin(y * 0.33 - x * 0.05);
      rgba[i] = 190 + wave + (Math.random() - 0.5) * 20;
      rgba[i + 1] = 110 + 0.6 * wave + (Math.random() - 0.5) * 20;
      rgba[i + 2] = 200 - 0.4 * wave + (Math.random() - 0.5) * 20;
      rgba[i + 3] = 255;
    }
  }
  return { rgba, width: w, height: h };
}

function fromFile(file) {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => {
      const scale = Math.min(1, MAX_SIDE / Math.max(img.width, img.height));
      const width = Math.max(1, Math.round(img.width * scale));
      const height = Math.max(1, Math.round(img.height * scale));
      const canvas = document.createElement("canvas");
      canvas.width = width;
      canvas.height = height;
      const ctx = canvas.getContext("2d");
      ctx.drawImage(img, 0, 0, width, height);
      URL.revokeObjectURL(img.src);
      resolve({ rgba: ctx.getImageData(0, 0, width, height).data, width, height });
    };
    img.onerror = () => reject(new Error("could not decode " + file.name));
    img.src = URL.createObjectURL(file);
  });
}

function guarded(fn) {
  return () => {
    if (!image) return;
    try {
      $("error").textContent = "";
      fn();
    } catch (e) {
      $("error").textContent = String(e.message || e);
    }
  };
}

const updateHue = guarded(() => {
  const deg = Number($("hue").value);
  $("hue-value").textContent = deg;
  draw($("hue-out"), hue_shift(image.rgba, image.width, image.height, deg), image.width, image.height);
});

const updateJpeg = guarded(() => {
  const q = Number($("quality").value);
  $("quality-value").textContent = q;
  const report = jpeg_recompress(image.rgba, image.width, image.height, q);
  draw($("jpeg-out"), report.rgba, image.width, image.height);
  $("block-before").textContent = `${fmt(report.before)} (${report.band_before})`;
  $("block-after").textContent = `${fmt(report.after)} (${report.band_after})`;
  report.free();
});

function drawHistogram(canvas, hist, bins) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const peak = Math.max(...hist, 1e-12);
  const colors = ["rgba(200,30,30,0.55)", "rgba(30,160,30,0.55)", "rgba(30,60,220,0.55)"];
  const barW = canvas.width / bins;
  for (let c = 0; c < 3; c++) {
    ctx.fillStyle = colors[c];
    for (let b = 0; b < bins; b++) {
      const v = hist[c * bins + b] / peak;
      ctx.fillRect(b * barW, canvas.height * (1 - v), Math.max(1, barW - 1), canvas.height * v);
    }
  }
}

const updateColor = guarded(() => {
  const bins = Number($("bins").value);
  const threshold = Number($("threshold").value);
  const report = color_report(image.rgba, image.width, image.height, bins, threshold);
  drawHistogram($("histogram"), report.histogram, bins);
  $("mean").textContent = Array.from(report.mean, (v) => v.toFixed(1)).join(", ");
  $("at-max").textContent = Array.from(report.at_max, (v) => (100 * v).toFixed(2) + "%").join(", ");
  $("clipped").textContent = report.clipped ? "flagged" : "clean";
  report.free();
});

function load(next) {
  image = next;
  draw($("input"), image.rgba, image.width, image.height);
  updateHue();
  updateJpeg();
  updateColor();
}

await init();
$("thresholds").textContent = Array.from(band_thresholds(), fmt).join(" / ");
$("hue").addEventListener("input", updateHue);
$("quality").addEventListener("input", updateJpeg);
$("bins").addEventListener("change", updateColor);
$("threshold").addEventListener("change", updateColor);
$("sample").addEventListener("click", () => load(sample()));
$("file").addEventListener("change", async (e) => {
  const file = e.target.files[0];
  if (!file) return;
  try {
    load(await fromFile(file));
  } catch (err) {
    $("error").textContent = err.message;
  }
});
load(sample());
