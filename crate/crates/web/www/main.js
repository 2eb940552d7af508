import init, { Viewer } from "./pkg/zlp_web.js";

const PRESETS = {
  "vMF, kappa 20": { dimension: 3, preset: { family: "vmf", mu: [0.4, 0.2, 0.9], kappa: 20 } },
  "Kent, kappa 80": { dimension: 3, preset: { family: "kent", mu: [0, 0, 1], kappa: 80, u: 1.5 } },
  "Bingham": { dimension: 3, preset: { family: "bingham", mu: [1, 0, 1], scales: [0.3, 1, 3] } },
  "FB6": { dimension: 3, preset: { family: "fb6", mu: [0, 1, 1], kappa: 15, u: 1.2, scales: [0.5, 1, 2] } },
  "Uniform": { dimension: 3 },
};

const $ = (id) => document.getElementById(id);
let viewer = null;
let url = null;

function fail(e) {
  $("status").textContent = String(e?.message ?? e);
}

function load() {
  viewer?.free();
  viewer = new Viewer($("spec").value);
  $("status").textContent = "";
}

function render() {
  try {
    load();
    const res = Number($("res").value);
    const proj = document.querySelector("input[name=proj]:checked").value;
    const rgba = proj === "equirect" ? viewer.render_equirect(res)
      : proj === "mollweide" ? viewer.render_mollweide(res)
      : viewer.render_ortho(Number($("lon").value), Number($("lat").value), Number($("fov").value), res);
    const canvas = $("map");
    canvas.width = viewer.width();
    canvas.height = viewer.height();
    canvas.getContext("2d").putImageData(new ImageData(new Uint8ClampedArray(rgba), canvas.width, canvas.height), 0, 0);
  } catch (e) {
    fail(e);
  }
}

function probe(ev) {
  if (!viewer || !viewer.width()) return;
  const canvas = $("map");
  const box = canvas.getBoundingClientRect();
  const px = Math.floor((ev.clientX - box.left) * canvas.width / box.width);
  const py = Math.floor((ev.clientY - box.top) * canvas.height / box.height);
  try {
    const r = viewer.probe(px, py);
    $("probe").textContent = r.length
      ? `lon ${r[0].toFixed(2)}°  lat ${r[1].toFixed(2)}°  log p ${r[2].toFixed(6)}  p ${Math.exp(r[2]).toExponential(4)}`
      : "off the map";
  } catch (e) {
    fail(e);
  }
}

function sample() {
  try {
    load();
    const csv = viewer.sample_csv(Number($("n").value), BigInt($("seed").value));
    const rows = csv.trim().split("\n").slice(1).map((l) => l.split(",").map(Number));
    const meanLogp = rows.reduce((s, r) => s + r[r.length - 1], 0) / rows.length;
    if (url) URL.revokeObjectURL(url);
    url = URL.createObjectURL(new Blob([csv], { type: "text/csv" }));
    $("download").href = url;
    $("download").hidden = false;
    $("summary").textContent = `${rows.length} points in D = ${viewer.dim()}, mean log p ${meanLogp.toFixed(4)}`;
  } catch (e) {
    fail(e);
  }
}

await init();
for (const name of Object.keys(PRESETS)) $("preset").add(new Option(name, name));
$("preset").onchange = () => {
  $("spec").value = JSON.stringify(PRESETS[$("preset").value], null, 1);
  render();
};
$("render").onclick = render;
$("sample").onclick = sample;
$("map").onclick = probe;
$("preset").onchange();
