import init, { inspectRules, penaltySurface, runExperiment } from "./pkg/dost_web.js";

const $ = (id) => document.getElementById(id);
const probs = new Map();

function labelNames() {
  return $("labels").value.split(",").map((s) => s.trim()).filter(Boolean);
}

function currentProbs(names) {
  return names.map((n) => probs.get(n) ?? 0.5);
}

function rebuildControls() {
  const names = labelNames();
  const box = $("sliders");
  box.innerHTML = "";
  for (const name of names) {
    const row = document.createElement("div");
    row.className = "slider";
    const value = probs.get(name) ?? 0.5;
    row.innerHTML = `<span>p(${name})</span><input type="range" min="0" max="1" step="0.01" value="${value}"><span>${value.toFixed(2)}</span>`;
    const input = row.querySelector("input");
    input.addEventListener("input", () => {
      probs.set(name, Number(input.value));
      row.lastChild.textContent = Number(input.value).toFixed(2);
      refresh();
    });
    box.appendChild(row);
  }
  for (const id of ["xlabel", "ylabel"]) {
    const sel = $(id);
    const keep = sel.value;
    sel.innerHTML = names.map((n) => `<option>${n}</option>`).join("");
    if (names.includes(keep)) sel.value = keep;
  }
  if ($("xlabel").value === $("ylabel").value && names.length > 1) $("ylabel").value = names[1];
}

function fmt(x) {
  return Number(x).toFixed(4);
}

function refresh() {
  const names = labelNames();
  const rules = $("rules").value;
  const labels = names.join(",");
  $("error").textContent = "";
  try {
    const view = JSON.parse(inspectRules(rules, labels, currentProbs(names)));
    const head = `<tr><th class="rule">rule</th><th>weight</th><th>penalty</th>${view.labels.map((l) => `<th>∂/∂p(${l})</th>`).join("")}</tr>`;
    const body = view.rules.map((r) =>
      `<tr class="${r.violated ? "violated" : ""}"><td class="rule">${r.text}</td><td>${r.weight}</td><td>${fmt(r.penalty)}</td>${r.grad.map((g) => `<td>${fmt(g)}</td>`).join("")}</tr>`
    ).join("");
    $("penalties").innerHTML = head + body;
    $("total").textContent = `domain loss ${fmt(view.domain_loss)} (red rows are violated when probabilities are rounded at 0.5)`;
    drawSurface(rules, labels, names);
  } catch (e) {
    $("error").textContent = String(e);
  }
}

function drawSurface(rules, labels, names) {
  const res = 64;
  const values = penaltySurface(rules, labels, $("xlabel").value, $("ylabel").value, currentProbs(names), res);
  const canvas = $("surface");
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(res, res);
  for (let r = 0; r < res; r++) {
    for (let c = 0; c < res; c++) {
      // flip vertically so p(y) grows upward
      const v = values[(res - 1 - r) * res + c];
      const k = 4 * (r * res + c);
      img.data[k] = Math.round(255 * Math.sqrt(v));
      img.data[k + 1] = Math.round(180 * v);
      img.data[k + 2] = Math.round(90 * (1 - v));
      img.data[k + 3] = 255;
    }
  }
  const tmp = new OffscreenCanvas(res, res);
  tmp.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(tmp, 0, 0, canvas.width, canvas.height);
}

function drawCurves(arms) {
  const canvas = $("curves");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const series = arms.map((a) => a.history.map((h) => h.total));
  const max = Math.max(...series.flat());
  const pad = 30;
  const w = canvas.width - 2 * pad;
  const h = canvas.height - 2 * pad;
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w, h);
  ctx.fillStyle = "#333";
  ctx.fillText(`total loss per epoch (max ${max.toFixed(3)})`, pad, pad - 8);
  const colors = ["#888", "#c40"];
  series.forEach((s, i) => {
    ctx.strokeStyle = colors[i % colors.length];
    ctx.beginPath();
    s.forEach((v, e) => {
      const x = pad + (w * e) / Math.max(1, s.length - 1);
      const y = pad + h - (h * v) / max;
      e === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
    });
    ctx.stroke();
    ctx.fillStyle = colors[i % colors.length];
    ctx.fillText(arms[i].name, pad + w - 60, pad + 14 + 14 * i);
  });
}

function runTraining() {
  const spec = {
    rules: $("rules").value,
    labels: labelNames().join(","),
    rho: Number($("rho").value),
    lambda: Number($("lambda").value),
    epochs: Number($("epochs").value),
    warmup_epochs: Math.min(Number($("warmup").value), Number($("epochs").value)),
    samples: Number($("samples").value),
  };
  $("error").textContent = "";
  $("run").disabled = true;
  setTimeout(() => {
    try {
      const out = JSON.parse(runExperiment(JSON.stringify(spec)));
      drawCurves(out.arms);
      const head = "<tr><th class='rule'>run</th><th>macro F1</th><th>micro F1</th><th>CVR</th><th>recovered</th><th>wrong</th><th>still masked</th></tr>";
      const rows = out.arms.map((a) =>
        `<tr><td class="rule">${a.name}</td><td>${fmt(a.macro_f1)}</td><td>${fmt(a.micro_f1)}</td><td>${fmt(a.cvr)}</td>` +
        `<td>${a.correction.n_corrected_right}/${a.correction.n_flipped}</td><td>${a.correction.n_corrected_wrong}</td><td>${a.correction.n_still_masked}</td></tr>`
      ).join("");
      $("results").innerHTML = head + rows +
        `<tr><td class="rule" colspan="7">${out.flipped_bits} flipped bits; ${(100 * out.noisy_fraction).toFixed(1)}% of samples violate a rule before training</td></tr>`;
    } catch (e) {
      $("error").textContent = String(e);
    } finally {
      $("run").disabled = false;
    }
  }, 10);
}

function bindRangeLabels() {
  for (const input of document.querySelectorAll("input[type=range]")) {
    const out = input.nextElementSibling;
    if (!out || out.tagName !== "SPAN") continue;
    const show = () => (out.textContent = input.value);
    input.addEventListener("input", show);
    show();
  }
}

await init();
rebuildControls();
bindRangeLabels();
$("rules").addEventListener("input", refresh);
$("labels").addEventListener("change", () => { rebuildControls(); refresh(); });
$("xlabel").addEventListener("change", refresh);
$("ylabel").addEventListener("change", refresh);
$("run").addEventListener("click", runTraining);
refresh();
