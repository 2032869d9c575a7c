import init, { list_presets, run_preset, validate_params, compare_recovery }
  from "./pkg/ppdp_wasm.js";

const $ = (id) => document.getElementById(id);

const COLORS = { residual: "#5cc8ff", dist: "#e3b341", traj: "#4cc38a", dev: "#e5534b" };

function overrides() {
  const o = {
    nu: parseFloat($("nu").value),
    max_iter: parseInt($("maxiter").value, 10),
    tol: 1e-12,
  };
  if ($("adaptive").checked) o.adaptive = true;
  else o.theta = parseFloat($("theta").value);
  return JSON.stringify(o);
}

function fmt(v) {
  if (v === null || v === undefined) return "—";
  if (typeof v === "boolean") {
    return `<span class="flag ${v ? "on" : "off"}">${v ? "ok" : "violated"}</span>`;
  }
  return Math.abs(v) < 1e-3 || Math.abs(v) >= 1e4 ? v.toExponential(3) : v.toFixed(6);
}

function showConstants(c) {
  const rows = [
    ["L", c.l], ["γ", c.gamma], ["μ", c.mu], ["q", c.q],
    ["t lower", c.t_lower], ["t upper", c.t_upper],
    ["resolvent well-posed", c.flag_resolvent_ok],
    ["halfspace separation", c.flag_separation_ok],
    ["D positive definite", c.flag_d_pd],
    ["G positive definite", c.flag_g_pd],
  ];
  $("consts").innerHTML = rows
    .map(([k, v]) => `<tr><td>${k}</td><td>${fmt(v)}</td></tr>`)
    .join("");
}

function frame(ctx, w, h) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#2a3240";
  ctx.strokeRect(0.5, 0.5, w - 1, h - 1);
}

function plotLogSeries(canvas, series) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  frame(ctx, w, h);
  const pad = 40;
  const all = series.flatMap((s) => s.values.filter((v) => v > 0));
  if (!all.length) return;
  const lo = Math.log10(Math.max(Math.min(...all), 1e-300));
  const hi = Math.log10(Math.max(...all));
  const span = Math.max(hi - lo, 1e-9);
  const n = Math.max(...series.map((s) => s.values.length));

  ctx.fillStyle = "#8a93a5";
  ctx.font = "11px system-ui";
  for (let g = 0; g <= 4; g++) {
    const y = pad / 2 + (g / 4) * (h - pad);
    ctx.strokeStyle = "#1f2632";
    ctx.beginPath(); ctx.moveTo(pad, y); ctx.lineTo(w - 8, y); ctx.stroke();
    ctx.fillText(`1e${(hi - (g / 4) * span).toFixed(0)}`, 4, y + 4);
  }
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = 1.6;
    ctx.beginPath();
    let started = false;
    s.values.forEach((v, i) => {
      if (!(v > 0)) return;
      const x = pad + (i / Math.max(n - 1, 1)) * (w - pad - 12);
      const y = pad / 2 + ((hi - Math.log10(v)) / span) * (h - pad);
      if (started) ctx.lineTo(x, y); else { ctx.moveTo(x, y); started = true; }
    });
    ctx.stroke();
  }
  let lx = pad + 8;
  for (const s of series) {
    ctx.fillStyle = s.color;
    ctx.fillText(s.label, lx, 14);
    lx += ctx.measureText(s.label).width + 18;
  }
}

function plotTrajectory(canvas, points, plane) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  frame(ctx, w, h);
  if (!points.length) return;
  const xs = points.map((p) => p[0]);
  const ys = points.map((p) => p[1]);
  const cx = (Math.min(...xs) + Math.max(...xs)) / 2;
  const cy = (Math.min(...ys) + Math.max(...ys)) / 2;
  const ext = Math.max(
    Math.max(...xs) - Math.min(...xs),
    Math.max(...ys) - Math.min(...ys),
    1e-6
  ) * 0.6 + 1e-6;
  const px = (x) => w / 2 + ((x - cx) / ext) * (w / 2 - 30);
  const py = (y) => h / 2 - ((y - cy) / ext) * (h / 2 - 30);

  ctx.strokeStyle = "#1f2632";
  ctx.beginPath(); ctx.moveTo(px(0), 0); ctx.lineTo(px(0), h); ctx.stroke();
  ctx.beginPath(); ctx.moveTo(0, py(0)); ctx.lineTo(w, py(0)); ctx.stroke();

  ctx.strokeStyle = COLORS.traj;
  ctx.lineWidth = 1.4;
  ctx.beginPath();
  points.forEach((p, i) => (i ? ctx.lineTo(px(p[0]), py(p[1])) : ctx.moveTo(px(p[0]), py(p[1]))));
  ctx.stroke();

  ctx.fillStyle = "#e3b341";
  ctx.beginPath(); ctx.arc(px(points[0][0]), py(points[0][1]), 4, 0, 7); ctx.fill();
  const last = points[points.length - 1];
  ctx.fillStyle = "#e5534b";
  ctx.beginPath(); ctx.arc(px(last[0]), py(last[1]), 4, 0, 7); ctx.fill();

  ctx.fillStyle = "#8a93a5";
  ctx.font = "11px system-ui";
  ctx.fillText(plane === "x-y" ? "plane: (x, y)" : "plane: (x₁, x₂)", 10, 14);
  ctx.fillText("start", px(points[0][0]) + 7, py(points[0][1]));
  ctx.fillText("end", px(last[0]) + 7, py(last[1]));
}

function refreshConstants() {
  try {
    const c = JSON.parse(validate_params($("preset").value, overrides()));
    showConstants(c);
  } catch (e) {
    $("status").textContent = `constants: ${e}`;
  }
}

function runSolver() {
  const t0 = performance.now();
  try {
    const r = JSON.parse(run_preset($("preset").value, overrides()));
    showConstants(r.constants);
    plotLogSeries($("curve"), [
      { label: "residual", color: COLORS.residual, values: r.rows.map((p) => p.residual) },
      { label: "distance to solution", color: COLORS.dist, values: r.rows.map((p) => p.dist ?? 0) },
    ]);
    plotTrajectory($("traj"), r.trajectory, r.plane);
    const ms = (performance.now() - t0).toFixed(1);
    $("status").textContent =
      `${r.status} after ${r.iterations} iterations, final residual ` +
      `${r.final_residual.toExponential(2)} (${ms} ms)` +
      (r.warnings.length ? ` — ${r.warnings[0]}` : "");
  } catch (e) {
    $("status").textContent = `run failed: ${e}`;
  }
}

function runComparison() {
  try {
    const ts = parseFloat($("taus").value);
    const r = JSON.parse(compare_recovery(parseFloat($("thpd").value), ts, ts, 100));
    plotLogSeries($("dev"), [
      { label: "deviation from reference", color: COLORS.dev, values: r.deviation.map((v) => Math.max(v, 1e-18)) },
      { label: "residual", color: COLORS.residual, values: r.residual },
    ]);
    $("cmpstatus").textContent =
      `max componentwise deviation over 100 iterations: ${r.max_deviation.toExponential(2)}`;
  } catch (e) {
    $("cmpstatus").textContent = `comparison failed: ${e}`;
  }
}

const PRESET_NU = {
  quadratic_monotone: 3, quadratic_strong: 4, quadratic_weak: 3,
  matrix_game_5x5: 7.5, lasso_small: 2,
};

async function main() {
  await init();
  const presets = JSON.parse(list_presets());
  $("preset").innerHTML = presets
    .filter((p) => p in PRESET_NU)
    .map((p) => `<option>${p}</option>`)
    .join("");
  const syncOutputs = () => {
    $("nuv").value = parseFloat($("nu").value).toFixed(2);
    $("thetav").value = parseFloat($("theta").value).toFixed(2);
    $("thpdv").value = parseFloat($("thpd").value).toFixed(2);
    $("tausv").value = parseFloat($("taus").value).toFixed(2);
  };
  for (const id of ["nu", "theta"]) {
    $(id).addEventListener("input", () => { syncOutputs(); refreshConstants(); });
  }
  for (const id of ["thpd", "taus"]) {
    $(id).addEventListener("input", syncOutputs);
  }
  $("preset").addEventListener("change", () => {
    $("nu").value = PRESET_NU[$("preset").value] ?? 3;
    syncOutputs();
    refreshConstants();
    runSolver();
  });
  $("adaptive").addEventListener("change", refreshConstants);
  $("run").addEventListener("click", runSolver);
  $("compare").addEventListener("click", runComparison);
  syncOutputs();
  refreshConstants();
  runSolver();
  runComparison();
}

main();
