import init, { generate, simulate, communities } from "./pkg/culturenet_wasm.js";

const $ = (id) => document.getElementById(id);
const status = $("status");
const TRAIT = ["#9aa0a6", "#f28c28"];
const PALETTE = ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948",
  "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"];

let layout = { key: null, pos: [] };

function params() {
  return {
    n: Number($("n").value),
    pw: Number($("pw").value),
    pb: Number($("pb").value),
    seed: BigInt($("seed").value || 0),
    sweeps: BigInt($("sweeps").value || 1),
    bias: Number($("bias").value),
    perms: Number($("perms").value),
  };
}

// Fruchterman–Reingold with a fixed starting circle, so a seed always gives the same picture.
function computeLayout(graph, w, h) {
  const n = graph.nodes;
  const pos = Array.from({ length: n }, (_, i) => {
    const a = (2 * Math.PI * i) / n;
    return [w / 2 + (w / 3) * Math.cos(a), h / 2 + (h / 3) * Math.sin(a)];
  });
  const k = Math.sqrt((w * h) / Math.max(n, 1)) * 0.6;
  let temp = w / 10;
  for (let iter = 0; iter < 300; iter++) {
    const disp = pos.map(() => [0, 0]);
    for (let i = 0; i < n; i++) {
      for (let j = i + 1; j < n; j++) {
        const dx = pos[i][0] - pos[j][0], dy = pos[i][1] - pos[j][1];
        const d = Math.max(Math.hypot(dx, dy), 0.01);
        const f = (k * k) / d;
        disp[i][0] += (dx / d) * f; disp[i][1] += (dy / d) * f;
        disp[j][0] -= (dx / d) * f; disp[j][1] -= (dy / d) * f;
      }
    }
    for (const [u, v] of graph.edges) {
      const dx = pos[u][0] - pos[v][0], dy = pos[u][1] - pos[v][1];
      const d = Math.max(Math.hypot(dx, dy), 0.01);
      const f = (d * d) / k;
      disp[u][0] -= (dx / d) * f; disp[u][1] -= (dy / d) * f;
      disp[v][0] += (dx / d) * f; disp[v][1] += (dy / d) * f;
    }
    for (let i = 0; i < n; i++) {
      // weak pull to the centre keeps isolated nodes on screen
      disp[i][0] += (w / 2 - pos[i][0]) * 0.05;
      disp[i][1] += (h / 2 - pos[i][1]) * 0.05;
      const d = Math.max(Math.hypot(disp[i][0], disp[i][1]), 0.01);
      pos[i][0] = Math.min(w - 10, Math.max(10, pos[i][0] + (disp[i][0] / d) * Math.min(d, temp)));
      pos[i][1] = Math.min(h - 10, Math.max(10, pos[i][1] + (disp[i][1] / d) * Math.min(d, temp)));
    }
    temp *= 0.985;
  }
  return pos;
}

function drawGraph(graph, fill) {
  const c = $("graph"), ctx = c.getContext("2d");
  const p = params();
  const key = `${p.n}/${p.pw}/${p.pb}/${p.seed}`;
  if (layout.key !== key) layout = { key, pos: computeLayout(graph, c.width, c.height) };
  const pos = layout.pos;
  ctx.clearRect(0, 0, c.width, c.height);
  ctx.strokeStyle = "rgba(0,0,0,0.15)";
  for (const [u, v] of graph.edges) {
    ctx.beginPath(); ctx.moveTo(...pos[u]); ctx.lineTo(...pos[v]); ctx.stroke();
  }
  ctx.strokeStyle = "#333";
  for (let i = 0; i < graph.nodes; i++) {
    const [x, y] = pos[i];
    ctx.fillStyle = fill(i);
    ctx.beginPath();
    if (graph.types[i] === 0) ctx.arc(x, y, 5, 0, 2 * Math.PI);
    else ctx.rect(x - 4.5, y - 4.5, 9, 9);
    ctx.fill(); ctx.stroke();
  }
}

function drawTrace(sim) {
  const c = $("trace"), ctx = c.getContext("2d");
  const m = { l: 40, r: 10, t: 10, b: 25 };
  const w = c.width - m.l - m.r, h = c.height - m.t - m.b;
  const xmax = Math.max(...sim.trace.map((p) => p.sweep), 1);
  const ymax = Math.max(sim.peak_chi2, 3.84) * 1.1;
  const X = (x) => m.l + (x / xmax) * w, Y = (y) => m.t + h - (y / ymax) * h;
  ctx.clearRect(0, 0, c.width, c.height);
  ctx.strokeStyle = "#999"; ctx.fillStyle = "#555"; ctx.font = "11px sans-serif";
  ctx.strokeRect(m.l, m.t, w, h);
  ctx.fillText(ymax.toFixed(1), 2, m.t + 10);
  ctx.fillText("0", m.l - 12, m.t + h);
  ctx.fillText(`${xmax} sweeps`, m.l + w - 60, c.height - 6);
  ctx.setLineDash([4, 4]);
  ctx.beginPath(); ctx.moveTo(X(0), Y(3.84)); ctx.lineTo(X(xmax), Y(3.84)); ctx.stroke();
  ctx.setLineDash([]);
  ctx.strokeStyle = "#4e79a7"; ctx.lineWidth = 1.5;
  ctx.beginPath();
  sim.trace.forEach((p, i) => (i ? ctx.lineTo(X(p.sweep), Y(p.chi2)) : ctx.moveTo(X(p.sweep), Y(p.chi2))));
  ctx.stroke();
  ctx.lineWidth = 1;
  ctx.fillStyle = "#e15759";
  ctx.beginPath(); ctx.arc(X(sim.peak_sweep), Y(sim.peak_chi2), 3.5, 0, 2 * Math.PI); ctx.fill();
}

function guarded(action) {
  return () => {
    try {
      action();
    } catch (e) {
      status.textContent = `error: ${e.message ?? e}`;
    }
  };
}

function onGenerate() {
  const p = params();
  const g = JSON.parse(generate(p.n, p.pw, p.pb, p.seed));
  drawGraph(g, () => "#fff");
  status.textContent = `${g.nodes} nodes, ${g.edges.length} edges, r = ${g.r?.toFixed(3) ?? "n/a"}` +
    (g.connected ? "" : " (disconnected)");
}

function onSimulate() {
  const p = params();
  const sim = JSON.parse(simulate(p.n, p.pw, p.pb, p.seed, p.sweeps, p.bias));
  drawGraph(sim.graph, (i) => TRAIT[sim.peak_traits[i]]);
  drawTrace(sim);
  status.textContent =
    `r = ${sim.graph.r?.toFixed(3) ?? "n/a"}; peak χ² = ${sim.peak_chi2.toFixed(2)} at sweep ${sim.peak_sweep}\n` +
    (sim.absorbed_at === null ? "not absorbed within budget" : `absorbed at sweep ${sim.absorbed_at}`) +
    "\nnode colours show the traits at the peak";
}

function onCommunities() {
  const p = params();
  const v = JSON.parse(communities(p.n, p.pw, p.pb, p.seed, p.sweeps, p.bias, p.perms));
  drawGraph(v.simulation.graph, (i) => PALETTE[v.membership[i] % PALETTE.length]);
  drawTrace(v.simulation);
  status.textContent =
    `${v.communities} communities, modularity ${v.modularity?.toFixed(3) ?? "n/a"}\n` +
    `at the χ² peak (${v.simulation.peak_chi2.toFixed(2)}):\n` +
    `  unconditional permutation p = ${v.unconditional_p.toFixed(4)}\n` +
    `  conditional on communities: χ² = ${v.conditional_statistic.toFixed(2)}, df = ${v.conditional_df}, ` +
    `p = ${v.conditional_p.toFixed(4)}`;
}

await init();
$("btn-generate").onclick = guarded(onGenerate);
$("btn-simulate").onclick = guarded(onSimulate);
$("btn-communities").onclick = guarded(onCommunities);
guarded(onGenerate)();
