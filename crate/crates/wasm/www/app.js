import init, { schema, perturb_text, explore_bias, project_2d } from "./pkg/fairscope_wasm.js";

const $ = (id) => document.getElementById(id);

function fill(select, names) {
  select.replaceChildren(...names.map((n) => new Option(n, n)));
}

function setupPerturb(attrs) {
  const attr = $("p-attr"), from = $("p-from"), to = $("p-to");
  fill(attr, attrs.map((a) => a.name));
  const groups = () => attrs.find((a) => a.name === attr.value).groups.map((g) => g.name);
  const run = () => {
    try {
      const r = JSON.parse(perturb_text($("p-text").value, attr.value, from.value, to.value));
      $("p-out").textContent = r.text;
      $("p-out").className = "";
    } catch (e) {
      $("p-out").textContent = e;
      $("p-out").className = "err";
    }
  };
  attr.onchange = () => {
    const g = groups();
    fill(from, g);
    fill(to, g);
    to.selectedIndex = 1;
    run();
  };
  for (const el of [from, to]) el.onchange = run;
  $("p-text").oninput = run;
  attr.onchange();
}

function setupBias() {
  const ids = ["b-fc", "b-fr", "b-mc", "b-mr"];
  const val = (id) => Number($(id).value);
  const run = () => {
    for (const id of ids) $(id).nextElementSibling.textContent = id.endsWith("r") ? (val(id) / 100).toFixed(2) : val(id);
    const spec = {
      attributes: [{
        name: "gender",
        groups: [
          { group: "Female", count: val("b-fc"), positive_ratio: val("b-fr") / 100 },
          { group: "Male", count: val("b-mc"), positive_ratio: val("b-mr") / 100 },
        ],
      }],
      seed: 1,
    };
    try {
      const [r] = JSON.parse(explore_bias(JSON.stringify(spec)));
      const rows = r.groups.map((g) => `<tr><td>${g.group}</td><td>${g.n}</td><td>${g.positives}</td></tr>`).join("");
      $("b-out").innerHTML =
        `<p>Selection bias ${r.selection === null ? "n/a" : r.selection.toFixed(3)}, ` +
        `overamplification ${r.overamplification_raw}</p>` +
        `<table><tr><th>Group</th><th>Documents</th><th>Toxic</th></tr>${rows}</table>`;
    } catch (e) {
      $("b-out").innerHTML = `<p class="err">${e}</p>`;
    }
  };
  for (const id of ids) $(id).oninput = run;
  run();
}

function setupSubspace() {
  const canvas = $("s-canvas"), ctx = canvas.getContext("2d");
  const scale = 40, half = canvas.width / 2;
  const toWorld = (x, y) => [(x - half) / scale, (half - y) / scale];
  const toScreen = ([x, y]) => [half + x * scale, half - y * scale];
  let factual = [], counter = [], pending = null, probe = [3, 4], fit = null;

  const dot = (p, color, r = 4) => {
    const [x, y] = toScreen(p);
    ctx.fillStyle = color;
    ctx.beginPath();
    ctx.arc(x, y, r, 0, 2 * Math.PI);
    ctx.fill();
  };
  const line = (a, b, color) => {
    ctx.strokeStyle = color;
    ctx.beginPath();
    ctx.moveTo(...toScreen(a));
    ctx.lineTo(...toScreen(b));
    ctx.stroke();
  };
  const draw = () => {
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    line([-5, 0], [5, 0], "#eee");
    line([0, -5], [0, 5], "#eee");
    factual.forEach((p, i) => {
      line(p, counter[i], "#aaa");
      dot(p, "#c33");
      dot(counter[i], "#36c");
    });
    if (pending) dot(pending, "#c33");
    if (fit) {
      const [u, v] = fit.component;
      line([-5 * u, -5 * v], [5 * u, 5 * v], "#f90");
      line(probe, fit.projected[0], "#9c9");
      dot(fit.projected[0], "#393");
    }
    dot(probe, "#888", 5);
  };
  const run = () => {
    fit = null;
    $("s-out").textContent = "";
    if (factual.length > 0) {
      try {
        fit = JSON.parse(project_2d(JSON.stringify({ factual, counterfactual: counter, probes: [probe] })));
        const [x, y] = fit.projected[0];
        $("s-out").textContent = `probe (${probe.map((v) => v.toFixed(2))}) → (${x.toFixed(2)}, ${y.toFixed(2)})`;
      } catch (e) {
        $("s-out").textContent = e;
      }
    }
    draw();
  };
  canvas.onclick = (ev) => {
    const p = toWorld(ev.offsetX, ev.offsetY);
    if (ev.shiftKey) probe = p;
    else if (pending) {
      factual.push(pending);
      counter.push(p);
      pending = null;
    } else pending = p;
    run();
  };
  $("s-clear").onclick = () => {
    factual = [];
    counter = [];
    pending = null;
    run();
  };
  factual = [[1, 0]];
  counter = [[-1, 0]];
  run();
}

await init();
const attrs = JSON.parse(schema()).attributes;
setupPerturb(attrs);
setupBias();
setupSubspace();
