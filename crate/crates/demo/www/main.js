import init, { exploreLabels, rocCurve, Session } from "./pkg/milkd_demo.js";

const $ = (id) => document.getElementById(id);
const nums = (s) => s.split(/[\s,]+/).filter((t) => t.length).map(Number);

function guard(out, f) {
  try {
    out.classList.remove("err");
    f();
  } catch (e) {
    out.classList.add("err");
    out.textContent = String(e.message ?? e);
  }
}

// Grouped bars, one group per instance, values in [0, 1].
function bars(canvas, series, colors, marks = []) {
  const g = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height;
  g.clearRect(0, 0, w, h);
  const n = series[0].length;
  if (!n) return;
  const slot = w / n, bw = (slot * 0.8) / series.length;
  series.forEach((s, k) => {
    g.fillStyle = colors[k];
    s.forEach((v, i) => {
      const bh = Math.max(0, Math.min(1, v)) * (h - 20);
      g.fillRect(i * slot + slot * 0.1 + k * bw, h - 10 - bh, bw - 1, bh);
    });
  });
  g.fillStyle = "#000";
  marks.forEach((i) => g.fillText("×", i * slot + slot / 2 - 3, 10));
}

function lines(canvas, xs, series, colors) {
  const g = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height;
  g.clearRect(0, 0, w, h);
  g.strokeStyle = "#ddd";
  g.strokeRect(0, 0, w, h);
  if (xs.length < 1) return;
  const x0 = xs[0], x1 = Math.max(xs[xs.length - 1], x0 + 1);
  const px = (x) => ((x - x0) / (x1 - x0)) * (w - 10) + 5;
  const py = (y) => h - 5 - y * (h - 10);
  series.forEach((s, k) => {
    g.strokeStyle = colors[k];
    g.beginPath();
    let started = false;
    s.forEach((y, i) => {
      if (y == null) return;
      started ? g.lineTo(px(xs[i]), py(y)) : g.moveTo(px(xs[i]), py(y));
      started = true;
    });
    g.stroke();
  });
}

function updateLabels() {
  const out = $("labelsOut");
  guard(out, () => {
    const att = nums($("att").value);
    const r = JSON.parse(exploreLabels(att, nums($("stu").value), $("pos").checked, Number($("tau").value)));
    bars($("labelsPlot"), [att, r.pseudo_labels], ["#8ab", "#e83"], r.dropped);
    out.textContent =
      `pseudo labels: ${r.pseudo_labels.map((v) => v.toFixed(3)).join(", ")}\n` +
      `kept: [${r.surviving}]  dropped: [${r.dropped}]`;
  });
}

function drawRoc(canvas, points) {
  const g = canvas.getContext("2d");
  const s = canvas.width;
  g.clearRect(0, 0, s, s);
  g.strokeStyle = "#ccc";
  g.beginPath(); g.moveTo(0, s); g.lineTo(s, 0); g.stroke();
  g.strokeStyle = "#25a";
  g.beginPath();
  points.forEach(([x, y], i) => (i ? g.lineTo(x * s, s - y * s) : g.moveTo(x * s, s - y * s)));
  g.stroke();
}

function updateRoc() {
  const out = $("rocOut");
  guard(out, () => {
    const r = JSON.parse(rocCurve(nums($("rocScores").value), Uint8Array.from(nums($("rocLabels").value))));
    drawRoc($("rocPlot"), r.points);
    out.textContent = `AUC ${r.auc.toFixed(4)}`;
  });
}

let session = null;
let history = [];

function drawSession() {
  const msg = $("trainMsg");
  guard(msg, () => {
    $("epoch").textContent = `epoch ${session.epoch()}`;
    lines(
      $("curves"),
      history.map((m) => m.epoch),
      [
        history.map((m) => m.teacher_bag_auc),
        history.map((m) => m.teacher_attention_instance_auc),
        history.map((m) => m.student_instance_auc),
      ],
      ["#999", "#8ab", "#e83"],
    );
    const last = history[history.length - 1];
    const fmt = (v) => (v == null ? "n/a" : v.toFixed(3));
    msg.textContent = last
      ? `valid AUC: teacher bag ${fmt(last.teacher_bag_auc)}, attention instance ` +
        `${fmt(last.teacher_attention_instance_auc)}, student instance ${fmt(last.student_instance_auc)}; ` +
        `dropped ${last.hpm_dropped}`
      : "grey: teacher bag, blue: teacher attention, orange: student (validation AUC)";
    const bag = $("bag");
    bag.max = session.testBagCount() - 1;
    const v = JSON.parse(session.bagView(Number(bag.value)));
    bars($("bagPlot"), [v.instance_labels, v.teacher, v.student], ["#4a4", "#8ab", "#e83"]);
  });
}

function reset() {
  guard($("trainMsg"), () => {
    session?.free();
    session = new Session(
      Number($("ratio").value), Number($("sep").value), Number($("seed").value),
      $("flags").value, Number($("lr").value), Number($("warm").value),
    );
    history = [];
    drawSession();
  });
}

function step(n) {
  if (!session) return;
  guard($("trainMsg"), () => {
    history.push(...JSON.parse(session.step(n)));
    drawSession();
  });
}

await init();
for (const id of ["att", "stu", "pos", "tau"]) $(id).addEventListener("input", updateLabels);
for (const id of ["rocScores", "rocLabels"]) $(id).addEventListener("input", updateRoc);
$("reset").addEventListener("click", reset);
$("step1").addEventListener("click", () => step(1));
$("step10").addEventListener("click", () => step(10));
$("bag").addEventListener("input", () => session && drawSession());
updateLabels();
updateRoc();
reset();
