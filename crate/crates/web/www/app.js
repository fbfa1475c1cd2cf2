import init, { Lab } from "./pkg/dualpert_web.js";

const $ = (id) => document.getElementById(id);

function draw(canvas, rgba, size) {
  const ctx = canvas.getContext("2d");
  ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), size, size), 0, 0);
}

let lab;
let size;
let trained = false;

function showImage() {
  const i = lab.selected();
  $("index").textContent = `image ${i} / ${lab.test_len() - 1}`;
  draw($("img"), lab.image_rgba(), size);
  draw($("sal"), lab.salience_rgba(), size);
  draw($("masks"), lab.masks_rgba(), size);
  let cap = `label: ${lab.class_name(lab.label())}`;
  if (trained) cap += `, predicted: ${lab.class_name(lab.predict())}`;
  $("img-cap").textContent = cap;
  $("mask-cap").textContent = `object / fixation, IoU ${lab.mask_iou().toFixed(2)}`;
  draw($("adv"), lab.adversarial_rgba(), size);
  draw($("pert"), lab.perturbation_rgba(), size);
  $("report").textContent = "";
}

function select(i) {
  const n = lab.test_len();
  lab.select(((i % n) + n) % n);
  showImage();
}

// One epoch in slices so the page stays responsive.
function trainEpoch() {
  const button = $("train-go");
  button.disabled = true;
  const start = lab.epochs_done();
  const target = Math.floor(start + 1e-9) + 1;
  let loss = 0;
  const step = () => {
    loss = lab.train_batches(4);
    const done = lab.epochs_done();
    $("train-progress").value = Math.min(1, done - start);
    $("train-status").textContent = `epoch ${done.toFixed(2)}, loss ${loss.toFixed(3)}`;
    if (done < target) {
      requestAnimationFrame(step);
      return;
    }
    trained = true;
    const acc = lab.test_accuracy();
    $("train-status").textContent = `${target} epoch(s), loss ${loss.toFixed(3)}, test accuracy ${(100 * acc).toFixed(1)}%`;
    button.disabled = false;
    showImage();
  };
  requestAnimationFrame(step);
}

function runAttack() {
  const r = lab.attack(
    parseFloat($("eps-fg").value),
    parseFloat($("eps-bg").value),
    parseFloat($("lambda").value),
    parseInt($("steps").value, 10),
    $("linf").checked,
    $("fixation").checked,
    lab.selected(),
  );
  draw($("adv"), lab.adversarial_rgba(), size);
  draw($("pert"), lab.perturbation_rgba(), size);
  const name = (k) => lab.class_name(k);
  $("report").textContent = [
    `label            ${name(r.label)}`,
    `clean prediction ${name(r.clean_prediction)}`,
    `adv prediction   ${name(r.adversarial_prediction)}${r.adversarial_prediction !== r.label ? "  (fooled)" : ""}`,
    `foreground score ${r.clean_fs.toFixed(3)} -> ${r.adversarial_fs.toFixed(3)}`,
    `|delta| on F     ${r.foreground_norm.toFixed(3)}`,
    `|delta| on B     ${r.background_norm.toFixed(3)}`,
  ].join("\n");
  r.free();
}

async function main() {
  await init();
  lab = new Lab(7, 1600);
  size = lab.size();
  for (const id of ["eps-fg", "eps-bg", "lambda", "steps"]) {
    const input = $(id);
    input.addEventListener("input", () => { $(`${id}-v`).textContent = input.value; });
  }
  $("prev").onclick = () => select(lab.selected() - 1);
  $("next").onclick = () => select(lab.selected() + 1);
  $("random").onclick = () => select(Math.floor(Math.random() * lab.test_len()));
  $("train-go").onclick = trainEpoch;
  $("attack-go").onclick = runAttack;
  showImage();
}

main();
