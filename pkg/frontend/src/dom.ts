/** Minimal DOM builders for the voter pages (no framework). */

import { CurrentView, DimView } from "./api.js";
import { SliderPanel } from "./panel.js";
import { ElicitationForm, WEIGHT_MAX, WEIGHT_MIN } from "./elicitation.js";

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, attrs: Record<string, string> = {}, ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  node.append(...children);
  return node;
}

function fmt(x: number, digits = 1): string {
  return x.toFixed(digits);
}

function dimRow(d: DimView, value: number, pct: number,
                onInput: (v: number) => void,
                step: number): HTMLElement {
  const slider = el("input", {
    type: "range", min: String(d.lo), max: String(d.hi),
    step: String(step), value: String(value), title: d.description,
  });
  const readout = el("span", { class: "readout" },
    `${fmt(value)} (${pct >= 0 ? "+" : ""}${fmt(pct)}% vs baseline)`);
  slider.addEventListener("input", () => {
    onInput(parseFloat(slider.value));
  });
  return el("div", { class: "dim-row" },
    el("label", { title: d.description }, d.label), slider, readout);
}

export function renderMechanismPanel(root: HTMLElement, view: CurrentView,
                                     panel: SliderPanel, setIndex: number,
                                     onSubmit: () => void): () => void {
  const container = el("div", { class: `panel set-${setIndex}` });
  const heading = el("h3", {}, `Set ${setIndex + 1}`);
  const meter = el("div", { class: "credit-meter" });
  const deficitOut = el("div", { class: "deficit" });
  const submit = el("button", {}, "Submit this budget") as HTMLButtonElement;
  submit.addEventListener("click", onSubmit);

  const rows = el("div", { class: "rows" });

  const redraw = () => {
    rows.replaceChildren();
    const pcts = panel.percentFromBaseline();
    view.dims.forEach((d, i) => {
      rows.append(dimRow(d, panel.values[i], pcts[i], (v) => {
        panel.setSlider(i, v);
        redraw();
      }, panel.step[i]));
    });
    const m = panel.meter();
    meter.textContent =
      `credits used: ${fmt(m.used, 3)} / ${fmt(panel.radius, 3)} ` +
      `(${fmt(m.usedPercent)}%), remaining ${fmt(m.remaining, 3)}`;
    meter.classList.toggle("over-budget", !panel.submitEnabled());
    deficitOut.textContent = `resulting deficit: ${fmt(panel.deficit(), 2)}`;
    submit.disabled = !panel.submitEnabled();
  };
  redraw();
  container.append(heading, meter, deficitOut, rows, submit);
  root.append(container);
  return redraw;
}

export function renderElicitation(root: HTMLElement, form: ElicitationForm,
                                  onSubmit: () => void): () => void {
  const container = el("div", { class: "panel elicitation" });
  const rows = el("div", { class: "rows" });
  const submit = el("button", {}, "Submit ideal budget") as HTMLButtonElement;
  submit.addEventListener("click", onSubmit);
  const normalize = el("button", {}, "Normalize weights") as HTMLButtonElement;

  const redraw = () => {
    rows.replaceChildren();
    form.dims.forEach((d, i) => {
      rows.append(dimRow(d, form.ideals[i],
        d.baseline ? (100 * (form.ideals[i] - d.baseline)) / d.baseline : 0,
        (v) => {
          form.setIdeal(i, v);
          redraw();
        }, (d.hi - d.lo) / 1000));
      const w = el("input", {
        type: "range", min: String(WEIGHT_MIN), max: String(WEIGHT_MAX),
        step: "0.1", value: String(form.weights[i]),
      });
      w.addEventListener("input", () => {
        form.setWeight(i, parseFloat(w.value));
        redraw();
      });
      rows.append(el("div", { class: "weight-row" },
        el("label", {}, `importance of ${d.label}`), w,
        el("span", {}, form.weights[i].toFixed(1))));
    });
    const dw = el("input", {
      type: "range", min: String(WEIGHT_MIN), max: String(WEIGHT_MAX),
      step: "0.1", value: String(form.deficitWeight),
    });
    dw.addEventListener("input", () => {
      form.setDeficitWeight(parseFloat(dw.value));
      redraw();
    });
    rows.append(el("div", { class: "weight-row" },
      el("label", {}, "importance of the deficit"), dw,
      el("span", {}, form.deficitWeight.toFixed(1))));
    submit.disabled = !form.submittable();
  };
  normalize.addEventListener("click", () => {
    form.normalizeWeights();
    redraw();
  });
  redraw();
  container.append(el("h3", {}, "Your ideal budget"), rows, normalize, submit);
  root.append(container);
  return redraw;
}
