// DOM composition for the tuning screen: recommendation table, in-context
// help, paired slider/text inputs, explanation panel, feedback modal and
// progress bar. All values render from TaskViewState; the explanation bar
// chart draws the server's VisualSpec without recomputing anything.

import type {
  ExplanationView,
  ParamName,
  VisualSpecPayload,
} from "./api.js";
import {
  GRADE_DISPLAY,
  PARAM_HELP,
  PARAM_LABELS,
  PARAM_ORDER,
  PARAM_STEP,
  TRIALS_PER_EGG,
  TaskViewState,
  type ProgressInfo,
} from "./state.js";

export interface TaskScreenHandlers {
  onCook: () => void;
  onReset: () => void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderRecommendationTable(state: TaskViewState): HTMLTableElement {
  const table = el("table", "recommendation-table");
  const head = table.createTHead().insertRow();
  head.insertCell().textContent = "parameter";
  head.insertCell().textContent = "AI recommendation";
  const body = table.createTBody();
  for (const name of PARAM_ORDER) {
    const row = body.insertRow();
    row.insertCell().textContent = PARAM_LABELS[name];
    const cell = row.insertCell();
    cell.textContent = String(state.scenario.recommended[name]);
    if (state.isFixed(name)) {
      row.classList.add("fixed");  // grey cells: not tunable
      cell.title = "fixed parameter";
    }
  }
  return table;
}

export function renderHelp(): HTMLDetailsElement {
  const details = el("details", "in-context-help");
  details.appendChild(el("summary", undefined, "What do the parameters mean?"));
  const list = el("dl");
  for (const name of PARAM_ORDER) {
    list.appendChild(el("dt", undefined, PARAM_LABELS[name]));
    list.appendChild(el("dd", undefined, PARAM_HELP[name]));
  }
  details.appendChild(list);
  return details;
}

interface ParamInputs {
  slider: HTMLInputElement;
  text: HTMLInputElement;
}

export function renderParamControls(
  state: TaskViewState,
  onChange: () => void,
): { root: HTMLElement; inputs: Map<ParamName, ParamInputs> } {
  const root = el("div", "param-controls");
  const inputs = new Map<ParamName, ParamInputs>();
  for (const name of PARAM_ORDER) {
    const [lo, hi] = state.scenario.bounds[name];
    const rowEl = el("div", "param-row");
    rowEl.appendChild(el("label", undefined, PARAM_LABELS[name]));

    const slider = el("input");
    slider.type = "range";
    slider.min = String(lo);
    slider.max = String(hi);
    slider.step = String(PARAM_STEP[name]);

    const text = el("input", "param-text");
    text.type = "number";
    text.min = String(lo);
    text.max = String(hi);
    text.step = String(PARAM_STEP[name]);

    const fixed = state.isFixed(name);
    slider.disabled = fixed;
    text.disabled = fixed;
    if (fixed) rowEl.classList.add("fixed");

    const sync = () => {
      const v = state.value(name);
      slider.value = String(v);
      text.value = String(v);
    };
    sync();
    slider.addEventListener("input", () => {
      state.setValue(name, Number(slider.value));
      sync();
      onChange();
    });
    text.addEventListener("change", () => {
      state.setValue(name, Number(text.value));
      sync();
      onChange();
    });

    rowEl.appendChild(slider);
    rowEl.appendChild(text);
    root.appendChild(rowEl);
    inputs.set(name, { slider, text });
  }
  return { root, inputs };
}

export function renderVisualSpec(spec: VisualSpecPayload): SVGSVGElement {
  const width = 460;
  const rowH = 26;
  const mid = width / 2;
  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("width", String(width));
  svg.setAttribute("height", String(spec.bars.length * rowH + 24));
  spec.bars.forEach((bar, i) => {
    const y = i * rowH + 4;
    const length = bar.signed_length * (width / 2 - 90);
    const rect = document.createElementNS(svg.namespaceURI, "rect");
    rect.setAttribute("x", String(length < 0 ? mid + length : mid));
    rect.setAttribute("y", String(y));
    rect.setAttribute("width", String(Math.max(Math.abs(length), 1)));
    rect.setAttribute("height", String(rowH - 8));
    rect.setAttribute("fill", bar.tune_class === "tune" ? "#d95f02" : "#1f77b4");
    rect.setAttribute("data-name", bar.name);
    rect.setAttribute("data-class", bar.tune_class);
    svg.appendChild(rect);
    const label = document.createElementNS(svg.namespaceURI, "text");
    label.setAttribute("x", "4");
    label.setAttribute("y", String(y + rowH - 12));
    label.textContent =
      bar.name + (bar.tune_range ? ` [${bar.tune_range[0]}, ${bar.tune_range[1]}]` : "");
    svg.appendChild(label);
  });
  const axis = document.createElementNS(svg.namespaceURI, "text");
  axis.setAttribute("x", String(mid));
  axis.setAttribute("y", String(spec.bars.length * rowH + 16));
  axis.setAttribute("text-anchor", "middle");
  axis.textContent = spec.axis_label;
  svg.appendChild(axis);
  return svg;
}

export function renderExplanationPanel(explanation: ExplanationView): HTMLElement | null {
  if (explanation.format === "none" || explanation.payload === null) {
    return null;  // baseline and training blocks show no panel
  }
  const panel = el("section", "explanation-panel");
  panel.appendChild(el("h3", undefined, "Advanced AI recommendation"));
  if (explanation.format === "visual") {
    panel.appendChild(renderVisualSpec(explanation.payload as VisualSpecPayload));
  } else {
    const body = el("p", `explanation-${explanation.format}`);
    body.textContent = explanation.payload as string;
    panel.appendChild(body);
  }
  return panel;
}

export function renderFeedbackModal(
  grade: string,
  onDismiss: () => void,
): HTMLElement {
  const display = GRADE_DISPLAY[grade] ?? { text: grade, color: "#444444" };
  const overlay = el("div", "feedback-overlay");
  const modal = el("div", "feedback-modal");
  modal.style.borderColor = display.color;
  const badge = el("div", "feedback-grade", display.text);
  badge.style.color = display.color;
  modal.appendChild(badge);
  const button = el("button", "feedback-dismiss", "Continue");
  button.addEventListener("click", onDismiss);
  modal.appendChild(button);
  overlay.appendChild(modal);
  return overlay;
}

export function renderProgressBar(progress: ProgressInfo): HTMLElement {
  const bar = el("div", "progress-bar");
  bar.textContent =
    `Block: ${progress.block} · egg ${progress.eggIndex}/${progress.eggCount} · ` +
    `trial ${progress.trialsUsed}/${progress.trialsPerEgg}`;
  return bar;
}

export function renderTaskScreen(
  state: TaskViewState,
  explanation: ExplanationView,
  progress: ProgressInfo,
  handlers: TaskScreenHandlers,
): HTMLElement {
  const root = el("div", "task-screen");
  root.appendChild(el("h2", "egg-type", `${state.scenario.egg_type} egg`));
  root.appendChild(renderRecommendationTable(state));
  root.appendChild(renderHelp());

  const cook = el("button", "cook-button", "Cook");
  const reset = el("button", "reset-button", "Reset sliders");
  const refresh = () => {
    cook.disabled = !state.cookEnabled();
  };
  const controls = renderParamControls(state, refresh);
  root.appendChild(controls.root);

  cook.addEventListener("click", handlers.onCook);
  reset.addEventListener("click", () => {
    state.resetToRecommendation();
    for (const [name, pair] of controls.inputs) {
      pair.slider.value = String(state.value(name));
      pair.text.value = String(state.value(name));
    }
    refresh();
    handlers.onReset();
  });
  refresh();

  const actions = el("div", "actions");
  actions.appendChild(cook);
  actions.appendChild(reset);
  root.appendChild(actions);

  const panel = renderExplanationPanel(explanation);
  if (panel) root.appendChild(panel);

  root.appendChild(renderProgressBar(progress));
  return root;
}
