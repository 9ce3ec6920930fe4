/**
 * DOM layer of the what-if console. The loop: edit features, read the
 * predicted malignancy probability, drag the threshold slider, read the
 * avoided-vs-missed tradeoff. One in-flight request per panel; a newer
 * request aborts the older one (latest wins).
 */

import {
  ApiError,
  fetchThresholdRow,
  predict,
  type ModelInfo,
  type SchemaDoc,
  type ThresholdRow,
} from "./api.js";
import {
  REFERENCE_THRESHOLDS_PCT,
  featureVariables,
  fieldOfErrorDetail,
  formatPercent,
  formatProbability,
  initialFormState,
  sliderToThreshold,
  thresholdToSlider,
  verdict,
} from "./logic.js";

const SLIDER_STEPS = 1000;

export interface ConsoleState {
  form: Record<string, string>;
  threshold: number;
  subpopulation: string;
  probability: number | null;
}

export class WhatIfConsole {
  readonly root: HTMLElement;
  readonly state: ConsoleState;
  private readonly schema: SchemaDoc;
  private readonly model: ModelInfo;
  private predictAbort: AbortController | null = null;
  private tradeoffAbort: AbortController | null = null;
  private selects = new Map<string, HTMLSelectElement>();
  private errorSlots = new Map<string, HTMLElement>();

  constructor(root: HTMLElement, schema: SchemaDoc, model: ModelInfo) {
    this.root = root;
    this.schema = schema;
    this.model = model;
    this.state = {
      form: initialFormState(schema),
      threshold: 0.02,
      subpopulation: "",
      probability: null,
    };
    this.build();
  }

  /** Refresh both panels; resolves when the initial responses are rendered. */
  async start(): Promise<void> {
    await Promise.all([this.refreshPrediction(), this.refreshTradeoff()]);
  }

  private build(): void {
    this.root.innerHTML = "";
    const layout = el("div", "layout");
    layout.append(this.buildFormPanel(), this.buildDecisionPanel());
    this.root.append(layout, this.buildTradeoffPanel());
  }

  private buildFormPanel(): HTMLElement {
    const panel = el("section", "panel form-panel");
    panel.append(heading("Examination features"));
    const form = el("form", "feature-form");
    form.id = "feature-form";
    form.addEventListener("submit", (ev) => ev.preventDefault());
    for (const variable of featureVariables(this.schema)) {
      const row = el("label", "feature-row");
      const caption = el("span", "feature-name");
      caption.textContent = variable.name;
      const select = document.createElement("select");
      select.name = variable.name;
      select.dataset.feature = variable.name;
      for (const state of variable.states) {
        const option = document.createElement("option");
        option.value = state;
        option.textContent = state;
        select.append(option);
      }
      select.value = this.state.form[variable.name];
      select.addEventListener("change", () => {
        this.state.form[variable.name] = select.value;
        void this.refreshPrediction();
      });
      const error = el("span", "field-error");
      error.dataset.errorFor = variable.name;
      row.append(caption, select, error);
      form.append(row);
      this.selects.set(variable.name, select);
      this.errorSlots.set(variable.name, error);
    }
    panel.append(form);
    return panel;
  }

  private buildDecisionPanel(): HTMLElement {
    const panel = el("section", "panel decision-panel");
    panel.append(heading("Decision"));

    const task = el("div", "task-badge");
    task.id = "task-badge";
    // one model per service, so the task is shown, not switched
    task.textContent = `task: ${this.model.task}`;
    panel.append(task);

    const gauge = el("div", "probability-gauge");
    const value = el("span", "probability-value");
    value.id = "probability";
    value.textContent = "-";
    gauge.append(el("span", "gauge-label", "predicted malignancy probability"), value);
    panel.append(gauge);

    const verdictEl = el("div", "verdict");
    verdictEl.id = "verdict";
    panel.append(verdictEl);

    const sliderRow = el("div", "slider-row");
    const slider = document.createElement("input");
    slider.type = "range";
    slider.id = "threshold-slider";
    slider.min = "0";
    slider.max = String(SLIDER_STEPS);
    slider.step = "1";
    slider.value = String(Math.round(thresholdToSlider(this.state.threshold) * SLIDER_STEPS));
    slider.addEventListener("input", () => {
      this.state.threshold = sliderToThreshold(Number(slider.value) / SLIDER_STEPS);
      this.renderThresholdReadout();
      this.renderVerdict();
      void this.refreshTradeoff();
    });
    sliderRow.append(slider);
    const marks = el("div", "slider-marks");
    for (const pct of REFERENCE_THRESHOLDS_PCT) {
      const mark = el("span", "slider-mark", `${pct}%`);
      mark.style.left = `${100 * thresholdToSlider(pct / 100)}%`;
      marks.append(mark);
    }
    sliderRow.append(marks);
    panel.append(sliderRow);

    const readout = el("div", "threshold-readout");
    readout.id = "threshold-readout";
    panel.append(readout);
    this.renderThresholdReadout();

    if (this.model.subpopulations.length > 0) {
      const row = el("label", "subpop-row");
      row.append(el("span", "", "subpopulation"));
      const select = document.createElement("select");
      select.id = "subpop-select";
      for (const name of ["", ...this.model.subpopulations.filter((s) => s !== "")]) {
        const option = document.createElement("option");
        option.value = name;
        option.textContent = name === "" ? "All ages" : name;
        select.append(option);
      }
      select.addEventListener("change", () => {
        this.state.subpopulation = select.value;
        void this.refreshTradeoff();
      });
      row.append(select);
      panel.append(row);
    }
    return panel;
  }

  private buildTradeoffPanel(): HTMLElement {
    const panel = el("section", "panel tradeoff-panel");
    panel.append(heading("Threshold tradeoff"));
    const body = el("div", "tradeoff-body");
    body.id = "tradeoff";
    body.textContent = "no sweep loaded";
    panel.append(body);
    return panel;
  }

  async refreshPrediction(): Promise<void> {
    this.predictAbort?.abort();
    const controller = new AbortController();
    this.predictAbort = controller;
    this.clearFieldErrors();
    try {
      const res = await predict(this.state.form, controller.signal);
      if (controller !== this.predictAbort) return; // a newer request won
      this.state.probability = res.probability;
      const probe = document.getElementById("probability");
      if (probe) probe.textContent = formatProbability(res.probability);
      this.renderVerdict();
    } catch (err) {
      if (controller.signal.aborted) return;
      if (err instanceof ApiError) {
        this.state.probability = null;
        const probe = document.getElementById("probability");
        if (probe) probe.textContent = "-";
        this.renderVerdict();
        this.renderFieldErrors(err.details);
        return;
      }
      throw err;
    }
  }

  async refreshTradeoff(): Promise<void> {
    this.tradeoffAbort?.abort();
    const controller = new AbortController();
    this.tradeoffAbort = controller;
    const body = document.getElementById("tradeoff");
    if (!body) return;
    try {
      const row = await fetchThresholdRow(
        this.state.threshold, this.state.subpopulation, controller.signal,
      );
      if (controller !== this.tradeoffAbort) return;
      this.renderTradeoff(body, row);
    } catch (err) {
      if (controller.signal.aborted) return;
      if (err instanceof ApiError) {
        body.textContent = err.status === 503 ? "no sweep loaded" : err.message;
        return;
      }
      throw err;
    }
  }

  private renderTradeoff(body: HTMLElement, row: ThresholdRow): void {
    body.innerHTML = "";
    const caption = el(
      "div", "tradeoff-caption",
      `grid threshold ${formatPercent(row.threshold)}` +
        (row.subpopulation ? ` (${row.subpopulation})` : " (all ages)"),
    );
    body.append(caption);
    const table = document.createElement("table");
    table.id = "tradeoff-table";
    const rows: [string, string, string][] = [
      ["positive biopsies", String(row.counts.positive_biopsies), "positive_biopsies"],
      ["negative biopsies", String(row.counts.negative_biopsies), "negative_biopsies"],
      ["biopsies avoided", String(row.counts.avoided), "avoided"],
      ["malignancies missed", String(row.counts.missed), "missed"],
    ];
    for (const [sev, count] of Object.entries(row.counts.missed_by_severity)) {
      rows.push([`${sev} missed`, String(count), `missed_${sev}`]);
    }
    for (const [sev, count] of Object.entries(row.counts.avoided_by_severity)) {
      rows.push([`${sev} avoided`, String(count), `avoided_${sev}`]);
    }
    rows.push(["PPV", row.metrics_formatted.ppv || "-", "ppv"]);
    rows.push(["sensitivity", row.metrics_formatted.sensitivity || "-", "sensitivity"]);
    rows.push(["specificity", row.metrics_formatted.specificity || "-", "specificity"]);
    for (const [label, valueText, key] of rows) {
      const tr = document.createElement("tr");
      const th = document.createElement("th");
      th.textContent = label;
      const td = document.createElement("td");
      td.textContent = valueText;
      td.dataset.metric = key;
      tr.append(th, td);
      table.append(tr);
    }
    body.append(table);
  }

  renderVerdict(): void {
    const slot = document.getElementById("verdict");
    if (!slot) return;
    if (this.state.probability === null) {
      slot.textContent = "verdict: -";
      slot.dataset.verdict = "";
      return;
    }
    const call = verdict(this.state.probability, this.state.threshold);
    slot.textContent = `verdict at ${formatPercent(this.state.threshold)}: ${call}`;
    slot.dataset.verdict = call;
  }

  private renderThresholdReadout(): void {
    const slot = document.getElementById("threshold-readout");
    if (slot) slot.textContent = `biopsy threshold: ${formatPercent(this.state.threshold)}`;
  }

  private clearFieldErrors(): void {
    for (const slot of this.errorSlots.values()) slot.textContent = "";
  }

  private renderFieldErrors(details: string[]): void {
    for (const detail of details) {
      const field = fieldOfErrorDetail(detail, this.schema);
      const slot = field ? this.errorSlots.get(field) : undefined;
      if (slot) slot.textContent = detail;
    }
  }
}

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function heading(text: string): HTMLElement {
  return el("h2", "", text);
}
