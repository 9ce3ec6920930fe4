/**
 * Pure decision-console logic: form initialization, the biopsy verdict
 * rule, probability formatting, and the slider scale. Kept free of DOM and
 * network so the rules are testable in isolation.
 */

import type { SchemaDoc, SchemaVariable } from "./api.js";

export const MISSING_STATE = "missing";

/** Reference thresholds highlighted on the slider (percent). */
export const REFERENCE_THRESHOLDS_PCT = [1, 2, 7];

export function featureVariables(schema: SchemaDoc): SchemaVariable[] {
  return schema.variables.filter((v) => v.role !== "class");
}

/**
 * Initial selection per feature: "missing" wherever the variable declares
 * that state, otherwise its first declared state, so the default form is
 * complete and immediately scorable.
 */
export function initialFormState(schema: SchemaDoc): Record<string, string> {
  const form: Record<string, string> = {};
  for (const v of featureVariables(schema)) {
    form[v.name] = v.states.includes(MISSING_STATE) ? MISSING_STATE : v.states[0];
  }
  return form;
}

export function isComplete(
  form: Record<string, string>,
  schema: SchemaDoc,
): boolean {
  return featureVariables(schema).every((v) => {
    const chosen = form[v.name];
    return chosen !== undefined && v.states.includes(chosen);
  });
}

/** Biopsy exactly when the probability reaches the threshold (>= rule). */
export function verdict(probability: number, threshold: number): "biopsy" | "no biopsy" {
  return probability >= threshold ? "biopsy" : "no biopsy";
}

export function formatProbability(p: number): string {
  return p.toFixed(4);
}

export function formatPercent(t: number): string {
  return `${(100 * t).toFixed(2)}%`;
}

// Slider scale: the clinically interesting band is 1-7%, so the lower part
// of the track is log-scaled below 10% and linear above. Position 0 maps
// to exactly 0 so "always biopsy" stays reachable.
const SPLIT_POS = 0.75;
const LOG_MIN = 0.0005; // 0.05%
const LOG_MAX = 0.1; // 10%

export function sliderToThreshold(pos: number): number {
  if (pos <= 0) return 0;
  if (pos >= 1) return 1;
  if (pos <= SPLIT_POS) {
    const f = pos / SPLIT_POS;
    return LOG_MIN * Math.pow(LOG_MAX / LOG_MIN, f);
  }
  const f = (pos - SPLIT_POS) / (1 - SPLIT_POS);
  return LOG_MAX + f * (1 - LOG_MAX);
}

export function thresholdToSlider(t: number): number {
  if (t <= 0) return 0;
  if (t >= 1) return 1;
  if (t <= LOG_MIN) return 0;
  if (t <= LOG_MAX) {
    return (SPLIT_POS * Math.log(t / LOG_MIN)) / Math.log(LOG_MAX / LOG_MIN);
  }
  return SPLIT_POS + ((t - LOG_MAX) / (1 - LOG_MAX)) * (1 - SPLIT_POS);
}

/**
 * Map an error detail string from the predict endpoint to the feature it
 * names, so validation errors render next to the offending field.
 */
export function fieldOfErrorDetail(
  detail: string,
  schema: SchemaDoc,
): string | null {
  for (const v of featureVariables(schema)) {
    if (detail.includes(`'${v.name}'`)) return v.name;
  }
  return null;
}
