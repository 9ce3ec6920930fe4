/**
 * Typed client for the decision-service JSON API. Every number the UI shows
 * comes out of one of these calls; the UI never computes probabilities or
 * tradeoff counts itself.
 */

export interface SchemaVariable {
  name: string;
  states: string[];
  role: string;
}

export interface SchemaDoc {
  variables: SchemaVariable[];
  class_variable: string;
}

export interface PredictResponse {
  probability: number;
  task: string;
  model_id: string;
}

export interface ThresholdCounts {
  positive_biopsies: number;
  negative_biopsies: number;
  avoided: number;
  missed: number;
  missed_by_severity: Record<string, number>;
  avoided_by_severity: Record<string, number>;
}

export interface ThresholdRow {
  requested: number;
  threshold: number;
  subpopulation: string;
  task: string;
  grid_points: number;
  counts: ThresholdCounts;
  metrics: {
    ppv: number | null;
    sensitivity: number | null;
    specificity: number | null;
  };
  metrics_formatted: {
    ppv: string;
    sensitivity: string;
    specificity: string;
  };
}

export interface ModelInfo {
  model_id: string;
  schema_hash: string;
  task: string;
  alpha: number;
  root_feature: string;
  edges: { child: string; parent: string }[];
  n_features: number;
  variables: SchemaVariable[];
  subpopulations: string[];
}

export class ApiError extends Error {
  readonly status: number;
  readonly details: string[];

  constructor(status: number, message: string, details: string[]) {
    super(message);
    this.status = status;
    this.details = details;
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const res = await fetch(path, init);
  const body = await res.json();
  if (!res.ok) {
    const message = typeof body?.error === "string" ? body.error : res.statusText;
    const details = Array.isArray(body?.details) ? body.details : [];
    throw new ApiError(res.status, message, details);
  }
  return body as T;
}

export function fetchSchema(signal?: AbortSignal): Promise<SchemaDoc> {
  return request<SchemaDoc>("/api/schema", { signal });
}

export function fetchModelInfo(signal?: AbortSignal): Promise<ModelInfo> {
  return request<ModelInfo>("/api/model", { signal });
}

export function predict(
  features: Record<string, string>,
  signal?: AbortSignal,
): Promise<PredictResponse> {
  return request<PredictResponse>("/api/predict", {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ features }),
    signal,
  });
}

export function fetchThresholdRow(
  threshold: number,
  subpopulation: string,
  signal?: AbortSignal,
): Promise<ThresholdRow> {
  const params = new URLSearchParams({ t: String(threshold) });
  if (subpopulation) params.set("subpop", subpopulation);
  return request<ThresholdRow>(`/api/threshold?${params.toString()}`, { signal });
}
