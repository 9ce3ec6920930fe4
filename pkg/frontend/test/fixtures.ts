/** Fixture loading and a faithful in-test stand-in for the decision service. */

import { readFileSync } from "node:fs";
import { join } from "node:path";
import type { SchemaDoc, ThresholdRow } from "../src/api.js";

const FIXTURE_DIR = join(process.cwd(), "test", "fixtures");

export function loadSchemaFixture(): SchemaDoc {
  const raw = readFileSync(join(FIXTURE_DIR, "schema.json"), "utf-8");
  return JSON.parse(raw) as SchemaDoc;
}

export interface SweepFixture {
  task: string;
  subpopulation: string;
  gridPoints: number;
  rows: ThresholdRow[];
}

/** Parse a sweep CSV emitted by the pipeline into service-shaped rows. */
export function loadSweepFixture(name: string): SweepFixture {
  const raw = readFileSync(join(FIXTURE_DIR, name), "utf-8");
  const lines = raw.trim().split("\n");
  const config = JSON.parse(lines[0].replace(/^# config: /, ""));
  const header = lines[1].split(",");
  const gridPoints = Number(config.grid);
  const subpopulation = String(config.subpop ?? "");
  const task = String(config.task);
  const rows: ThresholdRow[] = [];
  for (let g = 0; g < gridPoints; g++) {
    const cells = lines[2 + g].split(",");
    const cell = (column: string) => cells[header.indexOf(column)];
    const missed: Record<string, number> = {};
    const avoided: Record<string, number> = {};
    for (const column of header) {
      if (column.startsWith("missed_")) {
        missed[column.slice("missed_".length)] = Number(cell(column));
      } else if (column.startsWith("avoided_")) {
        avoided[column.slice("avoided_".length)] = Number(cell(column));
      }
    }
    const sum = (vals: Record<string, number>) =>
      Object.values(vals).reduce((a, b) => a + b, 0);
    rows.push({
      requested: g / (gridPoints - 1),
      threshold: g / (gridPoints - 1),
      subpopulation,
      task,
      grid_points: gridPoints,
      counts: {
        positive_biopsies: Number(cell("positive_biopsies")),
        negative_biopsies: Number(cell("negative_biopsies")),
        avoided: sum(avoided),
        missed: sum(missed),
        missed_by_severity: missed,
        avoided_by_severity: avoided,
      },
      metrics: {
        ppv: cell("ppv") === "" ? null : Number(cell("ppv")),
        sensitivity: cell("sensitivity") === "" ? null : Number(cell("sensitivity")),
        specificity: cell("specificity") === "" ? null : Number(cell("specificity")),
      },
      metrics_formatted: {
        ppv: cell("ppv"),
        sensitivity: cell("sensitivity"),
        specificity: cell("specificity"),
      },
    });
  }
  return { task, subpopulation, gridPoints, rows };
}

/** Same snap-down rule as the service: nearest grid row at or below t. */
export function lookupRow(sweep: SweepFixture, t: number): ThresholdRow {
  const step = 1 / (sweep.gridPoints - 1);
  let g = Math.floor(t / step + 1e-9);
  g = Math.min(g, sweep.gridPoints - 1);
  if (sweep.rows[g].threshold > t + 1e-15) g -= 1;
  return { ...sweep.rows[g], requested: t };
}

/** Deterministic pseudo-probability per feature vector (xorshift hash). */
export function scriptedProbability(features: Record<string, string>): number {
  const text = Object.keys(features)
    .sort()
    .map((k) => `${k}=${features[k]}`)
    .join(";");
  let h = 2166136261 >>> 0;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 16777619) >>> 0;
  }
  return (h % 100000) / 100000;
}

export interface MockService {
  fetch: typeof fetch;
  predictLog: { features: Record<string, string>; probability: number }[];
  schema: SchemaDoc;
  sweeps: Record<string, SweepFixture>;
}

/** fetch() replacement that behaves like the decision service. */
export function makeMockService(
  schema: SchemaDoc,
  sweeps: Record<string, SweepFixture>,
  options: { predictDelayMs?: (call: number) => number } = {},
): MockService {
  const predictLog: MockService["predictLog"] = [];
  const featureVars = schema.variables.filter((v) => v.role !== "class");
  let predictCalls = 0;

  const json = (status: number, body: unknown): Response =>
    new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });

  const handler = async (
    input: RequestInfo | URL,
    init?: RequestInit,
  ): Promise<Response> => {
    const url = new URL(String(input), "http://service.test");
    const signal = init?.signal ?? undefined;
    if (url.pathname === "/api/schema") {
      return json(200, schema);
    }
    if (url.pathname === "/api/model") {
      return json(200, {
        model_id: "sha256:mock",
        schema_hash: "sha256:mock-schema",
        task: "bm",
        alpha: 0.5,
        root_feature: featureVars[0].name,
        edges: [],
        n_features: featureVars.length,
        variables: schema.variables,
        subpopulations: Object.keys(sweeps).sort(),
      });
    }
    if (url.pathname === "/api/predict") {
      const call = predictCalls++;
      const delay = options.predictDelayMs?.(call) ?? 0;
      if (delay > 0) {
        await new Promise((resolve, reject) => {
          const timer = setTimeout(resolve, delay);
          signal?.addEventListener("abort", () => {
            clearTimeout(timer);
            reject(new DOMException("aborted", "AbortError"));
          });
        });
      }
      const body = JSON.parse(String(init?.body)) as {
        features: Record<string, string>;
      };
      const problems: string[] = [];
      for (const name of Object.keys(body.features)) {
        if (!featureVars.some((v) => v.name === name)) {
          problems.push(`unknown feature: '${name}'`);
        }
      }
      for (const v of featureVars) {
        const state = body.features[v.name];
        if (state === undefined) problems.push(`missing feature: '${v.name}'`);
        else if (!v.states.includes(state)) {
          problems.push(`unknown state '${state}' for feature '${v.name}'`);
        }
      }
      if (problems.length > 0) {
        return json(400, { error: "invalid features", details: problems });
      }
      const probability = scriptedProbability(body.features);
      predictLog.push({ features: { ...body.features }, probability });
      return json(200, { probability, task: "bm", model_id: "sha256:mock" });
    }
    if (url.pathname === "/api/threshold") {
      const t = Number(url.searchParams.get("t"));
      const subpop = url.searchParams.get("subpop") ?? "";
      const sweep = sweeps[subpop];
      if (!sweep) {
        return json(404, { error: `no sweep loaded for subpopulation '${subpop}'`, details: [] });
      }
      if (!(t >= 0 && t <= 1)) {
        return json(400, { error: `threshold ${t} outside [0, 1]`, details: [] });
      }
      return json(200, lookupRow(sweep, t));
    }
    return json(404, { error: `no such endpoint: ${url.pathname}`, details: [] });
  };

  return { fetch: handler as typeof fetch, predictLog, schema, sweeps };
}
