/**
 * Reading of the simulator's CSV artifacts.
 *
 * Trajectory files carry columns t, x_1..x_n, V, S, residual; the MIET
 * localization curve carries tau, lambda_min. All values are plain numbers
 * (17 significant digits, no quoting).
 */

import { readFileSync } from "node:fs";
import Papa from "papaparse";

export interface NumericTable {
  readonly columns: string[];
  readonly rows: number[][];
}

export class MissingColumnError extends Error {
  constructor(public readonly column: string, public readonly path: string) {
    super(`column '${column}' not found in ${path}`);
  }
}

export class EmptyCsvError extends Error {
  constructor(public readonly path: string) {
    super(`no data rows in ${path}`);
  }
}

export function parseCsvText(text: string, path = "<memory>"): NumericTable {
  const parsed = Papa.parse<string[]>(text.trim(), { skipEmptyLines: true });
  if (parsed.errors.length > 0) {
    throw new Error(`${path}: ${parsed.errors[0].message}`);
  }
  const data = parsed.data;
  if (data.length < 2) {
    throw new EmptyCsvError(path);
  }
  const columns = data[0].map((c) => c.trim());
  const rows = data.slice(1).map((cells) => cells.map(Number));
  return { columns, rows };
}

export function readCsv(path: string): NumericTable {
  return parseCsvText(readFileSync(path, "utf-8"), path);
}

export function column(
  table: NumericTable,
  name: string,
  path = "<memory>",
): number[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) {
    throw new MissingColumnError(name, path);
  }
  return table.rows.map((r) => r[idx]);
}

/** Largest time step of a sampled series (resampling tolerance). */
export function maxStep(t: number[]): number {
  let out = 0;
  for (let i = 1; i < t.length; i += 1) {
    out = Math.max(out, t[i] - t[i - 1]);
  }
  return out;
}

/**
 * Nearest-time resampling of (t, v) onto targetT. Points farther than tol
 * from any sample become NaN (drawn as gaps). Both time axes ascending.
 */
export function resampleNearest(
  targetT: number[],
  t: number[],
  v: number[],
  tol: number,
): number[] {
  const out = new Array<number>(targetT.length);
  let j = 0;
  for (let i = 0; i < targetT.length; i += 1) {
    const target = targetT[i];
    while (j + 1 < t.length && Math.abs(t[j + 1] - target) <= Math.abs(t[j] - target)) {
      j += 1;
    }
    out[i] = Math.abs(t[j] - target) <= tol ? v[j] : NaN;
  }
  return out;
}
