/**
 * SVG figure generation with server-side echarts.
 *
 * Two figures: the certificate-evolution comparison (one solid curve per
 * design on a log axis plus the performance barrier dashed) and the MIET
 * localization curve (smallest eigenvalue against inter-event time, with
 * the first zero crossing marked).
 */

import { writeFileSync } from "node:fs";
import * as echarts from "echarts";

import {
  EmptyCsvError,
  MissingColumnError,
  NumericTable,
  column,
  maxStep,
  readCsv,
  resampleNearest,
} from "./csv.js";

export interface PlotJob {
  inputs: string[];
  labels: string[];
  out: string;
  logScale: boolean;
  width?: number;
  height?: number;
}

function renderSvg(option: echarts.EChartsCoreOption, width: number, height: number): string {
  const chart = echarts.init(null, null, {
    renderer: "svg",
    ssr: true,
    width,
    height,
  });
  chart.setOption(option);
  const svg = chart.renderToSVGString();
  chart.dispose();
  return svg;
}

function pairs(t: number[], v: number[], positiveOnly: boolean): Array<[number, number]> {
  const out: Array<[number, number]> = [];
  for (let i = 0; i < t.length; i += 1) {
    if (Number.isNaN(v[i])) continue;
    if (positiveOnly && v[i] <= 0) continue;
    out.push([t[i], v[i]]);
  }
  return out;
}

/**
 * Certificate curves of every input (V column, solid) under the performance
 * barrier of the first input (S column, dashed), optionally log-scaled.
 */
export function plotLyapunov(job: PlotJob): void {
  if (job.inputs.length === 0) {
    throw new Error("no input files given");
  }
  const tables: NumericTable[] = job.inputs.map((p) => readCsv(p));
  const series: object[] = [];
  const baseT = column(tables[0], "t", job.inputs[0]);
  for (let i = 0; i < tables.length; i += 1) {
    const t = column(tables[i], "t", job.inputs[i]);
    const v = column(tables[i], "V", job.inputs[i]);
    series.push({
      name: job.labels[i] ?? job.inputs[i],
      type: "line",
      showSymbol: false,
      data: pairs(t, v, job.logScale),
    });
  }
  // barrier from the first input, resampled onto its own grid is a no-op;
  // other grids only matter if the first file were subsampled differently
  const sRaw = column(tables[0], "S", job.inputs[0]);
  const tol = Math.max(maxStep(baseT), 1e-12);
  const s = resampleNearest(baseT, baseT, sRaw, tol);
  series.push({
    name: "performance barrier",
    type: "line",
    showSymbol: false,
    lineStyle: { type: "dashed", width: 2 },
    data: pairs(baseT, s, job.logScale),
  });
  const option: echarts.EChartsCoreOption = {
    animation: false,
    legend: { top: 8, data: (series as Array<{ name: string }>).map((s0) => s0.name) },
    grid: { left: 70, right: 24, top: 56, bottom: 48 },
    xAxis: { type: "value", name: "t [s]", nameLocation: "middle", nameGap: 28 },
    yAxis: {
      type: job.logScale ? "log" : "value",
      name: "certificate value",
    },
    series,
  };
  writeFileSync(job.out, renderSvg(option, job.width ?? 880, job.height ?? 560));
}

export interface CrossingInfo {
  tau: number | null;
  warning?: string;
}

export function firstZeroCrossing(tau: number[], lam: number[]): CrossingInfo {
  for (let i = 1; i < tau.length; i += 1) {
    if (lam[i - 1] > 0 && lam[i] <= 0) {
      // linear interpolation inside the bracketing interval
      const w = lam[i - 1] / (lam[i - 1] - lam[i]);
      return { tau: tau[i - 1] + w * (tau[i] - tau[i - 1]) };
    }
  }
  return { tau: null, warning: "curve has no zero crossing; no marker drawn" };
}

/**
 * lambda_min(tau) curves (one per input CSV) with the first zero crossing
 * of each marked; a monotone-positive curve gets no marker and a warning.
 */
export function plotMietCurve(job: PlotJob): string[] {
  if (job.inputs.length === 0) {
    throw new Error("no input files given");
  }
  const warnings: string[] = [];
  const series: object[] = [];
  for (let i = 0; i < job.inputs.length; i += 1) {
    const table = readCsv(job.inputs[i]);
    const tau = column(table, "tau", job.inputs[i]);
    const lam = column(table, "lambda_min", job.inputs[i]);
    const crossing = firstZeroCrossing(tau, lam);
    const entry: Record<string, unknown> = {
      name: job.labels[i] ?? job.inputs[i],
      type: "line",
      showSymbol: false,
      data: tau.map((x, k) => [x, lam[k]]),
    };
    if (crossing.tau !== null) {
      entry.markPoint = {
        symbol: "circle",
        symbolSize: 9,
        label: {
          formatter: `tau = ${crossing.tau.toPrecision(6)}`,
          position: "top",
        },
        data: [{ coord: [crossing.tau, 0] }],
      };
    } else if (crossing.warning) {
      warnings.push(`${job.inputs[i]}: ${crossing.warning}`);
    }
    series.push(entry);
  }
  const option: echarts.EChartsCoreOption = {
    animation: false,
    legend: { top: 8 },
    grid: { left: 70, right: 24, top: 56, bottom: 48 },
    xAxis: { type: "value", name: "inter-event time [s]", nameLocation: "middle", nameGap: 28 },
    yAxis: { type: "value", name: "smallest eigenvalue" },
    series,
  };
  writeFileSync(job.out, renderSvg(option, job.width ?? 880, job.height ?? 560));
  return warnings;
}

export { EmptyCsvError, MissingColumnError };
