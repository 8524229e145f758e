// Forecast chart as a pure SVG string: observed points, mixture mean, 95%
// band, posterior sample spaghetti and the overweight threshold line.
// Everything drawn comes verbatim from a service response; the only local
// computation is recolouring samples that cross the threshold at the target
// age, and the months -> years conversion on the x axis.

import type { PredictResponse, WireObservation } from './types.js';

export interface ChartInput {
  observations: WireObservation[];
  prediction: PredictResponse;
  threshold?: number;
  targetAgeMonths?: number;
  maxSamples?: number;
}

export interface ChartOptions {
  width?: number;
  height?: number;
}

const MARGIN = { top: 12, right: 16, bottom: 34, left: 44 };

export interface LinearScale {
  (value: number): number;
  domain: [number, number];
}

export function linearScale(domain: [number, number], range: [number, number]): LinearScale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  const scale = ((value: number) => r0 + ((value - d0) / span) * (r1 - r0)) as LinearScale;
  scale.domain = domain;
  return scale;
}

export function sampleCrossesThreshold(
  sample: number[],
  targetIndex: number,
  threshold: number,
): boolean {
  return sample[targetIndex] > threshold;
}

export function targetIndexFor(targetAges: number[], targetAgeMonths: number | undefined): number {
  if (targetAgeMonths === undefined) return targetAges.length - 1;
  let best = targetAges.length - 1;
  let bestGap = Infinity;
  targetAges.forEach((age, i) => {
    const gap = Math.abs(age - targetAgeMonths);
    if (gap < bestGap) {
      bestGap = gap;
      best = i;
    }
  });
  return best;
}

function fmt(value: number): string {
  return Number.isInteger(value) ? String(value) : value.toFixed(2);
}

function polyline(xs: number[], ys: number[], x: LinearScale, y: LinearScale): string {
  return xs.map((v, i) => `${fmt(x(v))},${fmt(y(ys[i]))}`).join(' ');
}

export function renderChart(input: ChartInput, options: ChartOptions = {}): string {
  const width = options.width ?? 720;
  const height = options.height ?? 420;
  const { prediction, observations, threshold } = input;
  const agesYears = prediction.target_ages.map((m) => m / 12);
  const obsYears = observations.map((o) => o.age_months / 12);

  const allBmi = [
    ...prediction.mixture_lower95,
    ...prediction.mixture_upper95,
    ...observations.map((o) => o.bmi),
    ...(threshold !== undefined ? [threshold] : []),
  ];
  const yMin = Math.min(...allBmi) - 0.8;
  const yMax = Math.max(...allBmi) + 0.8;
  const xMax = Math.max(10, ...agesYears, ...obsYears);

  const x = linearScale([0, xMax], [MARGIN.left, width - MARGIN.right]);
  const y = linearScale([yMin, yMax], [height - MARGIN.bottom, MARGIN.top]);

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}" class="forecast-chart">`,
  );

  // axes with year ticks
  const axisY = height - MARGIN.bottom;
  parts.push(`<line class="axis" x1="${MARGIN.left}" y1="${axisY}" x2="${width - MARGIN.right}" y2="${axisY}"/>`);
  parts.push(`<line class="axis" x1="${MARGIN.left}" y1="${MARGIN.top}" x2="${MARGIN.left}" y2="${axisY}"/>`);
  for (let year = 0; year <= xMax; year += 2) {
    parts.push(
      `<text class="tick" x="${fmt(x(year))}" y="${axisY + 16}" text-anchor="middle">${year}</text>`,
    );
  }
  parts.push(
    `<text class="axis-label" x="${(MARGIN.left + width - MARGIN.right) / 2}" y="${height - 6}" text-anchor="middle">age (years)</text>`,
  );
  for (let v = Math.ceil(yMin / 2) * 2; v <= yMax; v += 2) {
    parts.push(`<text class="tick" x="${MARGIN.left - 8}" y="${fmt(y(v) + 4)}" text-anchor="end">${v}</text>`);
  }

  // 95% mixture band
  const bandTop = prediction.target_ages.map((_, i) => prediction.mixture_upper95[i]);
  const bandBottom = prediction.target_ages.map((_, i) => prediction.mixture_lower95[i]);
  const forward = agesYears.map((v, i) => `${fmt(x(v))},${fmt(y(bandTop[i]))}`).join(' ');
  const backward = agesYears
    .map((v, i) => `${fmt(x(v))},${fmt(y(bandBottom[i]))}`)
    .reverse()
    .join(' ');
  parts.push(`<polygon class="band" points="${forward} ${backward}"/>`);

  // posterior samples, recoloured when crossing the threshold at target age
  const samples = (input.prediction.samples ?? []).slice(0, input.maxSamples ?? 100);
  if (samples.length) {
    const targetIdx = targetIndexFor(prediction.target_ages, input.targetAgeMonths);
    for (const sample of samples) {
      const crossing =
        threshold !== undefined && sampleCrossesThreshold(sample, targetIdx, threshold);
      parts.push(
        `<polyline class="sample${crossing ? ' crossing' : ''}" fill="none" points="${polyline(
          agesYears,
          sample,
          x,
          y,
        )}"/>`,
      );
    }
  }

  // mixture mean
  parts.push(
    `<polyline class="mean" fill="none" points="${polyline(agesYears, prediction.mean, x, y)}"/>`,
  );

  // threshold line
  if (threshold !== undefined) {
    const ty = fmt(y(threshold));
    parts.push(
      `<line class="threshold" data-threshold="${threshold}" x1="${MARGIN.left}" y1="${ty}" x2="${width - MARGIN.right}" y2="${ty}" stroke-dasharray="6 4"/>`,
    );
  }

  // observed points on top
  for (const obs of observations) {
    parts.push(
      `<circle class="obs" cx="${fmt(x(obs.age_months / 12))}" cy="${fmt(y(obs.bmi))}" r="3.5"/>`,
    );
  }

  parts.push('</svg>');
  return parts.join('\n');
}

export function renderWeightsBar(weights: number[]): string {
  const parts: string[] = ['<div class="weights-bar">'];
  weights.forEach((w, k) => {
    parts.push(
      `<span class="weight-segment cluster-${k}" style="flex-grow:${w.toFixed(6)}" title="cluster ${k + 1}: ${(100 * w).toFixed(1)}%"></span>`,
    );
  });
  parts.push('</div>');
  return parts.join('');
}
