import { describe, expect, it } from 'vitest';

import {
  linearScale,
  renderChart,
  sampleCrossesThreshold,
  targetIndexFor,
} from '../src/chart.js';
import type { PredictResponse } from '../src/types.js';

function smallPrediction(samples?: number[][]): PredictResponse {
  return {
    target_ages: [0, 60, 120],
    mean: [14, 16, 18],
    mixture_lower95: [13, 15, 16.5],
    mixture_upper95: [15, 17, 19.5],
    weights: [0.7, 0.3],
    samples,
  };
}

describe('renderChart', () => {
  it('draws band, mean and observed points', () => {
    const svg = renderChart({
      observations: [{ age_months: 6, bmi: 16.8 }],
      prediction: smallPrediction(),
    });
    expect(svg).toContain('class="band"');
    expect(svg).toContain('class="mean"');
    expect(svg).toContain('class="obs"');
    expect(svg).not.toContain('NaN');
  });

  it('places the threshold line with its value recorded', () => {
    const female = renderChart({
      observations: [],
      prediction: smallPrediction(),
      threshold: 22,
    });
    const male = renderChart({
      observations: [],
      prediction: smallPrediction(),
      threshold: 22.8,
    });
    expect(female).toContain('data-threshold="22"');
    expect(male).toContain('data-threshold="22.8"');
    // the line moves when the threshold moves
    const yOf = (svg: string) => /class="threshold"[^>]*y1="([0-9.]+)"/.exec(svg)?.[1];
    expect(yOf(female)).not.toBe(yOf(male));
  });

  it('recolours exactly the samples crossing at the target age', () => {
    const samples = [
      [14, 15, 23.5], // crosses 22.8 at 120
      [14, 15, 20.0],
      [14, 16, 24.1], // crosses
      [13, 15, 22.8], // equal is not crossing (strict)
    ];
    const svg = renderChart({
      observations: [],
      prediction: smallPrediction(samples),
      threshold: 22.8,
      targetAgeMonths: 120,
    });
    const crossing = (svg.match(/class="sample crossing"/g) ?? []).length;
    const plain = (svg.match(/class="sample"/g) ?? []).length;
    expect(crossing).toBe(2);
    expect(crossing + plain).toBe(4);
  });

  it('caps the spaghetti at 100 samples', () => {
    const samples = Array.from({ length: 150 }, () => [14, 15, 16]);
    const svg = renderChart({ observations: [], prediction: smallPrediction(samples) });
    expect((svg.match(/class="sample/g) ?? []).length).toBe(100);
  });

  it('shows years on the x axis', () => {
    const svg = renderChart({ observations: [], prediction: smallPrediction() });
    expect(svg).toContain('age (years)');
    expect(svg).toContain('>10</text>');
  });
});

describe('chart helpers', () => {
  it('linearScale maps the domain ends onto the range ends', () => {
    const scale = linearScale([0, 10], [40, 140]);
    expect(scale(0)).toBe(40);
    expect(scale(10)).toBe(140);
    expect(scale(5)).toBe(90);
  });

  it('threshold crossing is strict and at the requested age', () => {
    expect(sampleCrossesThreshold([10, 25], 1, 22.8)).toBe(true);
    expect(sampleCrossesThreshold([25, 10], 1, 22.8)).toBe(false);
    expect(targetIndexFor([0, 60, 120], 120)).toBe(2);
    expect(targetIndexFor([0, 60, 120], undefined)).toBe(2);
    expect(targetIndexFor([0, 60, 120], 59)).toBe(1);
  });
});
