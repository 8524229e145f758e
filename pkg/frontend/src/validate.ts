// Client-side measurement validation, mirroring the cohort loader's rules:
// BMI in (5, 60), positive weight/height, BMI consistent with weight/height
// when all three are given, strictly increasing ages.

import type { WireObservation } from './types.js';

export interface MeasurementEntry {
  years: number;
  months: number;
  weightKg?: number;
  heightCm?: number;
  bmi?: number;
}

export interface FieldError {
  index: number;
  field: string;
  message: string;
}

export const BMI_MIN = 5;
export const BMI_MAX = 60;

export function ageMonths(entry: MeasurementEntry): number {
  return entry.years * 12 + entry.months;
}

export function bmiFrom(weightKg: number, heightCm: number): number {
  return weightKg / Math.pow(heightCm / 100, 2);
}

export function resolveBmi(entry: MeasurementEntry): number | undefined {
  if (entry.bmi !== undefined) return entry.bmi;
  if (entry.weightKg !== undefined && entry.heightCm !== undefined) {
    return bmiFrom(entry.weightKg, entry.heightCm);
  }
  return undefined;
}

export function validateMeasurement(entry: MeasurementEntry, index: number): FieldError[] {
  const errors: FieldError[] = [];
  const push = (field: string, message: string) => errors.push({ index, field, message });

  if (!Number.isFinite(entry.years) || entry.years < 0) push('years', 'years must be ≥ 0');
  if (!Number.isFinite(entry.months) || entry.months < 0 || entry.months >= 12) {
    push('months', 'months must be in 0–11');
  }
  if (entry.weightKg !== undefined && !(entry.weightKg > 0)) push('weightKg', 'weight must be positive');
  if (entry.heightCm !== undefined && !(entry.heightCm > 0)) push('heightCm', 'height must be positive');
  if (entry.bmi !== undefined && !(entry.bmi > 0)) push('bmi', 'BMI must be positive');

  const bmi = resolveBmi(entry);
  if (bmi === undefined) {
    push('bmi', 'enter BMI or both weight and height');
  } else if (!(bmi > BMI_MIN && bmi < BMI_MAX)) {
    push('bmi', `BMI ${bmi.toFixed(1)} outside accepted range (${BMI_MIN}, ${BMI_MAX})`);
  } else if (
    entry.bmi !== undefined &&
    entry.weightKg !== undefined &&
    entry.heightCm !== undefined &&
    Math.abs(bmiFrom(entry.weightKg, entry.heightCm) - entry.bmi) > 1e-9 * Math.max(1, entry.bmi)
  ) {
    push('bmi', 'BMI inconsistent with weight and height');
  }
  return errors;
}

export function validateAll(measurements: MeasurementEntry[]): FieldError[] {
  const errors = measurements.flatMap((entry, index) => validateMeasurement(entry, index));
  const ages = measurements.map(ageMonths);
  for (let i = 1; i < ages.length; i++) {
    if (ages[i] <= ages[i - 1]) {
      errors.push({ index: i, field: 'years', message: 'ages must be strictly increasing' });
    }
  }
  return errors;
}

// Conversion to the wire happens only after validation succeeds.
export function toObservations(measurements: MeasurementEntry[]): WireObservation[] {
  return measurements.map((entry) => ({
    age_months: ageMonths(entry),
    bmi: resolveBmi(entry) as number,
  }));
}
