import { describe, expect, it } from 'vitest';

import {
  ageMonths,
  bmiFrom,
  toObservations,
  validateAll,
  validateMeasurement,
} from '../src/validate.js';

describe('measurement validation (loader rules)', () => {
  it('accepts a plain BMI entry', () => {
    expect(validateMeasurement({ years: 1, months: 0, bmi: 16.5 }, 0)).toEqual([]);
  });

  it('rejects a negative BMI with a field-level error', () => {
    const errors = validateMeasurement({ years: 1, months: 0, bmi: -4 }, 0);
    expect(errors.some((e) => e.field === 'bmi')).toBe(true);
  });

  it('rejects BMI outside the accepted range', () => {
    expect(validateMeasurement({ years: 1, months: 0, bmi: 75 }, 0)).not.toEqual([]);
    expect(validateMeasurement({ years: 1, months: 0, bmi: 4.5 }, 0)).not.toEqual([]);
  });

  it('computes BMI from weight and height like the loader', () => {
    expect(bmiFrom(3.2, 50)).toBeCloseTo(12.8, 12);
    const errors = validateMeasurement({ years: 0, months: 6, weightKg: 7.5, heightCm: 66 }, 0);
    expect(errors).toEqual([]);
  });

  it('flags inconsistent weight/height/BMI triples', () => {
    const errors = validateMeasurement(
      { years: 0, months: 0, weightKg: 3.2, heightCm: 50, bmi: 14.0 },
      0,
    );
    expect(errors.some((e) => e.message.includes('inconsistent'))).toBe(true);
  });

  it('requires some BMI source', () => {
    const errors = validateMeasurement({ years: 1, months: 0 }, 0);
    expect(errors.some((e) => e.field === 'bmi')).toBe(true);
  });

  it('requires strictly increasing ages across visits', () => {
    const errors = validateAll([
      { years: 1, months: 0, bmi: 16 },
      { years: 1, months: 0, bmi: 16.5 },
    ]);
    expect(errors.some((e) => e.message.includes('increasing'))).toBe(true);
  });
});

describe('wire conversion', () => {
  it('converts years+months to months at the request boundary', () => {
    expect(ageMonths({ years: 2, months: 3, bmi: 16 })).toBe(27);
    const wire = toObservations([
      { years: 0, months: 6, bmi: 17.1 },
      { years: 2, months: 0, weightKg: 12.0, heightCm: 87.0 },
    ]);
    expect(wire[0]).toEqual({ age_months: 6, bmi: 17.1 });
    expect(wire[1].age_months).toBe(24);
    expect(wire[1].bmi).toBeCloseTo(12.0 / 0.87 ** 2, 12);
  });
});
