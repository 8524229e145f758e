// Session state plus URL-safe (de)serialization for sharing a case. Only
// the entered inputs travel in the URL; predictions are re-fetched.

import type { PredictResponse, RiskResponse, Sex } from './types.js';
import type { MeasurementEntry } from './validate.js';

export interface SessionState {
  sex: Sex;
  measurements: MeasurementEntry[];
  horizonYears: number;
  targetAgeYears: number;
  thresholdOverride?: number;
  method: 'closed_form' | 'monte_carlo';
  lastPrediction?: PredictResponse;
  lastRisk?: RiskResponse;
}

export const FEMALE_THRESHOLD = 22.0;
export const MALE_THRESHOLD = 22.8;

export function defaultThreshold(sex: Sex): number {
  return sex === 'F' ? FEMALE_THRESHOLD : MALE_THRESHOLD;
}

export function activeThreshold(state: Pick<SessionState, 'sex' | 'thresholdOverride'>): number {
  return state.thresholdOverride ?? defaultThreshold(state.sex);
}

export function initialState(): SessionState {
  return {
    sex: 'F',
    measurements: [],
    horizonYears: 10,
    targetAgeYears: 10,
    method: 'closed_form',
  };
}

interface SharedCase {
  v: 1;
  sex: Sex;
  m: [number, number, number | null, number | null, number | null][];
  h: number;
  t: number;
  thr: number | null;
  method: 'closed_form' | 'monte_carlo';
}

function toBase64Url(text: string): string {
  const bytes = new TextEncoder().encode(text);
  let binary = '';
  bytes.forEach((b) => (binary += String.fromCharCode(b)));
  return btoa(binary).replace(/\+/g, '-').replace(/\//g, '_').replace(/=+$/, '');
}

function fromBase64Url(encoded: string): string {
  const base64 = encoded.replace(/-/g, '+').replace(/_/g, '/');
  const padded = base64 + '='.repeat((4 - (base64.length % 4)) % 4);
  const binary = atob(padded);
  const bytes = Uint8Array.from(binary, (c) => c.charCodeAt(0));
  return new TextDecoder().decode(bytes);
}

export function serializeState(state: SessionState): string {
  const doc: SharedCase = {
    v: 1,
    sex: state.sex,
    m: state.measurements.map((e) => [
      e.years,
      e.months,
      e.weightKg ?? null,
      e.heightCm ?? null,
      e.bmi ?? null,
    ]),
    h: state.horizonYears,
    t: state.targetAgeYears,
    thr: state.thresholdOverride ?? null,
    method: state.method,
  };
  return toBase64Url(JSON.stringify(doc));
}

export function parseState(encoded: string): SessionState {
  const doc = JSON.parse(fromBase64Url(encoded)) as SharedCase;
  if (doc.v !== 1) throw new Error(`unsupported case version ${doc.v}`);
  return {
    sex: doc.sex,
    measurements: doc.m.map(([years, months, weightKg, heightCm, bmi]) => ({
      years,
      months,
      weightKg: weightKg ?? undefined,
      heightCm: heightCm ?? undefined,
      bmi: bmi ?? undefined,
    })),
    horizonYears: doc.h,
    targetAgeYears: doc.t,
    thresholdOverride: doc.thr ?? undefined,
    method: doc.method,
  };
}
