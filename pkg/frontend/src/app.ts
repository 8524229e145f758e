// DOM wiring for the dashboard. All numbers on screen come from service
// responses; this module only collects inputs, calls the API and renders.

import { ApiClient, ApiError, LatestOnly } from './api.js';
import { renderChart, renderWeightsBar } from './chart.js';
import { riskReadout } from './risk.js';
import {
  activeThreshold,
  initialState,
  parseState,
  serializeState,
  type SessionState,
} from './state.js';
import type { Sex } from './types.js';
import {
  toObservations,
  validateAll,
  type FieldError,
  type MeasurementEntry,
} from './validate.js';

const api = new ApiClient('');
const predictGate = new LatestOnly();
const riskGate = new LatestOnly();

let state: SessionState = initialState();

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

function readMeasurements(): MeasurementEntry[] {
  const rows = Array.from(document.querySelectorAll<HTMLTableRowElement>('#measurements tbody tr'));
  return rows.map((row) => {
    const num = (name: string): number | undefined => {
      const input = row.querySelector<HTMLInputElement>(`input[name="${name}"]`);
      if (!input || input.value.trim() === '') return undefined;
      return Number(input.value);
    };
    return {
      years: num('years') ?? 0,
      months: num('months') ?? 0,
      weightKg: num('weight'),
      heightCm: num('height'),
      bmi: num('bmi'),
    };
  });
}

function showErrors(errors: FieldError[]): void {
  const box = $('errors');
  box.innerHTML = errors
    .map((e) => `<p class="error">visit ${e.index + 1}, ${e.field}: ${e.message}</p>`)
    .join('');
  document.querySelectorAll('.invalid').forEach((el) => el.classList.remove('invalid'));
  const rows = document.querySelectorAll<HTMLTableRowElement>('#measurements tbody tr');
  for (const error of errors) {
    const input = rows[error.index]?.querySelector(`input[name="${mapField(error.field)}"]`);
    input?.classList.add('invalid');
  }
}

function mapField(field: string): string {
  return { weightKg: 'weight', heightCm: 'height' }[field] ?? field;
}

function addRow(entry?: MeasurementEntry): void {
  const tbody = document.querySelector('#measurements tbody')!;
  const row = document.createElement('tr');
  row.innerHTML = `
    <td><input name="years" type="number" min="0" max="10" step="1" value="${entry?.years ?? ''}"></td>
    <td><input name="months" type="number" min="0" max="11" step="1" value="${entry?.months ?? ''}"></td>
    <td><input name="weight" type="number" min="0" step="0.01" value="${entry?.weightKg ?? ''}"></td>
    <td><input name="height" type="number" min="0" step="0.1" value="${entry?.heightCm ?? ''}"></td>
    <td><input name="bmi" type="number" min="0" step="0.01" value="${entry?.bmi ?? ''}"></td>
    <td><button class="remove" type="button">✕</button></td>`;
  row.querySelector('.remove')!.addEventListener('click', () => row.remove());
  tbody.appendChild(row);
}

function syncUrl(): void {
  window.location.hash = serializeState(state);
}

function targetAges(): number[] {
  const horizon = state.horizonYears * 12;
  const ages: number[] = [];
  for (let m = 0; m <= horizon; m += 2) ages.push(m);
  if (ages[ages.length - 1] !== horizon) ages.push(horizon);
  const target = state.targetAgeYears * 12;
  if (!ages.includes(target) && target <= horizon) ages.push(target);
  return ages.sort((a, b) => a - b);
}

async function submitMeasurements(): Promise<void> {
  state.sex = ($('sex') as HTMLSelectElement).value as Sex;
  state.horizonYears = Number(($('horizon') as HTMLInputElement).value);
  state.measurements = readMeasurements();
  const errors = validateAll(state.measurements);
  showErrors(errors);
  if (errors.length > 0 || state.measurements.length === 0) return;
  syncUrl();

  const observations = toObservations(state.measurements);
  try {
    const prediction = await predictGate.run(() =>
      api.predict({
        sex: state.sex,
        observations,
        target_ages: targetAges(),
        n_samples: 100,
        seed: 1,
      }),
    );
    if (!prediction) return; // a newer submit superseded this one
    state.lastPrediction = prediction;
    renderForecast();
    await refreshRisk();
  } catch (error) {
    $('errors').innerHTML = `<p class="error">${error instanceof ApiError ? error.message : 'service unreachable'}</p>`;
  }
}

function renderForecast(): void {
  if (!state.lastPrediction) return;
  $('chart').innerHTML = renderChart({
    observations: toObservations(state.measurements),
    prediction: state.lastPrediction,
    threshold: activeThreshold(state),
    targetAgeMonths: state.targetAgeYears * 12,
  });
  $('weights').innerHTML = renderWeightsBar(state.lastPrediction.weights);
}

async function refreshRisk(): Promise<void> {
  if (!state.lastPrediction) return;
  state.thresholdOverride = thresholdOverrideFromControls();
  state.targetAgeYears = Number(($('target-age') as HTMLInputElement).value);
  state.method = ($('method') as HTMLSelectElement).value as SessionState['method'];
  syncUrl();
  try {
    const risk = await riskGate.run(() =>
      api.risk({
        sex: state.sex,
        observations: toObservations(state.measurements),
        target_age_months: state.targetAgeYears * 12,
        threshold: state.thresholdOverride,
        method: state.method,
        seed: 1,
      }),
    );
    if (!risk) return;
    state.lastRisk = risk;
    const readout = riskReadout(risk);
    $('risk-value').textContent = readout.percentText;
    $('risk-method').textContent = readout.methodText;
    $('risk-threshold').textContent = readout.thresholdText;
    renderForecast(); // threshold line and sample recolouring follow the controls
  } catch (error) {
    $('errors').innerHTML = `<p class="error">${error instanceof ApiError ? error.message : 'service unreachable'}</p>`;
  }
}

function thresholdOverrideFromControls(): number | undefined {
  const raw = ($('threshold') as HTMLInputElement).value.trim();
  return raw === '' ? undefined : Number(raw);
}

function restoreFromUrl(): void {
  const encoded = window.location.hash.replace(/^#/, '');
  if (!encoded) return;
  try {
    state = { ...state, ...parseState(encoded) };
  } catch {
    return;
  }
  ($('sex') as HTMLSelectElement).value = state.sex;
  ($('horizon') as HTMLInputElement).value = String(state.horizonYears);
  ($('target-age') as HTMLInputElement).value = String(state.targetAgeYears);
  ($('threshold') as HTMLInputElement).value = state.thresholdOverride?.toString() ?? '';
  ($('method') as HTMLSelectElement).value = state.method;
  document.querySelector('#measurements tbody')!.innerHTML = '';
  state.measurements.forEach(addRow);
}

export function boot(): void {
  $('add-row').addEventListener('click', () => addRow());
  $('submit').addEventListener('click', () => void submitMeasurements());
  for (const id of ['threshold', 'target-age', 'method']) {
    $(id).addEventListener('change', () => void refreshRisk());
  }
  $('sex').addEventListener('change', () => void submitMeasurements());
  restoreFromUrl();
  if (state.measurements.length === 0) addRow();
  else void submitMeasurements();
  void api
    .health()
    .then((h) => ($('status').textContent = `service ok (model ${h.model_version})`))
    .catch(() => ($('status').textContent = 'service unreachable'));
}

if (typeof document !== 'undefined' && document.readyState !== 'loading') {
  boot();
} else if (typeof document !== 'undefined') {
  document.addEventListener('DOMContentLoaded', boot);
}
