// Risk readout formatting. The displayed probability is the service's
// number verbatim (formatting only) - the UI never recomputes probabilities
// from samples or anything else.

import type { RiskResponse } from './types.js';

export interface RiskReadout {
  percentText: string;
  methodText: string;
  thresholdText: string;
}

export function riskReadout(response: RiskResponse): RiskReadout {
  return {
    percentText: `${(100 * response.probability).toFixed(1)}%`,
    methodText: response.method === 'monte_carlo' ? 'Monte Carlo (100k samples)' : 'closed form',
    thresholdText: `BMI > ${response.threshold_used} kg/m²`,
  };
}
