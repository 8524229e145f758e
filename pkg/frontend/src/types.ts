// Wire types for the growthcast service (/v1). Ages travel in months; the
// UI converts to years at the display boundary only.

export type Sex = 'F' | 'M';

export interface WireObservation {
  age_months: number;
  bmi: number;
}

export interface PredictRequest {
  sex: Sex;
  observations: WireObservation[];
  target_ages: number[];
  n_samples?: number;
  seed?: number;
}

export interface PredictResponse {
  target_ages: number[];
  mean: number[];
  mixture_lower95: number[];
  mixture_upper95: number[];
  weights: number[];
  samples?: number[][];
  seed?: number;
}

export interface RiskRequest {
  sex: Sex;
  observations: WireObservation[];
  target_age_months?: number;
  threshold?: number;
  method?: 'closed_form' | 'monte_carlo';
  n_samples?: number;
  seed?: number;
}

export interface RiskResponse {
  probability: number;
  method: string;
  threshold_used: number;
}

export interface ClusterCurve {
  weight: number;
  mean: number[];
  lower95: number[];
  upper95: number[];
}

export interface ClustersResponse {
  grid_months: number[];
  clusters: ClusterCurve[];
}
