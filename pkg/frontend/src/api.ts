// Thin fetch client for the /v1 endpoints plus a latest-response gate:
// at most one in-flight request matters per control group, and stale
// responses are discarded by sequence number.

import type {
  ClustersResponse,
  PredictRequest,
  PredictResponse,
  RiskRequest,
  RiskResponse,
} from './types.js';

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

async function postJson<T>(url: string, body: unknown): Promise<T> {
  const response = await fetch(url, {
    method: 'POST',
    headers: { 'content-type': 'application/json' },
    body: JSON.stringify(body),
  });
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const doc = await response.json();
      detail = doc.error ?? JSON.stringify(doc);
    } catch {
      // keep statusText
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(private baseUrl: string = '') {}

  async health(): Promise<{ status: string; model_version: string }> {
    const response = await fetch(`${this.baseUrl}/v1/health`);
    if (!response.ok) throw new ApiError(response.status, response.statusText);
    return response.json();
  }

  clusters(): Promise<ClustersResponse> {
    return fetch(`${this.baseUrl}/v1/clusters`).then((r) => {
      if (!r.ok) throw new ApiError(r.status, r.statusText);
      return r.json();
    });
  }

  predict(request: PredictRequest): Promise<PredictResponse> {
    return postJson(`${this.baseUrl}/v1/predict`, request);
  }

  risk(request: RiskRequest): Promise<RiskResponse> {
    return postJson(`${this.baseUrl}/v1/risk`, request);
  }
}

export class LatestOnly {
  private sequence = 0;

  /** Run an async producer; resolve undefined if a newer run started since. */
  async run<T>(producer: () => Promise<T>): Promise<T | undefined> {
    const mine = ++this.sequence;
    const result = await producer();
    return mine === this.sequence ? result : undefined;
  }
}
